use rand::seq::SliceRandom;

use super::chain::{BiGap, GapConditional};
use super::{check_gap, gap_truth, to_model_input, GapResult, Strategy, UNDERFLOW_PROB};
use crate::corpus::{GapSpec, Sequence};
use crate::error::{Error, Result};
use crate::models::BiRnnParams;
use crate::numerics::log_sum_exp_nonempty;
use crate::rng::Rng;

/// Longest gap accepted by [`nade_exact_gap_nll`].
pub const MAX_EXACT_NADE_GAP: usize = 6;

fn require_missing_channel(params: &BiRnnParams) -> Result<()> {
    params.validate()?;
    if !params.has_missing_channel() {
        return Err(Error::invalid(
            "the NADE strategy needs a model trained with a missing-value input channel",
        ));
    }
    Ok(())
}

fn masked_input(params: &BiRnnParams, x: &Sequence, gap: GapSpec) -> Result<Sequence> {
    let mut work = to_model_input(x, params.input_dim(), params.output_dim())?;
    for t in gap.range() {
        work.mark_missing(t)?;
    }
    Ok(work)
}

/// `log ∏_k P(x_{order_k} | x_{order_<k}, rest of the gap missing)` for the
/// true gap values, filled in the given order of absolute positions.
pub fn nade_ordered_log_prob(
    params: &BiRnnParams,
    x: &Sequence,
    gap: GapSpec,
    order: &[usize],
) -> Result<f64> {
    require_missing_channel(params)?;
    check_gap(x, gap)?;
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != gap.range().collect::<Vec<_>>() {
        return Err(Error::invalid("ordering must be a permutation of the gap positions"));
    }
    let truth = gap_truth(x, gap);
    let mut work = masked_input(params, x, gap)?;
    let cond = BiGap::new(params, &work, gap);
    let mut lp = 0.0;
    for &t in order {
        let v = &truth[t - gap.start];
        lp += cond.conditional(&work, t).log_prob(v);
        work.set_step_data(t, v);
    }
    Ok(lp)
}

/// Exact gap likelihood averaged over all `g!` fill orderings.
///
/// Orderings share prefixes, so the average is computed over subsets of
/// filled positions: `F(S) = Σ_{t ∈ S} F(S∖t) · P(x_t | S∖t filled)`, and
/// the gap probability is `F(gap) / g!`. This needs `g · 2^(g−1)`
/// conditionals instead of `g · g!`.
pub fn nade_exact_gap_nll(params: &BiRnnParams, x: &Sequence, gap: GapSpec) -> Result<GapResult> {
    require_missing_channel(params)?;
    check_gap(x, gap)?;
    let g = gap.len;
    if g > MAX_EXACT_NADE_GAP {
        return Err(Error::invalid(format!(
            "exact NADE scoring enumerates g! orderings and is limited to g <= {MAX_EXACT_NADE_GAP} \
             (got {g}); use nade_fill to sample orderings instead"
        )));
    }
    let truth = gap_truth(x, gap);
    let base = masked_input(params, x, gap)?;
    let cond = BiGap::new(params, &base, gap);

    let full = (1usize << g) - 1;
    // lp[s][k]: log P(true x_k | positions in s filled, others missing).
    let mut lp = vec![vec![f64::NAN; g]; full];
    let mut work = base.clone();
    for (s, row) in lp.iter_mut().enumerate() {
        for (k, value) in truth.iter().enumerate() {
            if s & (1 << k) != 0 {
                work.set_step_data(gap.start + k, value);
            } else {
                work.mark_missing(gap.start + k)?;
            }
        }
        for k in (0..g).filter(|k| s & (1 << k) == 0) {
            row[k] = cond.conditional(&work, gap.start + k).log_prob(&truth[k]);
        }
    }

    let mut log_f = vec![f64::NEG_INFINITY; full + 1];
    log_f[0] = 0.0;
    let mut terms = Vec::with_capacity(g);
    for s in 1..=full {
        terms.clear();
        for k in (0..g).filter(|k| s & (1 << k) != 0) {
            let prev = s ^ (1 << k);
            terms.push(log_f[prev] + lp[prev][k]);
        }
        log_f[s] = log_sum_exp_nonempty(&terms);
    }
    let log_g_fact: f64 = (1..=g).map(|i| (i as f64).ln()).sum();

    let mut result = GapResult::new(Strategy::Nade, gap);
    result.n_chains = (1..=g).product();
    result.gap_nll = -(log_f[full] - log_g_fact);
    result.chain_log_likelihoods = vec![log_f[full] - log_g_fact];
    result.per_position_nll = lp[0].iter().map(|v| -v).collect();
    if !result.gap_nll.is_finite() {
        result.flag("infinite_nll");
    }
    if lp.iter().flatten().any(|v| *v < UNDERFLOW_PROB.ln()) {
        result.flag("underflow");
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NadeFill {
    /// Input sequence with the gap filled, in the caller's layout.
    pub filled: Sequence,
    /// Fill order (absolute positions).
    pub order: Vec<usize>,
    /// Log-probability of the sampled values under that order.
    pub log_prob: f64,
}

/// Fills the gap once, one position at a time in a random order, sampling
/// each from the model with the unfilled positions still missing.
pub fn nade_fill(params: &BiRnnParams, x: &Sequence, gap: GapSpec, rng: &mut Rng) -> Result<NadeFill> {
    require_missing_channel(params)?;
    check_gap(x, gap)?;
    let mut work = masked_input(params, x, gap)?;
    let cond = BiGap::new(params, &work, gap);
    let mut order: Vec<usize> = gap.range().collect();
    order.shuffle(rng);
    let mut buf = vec![0.0; work.data_dim()];
    let mut log_prob = 0.0;
    for &t in &order {
        let dist = cond.conditional(&work, t);
        dist.sample_into(rng, &mut buf);
        log_prob += dist.log_prob(&buf);
        work.set_step_data(t, &buf);
    }
    let mut filled = x.clone();
    for t in gap.range() {
        filled.set_step_data(t, work.step(t));
    }
    Ok(NadeFill {
        filled,
        order,
        log_prob,
    })
}
