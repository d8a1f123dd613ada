use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{
    check_gap, gap_truth, normalize_log_weights, to_model_input, uni_prefix_state, ChainConfig,
    GapResult, InitMode, Strategy, UNDERFLOW_PROB,
};
use crate::corpus::{GapSpec, Sequence};
use crate::error::{Error, Result};
use crate::models::{BiRnnParams, OutputFamily, StepDistribution, UniRnnParams};
use crate::numerics::{self, Vector};
use crate::rng::{self, Rng};

/// `P(x_t | everything else)` for positions inside a fixed gap, with the
/// context outside the gap cached.
pub(crate) trait GapConditional {
    fn gap(&self) -> GapSpec;
    fn family(&self) -> OutputFamily;
    fn conditional(&self, x: &Sequence, t: usize) -> StepDistribution;
}

/// Bidirectional conditional: only the hidden states inside the gap are
/// recomputed, so each call costs `O(g c²)`.
pub(crate) struct BiGap<'a> {
    params: &'a BiRnnParams,
    gap: GapSpec,
    hf_before: Vector,
    hb_after: Vector,
}

impl<'a> BiGap<'a> {
    pub(crate) fn new(params: &'a BiRnnParams, x: &Sequence, gap: GapSpec) -> Self {
        let c = params.hidden_size();
        let mut hf = vec![0.0; c];
        for t in 0..gap.start {
            hf = params.fwd.step(&hf, x.step(t));
        }
        let mut hb = vec![0.0; c];
        for t in (gap.end()..x.len()).rev() {
            hb = params.bwd.step(&hb, x.step(t));
        }
        Self {
            params,
            gap,
            hf_before: hf,
            hb_after: hb,
        }
    }
}

impl GapConditional for BiGap<'_> {
    fn gap(&self) -> GapSpec {
        self.gap
    }

    fn family(&self) -> OutputFamily {
        self.params.family
    }

    fn conditional(&self, x: &Sequence, t: usize) -> StepDistribution {
        let mut f = self.hf_before.clone();
        for tau in self.gap.start..t {
            f = self.params.fwd.step(&f, x.step(tau));
        }
        let mut b = self.hb_after.clone();
        for tau in (t + 1..self.gap.end()).rev() {
            b = self.params.bwd.step(&b, x.step(tau));
        }
        self.params.emit(&f, &b)
    }
}

/// Exact conditional of a unidirectional model by Bayes' rule: every
/// proposal `a` for `x_t` is weighted by `∏_{τ ≥ t} P(x_τ | x_{<τ})` with
/// `x_t = a`.
pub(crate) struct BayesGap<'a> {
    params: &'a UniRnnParams,
    gap: GapSpec,
    h_before: Vector,
}

impl<'a> BayesGap<'a> {
    pub(crate) fn new(params: &'a UniRnnParams, x: &Sequence, gap: GapSpec) -> Result<Self> {
        if params.family == OutputFamily::Bernoulli {
            let d = params.output_dim();
            let count = if d < 64 {
                format!("{}", 1u64 << d)
            } else {
                "more than 2^63".to_string()
            };
            return Err(Error::Unsupported(format!(
                "the exact Bayes conditional needs a categorical model; a binary output of \
                 dimension {d} would require enumerating 2^{d} = {count} proposals per step"
            )));
        }
        Ok(Self {
            params,
            gap,
            h_before: uni_prefix_state(params, x, gap.start),
        })
    }
}

impl GapConditional for BayesGap<'_> {
    fn gap(&self) -> GapSpec {
        self.gap
    }

    fn family(&self) -> OutputFamily {
        OutputFamily::Softmax
    }

    fn conditional(&self, x: &Sequence, t: usize) -> StepDistribution {
        let p = self.params;
        let mut h = self.h_before.clone();
        for tau in self.gap.start..t {
            h = p.step(&h, x.step(tau));
        }
        let prior = p.emit(&h);
        let (c, d) = (p.hidden_size(), p.output_dim());
        // One row of `hs` per proposal, advanced through the rest of the
        // sequence together.
        let mut shared = p.b_h.clone();
        p.w_h.mul_acc(&h, &mut shared);
        let mut hs = vec![0.0; d * c];
        for (a, row) in hs.chunks_exact_mut(c).enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = (shared[i] + p.w_x.get(i, a)).tanh();
            }
        }
        let mut log_w: Vec<f64> = prior.params.iter().map(|q| q.ln()).collect();
        let mut logits = vec![0.0; d * d];
        let mut next = vec![0.0; d * c];
        let t_len = x.len();
        for tau in t + 1..t_len {
            let target = numerics::argmax(&x.step(tau)[..d]);
            p.w_y.rows_times_t(&hs, d, &mut logits);
            for (lw, row) in log_w.iter_mut().zip(logits.chunks_exact_mut(d)) {
                row.iter_mut().zip(&p.b_y).for_each(|(l, b)| *l += b);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z = m + row.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
                *lw += row[target] - z;
            }
            if tau + 1 < t_len {
                shared.copy_from_slice(&p.b_h);
                p.w_x.mul_acc_sparse(x.step(tau), &mut shared);
                p.w_h.rows_times_t(&hs, d, &mut next);
                for (dst, row) in hs.chunks_exact_mut(c).zip(next.chunks_exact(c)) {
                    for ((v, n), s) in dst.iter_mut().zip(row).zip(&shared) {
                        *v = (n + s).tanh();
                    }
                }
            }
        }
        normalize_log_weights(&log_w)
    }
}

/// `P(x_t = a | x_{≠t})` for a unidirectional categorical model.
pub fn bayes_exact_conditional(
    params: &UniRnnParams,
    x: &Sequence,
    t: usize,
) -> Result<StepDistribution> {
    params.validate()?;
    if t >= x.len() {
        return Err(Error::invalid(format!(
            "time index {t} outside a sequence of length {}",
            x.len()
        )));
    }
    let x = to_model_input(x, params.input_dim(), params.output_dim())?;
    let gap = GapSpec { start: t, len: 1 };
    Ok(BayesGap::new(params, &x, gap)?.conditional(&x, t))
}

fn init_gap(work: &mut Sequence, gap: GapSpec, mode: InitMode, family: OutputFamily, rng: &mut Rng) {
    let dd = work.data_dim();
    let mut v = vec![0.0; dd];
    for t in gap.range() {
        v.iter_mut().for_each(|x| *x = 0.0);
        if mode == InitMode::RandomOnehot {
            match family {
                OutputFamily::Softmax => v[rng.gen_range(0..dd)] = 1.0,
                OutputFamily::Bernoulli => {
                    v.iter_mut()
                        .for_each(|x| *x = if rng.gen::<bool>() { 1.0 } else { 0.0 });
                }
            }
        }
        work.set_step_data(t, &v);
    }
}

fn gibbs_step<C: GapConditional>(cond: &C, work: &mut Sequence, rng: &mut Rng, buf: &mut [f64]) {
    let gap = cond.gap();
    let t = gap.start + rng.gen_range(0..gap.len);
    let dist = cond.conditional(work, t);
    dist.sample_into(rng, buf);
    work.set_step_data(t, buf);
}

struct ChainOutcome {
    log_like: f64,
    underflow: bool,
    per_position: Option<Vec<f64>>,
    end_state: Option<Sequence>,
}

fn run_chain<C: GapConditional>(
    cond: &C,
    x: &Sequence,
    truth: &[Vec<f64>],
    cfg: &ChainConfig,
    chain: usize,
) -> ChainOutcome {
    let gap = cond.gap();
    let g = gap.len;
    let seed = cfg.chain_seed(chain);
    let mut rng = rng::rng_from_seed(rng::derive_seed(seed, 0));
    let mode = cfg.init_mode.unwrap_or_else(|| InitMode::for_family(cond.family()));
    let mut work = x.clone();
    init_gap(&mut work, gap, mode, cond.family(), &mut rng);
    let mut buf = vec![0.0; work.data_dim()];
    for _ in 0..cfg.mcmc_steps - g {
        gibbs_step(cond, &mut work, &mut rng, &mut buf);
    }

    let (per_position, end_state) = if cfg.per_position || cfg.keep_samples {
        let mut free = work.clone();
        let mut free_rng = rng::rng_from_seed(rng::derive_seed(seed, 1));
        for _ in 0..g {
            gibbs_step(cond, &mut free, &mut free_rng, &mut buf);
        }
        let pp = cfg.per_position.then(|| {
            gap.range()
                .zip(truth)
                .map(|(t, v)| cond.conditional(&free, t).log_prob(v))
                .collect()
        });
        (pp, cfg.keep_samples.then_some(free))
    } else {
        (None, None)
    };

    let mut order: Vec<usize> = gap.range().collect();
    order.shuffle(&mut rng);
    let mut log_like = 0.0;
    let mut underflow = false;
    for t in order {
        let v = &truth[t - gap.start];
        let lp = cond.conditional(&work, t).log_prob(v);
        underflow |= lp < UNDERFLOW_PROB.ln();
        log_like += lp;
        work.set_step_data(t, v);
    }
    ChainOutcome {
        log_like,
        underflow,
        per_position,
        end_state,
    }
}

fn run_chains<C: GapConditional>(
    strategy: Strategy,
    cond: &C,
    x: &Sequence,
    cfg: &ChainConfig,
) -> GapResult {
    let gap = cond.gap();
    let truth = gap_truth(x, gap);
    let mut result = GapResult::new(strategy, gap);
    result.n_chains = cfg.n_chains;
    result.mcmc_steps = cfg.mcmc_steps;
    let mut log_likes = Vec::with_capacity(cfg.n_chains);
    let mut per_chain = Vec::new();
    let mut underflow = false;
    for chain in 0..cfg.n_chains {
        let out = run_chain(cond, x, &truth, cfg, chain);
        log_likes.push(out.log_like);
        underflow |= out.underflow;
        if let Some(pp) = out.per_position {
            per_chain.push(pp);
        }
        if let Some(s) = out.end_state {
            result.samples.push(s);
        }
    }
    result.finish_chains(log_likes);
    result.finish_positions(&per_chain, gap.len);
    if underflow {
        result.flag("underflow");
    }
    result
}

/// Gibbs chains on the bidirectional conditional.
pub fn gsn_fill(params: &BiRnnParams, x: &Sequence, gap: GapSpec, cfg: &ChainConfig) -> Result<GapResult> {
    params.validate()?;
    check_gap(x, gap)?;
    cfg.validate(gap.len)?;
    let x = to_model_input(x, params.input_dim(), params.output_dim())?;
    let cond = BiGap::new(params, &x, gap);
    Ok(run_chains(Strategy::Gsn, &cond, &x, cfg))
}

/// Gibbs chains on the exact Bayes conditional of a unidirectional model.
pub fn bayes_mcmc_fill(
    params: &UniRnnParams,
    x: &Sequence,
    gap: GapSpec,
    cfg: &ChainConfig,
) -> Result<GapResult> {
    params.validate()?;
    check_gap(x, gap)?;
    cfg.validate(gap.len)?;
    let x = to_model_input(x, params.input_dim(), params.output_dim())?;
    let cond = BayesGap::new(params, &x, gap)?;
    Ok(run_chains(Strategy::BayesMcmc, &cond, &x, cfg))
}
