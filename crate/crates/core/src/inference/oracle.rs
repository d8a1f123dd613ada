//! Brute-force references for small gaps.
//!
//! A completion assigns one of `a` values to every gap position (`a = d`
//! classes, or `a = 2^d` bit patterns for binary data). Completions are
//! indexed in mixed radix with the first gap position most significant.

use super::chain::{BiGap, GapConditional};
use super::{check_gap, to_model_input};
use crate::corpus::{GapSpec, Sequence};
use crate::error::{Error, Result};
use crate::models::{uni_log_joint, Model, OutputFamily, StepDistribution};
use crate::numerics::log_sum_exp_nonempty;

pub const MAX_COMPLETIONS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum GapPosterior {
    /// Unidirectional models: `P(completion | context)` for every
    /// completion, from the normalized joint.
    Joint {
        arity: usize,
        gap_len: usize,
        probs: Vec<f64>,
    },
    /// Bidirectional models: `table[i][k][v]` is the model conditional of
    /// value `v` at gap position `k` when the gap holds completion `i`.
    Conditionals {
        arity: usize,
        gap_len: usize,
        table: Vec<Vec<Vec<f64>>>,
    },
}

impl GapPosterior {
    pub fn arity(&self) -> usize {
        match self {
            GapPosterior::Joint { arity, .. } | GapPosterior::Conditionals { arity, .. } => *arity,
        }
    }

    pub fn gap_len(&self) -> usize {
        match self {
            GapPosterior::Joint { gap_len, .. } | GapPosterior::Conditionals { gap_len, .. } => {
                *gap_len
            }
        }
    }

    /// The exact distribution over completions: the joint directly, or the
    /// stationary distribution of the random-scan Gibbs chain.
    pub fn distribution(&self) -> Vec<f64> {
        match self {
            GapPosterior::Joint { probs, .. } => probs.clone(),
            GapPosterior::Conditionals {
                arity,
                gap_len,
                table,
            } => stationary_distribution(&gibbs_transition_matrix(*arity, *gap_len, table)),
        }
    }
}

fn arity(family: OutputFamily, d: usize) -> Result<usize> {
    match family {
        OutputFamily::Softmax => Ok(d),
        OutputFamily::Bernoulli if d < 13 => Ok(1 << d),
        OutputFamily::Bernoulli => Err(Error::invalid(format!(
            "2^{d} values per step exceeds the enumeration bound of {MAX_COMPLETIONS}"
        ))),
    }
}

fn step_value(step: &[f64], family: OutputFamily, d: usize) -> usize {
    match family {
        OutputFamily::Softmax => crate::numerics::argmax(&step[..d]),
        OutputFamily::Bernoulli => step[..d]
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &v)| acc | (usize::from(v > 0.5) << j)),
    }
}

fn value_vector(v: usize, family: OutputFamily, d: usize) -> Vec<f64> {
    match family {
        OutputFamily::Softmax => {
            let mut out = vec![0.0; d];
            out[v] = 1.0;
            out
        }
        OutputFamily::Bernoulli => (0..d).map(|j| ((v >> j) & 1) as f64).collect(),
    }
}

/// Index of the completion currently held in the gap of `seq`.
pub fn completion_index(seq: &Sequence, gap: GapSpec, family: OutputFamily) -> Result<usize> {
    let d = seq.data_dim();
    let a = arity(family, d)?;
    Ok(gap
        .range()
        .fold(0, |acc, t| acc * a + step_value(seq.step(t), family, d)))
}

/// Writes completion `index` into the gap of `seq`.
pub fn apply_completion(
    seq: &mut Sequence,
    gap: GapSpec,
    index: usize,
    family: OutputFamily,
) -> Result<()> {
    let d = seq.data_dim();
    let a = arity(family, d)?;
    let mut rem = index;
    for t in gap.range().rev() {
        seq.set_step_data(t, &value_vector(rem % a, family, d));
        rem /= a;
    }
    if rem != 0 {
        return Err(Error::invalid(format!("completion index {index} out of range")));
    }
    Ok(())
}

/// Probability of each of the `arity` values under a step distribution.
pub fn value_distribution(dist: &StepDistribution, arity: usize) -> Vec<f64> {
    match dist.family {
        OutputFamily::Softmax => dist.params.clone(),
        OutputFamily::Bernoulli => {
            let d = dist.dim();
            (0..arity)
                .map(|v| {
                    (0..d)
                        .map(|j| {
                            let p = dist.params[j];
                            if (v >> j) & 1 == 1 {
                                p
                            } else {
                                1.0 - p
                            }
                        })
                        .product()
                })
                .collect()
        }
    }
}

/// Enumerates every completion of the gap (at most [`MAX_COMPLETIONS`]).
pub fn enumerate_gap_posterior(model: &Model, x: &Sequence, gap: GapSpec) -> Result<GapPosterior> {
    let family = model.family();
    let d = model.output_dim();
    let a = arity(family, d)?;
    let g = gap.len;
    if g == 0 {
        return Ok(GapPosterior::Joint {
            arity: a,
            gap_len: 0,
            probs: vec![1.0],
        });
    }
    check_gap(x, gap)?;
    let n = (0..g).try_fold(1usize, |acc, _| acc.checked_mul(a));
    let n = match n {
        Some(n) if n <= MAX_COMPLETIONS => n,
        _ => {
            return Err(Error::invalid(format!(
                "{a}^{g} = {:.0} completions exceeds the enumeration bound of {MAX_COMPLETIONS}",
                (a as f64).powi(g as i32)
            )))
        }
    };
    let mut work = to_model_input(x, model.input_dim(), d)?;
    match model {
        Model::Uni(p) => {
            let mut log_w = Vec::with_capacity(n);
            for i in 0..n {
                apply_completion(&mut work, gap, i, family)?;
                log_w.push(uni_log_joint(p, &work)?);
            }
            let z = log_sum_exp_nonempty(&log_w);
            Ok(GapPosterior::Joint {
                arity: a,
                gap_len: g,
                probs: log_w.iter().map(|v| (v - z).exp()).collect(),
            })
        }
        Model::Bi(p) => {
            let cond = BiGap::new(p, &work, gap);
            let mut table = Vec::with_capacity(n);
            for i in 0..n {
                apply_completion(&mut work, gap, i, family)?;
                table.push(
                    gap.range()
                        .map(|t| value_distribution(&cond.conditional(&work, t), a))
                        .collect(),
                );
            }
            Ok(GapPosterior::Conditionals {
                arity: a,
                gap_len: g,
                table,
            })
        }
    }
}

/// Random-scan Gibbs kernel: pick a gap position uniformly, resample it
/// from `table[state][position]`.
pub fn gibbs_transition_matrix(arity: usize, gap_len: usize, table: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let n = table.len();
    let mut m = vec![vec![0.0; n]; n];
    let w = 1.0 / gap_len as f64;
    for (i, row) in m.iter_mut().enumerate() {
        for (k, probs) in table[i].iter().enumerate().take(gap_len) {
            // Place value of position k in the mixed-radix index.
            let radix = arity.pow((gap_len - 1 - k) as u32);
            let current = (i / radix) % arity;
            let base = i - current * radix;
            for v in 0..arity {
                row[base + v * radix] += w * probs[v];
            }
        }
    }
    m
}

/// Stationary distribution by power iteration from the uniform vector.
pub fn stationary_distribution(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..1_000_000 {
        let mut next = vec![0.0; n];
        for (i, row) in matrix.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                next[j] += pi[i] * p;
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if delta < 1e-15 {
            break;
        }
    }
    pi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_bi, init_uni};
    use crate::rng::rng_from_seed;

    #[test]
    fn binary_completion_round_trip() {
        let mut x = Sequence::from_steps(&vec![vec![0.0, 0.0]; 4]).unwrap();
        let gap = GapSpec::new(1, 2, 4).unwrap();
        for i in 0..16 {
            apply_completion(&mut x, gap, i, OutputFamily::Bernoulli).unwrap();
            assert_eq!(completion_index(&x, gap, OutputFamily::Bernoulli).unwrap(), i);
        }
    }

    #[test]
    fn uni_joint_is_normalized() {
        let mut rng = rng_from_seed(31);
        let p = init_uni(2, 2, 3, OutputFamily::Softmax, &mut rng).unwrap();
        let x = Sequence::from_indices(&[0, 1, 1, 0, 1], 2, false);
        let post = enumerate_gap_posterior(&Model::Uni(p), &x, GapSpec::new(1, 2, 5).unwrap()).unwrap();
        let probs = post.distribution();
        assert_eq!(probs.len(), 4);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn empty_gap_is_certain() {
        let p = crate::models::UniRnnParams::zeros(2, 2, 2, OutputFamily::Softmax);
        let x = Sequence::from_indices(&[0, 1], 2, false);
        let post = enumerate_gap_posterior(&Model::Uni(p), &x, GapSpec { start: 1, len: 0 }).unwrap();
        assert_eq!(post.distribution(), vec![1.0]);
    }

    #[test]
    fn bound_is_enforced() {
        let p = crate::models::UniRnnParams::zeros(10, 10, 2, OutputFamily::Softmax);
        let x = Sequence::from_indices(&[0; 8], 10, false);
        let err = enumerate_gap_posterior(&Model::Uni(p), &x, GapSpec::new(0, 4, 8).unwrap())
            .unwrap_err()
            .to_string();
        assert!(err.contains("10000"), "{err}");
    }

    #[test]
    fn transition_rows_are_stochastic() {
        let mut rng = rng_from_seed(32);
        let p = init_bi(3, 3, 3, OutputFamily::Softmax, &mut rng).unwrap();
        let x = Sequence::from_indices(&[0, 1, 2, 0], 3, false);
        let post = enumerate_gap_posterior(&Model::Bi(p), &x, GapSpec::new(1, 2, 4).unwrap()).unwrap();
        let GapPosterior::Conditionals { arity, gap_len, table } = &post else {
            panic!("expected conditionals");
        };
        let m = gibbs_transition_matrix(*arity, *gap_len, table);
        for row in &m {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let pi = post.distribution();
        // Stationarity: π P = π.
        for j in 0..pi.len() {
            let v: f64 = (0..pi.len()).map(|i| pi[i] * m[i][j]).sum();
            assert!((v - pi[j]).abs() < 1e-12);
        }
    }
}
