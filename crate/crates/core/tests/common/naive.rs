//! Element-by-element reference computations, sharing nothing with the
//! library's forward passes beyond the parameter layout.

use gapfill::models::{BiRnnParams, OutputFamily, RecurrentStack, UniRnnParams};
use gapfill::numerics::Matrix;

fn affine(w: &Matrix, v: &[f64], acc: &mut [f64]) {
    for (r, a) in acc.iter_mut().enumerate() {
        for (c, x) in v.iter().enumerate() {
            *a += w.get(r, c) * x;
        }
    }
}

fn recur(stack: &RecurrentStack, h: &[f64], x: &[f64]) -> Vec<f64> {
    let mut a = stack.b_h.clone();
    affine(&stack.w_h, h, &mut a);
    affine(&stack.w_x, x, &mut a);
    a.iter().map(|v| v.tanh()).collect()
}

/// `log P(target)` given output pre-activations.
pub fn log_prob(family: OutputFamily, logits: &[f64], target: &[f64]) -> f64 {
    match family {
        OutputFamily::Softmax => {
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
            logits.iter().zip(target).map(|(l, y)| y * (l - z)).sum()
        }
        OutputFamily::Bernoulli => logits
            .iter()
            .zip(target)
            .map(|(&l, &y)| {
                let p = 1.0 / (1.0 + (-l).exp());
                if y > 0.5 {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            })
            .sum(),
    }
}

/// `Σ_t log P(x_t | x_<t)` for a unidirectional model; `steps` are input
/// vectors and `targets` the data each step is scored against.
pub fn uni_log_joint(p: &UniRnnParams, steps: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    let c = p.w_h.rows();
    let mut h = vec![0.0; c];
    let mut total = 0.0;
    for (x, y) in steps.iter().zip(targets) {
        let mut logits = p.b_y.clone();
        affine(&p.w_y, &h, &mut logits);
        total += log_prob(p.family, &logits, y);
        let stack = RecurrentStack {
            w_x: p.w_x.clone(),
            w_h: p.w_h.clone(),
            b_h: p.b_h.clone(),
        };
        h = recur(&stack, &h, x);
    }
    total
}

/// Output pre-activations of a bidirectional model at every step.
pub fn bi_logits(p: &BiRnnParams, steps: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let c = p.fwd.w_h.rows();
    let t_len = steps.len();
    let mut hf = vec![vec![0.0; c]; t_len + 1];
    for t in 0..t_len {
        hf[t + 1] = recur(&p.fwd, &hf[t], &steps[t]);
    }
    let mut hb = vec![vec![0.0; c]; t_len + 1];
    for t in (0..t_len).rev() {
        hb[t] = recur(&p.bwd, &hb[t + 1], &steps[t]);
    }
    (0..t_len)
        .map(|t| {
            let mut l = p.b_y.clone();
            affine(&p.w_y_f, &hf[t], &mut l);
            affine(&p.w_y_b, &hb[t + 1], &mut l);
            l
        })
        .collect()
}

/// Every length-`t_len` sequence over `d` classes, as one-hot steps, first
/// step most significant.
pub fn all_categorical(d: usize, t_len: usize) -> Vec<Vec<Vec<f64>>> {
    let n = d.pow(t_len as u32);
    (0..n)
        .map(|mut i| {
            let mut seq = vec![vec![0.0; d]; t_len];
            for t in (0..t_len).rev() {
                seq[t][i % d] = 1.0;
                i /= d;
            }
            seq
        })
        .collect()
}

/// Every length-`t_len` sequence of `d`-bit vectors.
pub fn all_binary(d: usize, t_len: usize) -> Vec<Vec<Vec<f64>>> {
    let n = 1usize << (d * t_len);
    (0..n)
        .map(|i| {
            (0..t_len)
                .map(|t| (0..d).map(|j| ((i >> (t * d + j)) & 1) as f64).collect())
                .collect()
        })
        .collect()
}

/// NADE probability of `seq` filled in `order`, with unfilled steps carrying
/// the missing flag (last input channel) and zero data.
pub fn nade_log_prob(p: &BiRnnParams, seq: &[Vec<f64>], order: &[usize]) -> f64 {
    let d = seq[0].len();
    let mut inputs: Vec<Vec<f64>> = seq
        .iter()
        .map(|_| {
            let mut v = vec![0.0; d + 1];
            v[d] = 1.0;
            v
        })
        .collect();
    let mut total = 0.0;
    for &t in order {
        let logits = bi_logits(p, &inputs);
        total += log_prob(p.family, &logits[t], &seq[t]);
        inputs[t][..d].copy_from_slice(&seq[t]);
        inputs[t][d] = 0.0;
    }
    total
}
