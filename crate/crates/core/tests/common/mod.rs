#![allow(dead_code)]

pub mod naive;

use gapfill::corpus::{nade_mask_gaps, Minibatch, Sequence};
use gapfill::models::{init_bi, init_uni, BiRnnParams, OutputFamily, Parameters, UniRnnParams};
use gapfill::rng::{rng_from_seed, Rng};
use gapfill::training::{bptt_bi, bptt_uni, GradientSet, Regime};
use rand::Rng as _;

pub const FD_EPS: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Denominator floor for the relative error, so entries that are zero in
/// both computations do not divide by zero.
pub const FD_FLOOR: f64 = 1e-6;

pub fn random_sequence(rng: &mut Rng, family: OutputFamily, d: usize, t_len: usize) -> Sequence {
    match family {
        OutputFamily::Softmax => {
            let idx: Vec<usize> = (0..t_len).map(|_| rng.gen_range(0..d)).collect();
            Sequence::from_indices(&idx, d, false)
        }
        OutputFamily::Bernoulli => {
            let steps: Vec<Vec<f64>> = (0..t_len)
                .map(|_| (0..d).map(|_| f64::from(rng.gen::<bool>() as u8)).collect())
                .collect();
            Sequence::from_steps(&steps).unwrap()
        }
    }
}

#[derive(Debug, Clone)]
pub enum AnyParams {
    Uni(UniRnnParams),
    Bi(BiRnnParams),
}

impl AnyParams {
    pub fn loss_grad(&self, batch: &Minibatch) -> (f64, GradientSet) {
        match self {
            AnyParams::Uni(p) => bptt_uni(p, batch).unwrap(),
            AnyParams::Bi(p) => bptt_bi(p, batch).unwrap(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        match self {
            AnyParams::Uni(p) => p.named_tensors_mut(),
            AnyParams::Bi(p) => p.named_tensors_mut(),
        }
    }
}

/// A random model, batch and mask for the given regime. Biases are
/// randomized too so every tensor has a nontrivial gradient.
pub fn random_instance(
    seed: u64,
    regime: Regime,
    family: OutputFamily,
    max_c: usize,
    max_t: usize,
    max_d: usize,
) -> (AnyParams, Minibatch, String) {
    let mut rng = rng_from_seed(seed);
    let c = rng.gen_range(1..=max_c);
    let t_len = rng.gen_range(3..=max_t);
    let d = rng.gen_range(2..=max_d);
    let n = rng.gen_range(1..=3);
    let missing = regime.uses_missing_channel();
    let d_in = d + usize::from(missing);
    let mut params = match regime {
        Regime::Uni => AnyParams::Uni(init_uni(d_in, d, c, family, &mut rng).unwrap()),
        _ => AnyParams::Bi(init_bi(d_in, d, c, family, &mut rng).unwrap()),
    };
    for (name, t) in params.tensors_mut() {
        if name.starts_with('b') {
            t.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
    }
    let seqs: Vec<Sequence> = (0..n).map(|_| random_sequence(&mut rng, family, d, t_len)).collect();
    let batch = loop {
        let mask: Vec<bool> = (0..t_len).map(|_| rng.gen_bool(0.7)).collect();
        if !mask.iter().any(|&m| m) {
            continue;
        }
        let b = if missing {
            let inputs = seqs.iter().map(Sequence::with_missing_channel).collect();
            let clean = Minibatch::new(inputs, seqs.clone(), mask.clone()).unwrap();
            let g = rng.gen_range(1..=t_len.min(3));
            let mut masked = nade_mask_gaps(&clean, g, t_len, &mut rng).unwrap();
            if regime == Regime::NadeNoMask {
                masked.error_mask = mask;
            }
            masked
        } else {
            Minibatch::from_clean(seqs.clone(), mask).unwrap()
        };
        if b.error_mask.iter().any(|&m| m) {
            break b;
        }
    };
    let desc = format!("{regime:?}/{family:?} c={c} T={t_len} d={d} n={n}");
    (params, batch, desc)
}

/// Worst relative error between analytic and central-difference gradients.
pub fn max_fd_rel_error(params: &AnyParams, batch: &Minibatch) -> f64 {
    let (_, grads) = params.loss_grad(batch);
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for (bi, (name, g)) in grads.blocks().iter().enumerate() {
        for (i, &analytic) in g.iter().enumerate() {
            let orig = probe.tensors_mut()[bi].1[i];
            probe.tensors_mut()[bi].1[i] = orig + FD_EPS;
            let lp = probe.loss_grad(batch).0;
            probe.tensors_mut()[bi].1[i] = orig - FD_EPS;
            let lm = probe.loss_grad(batch).0;
            probe.tensors_mut()[bi].1[i] = orig;
            let numeric = (lp - lm) / (2.0 * FD_EPS);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR);
            assert!(rel.is_finite(), "{name}[{i}]");
            worst = worst.max(rel);
        }
    }
    worst
}
