//! Backpropagation through time and the SGD training loop.
//!
//! The loss of a minibatch is the mean step NLL over every scored target
//! (mask-true position × sequence). Each update rescales the joint gradient
//! of all parameters to unit L2 norm and steps by
//! `η_k = step_size · (1 − k / total_updates)`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{nade_mask_gaps, Burnin, Corpus, Minibatch, Sequence};
use crate::error::{Error, Result};
use crate::models::{
    init_bi, init_uni, BiRnnParams, Model, ModelKind, Parameters, StepDistribution, UniRnnParams,
};
use crate::rng::{self, label, Rng};

/// Gradient tensors in the same order and shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    blocks: Vec<(&'static str, Vec<f64>)>,
}

impl GradientSet {
    pub fn zeros_like<P: Parameters + ?Sized>(params: &P) -> Self {
        Self {
            blocks: params
                .named_tensors()
                .into_iter()
                .map(|(n, t)| (n, vec![0.0; t.len()]))
                .collect(),
        }
    }

    /// Copies a parameter-shaped container that was used as an accumulator.
    pub fn from_params<P: Parameters + ?Sized>(holder: &P) -> Self {
        Self {
            blocks: holder
                .named_tensors()
                .into_iter()
                .map(|(n, t)| (n, t.to_vec()))
                .collect(),
        }
    }

    pub fn blocks(&self) -> &[(&'static str, Vec<f64>)] {
        &self.blocks
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.blocks
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn l2_norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|(_, v)| v.iter())
            .fold(0.0, |acc, x| acc + x * x)
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for (_, v) in &mut self.blocks {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks
            .iter()
            .all(|(_, v)| v.iter().all(|x| x.is_finite()))
    }
}

fn check_batch(batch: &Minibatch, d_in: usize, d_out: usize) -> Result<usize> {
    let scored = batch.scored_positions();
    if scored == 0 || batch.is_empty() {
        return Err(Error::invalid("minibatch has no scored positions"));
    }
    for (x, y) in batch.inputs.iter().zip(&batch.targets) {
        if x.dim() != d_in {
            return Err(Error::dim("minibatch input", d_in, x.dim()));
        }
        if y.data_dim() < d_out {
            return Err(Error::dim("minibatch target", d_out, y.data_dim()));
        }
    }
    Ok(scored * batch.len())
}

/// `dlogits = (p − target) · scale` for both output families, together with
/// the step NLL. Softmax targets are one-hot, so `p − onehot` is the usual
/// cross-entropy gradient; for Bernoulli outputs it is the per-channel
/// logistic gradient.
fn output_grad(dist: &StepDistribution, target: &[f64], scale: f64) -> (f64, Vec<f64>) {
    let nll = -dist.log_prob(target);
    let d = dist.dim();
    let dlogits = dist
        .params
        .iter()
        .zip(&target[..d])
        .map(|(p, t)| (p - t) * scale)
        .collect();
    (nll, dlogits)
}

#[inline]
fn tanh_backward(dh: &[f64], h: &[f64]) -> Vec<f64> {
    dh.iter().zip(h).map(|(g, h)| g * (1.0 - h * h)).collect()
}

/// Loss and exact gradient of the unidirectional model. Target `x_t` is
/// scored with the output at `t − 1` (the zero initial state at `t = 0`).
pub fn bptt_uni(params: &UniRnnParams, batch: &Minibatch) -> Result<(f64, GradientSet)> {
    params.validate()?;
    let n = check_batch(batch, params.input_dim(), params.output_dim())?;
    let scale = 1.0 / n as f64;
    let c = params.hidden_size();
    let mut grad = UniRnnParams::zeros(
        params.input_dim(),
        params.output_dim(),
        c,
        params.family,
    );
    let zero = vec![0.0; c];
    let mut loss = 0.0;

    for (x, y) in batch.inputs.iter().zip(&batch.targets) {
        let hs = params.hidden_states(x)?;
        let t_len = x.len();
        let mut dh = vec![vec![0.0; c]; t_len];
        for t in (0..t_len).filter(|&t| batch.error_mask[t]) {
            let h_src = if t == 0 { &zero } else { &hs[t - 1] };
            let dist = params.emit(h_src);
            let (nll, dlog) = output_grad(&dist, y.step(t), scale);
            loss += nll;
            grad.w_y.add_outer(&dlog, h_src);
            grad.b_y.iter_mut().zip(&dlog).for_each(|(g, d)| *g += d);
            if t > 0 {
                params.w_y.mul_t_acc(&dlog, &mut dh[t - 1]);
            }
        }
        let mut carry = vec![0.0; c];
        for t in (0..t_len).rev() {
            let total: Vec<f64> = dh[t].iter().zip(&carry).map(|(a, b)| a + b).collect();
            let da = tanh_backward(&total, &hs[t]);
            if t > 0 {
                grad.w_h.add_outer(&da, &hs[t - 1]);
            }
            grad.w_x.add_outer(&da, x.step(t));
            grad.b_h.iter_mut().zip(&da).for_each(|(g, d)| *g += d);
            carry = vec![0.0; c];
            params.w_h.mul_t_acc(&da, &mut carry);
        }
    }
    Ok((loss * scale, GradientSet::from_params(&grad)))
}

/// Loss and exact gradient of the bidirectional model. Target `x_t` is
/// scored with the output at `t`, which reads `h^f_{t-1}` and `h^b_{t+1}`.
pub fn bptt_bi(params: &BiRnnParams, batch: &Minibatch) -> Result<(f64, GradientSet)> {
    params.validate()?;
    let n = check_batch(batch, params.input_dim(), params.output_dim())?;
    let scale = 1.0 / n as f64;
    let c = params.hidden_size();
    let mut grad = BiRnnParams::zeros(
        params.input_dim(),
        params.output_dim(),
        c,
        params.family,
    );
    let zero = vec![0.0; c];
    let mut loss = 0.0;

    for (x, y) in batch.inputs.iter().zip(&batch.targets) {
        let (hf, hb) = params.hidden_states(x)?;
        let t_len = x.len();
        let mut dhf = vec![vec![0.0; c]; t_len];
        let mut dhb = vec![vec![0.0; c]; t_len];
        for t in (0..t_len).filter(|&t| batch.error_mask[t]) {
            let f = if t == 0 { &zero } else { &hf[t - 1] };
            let b = if t + 1 == t_len { &zero } else { &hb[t + 1] };
            let dist = params.emit(f, b);
            let (nll, dlog) = output_grad(&dist, y.step(t), scale);
            loss += nll;
            grad.w_y_f.add_outer(&dlog, f);
            grad.w_y_b.add_outer(&dlog, b);
            grad.b_y.iter_mut().zip(&dlog).for_each(|(g, d)| *g += d);
            if t > 0 {
                params.w_y_f.mul_t_acc(&dlog, &mut dhf[t - 1]);
            }
            if t + 1 < t_len {
                params.w_y_b.mul_t_acc(&dlog, &mut dhb[t + 1]);
            }
        }

        let mut carry = vec![0.0; c];
        for t in (0..t_len).rev() {
            let total: Vec<f64> = dhf[t].iter().zip(&carry).map(|(a, b)| a + b).collect();
            let da = tanh_backward(&total, &hf[t]);
            if t > 0 {
                grad.fwd.w_h.add_outer(&da, &hf[t - 1]);
            }
            grad.fwd.w_x.add_outer(&da, x.step(t));
            grad.fwd.b_h.iter_mut().zip(&da).for_each(|(g, d)| *g += d);
            carry = vec![0.0; c];
            params.fwd.w_h.mul_t_acc(&da, &mut carry);
        }

        let mut carry = vec![0.0; c];
        for t in 0..t_len {
            let total: Vec<f64> = dhb[t].iter().zip(&carry).map(|(a, b)| a + b).collect();
            let da = tanh_backward(&total, &hb[t]);
            if t + 1 < t_len {
                grad.bwd.w_h.add_outer(&da, &hb[t + 1]);
            }
            grad.bwd.w_x.add_outer(&da, x.step(t));
            grad.bwd.b_h.iter_mut().zip(&da).for_each(|(g, d)| *g += d);
            carry = vec![0.0; c];
            params.bwd.w_h.mul_t_acc(&da, &mut carry);
        }
    }
    Ok((loss * scale, GradientSet::from_params(&grad)))
}

/// Training regime: which model is trained and how inputs and losses are
/// masked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Unidirectional, next-step targets, head burn-in.
    Uni,
    /// Bidirectional, current-step targets, head and tail burn-in.
    Brnn,
    /// Bidirectional with missing-token gaps; loss only on the gaps.
    NadeMasked,
    /// Bidirectional with missing-token gaps; loss on every burn-in-free step.
    NadeNoMask,
}

impl Regime {
    pub fn kind(self) -> ModelKind {
        match self {
            Regime::Uni => ModelKind::Uni,
            _ => ModelKind::Bi,
        }
    }

    pub fn uses_missing_channel(self) -> bool {
        matches!(self, Regime::NadeMasked | Regime::NadeNoMask)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Uni => "uni",
            Regime::Brnn => "brnn",
            Regime::NadeMasked => "nade_masked",
            Regime::NadeNoMask => "nade_no_mask",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uni" => Ok(Regime::Uni),
            "brnn" | "bi" => Ok(Regime::Brnn),
            "nade_masked" | "nade" => Ok(Regime::NadeMasked),
            "nade_no_mask" => Ok(Regime::NadeNoMask),
            other => Err(Error::invalid(format!("unknown regime `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub regime: Regime,
    pub minibatch_size: usize,
    pub seq_len: usize,
    pub step_size: f64,
    pub total_updates: usize,
    pub hidden_size: usize,
    /// Defaults to [`Burnin::for_kind`] when absent.
    pub burnin: Option<Burnin>,
    pub nade_gap_len: usize,
    pub nade_stride: usize,
    pub seed: u64,
    /// Record the minibatch loss every this many updates.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            regime: Regime::Uni,
            minibatch_size: 40,
            seq_len: 250,
            step_size: 0.25,
            total_updates: 1000,
            hidden_size: 100,
            burnin: None,
            nade_gap_len: 5,
            nade_stride: 25,
            seed: 0,
            log_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_size.is_nan() || self.step_size <= 0.0 {
            return Err(Error::invalid("step size must be positive"));
        }
        if self.total_updates == 0 {
            return Err(Error::invalid("total_updates must be at least 1"));
        }
        if self.minibatch_size == 0 || self.hidden_size == 0 || self.log_every == 0 {
            return Err(Error::invalid(
                "minibatch size, hidden size and log interval must be at least 1",
            ));
        }
        if self.regime.uses_missing_channel() && self.seq_len < self.nade_stride {
            return Err(Error::invalid(format!(
                "NADE training needs seq_len >= stride ({} < {})",
                self.seq_len, self.nade_stride
            )));
        }
        self.error_mask()?;
        Ok(())
    }

    pub fn burnin(&self) -> Burnin {
        self.burnin
            .unwrap_or_else(|| Burnin::for_kind(self.regime.kind()))
    }

    /// Loss mask for the clean regimes (the NADE-masked regime replaces it
    /// with the gap positions of each batch).
    pub fn error_mask(&self) -> Result<Vec<bool>> {
        self.burnin().mask(self.seq_len)
    }

    pub fn eta(&self, k: usize) -> f64 {
        self.step_size * (1.0 - k as f64 / self.total_updates as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub eta: f64,
    pub grad_norm: f64,
    pub applied: bool,
}

/// Applies one normalized SGD step in place.
pub fn sgd_update<P: Parameters + ?Sized>(
    params: &mut P,
    grads: &GradientSet,
    k: usize,
    config: &TrainConfig,
) -> Result<UpdateStats> {
    if k >= config.total_updates {
        return Err(Error::invalid(format!(
            "update index {k} is past the schedule of {} updates",
            config.total_updates
        )));
    }
    let eta = config.eta(k);
    let norm = grads.l2_norm();
    if !norm.is_finite() {
        return Err(Error::invalid("gradient is not finite"));
    }
    if norm == 0.0 {
        log::warn!("update {k}: zero gradient, skipping (normalization undefined)");
        return Ok(UpdateStats {
            eta,
            grad_norm: 0.0,
            applied: false,
        });
    }
    let step = eta / norm;
    let mut tensors = params.named_tensors_mut();
    if tensors.len() != grads.blocks.len() {
        return Err(Error::dim("gradient blocks", tensors.len(), grads.blocks.len()));
    }
    for ((name, p), (gname, g)) in tensors.iter_mut().zip(&grads.blocks) {
        if name != gname || p.len() != g.len() {
            return Err(Error::invalid(format!(
                "gradient block `{gname}` does not match parameter `{name}`"
            )));
        }
        for (w, d) in p.iter_mut().zip(g) {
            *w -= step * d;
        }
    }
    Ok(UpdateStats {
        eta,
        grad_norm: norm,
        applied: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub update: usize,
    pub eta: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub trace: Vec<TracePoint>,
}

/// Builds the minibatch for one update of `config.regime`.
pub fn sample_minibatch(corpus: &Corpus, config: &TrainConfig, rng: &mut Rng) -> Result<Minibatch> {
    let mut windows = Vec::with_capacity(config.minibatch_size);
    for _ in 0..config.minibatch_size {
        windows.push(corpus.sample_window(config.seq_len, rng)?);
    }
    let mask = config.error_mask()?;
    match config.regime {
        Regime::Uni | Regime::Brnn => Minibatch::from_clean(windows, mask),
        Regime::NadeMasked | Regime::NadeNoMask => {
            let inputs: Vec<Sequence> = windows.iter().map(Sequence::with_missing_channel).collect();
            let clean = Minibatch::new(inputs, windows, mask.clone())?;
            let mut masked = nade_mask_gaps(&clean, config.nade_gap_len, config.nade_stride, rng)?;
            if config.regime == Regime::NadeNoMask {
                masked.error_mask = mask;
            }
            Ok(masked)
        }
    }
}

pub fn init_model(corpus: &Corpus, config: &TrainConfig, rng: &mut Rng) -> Result<Model> {
    let d_out = corpus.dim;
    let d_in = d_out + usize::from(config.regime.uses_missing_channel());
    Ok(match config.regime.kind() {
        ModelKind::Uni => Model::Uni(init_uni(d_in, d_out, config.hidden_size, corpus.family, rng)?),
        ModelKind::Bi => Model::Bi(init_bi(d_in, d_out, config.hidden_size, corpus.family, rng)?),
    })
}

/// Loss and gradient of `model` on `batch`, dispatching on the model kind.
pub fn model_loss_grad(model: &Model, batch: &Minibatch) -> Result<(f64, GradientSet)> {
    match model {
        Model::Uni(p) => bptt_uni(p, batch),
        Model::Bi(p) => bptt_bi(p, batch),
    }
}

/// Runs `total_updates` SGD steps from a fresh initialization. Fully
/// determined by `config.seed`.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<TrainOutcome> {
    let init = init_model(corpus, config, &mut rng::stream(config.seed, &[label::INIT]))?;
    train_from(init, corpus, config)
}

/// As [`train`], starting from the given parameters.
pub fn train_from(mut model: Model, corpus: &Corpus, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if corpus.max_len() < config.seq_len {
        return Err(Error::invalid(format!(
            "corpus has no sequence of length {} (longest is {})",
            config.seq_len,
            corpus.max_len()
        )));
    }
    if model.kind() != config.regime.kind() {
        return Err(Error::invalid(format!(
            "regime {} needs a {} model",
            config.regime.as_str(),
            config.regime.kind()
        )));
    }
    let mut batch_rng = rng::stream(config.seed, &[label::BATCH]);
    let mut trace = Vec::with_capacity(config.total_updates / config.log_every + 1);
    for k in 0..config.total_updates {
        let batch = sample_minibatch(corpus, config, &mut batch_rng)?;
        let (loss, grads) = model_loss_grad(&model, &batch)?;
        let stats = match &mut model {
            Model::Uni(p) => sgd_update(p, &grads, k, config)?,
            Model::Bi(p) => sgd_update(p, &grads, k, config)?,
        };
        if k % config.log_every == 0 || k + 1 == config.total_updates {
            trace.push(TracePoint {
                update: k,
                eta: stats.eta,
                loss,
            });
        }
    }
    Ok(TrainOutcome { model, trace })
}

/// Mean loss over `n_batches` minibatches drawn from `corpus` with a fixed
/// seed; used for validation and learning-rate selection.
pub fn evaluate_loss(
    model: &Model,
    corpus: &Corpus,
    config: &TrainConfig,
    n_batches: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = rng::stream(seed, &[label::EVAL]);
    let mut total = 0.0;
    for _ in 0..n_batches.max(1) {
        let batch = sample_minibatch(corpus, config, &mut rng)?;
        total += model_loss_grad(model, &batch)?.0;
    }
    Ok(total / n_batches.max(1) as f64)
}

pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[TracePoint]) -> Result<()> {
    let mut out = String::from("update,eta,loss\n");
    for p in trace {
        out.push_str(&format!("{},{},{}\n", p.update, p.eta, p.loss));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}
