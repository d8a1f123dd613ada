//! Parameter containers and forward passes.
//!
//! Target alignment differs between the two model kinds:
//!
//! * the unidirectional network's output at step `t` is computed from
//!   `h_t` and predicts the *next* input `x_{t+1}`;
//! * the bidirectional network's output at step `t` is computed from
//!   `h^f_{t-1}` and `h^b_{t+1}` and reconstructs the *current* input `x_t`,
//!   which it never sees.
//!
//! Both recurrences start from zero hidden states (`h^f_{-1} = 0`,
//! `h^b_T = 0`). Inputs may carry one extra channel beyond the outputs: the
//! missing-value token used by the NADE-style model.

mod checkpoint;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Model, ModelKind, CHECKPOINT_VERSION};

use crate::corpus::Sequence;
use crate::error::{Error, Result};
use crate::numerics::{self, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFamily {
    /// One categorical distribution per step (one-hot data).
    Softmax,
    /// Independent Bernoulli channels per step (binary vectors).
    Bernoulli,
}

impl OutputFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputFamily::Softmax => "softmax",
            OutputFamily::Bernoulli => "bernoulli",
        }
    }

    pub(crate) fn activate(self, logits: &mut [f64]) {
        match self {
            OutputFamily::Softmax => numerics::softmax_in_place(logits),
            OutputFamily::Bernoulli => numerics::sigmoid_in_place(logits),
        }
    }
}

impl std::str::FromStr for OutputFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(Self::Softmax),
            "bernoulli" => Ok(Self::Bernoulli),
            other => Err(Error::invalid(format!("unknown output family `{other}`"))),
        }
    }
}

/// Predictive distribution for one observation vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDistribution {
    pub family: OutputFamily,
    /// Class probabilities (softmax) or per-channel means (bernoulli).
    pub params: Vector,
}

impl StepDistribution {
    pub fn from_logits(family: OutputFamily, mut logits: Vector) -> Self {
        family.activate(&mut logits);
        Self {
            family,
            params: logits,
        }
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    /// Probability of an observation; only the first `dim()` channels of
    /// `target` are read, so inputs carrying a missing channel are accepted.
    pub fn prob(&self, target: &[f64]) -> f64 {
        self.log_prob(target).exp()
    }

    pub fn log_prob(&self, target: &[f64]) -> f64 {
        let target = &target[..self.dim()];
        match self.family {
            OutputFamily::Softmax => self.params[numerics::argmax(target)].ln(),
            OutputFamily::Bernoulli => {
                let mut lp = 0.0;
                for (&p, &t) in self.params.iter().zip(target) {
                    lp += if t > 0.5 { p.ln() } else { (1.0 - p).ln() };
                }
                lp
            }
        }
    }

    /// Draws an observation, written into `out[..dim()]`. Channels beyond
    /// `dim()` are left untouched.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let out = &mut out[..self.dim()];
        match self.family {
            OutputFamily::Softmax => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = self.params.len() - 1;
                for (i, &p) in self.params.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                out.iter_mut().for_each(|v| *v = 0.0);
                out[pick] = 1.0;
            }
            OutputFamily::Bernoulli => {
                for (o, &p) in out.iter_mut().zip(&self.params) {
                    let u: f64 = rng.gen();
                    *o = if u < p { 1.0 } else { 0.0 };
                }
            }
        }
    }
}

/// Negative log-likelihood of `target` under `dist`. Returns `+∞` when the
/// target has zero probability.
pub fn step_nll(dist: &StepDistribution, target: &[f64]) -> f64 {
    -dist.log_prob(target)
}

/// One direction of recurrence: `h_t = tanh(W_h h_prev + W_x x_t + b_h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentStack {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b_h: Vector,
}

impl RecurrentStack {
    pub fn zeros(d_in: usize, c: usize) -> Self {
        Self {
            w_x: Matrix::zeros(c, d_in),
            w_h: Matrix::zeros(c, c),
            b_h: vec![0.0; c],
        }
    }

    fn init<R: Rng + ?Sized>(d_in: usize, c: usize, rng: &mut R) -> Self {
        let s_h = glorot_bound(c, c);
        Self {
            w_x: Matrix::from_fn(c, d_in, |_, _| rng.gen_range(-1.0..=1.0)),
            w_h: Matrix::from_fn(c, c, |_, _| rng.gen_range(-s_h..=s_h)),
            b_h: vec![0.0; c],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_h.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.cols()
    }

    /// Pre-activation `W_h h_prev + W_x x + b_h`.
    #[inline]
    pub(crate) fn pre_activation(&self, h_prev: &[f64], x: &[f64]) -> Vector {
        let mut a = self.b_h.clone();
        self.w_h.mul_acc(h_prev, &mut a);
        self.w_x.mul_acc_sparse(x, &mut a);
        a
    }

    #[inline]
    pub fn step(&self, h_prev: &[f64], x: &[f64]) -> Vector {
        let mut a = self.pre_activation(h_prev, x);
        a.iter_mut().for_each(|v| *v = v.tanh());
        a
    }

    fn check(&self, name: &'static str) -> Result<()> {
        let c = self.w_h.rows();
        if self.w_h.cols() != c {
            return Err(Error::dim(name, c, self.w_h.cols()));
        }
        if self.w_x.rows() != c {
            return Err(Error::dim(name, c, self.w_x.rows()));
        }
        if self.b_h.len() != c {
            return Err(Error::dim(name, c, self.b_h.len()));
        }
        Ok(())
    }
}

/// `√(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Uniform access to every parameter tensor, in a fixed order. Checkpoint
/// blocks, gradient sets and finite-difference checks all use this order.
pub trait Parameters {
    fn named_tensors(&self) -> Vec<(&'static str, &[f64])>;
    fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;

    fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

fn check_io_dims(d_in: usize, d_out: usize) -> Result<()> {
    if d_out == 0 {
        return Err(Error::invalid("output dimension must be at least 1"));
    }
    if d_in != d_out && d_in != d_out + 1 {
        return Err(Error::invalid(format!(
            "input dimension {d_in} must equal the output dimension {d_out} or exceed it by one"
        )));
    }
    Ok(())
}

fn check_input(seq: &Sequence, d_in: usize) -> Result<()> {
    if seq.dim() != d_in {
        return Err(Error::dim("model input", d_in, seq.dim()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniRnnParams {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b_h: Vector,
    pub w_y: Matrix,
    pub b_y: Vector,
    pub family: OutputFamily,
}

impl UniRnnParams {
    pub fn zeros(d_in: usize, d_out: usize, c: usize, family: OutputFamily) -> Self {
        let stack = RecurrentStack::zeros(d_in, c);
        Self {
            w_x: stack.w_x,
            w_h: stack.w_h,
            b_h: stack.b_h,
            w_y: Matrix::zeros(d_out, c),
            b_y: vec![0.0; d_out],
            family,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w_y.rows()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_h.rows()
    }

    pub fn has_missing_channel(&self) -> bool {
        self.input_dim() == self.output_dim() + 1
    }

    pub fn validate(&self) -> Result<()> {
        check_io_dims(self.input_dim(), self.output_dim())?;
        let c = self.hidden_size();
        if self.w_h.cols() != c || self.w_x.rows() != c || self.b_h.len() != c {
            return Err(Error::invalid("inconsistent hidden dimensions"));
        }
        if self.w_y.cols() != c {
            return Err(Error::dim("w_y columns", c, self.w_y.cols()));
        }
        if self.b_y.len() != self.output_dim() {
            return Err(Error::dim("b_y", self.output_dim(), self.b_y.len()));
        }
        Ok(())
    }

    #[inline]
    pub fn step(&self, h_prev: &[f64], x: &[f64]) -> Vector {
        let mut a = self.b_h.clone();
        self.w_h.mul_acc(h_prev, &mut a);
        self.w_x.mul_acc_sparse(x, &mut a);
        a.iter_mut().for_each(|v| *v = v.tanh());
        a
    }

    /// `φ(W_y h + b_y)`.
    #[inline]
    pub fn emit(&self, h: &[f64]) -> StepDistribution {
        let mut logits = self.b_y.clone();
        self.w_y.mul_acc(h, &mut logits);
        StepDistribution::from_logits(self.family, logits)
    }

    /// Hidden states `h_0 .. h_{T-1}`.
    pub fn hidden_states(&self, x: &Sequence) -> Result<Vec<Vector>> {
        check_input(x, self.input_dim())?;
        let mut h = vec![0.0; self.hidden_size()];
        let mut out = Vec::with_capacity(x.len());
        for t in 0..x.len() {
            h = self.step(&h, x.step(t));
            out.push(h.clone());
        }
        Ok(out)
    }
}

/// Output at each step `t`, predicting `x_{t+1}`. The last entry predicts
/// the step after the end of the sequence.
pub fn uni_forward(params: &UniRnnParams, x: &Sequence) -> Result<Vec<StepDistribution>> {
    Ok(params
        .hidden_states(x)?
        .iter()
        .map(|h| params.emit(h))
        .collect())
}

/// `P(x_t | x_{<t})` for every `t`, aligned to the input: entry 0 comes from
/// the zero initial state (`φ(b_y)`), entry `t` from `h_{t-1}`.
pub fn uni_conditionals(params: &UniRnnParams, x: &Sequence) -> Result<Vec<StepDistribution>> {
    let hs = params.hidden_states(x)?;
    let mut out = Vec::with_capacity(x.len());
    if !x.is_empty() {
        out.push(params.emit(&vec![0.0; params.hidden_size()]));
    }
    out.extend(hs.iter().take(x.len().saturating_sub(1)).map(|h| params.emit(h)));
    Ok(out)
}

/// `Σ_t log P(x_t | x_{<t})` over the whole sequence.
pub fn uni_log_joint(params: &UniRnnParams, x: &Sequence) -> Result<f64> {
    let conds = uni_conditionals(params, x)?;
    Ok(conds
        .iter()
        .enumerate()
        .fold(0.0, |acc, (t, d)| acc + d.log_prob(x.step(t))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiRnnParams {
    pub fwd: RecurrentStack,
    pub bwd: RecurrentStack,
    pub w_y_f: Matrix,
    pub w_y_b: Matrix,
    pub b_y: Vector,
    pub family: OutputFamily,
}

impl BiRnnParams {
    pub fn zeros(d_in: usize, d_out: usize, c: usize, family: OutputFamily) -> Self {
        Self {
            fwd: RecurrentStack::zeros(d_in, c),
            bwd: RecurrentStack::zeros(d_in, c),
            w_y_f: Matrix::zeros(d_out, c),
            w_y_b: Matrix::zeros(d_out, c),
            b_y: vec![0.0; d_out],
            family,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.b_y.len()
    }

    pub fn hidden_size(&self) -> usize {
        self.fwd.hidden_size()
    }

    pub fn has_missing_channel(&self) -> bool {
        self.input_dim() == self.output_dim() + 1
    }

    pub fn validate(&self) -> Result<()> {
        check_io_dims(self.input_dim(), self.output_dim())?;
        self.fwd.check("forward stack")?;
        self.bwd.check("backward stack")?;
        let c = self.hidden_size();
        if self.bwd.hidden_size() != c || self.bwd.input_dim() != self.input_dim() {
            return Err(Error::invalid(
                "forward and backward stacks have different shapes",
            ));
        }
        for (name, m) in [("w_y_f", &self.w_y_f), ("w_y_b", &self.w_y_b)] {
            if m.rows() != self.output_dim() || m.cols() != c {
                return Err(Error::invalid(format!(
                    "{name} is {}x{}, expected {}x{c}",
                    m.rows(),
                    m.cols(),
                    self.output_dim()
                )));
            }
        }
        Ok(())
    }

    /// `φ(W_y^f h^f_{t-1} + W_y^b h^b_{t+1} + b_y)`.
    #[inline]
    pub fn emit(&self, hf_prev: &[f64], hb_next: &[f64]) -> StepDistribution {
        let mut logits = self.b_y.clone();
        self.w_y_f.mul_acc(hf_prev, &mut logits);
        self.w_y_b.mul_acc(hb_next, &mut logits);
        StepDistribution::from_logits(self.family, logits)
    }

    /// Forward states `h^f_0 .. h^f_{T-1}` and backward states
    /// `h^b_0 .. h^b_{T-1}`.
    pub fn hidden_states(&self, x: &Sequence) -> Result<(Vec<Vector>, Vec<Vector>)> {
        check_input(x, self.input_dim())?;
        let c = self.hidden_size();
        let t_len = x.len();
        let mut hf = Vec::with_capacity(t_len);
        let mut h = vec![0.0; c];
        for t in 0..t_len {
            h = self.fwd.step(&h, x.step(t));
            hf.push(h.clone());
        }
        let mut hb = vec![Vec::new(); t_len];
        let mut h = vec![0.0; c];
        for t in (0..t_len).rev() {
            h = self.bwd.step(&h, x.step(t));
            hb[t] = h.clone();
        }
        Ok((hf, hb))
    }
}

/// `P(x_t | x_{≠t})` for every step, using the shifted hidden states.
pub fn bi_forward(params: &BiRnnParams, x: &Sequence) -> Result<Vec<StepDistribution>> {
    let (hf, hb) = params.hidden_states(x)?;
    let zero = vec![0.0; params.hidden_size()];
    let t_len = x.len();
    Ok((0..t_len)
        .map(|t| {
            let f = if t == 0 { &zero } else { &hf[t - 1] };
            let b = if t + 1 == t_len { &zero } else { &hb[t + 1] };
            params.emit(f, b)
        })
        .collect())
}

/// The conventional bidirectional readout `φ(W_y^f h^f_t + W_y^b h^b_t + b_y)`.
///
/// Each output sees its own input, so this variant cannot be used to
/// reconstruct the current step. It is kept for comparison only; nothing in
/// training or inference calls it.
pub fn bi_forward_aligned(params: &BiRnnParams, x: &Sequence) -> Result<Vec<StepDistribution>> {
    let (hf, hb) = params.hidden_states(x)?;
    Ok(hf.iter().zip(&hb).map(|(f, b)| params.emit(f, b)).collect())
}

pub fn init_uni<R: Rng + ?Sized>(
    d_in: usize,
    d_out: usize,
    c: usize,
    family: OutputFamily,
    rng: &mut R,
) -> Result<UniRnnParams> {
    check_io_dims(d_in, d_out)?;
    if c == 0 {
        return Err(Error::invalid("hidden size must be at least 1"));
    }
    let stack = RecurrentStack::init(d_in, c, rng);
    let s_y = glorot_bound(c, d_out);
    Ok(UniRnnParams {
        w_x: stack.w_x,
        w_h: stack.w_h,
        b_h: stack.b_h,
        w_y: Matrix::from_fn(d_out, c, |_, _| rng.gen_range(-s_y..=s_y)),
        b_y: vec![0.0; d_out],
        family,
    })
}

pub fn init_bi<R: Rng + ?Sized>(
    d_in: usize,
    d_out: usize,
    c: usize,
    family: OutputFamily,
    rng: &mut R,
) -> Result<BiRnnParams> {
    check_io_dims(d_in, d_out)?;
    if c == 0 {
        return Err(Error::invalid("hidden size must be at least 1"));
    }
    let fwd = RecurrentStack::init(d_in, c, rng);
    let bwd = RecurrentStack::init(d_in, c, rng);
    let s_y = glorot_bound(c, d_out);
    let w_y_f = Matrix::from_fn(d_out, c, |_, _| rng.gen_range(-s_y..=s_y));
    let w_y_b = Matrix::from_fn(d_out, c, |_, _| rng.gen_range(-s_y..=s_y));
    Ok(BiRnnParams {
        fwd,
        bwd,
        w_y_f,
        w_y_b,
        b_y: vec![0.0; d_out],
        family,
    })
}

/// `d_in·c + c² + c·d_out + c + d_out`.
pub fn uni_param_count(d_in: usize, d_out: usize, c: usize) -> usize {
    d_in * c + c * c + c * d_out + c + d_out
}

/// Two stacks of `d_in·c + c² + c`, two readouts of `c·d_out`, and `b_y`.
pub fn bi_param_count(d_in: usize, d_out: usize, c: usize) -> usize {
    2 * (d_in * c + c * c + c) + 2 * c * d_out + d_out
}

impl Parameters for UniRnnParams {
    fn named_tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("w_x", self.w_x.data()),
            ("w_h", self.w_h.data()),
            ("b_h", &self.b_h),
            ("w_y", self.w_y.data()),
            ("b_y", &self.b_y),
        ]
    }

    fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w_x", self.w_x.data_mut()),
            ("w_h", self.w_h.data_mut()),
            ("b_h", &mut self.b_h),
            ("w_y", self.w_y.data_mut()),
            ("b_y", &mut self.b_y),
        ]
    }
}

impl Parameters for BiRnnParams {
    fn named_tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("w_x_f", self.fwd.w_x.data()),
            ("w_h_f", self.fwd.w_h.data()),
            ("b_h_f", &self.fwd.b_h),
            ("w_x_b", self.bwd.w_x.data()),
            ("w_h_b", self.bwd.w_h.data()),
            ("b_h_b", &self.bwd.b_h),
            ("w_y_f", self.w_y_f.data()),
            ("w_y_b", self.w_y_b.data()),
            ("b_y", &self.b_y),
        ]
    }

    fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w_x_f", self.fwd.w_x.data_mut()),
            ("w_h_f", self.fwd.w_h.data_mut()),
            ("b_h_f", &mut self.fwd.b_h),
            ("w_x_b", self.bwd.w_x.data_mut()),
            ("w_h_b", self.bwd.w_h.data_mut()),
            ("b_h_b", &mut self.bwd.b_h),
            ("w_y_f", self.w_y_f.data_mut()),
            ("w_y_b", self.w_y_b.data_mut()),
            ("b_y", &mut self.b_y),
        ]
    }
}
