//! Data ingestion and training-time masking.
//!
//! Text is encoded one character per step as a one-hot vector over an
//! [`Alphabet`]; piano rolls are binary vectors read from JSON. A
//! [`Sequence`] may carry one extra input channel, the missing-value token,
//! which is set (with all data channels zeroed) on steps the NADE-style
//! model must treat as unobserved.

use std::collections::HashMap;
use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelKind, OutputFamily};
use crate::numerics::argmax;

/// Character rendered for the out-of-alphabet symbol.
pub const OOV_CHAR: char = '\u{FFFD}';

/// Ordered character set. Index `symbols.len()` is the out-of-alphabet
/// symbol, so `d = symbols.len() + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    symbols: Vec<char>,
    #[serde(skip)]
    index: HashMap<char, usize>,
}

impl Alphabet {
    pub fn new(symbols: Vec<char>) -> Result<Self> {
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, &c) in symbols.iter().enumerate() {
            if c == OOV_CHAR {
                return Err(Error::invalid("the out-of-alphabet marker cannot be a symbol"));
            }
            if index.insert(c, i).is_some() {
                return Err(Error::invalid(format!("duplicate symbol {c:?}")));
            }
        }
        Ok(Self { symbols, index })
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    /// Number of one-hot channels, including the out-of-alphabet symbol.
    pub fn size(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn oov_index(&self) -> usize {
        self.symbols.len()
    }

    pub fn index(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(self.symbols.len())
    }

    pub fn symbol(&self, i: usize) -> char {
        self.symbols.get(i).copied().unwrap_or(OOV_CHAR)
    }

    /// Renders a sequence by taking the argmax over data channels. Steps
    /// holding the missing token render as `_`.
    pub fn decode(&self, seq: &Sequence) -> String {
        (0..seq.len())
            .map(|t| {
                if seq.is_missing(t) {
                    '_'
                } else {
                    self.symbol(seq.argmax(t))
                }
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = AlphabetFile {
            symbols: self.symbols.iter().map(|c| c.to_string()).collect(),
        };
        fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file: AlphabetFile = serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| {
            Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            }
        })?;
        let mut symbols = Vec::with_capacity(file.symbols.len());
        for s in file.symbols {
            let mut chars = s.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => symbols.push(c),
                _ => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        message: format!("symbol {s:?} is not a single character"),
                    })
                }
            }
        }
        Self::new(symbols)
    }
}

#[derive(Serialize, Deserialize)]
struct AlphabetFile {
    symbols: Vec<String>,
}

/// Keeps the `max_symbols` most frequent characters (ties broken by
/// codepoint) and reserves one extra index for everything else.
pub fn build_alphabet(text: &str, max_symbols: usize) -> Result<Alphabet> {
    if text.is_empty() {
        return Err(Error::invalid("cannot build an alphabet from empty text"));
    }
    let mut counts: HashMap<char, usize> = HashMap::new();
    for c in text.chars() {
        *counts.entry(c).or_default() += 1;
    }
    let mut ranked: Vec<(char, usize)> = counts.into_iter().filter(|&(c, _)| c != OOV_CHAR).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(max_symbols);
    Alphabet::new(ranked.into_iter().map(|(c, _)| c).collect())
}

pub fn encode_onehot(text: &str, alphabet: &Alphabet, with_missing_channel: bool) -> Sequence {
    let indices: Vec<usize> = text.chars().map(|c| alphabet.index(c)).collect();
    Sequence::from_indices(&indices, alphabet.size(), with_missing_channel)
}

/// Time-ordered observation vectors stored row-major, plus an optional
/// per-step missing mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    dim: usize,
    missing_channel: bool,
    data: Vec<f64>,
    mask: Option<Vec<bool>>,
}

impl Sequence {
    pub fn new(dim: usize, data: Vec<f64>, missing_channel: bool) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not form steps of dimension {dim}",
                data.len()
            )));
        }
        if missing_channel && dim < 2 {
            return Err(Error::invalid("a missing channel needs at least one data channel"));
        }
        Ok(Self {
            dim,
            missing_channel,
            data,
            mask: None,
        })
    }

    pub fn from_steps(steps: &[Vec<f64>]) -> Result<Self> {
        let dim = steps.first().map_or(1, |s| s.len());
        let mut data = Vec::with_capacity(steps.len() * dim);
        for s in steps {
            if s.len() != dim {
                return Err(Error::dim("Sequence::from_steps", dim, s.len()));
            }
            data.extend_from_slice(s);
        }
        Self::new(dim, data, false)
    }

    /// One-hot steps over `d` classes, optionally with a zeroed missing
    /// channel appended.
    pub fn from_indices(indices: &[usize], d: usize, with_missing_channel: bool) -> Self {
        let dim = d + usize::from(with_missing_channel);
        let mut data = vec![0.0; indices.len() * dim];
        for (t, &i) in indices.iter().enumerate() {
            data[t * dim + i] = 1.0;
        }
        Self {
            dim,
            missing_channel: with_missing_channel,
            data,
            mask: None,
        }
    }

    pub fn empty(dim: usize, missing_channel: bool) -> Self {
        Self {
            dim,
            missing_channel,
            data: Vec::new(),
            mask: None,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Full input dimension, including any missing channel.
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn data_dim(&self) -> usize {
        self.dim - usize::from(self.missing_channel)
    }

    pub fn has_missing_channel(&self) -> bool {
        self.missing_channel
    }

    #[inline]
    pub fn step(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    #[inline]
    pub fn step_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Argmax over the data channels of step `t`.
    pub fn argmax(&self, t: usize) -> usize {
        argmax(&self.step(t)[..self.data_dim()])
    }

    pub fn set_onehot(&mut self, t: usize, class: usize) {
        let dd = self.data_dim();
        assert!(class < dd, "class {class} out of range for {dd} channels");
        let s = self.step_mut(t);
        s.iter_mut().for_each(|v| *v = 0.0);
        s[class] = 1.0;
        if let Some(m) = &mut self.mask {
            m[t] = false;
        }
    }

    /// Writes data channels for step `t` and clears its missing flag.
    pub fn set_step_data(&mut self, t: usize, values: &[f64]) {
        let dd = self.data_dim();
        let missing = self.missing_channel;
        let s = self.step_mut(t);
        s[..dd].copy_from_slice(&values[..dd]);
        if missing {
            s[dd] = 0.0;
        }
        if let Some(m) = &mut self.mask {
            m[t] = false;
        }
    }

    /// Sets the missing token on step `t`: data channels zeroed, missing
    /// channel set, mask updated.
    pub fn mark_missing(&mut self, t: usize) -> Result<()> {
        if !self.missing_channel {
            return Err(Error::invalid("sequence has no missing-value channel"));
        }
        let dd = self.data_dim();
        let s = self.step_mut(t);
        s.iter_mut().for_each(|v| *v = 0.0);
        s[dd] = 1.0;
        let len = self.len();
        self.mask.get_or_insert_with(|| vec![false; len])[t] = true;
        Ok(())
    }

    pub fn is_missing(&self, t: usize) -> bool {
        if let Some(m) = &self.mask {
            if m[t] {
                return true;
            }
        }
        self.missing_channel && self.step(t)[self.data_dim()] == 1.0
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn window(&self, start: usize, len: usize) -> Sequence {
        Sequence {
            dim: self.dim,
            missing_channel: self.missing_channel,
            data: self.data[start * self.dim..(start + len) * self.dim].to_vec(),
            mask: self.mask.as_ref().map(|m| m[start..start + len].to_vec()),
        }
    }

    /// Copy with a zeroed missing channel appended (no-op if present).
    pub fn with_missing_channel(&self) -> Sequence {
        if self.missing_channel {
            return self.clone();
        }
        let dim = self.dim + 1;
        let mut data = Vec::with_capacity(self.len() * dim);
        for t in 0..self.len() {
            data.extend_from_slice(self.step(t));
            data.push(0.0);
        }
        Sequence {
            dim,
            missing_channel: true,
            data,
            mask: self.mask.clone(),
        }
    }

    /// Copy with the missing channel removed.
    pub fn data_only(&self) -> Sequence {
        if !self.missing_channel {
            return self.clone();
        }
        let dd = self.data_dim();
        let mut data = Vec::with_capacity(self.len() * dd);
        for t in 0..self.len() {
            data.extend_from_slice(&self.step(t)[..dd]);
        }
        Sequence {
            dim: dd,
            missing_channel: false,
            data,
            mask: self.mask.clone(),
        }
    }
}

/// Contiguous missing region `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GapSpec {
    pub start: usize,
    pub len: usize,
}

impl GapSpec {
    pub fn new(start: usize, len: usize, seq_len: usize) -> Result<Self> {
        let gap = Self { start, len };
        gap.check(seq_len)?;
        Ok(gap)
    }

    pub fn check(&self, seq_len: usize) -> Result<()> {
        if self.len == 0 {
            return Err(Error::invalid("gap length must be at least 1"));
        }
        if self.start + self.len > seq_len {
            return Err(Error::invalid(format!(
                "gap {}..{} exceeds sequence length {seq_len}",
                self.start,
                self.start + self.len
            )));
        }
        Ok(())
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end()
    }

    pub fn contains(&self, t: usize) -> bool {
        self.range().contains(&t)
    }
}

impl std::str::FromStr for GapSpec {
    type Err = Error;

    /// Parses `start:len`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("gap `{s}` is not of the form start:len")))?;
        let start = a
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad gap start `{a}`")))?;
        let len = b
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad gap length `{b}`")))?;
        if len == 0 {
            return Err(Error::invalid("gap length must be at least 1"));
        }
        Ok(Self { start, len })
    }
}

/// Equal-length training sequences. `inputs` may carry a missing channel;
/// `targets` hold the clean data channels. `error_mask[t]` marks target step
/// `t` as contributing to the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub inputs: Vec<Sequence>,
    pub targets: Vec<Sequence>,
    pub error_mask: Vec<bool>,
}

impl Minibatch {
    pub fn new(inputs: Vec<Sequence>, targets: Vec<Sequence>, error_mask: Vec<bool>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::dim("minibatch targets", inputs.len(), targets.len()));
        }
        let t_len = error_mask.len();
        for (x, y) in inputs.iter().zip(&targets) {
            if x.len() != t_len || y.len() != t_len {
                return Err(Error::invalid(format!(
                    "minibatch sequences must all have length {t_len}"
                )));
            }
        }
        Ok(Self {
            inputs,
            targets,
            error_mask,
        })
    }

    /// Batch whose inputs are the targets themselves.
    pub fn from_clean(sequences: Vec<Sequence>, error_mask: Vec<bool>) -> Result<Self> {
        let targets = sequences.iter().map(Sequence::data_only).collect();
        Self::new(sequences, targets, error_mask)
    }

    pub fn seq_len(&self) -> usize {
        self.error_mask.len()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn scored_positions(&self) -> usize {
        self.error_mask.iter().filter(|&&m| m).count()
    }
}

/// Burn-in fractions at the head and tail of a training sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burnin {
    pub head: f64,
    pub tail: f64,
}

impl Burnin {
    pub const NONE: Burnin = Burnin {
        head: 0.0,
        tail: 0.0,
    };

    /// 20% head for the unidirectional model; one sixth at both ends for the
    /// bidirectional one (250/200 and 300/200 at full scale).
    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Uni => Burnin {
                head: 0.2,
                tail: 0.0,
            },
            ModelKind::Bi => Burnin {
                head: 1.0 / 6.0,
                tail: 1.0 / 6.0,
            },
        }
    }

    fn count(frac: f64, t_len: usize) -> usize {
        // Tolerate representation error in products like 0.2 * 250.
        ((frac * t_len as f64) - 1e-9).ceil().max(0.0) as usize
    }

    pub fn mask(&self, t_len: usize) -> Result<Vec<bool>> {
        if !(0.0..1.0).contains(&self.head) || !(0.0..1.0).contains(&self.tail) {
            return Err(Error::invalid("burn-in fractions must lie in [0, 1)"));
        }
        let head = Self::count(self.head, t_len);
        let tail = Self::count(self.tail, t_len);
        if head + tail >= t_len {
            return Err(Error::invalid(format!(
                "sequence length {t_len} leaves no positions after burn-in ({head} head, {tail} tail)"
            )));
        }
        Ok((0..t_len).map(|t| t >= head && t < t_len - tail).collect())
    }
}

pub fn burnin_mask(t_len: usize, kind: ModelKind) -> Result<Vec<bool>> {
    Burnin::for_kind(kind).mask(t_len)
}

/// Sets the missing token on `k` consecutive steps starting at `run_start`.
pub(crate) fn mask_run(seq: &mut Sequence, run_start: usize, k: usize) -> Result<()> {
    for t in run_start..run_start + k {
        seq.mark_missing(t)?;
    }
    Ok(())
}

/// NADE training mask. Every complete window of `stride` steps gets one gap
/// of `gap_len` steps at a uniform offset (shared by the batch). Inside each
/// gap, every sequence draws `k ~ U{1..gap_len}` and hides a uniformly placed
/// contiguous run of `k` steps. The error mask is exactly the gap positions.
pub fn nade_mask_gaps<R: Rng + ?Sized>(
    batch: &Minibatch,
    gap_len: usize,
    stride: usize,
    rng: &mut R,
) -> Result<Minibatch> {
    if gap_len == 0 || stride < gap_len {
        return Err(Error::invalid(format!(
            "stride {stride} must be at least the gap length {gap_len} (>= 1)"
        )));
    }
    if let Some(x) = batch.inputs.iter().find(|x| !x.has_missing_channel()) {
        return Err(Error::invalid(format!(
            "NADE masking needs a missing-value channel (input dim {})",
            x.dim()
        )));
    }
    let t_len = batch.seq_len();
    let mut out = batch.clone();
    out.error_mask = vec![false; t_len];
    let windows = t_len / stride;
    if windows == 0 {
        log::warn!("sequence length {t_len} is shorter than the gap stride {stride}; no gaps placed");
        return Ok(out);
    }
    let mut gap_starts = Vec::with_capacity(windows);
    for w in 0..windows {
        let start = w * stride + rng.gen_range(0..=stride - gap_len);
        gap_starts.push(start);
        out.error_mask[start..start + gap_len].iter_mut().for_each(|m| *m = true);
    }
    for seq in &mut out.inputs {
        for &start in &gap_starts {
            let k = rng.gen_range(1..=gap_len);
            let offset = rng.gen_range(0..=gap_len - k);
            mask_run(seq, start + offset, k)?;
        }
    }
    Ok(out)
}

/// Training or test data for one model family: data-only sequences of a
/// common step dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub family: OutputFamily,
    pub dim: usize,
    pub sequences: Vec<Sequence>,
}

impl Corpus {
    pub fn new(family: OutputFamily, dim: usize, sequences: Vec<Sequence>) -> Result<Self> {
        for s in &sequences {
            if s.dim() != dim || s.has_missing_channel() {
                return Err(Error::dim("corpus sequence", dim, s.dim()));
            }
        }
        Ok(Self {
            family,
            dim,
            sequences,
        })
    }

    pub fn from_text(text: &str, alphabet: &Alphabet) -> Self {
        Self {
            family: OutputFamily::Softmax,
            dim: alphabet.size(),
            sequences: vec![encode_onehot(text, alphabet, false)],
        }
    }

    pub fn from_pianoroll(path: impl AsRef<Path>) -> Result<Self> {
        let roll = read_pianoroll(path)?;
        Self::new(OutputFamily::Bernoulli, roll.dim, roll.scores)
    }

    pub fn total_steps(&self) -> usize {
        self.sequences.iter().map(Sequence::len).sum()
    }

    pub fn max_len(&self) -> usize {
        self.sequences.iter().map(Sequence::len).max().unwrap_or(0)
    }

    /// Draws a window of `t_len` steps: a sequence uniformly among those
    /// long enough, then a uniform offset.
    pub fn sample_window<R: Rng + ?Sized>(&self, t_len: usize, rng: &mut R) -> Result<Sequence> {
        let eligible: Vec<&Sequence> = self.sequences.iter().filter(|s| s.len() >= t_len).collect();
        if eligible.is_empty() {
            return Err(Error::invalid(format!(
                "no sequence in the corpus has at least {t_len} steps"
            )));
        }
        let seq = eligible[rng.gen_range(0..eligible.len())];
        let start = rng.gen_range(0..=seq.len() - t_len);
        Ok(seq.window(start, t_len))
    }

    /// Splits off the last `fraction` of steps: text is cut inside its single
    /// sequence, multi-score corpora are split by score.
    pub fn split(&self, fraction: f64) -> Result<(Corpus, Corpus)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::invalid("split fraction must lie in [0, 1)"));
        }
        let (a, b) = if self.sequences.len() == 1 {
            let s = &self.sequences[0];
            let cut = ((1.0 - fraction) * s.len() as f64).round() as usize;
            (vec![s.window(0, cut)], vec![s.window(cut, s.len() - cut)])
        } else {
            let n = self.sequences.len();
            let cut = ((1.0 - fraction) * n as f64).round() as usize;
            (self.sequences[..cut].to_vec(), self.sequences[cut..].to_vec())
        };
        Ok((
            Corpus::new(self.family, self.dim, a)?,
            Corpus::new(self.family, self.dim, b)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PianoRoll {
    pub dim: usize,
    pub scores: Vec<Sequence>,
}

#[derive(Serialize, Deserialize)]
struct PianoRollFile {
    dim: usize,
    scores: Vec<Vec<Vec<f64>>>,
}

/// Reads `{"dim": 88, "scores": [[[0,1,...], ...], ...]}`.
pub fn load_pianoroll(path: impl AsRef<Path>) -> Result<Vec<Sequence>> {
    Ok(read_pianoroll(path)?.scores)
}

pub fn read_pianoroll(path: impl AsRef<Path>) -> Result<PianoRoll> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let file: PianoRollFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if file.dim == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "dim must be at least 1".into(),
        });
    }
    let mut scores = Vec::with_capacity(file.scores.len());
    for (si, score) in file.scores.iter().enumerate() {
        let mut data = Vec::with_capacity(score.len() * file.dim);
        for (ti, step) in score.iter().enumerate() {
            if step.len() != file.dim {
                return Err(Error::Validation {
                    score: si,
                    step: ti,
                    message: format!("expected {} channels, found {}", file.dim, step.len()),
                });
            }
            if let Some(v) = step.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::Validation {
                    score: si,
                    step: ti,
                    message: format!("entry {v} is not binary"),
                });
            }
            data.extend_from_slice(step);
        }
        scores.push(Sequence::new(file.dim, data, false)?);
    }
    Ok(PianoRoll {
        dim: file.dim,
        scores,
    })
}

pub fn save_pianoroll(path: impl AsRef<Path>, dim: usize, scores: &[Sequence]) -> Result<()> {
    let file = PianoRollFile {
        dim,
        scores: scores
            .iter()
            .map(|s| (0..s.len()).map(|t| s.step(t)[..dim].to_vec()).collect())
            .collect(),
    };
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

/// Synthetic piano rolls: a fixed cycle of `dim`-key chords, each held for
/// `hold` steps, with every bit flipped independently with probability
/// `noise`.
pub fn synthetic_chord_rolls<R: Rng + ?Sized>(
    dim: usize,
    n_scores: usize,
    score_len: usize,
    hold: usize,
    noise: f64,
    rng: &mut R,
) -> Vec<Sequence> {
    // Triads on a cycle of roots: I, vi, IV, V style progression folded onto
    // `dim` keys.
    let roots = [0usize, 5, 3, 4];
    let chord = |r: usize| -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for off in [0, 2, 4] {
            v[(r + off) % dim] = 1.0;
        }
        v
    };
    (0..n_scores)
        .map(|_| {
            let phase = rng.gen_range(0..roots.len() * hold);
            let mut data = Vec::with_capacity(score_len * dim);
            for t in 0..score_len {
                let r = roots[((t + phase) / hold) % roots.len()];
                for mut v in chord(r) {
                    if rng.gen::<f64>() < noise {
                        v = 1.0 - v;
                    }
                    data.push(v);
                }
            }
            Sequence::new(dim, data, false).expect("consistent dims")
        })
        .collect()
}
