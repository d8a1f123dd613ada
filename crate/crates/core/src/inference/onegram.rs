use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_gap, GapResult, Strategy};
use crate::corpus::{Corpus, GapSpec, Sequence};
use crate::error::{Error, Result};
use crate::models::{OutputFamily, StepDistribution};

/// Context-free baseline: class frequencies (categorical) or per-channel
/// means (binary), estimated once from a training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneGram {
    pub family: OutputFamily,
    pub probs: Vec<f64>,
    /// Number of steps the statistics were estimated from.
    pub n_steps: usize,
}

impl OneGram {
    /// Add-one smoothing for categories; Bernoulli means clamped to
    /// `[1/(n+2), 1 − 1/(n+2)]`.
    pub fn estimate(corpus: &Corpus) -> Result<Self> {
        let d = corpus.dim;
        let n = corpus.total_steps();
        if n == 0 {
            return Err(Error::invalid("cannot estimate unigram statistics from an empty corpus"));
        }
        let mut counts = vec![0.0; d];
        for seq in &corpus.sequences {
            for t in 0..seq.len() {
                match corpus.family {
                    OutputFamily::Softmax => counts[seq.argmax(t)] += 1.0,
                    OutputFamily::Bernoulli => {
                        for (c, v) in counts.iter_mut().zip(&seq.step(t)[..d]) {
                            *c += v;
                        }
                    }
                }
            }
        }
        let nf = n as f64;
        let probs = match corpus.family {
            OutputFamily::Softmax => counts.iter().map(|c| (c + 1.0) / (nf + d as f64)).collect(),
            OutputFamily::Bernoulli => {
                let lo = 1.0 / (nf + 2.0);
                counts.iter().map(|c| (c / nf).clamp(lo, 1.0 - lo)).collect()
            }
        };
        Ok(Self {
            family: corpus.family,
            probs,
            n_steps: n,
        })
    }

    pub fn from_probs(family: OutputFamily, probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("unigram probabilities must lie in [0, 1]"));
        }
        if family == OutputFamily::Softmax {
            let s: f64 = probs.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("class probabilities sum to {s}, not 1")));
            }
        }
        Ok(Self {
            family,
            probs,
            n_steps: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn distribution(&self) -> StepDistribution {
        StepDistribution {
            family: self.family,
            params: self.probs.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s: Self = serde_json::from_slice(&std::fs::read(path)?).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_probs(s.family, s.probs.clone())?;
        Ok(s)
    }
}

pub fn onegram_nll(stats: &OneGram, x: &Sequence, gap: GapSpec) -> Result<GapResult> {
    check_gap(x, gap)?;
    if x.data_dim() != stats.dim() {
        return Err(Error::dim("sequence data channels", stats.dim(), x.data_dim()));
    }
    let dist = stats.distribution();
    let mut result = GapResult::new(Strategy::Onegram, gap);
    result.per_position_nll = gap.range().map(|t| -dist.log_prob(x.step(t))).collect();
    result.gap_nll = result.per_position_nll.iter().sum();
    result.chain_log_likelihoods = vec![-result.gap_nll];
    if !result.gap_nll.is_finite() {
        result.flag("infinite_nll");
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Alphabet;

    #[test]
    fn uniform_categories() {
        let g = OneGram::from_probs(OutputFamily::Softmax, vec![0.25; 4]).unwrap();
        let x = Sequence::from_indices(&[0, 1, 2, 3, 0, 1, 2], 4, false);
        let r = onegram_nll(&g, &x, GapSpec::new(1, 5, 7).unwrap()).unwrap();
        assert!((r.gap_nll - 5.0 * 4f64.ln()).abs() < 1e-12);
        assert!(r.per_position_nll.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn binary_means() {
        let g = OneGram::from_probs(OutputFamily::Bernoulli, vec![0.5, 0.5]).unwrap();
        let x = Sequence::from_steps(&[vec![1.0, 0.0]]).unwrap();
        let r = onegram_nll(&g, &x, GapSpec::new(0, 1, 1).unwrap()).unwrap();
        assert!((r.gap_nll - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn add_one_smoothing() {
        // `b` lands in the reserved out-of-vocabulary channel: d = 2.
        let alpha = Alphabet::new(vec!['a']).unwrap();
        let corpus = Corpus::from_text("aaab", &alpha);
        assert_eq!(corpus.dim, 2);
        let g = OneGram::estimate(&corpus).unwrap();
        assert!((g.probs[0] - 4.0 / 6.0).abs() < 1e-15);
        let x = &corpus.sequences[0];
        let r = onegram_nll(&g, x, GapSpec::new(0, 1, 4).unwrap()).unwrap();
        assert!((r.gap_nll + (4.0f64 / 6.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn binary_clamp() {
        let seqs = vec![Sequence::from_steps(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap()];
        let corpus = Corpus::new(OutputFamily::Bernoulli, 2, seqs).unwrap();
        let g = OneGram::estimate(&corpus).unwrap();
        assert_eq!(g.probs, vec![0.75, 0.25]);
    }
}
