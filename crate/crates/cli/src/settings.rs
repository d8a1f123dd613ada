//! Command options. Every option can come from a JSON config file (or the
//! `config` object of a previous run's manifest) and be overridden on the
//! command line; anything unset falls back to the built-in default.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use gapfill::corpus::GapSpec;
use gapfill::inference::Strategy;
use gapfill::training::Regime;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Text,
    Pianoroll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Uni,
    #[value(alias = "bi")]
    Brnn,
}

/// Data source options shared by the commands that read a corpus.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct DataArgs {
    /// Text file or piano-roll JSON.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Defaults to `pianoroll` for `.json` files, `text` otherwise.
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
    /// Alphabet JSON written by `prepare`; built from the data if absent.
    #[arg(long)]
    pub alphabet: Option<PathBuf>,
    /// Alphabet size cap (excluding the out-of-vocabulary symbol) when the
    /// alphabet is built from the data.
    #[arg(long)]
    pub max_symbols: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareArgs {
    /// Text corpus to split and index.
    #[arg(long)]
    pub text: Option<PathBuf>,
    /// Piano-roll JSON corpus to split.
    #[arg(long)]
    pub pianoroll: Option<PathBuf>,
    /// Generate a synthetic chord-progression piano roll instead.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub synthetic: Option<bool>,
    #[arg(long)]
    pub synth_dim: Option<usize>,
    #[arg(long)]
    pub synth_scores: Option<usize>,
    #[arg(long)]
    pub synth_len: Option<usize>,
    #[arg(long)]
    pub synth_hold: Option<usize>,
    #[arg(long)]
    pub synth_noise: Option<f64>,
    #[arg(long)]
    pub max_symbols: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub lowercase: Option<bool>,
    /// Fraction held out as test data.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    /// uni, brnn, nade_masked or nade_no_mask; defaults to the kind's plain
    /// regime.
    #[arg(long)]
    pub regime: Option<Regime>,
    /// Training sequence length.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub updates: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    /// Fraction of leading steps excluded from the loss.
    #[arg(long)]
    pub burnin_head: Option<f64>,
    /// Fraction of trailing steps excluded from the loss.
    #[arg(long)]
    pub burnin_tail: Option<f64>,
    #[arg(long)]
    pub nade_gap: Option<usize>,
    #[arg(long)]
    pub nade_stride: Option<usize>,
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct FillArgs {
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// Sequence to fill: a text file or piano-roll JSON.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
    /// Score index inside a piano-roll file.
    #[arg(long)]
    pub score: Option<usize>,
    /// Gap as `start:len`.
    #[arg(long)]
    pub gap: Option<GapSpec>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Unigram statistics (for `onegram`).
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long)]
    pub alphabet: Option<PathBuf>,
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub mcmc_steps: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Unidirectional checkpoint (bayes_mcmc, oneway).
    #[arg(long)]
    pub uni: Option<PathBuf>,
    /// Bidirectional checkpoint (gsn).
    #[arg(long)]
    pub bi: Option<PathBuf>,
    /// Missing-token bidirectional checkpoint (nade).
    #[arg(long)]
    pub nade: Option<PathBuf>,
    /// Bidirectional checkpoint trained without loss masking (table 2 only).
    #[arg(long)]
    pub nade_no_mask: Option<PathBuf>,
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<Strategy>>,
    #[arg(long)]
    pub gap_len: Option<usize>,
    #[arg(long)]
    pub n_gaps: Option<usize>,
    #[arg(long)]
    pub edge_exclusion: Option<usize>,
    /// Context window around each gap; 0 uses whole sequences.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub mcmc_steps: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Per-strategy gap caps, e.g. `bayes_mcmc=100`.
    #[arg(long, value_delimiter = ',')]
    pub max_gaps: Option<Vec<String>>,
    /// Also compute the GSN − NADE curve over `--M-grid`.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fig3: Option<bool>,
    #[arg(long = "M-grid", value_delimiter = ',')]
    #[serde(rename = "M_grid")]
    pub m_grid: Option<Vec<usize>>,
    /// Gaps used for the M curve (defaults to `--n-gaps`).
    #[arg(long)]
    pub fig3_gaps: Option<usize>,
    /// Also compute single-step NLL for every checkpoint given.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub table2: Option<bool>,
    /// Label for the data set column of fig3.csv.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct GridArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainArgs,
    /// Step sizes to try, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Fraction of the data held out for validation.
    #[arg(long)]
    pub valid_fraction: Option<f64>,
    /// Validation minibatches per grid point.
    #[arg(long)]
    pub valid_batches: Option<usize>,
}

/// Overlays the command-line options (only those given) on the config file.
pub fn resolve<T>(config: Option<&Path>, cli: &T) -> anyhow::Result<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let mut base = match config {
        None => Value::Object(Default::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| UsageError(format!("config {} is not valid JSON: {e}", path.display())))?;
            // A run manifest carries the snapshot under `config`.
            match v {
                Value::Object(mut m) if m.contains_key("command") && m.contains_key("config") => {
                    m.remove("config").unwrap_or_default()
                }
                other => other,
            }
        }
    };
    let over = serde_json::to_value(cli)?;
    if let (Value::Object(b), Value::Object(o)) = (&mut base, over) {
        for (k, v) in o {
            if !v.is_null() {
                b.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).map_err(|e| UsageError(format!("invalid configuration: {e}")).into())
}

pub fn infer_format(path: &Path, format: Option<DataFormat>) -> DataFormat {
    format.unwrap_or_else(|| {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            DataFormat::Pianoroll
        } else {
            DataFormat::Text
        }
    })
}
