//! Batch gap evaluation and report tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GapSpec, Sequence};
use crate::error::{Error, Result};
use crate::inference::{
    bayes_mcmc_fill, gsn_fill, nade_exact_gap_nll, onegram_nll, oneway_fill, to_model_input,
    ChainConfig, GapResult, OneGram, Strategy,
};
use crate::models::{BiRnnParams, Model, UniRnnParams};
use crate::rng::{self, label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub gap_len: usize,
    pub n_gaps: usize,
    /// Gaps never touch the first or last `edge_exclusion` steps of a
    /// sequence or of its evaluation window.
    pub edge_exclusion: usize,
    pub strategies: Vec<Strategy>,
    pub seed: u64,
    /// Length of the context window cut around each gap; `None` uses the
    /// whole sequence.
    pub window_len: Option<usize>,
    /// Chain settings for the sampling strategies (the seed is replaced per
    /// gap and strategy).
    pub chain: ChainConfig,
    /// Optional cap on the number of gaps for individual strategies; the
    /// capped strategy scores the first gaps of the shared sample.
    pub max_gaps: BTreeMap<Strategy, usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            gap_len: 5,
            n_gaps: 500,
            edge_exclusion: 10,
            strategies: Strategy::ALL.to_vec(),
            seed: 0,
            window_len: Some(50),
            chain: ChainConfig::default(),
            max_gaps: BTreeMap::new(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gap_len == 0 {
            return Err(Error::invalid("gap length must be at least 1"));
        }
        if self.n_gaps == 0 {
            return Err(Error::invalid("n_gaps must be at least 1"));
        }
        if self.strategies.is_empty() {
            return Err(Error::invalid("no strategies requested"));
        }
        if let Some(w) = self.window_len {
            if w < self.min_len() {
                return Err(Error::invalid(format!(
                    "window of {w} steps cannot hold a gap of {} with {} excluded steps at each edge",
                    self.gap_len, self.edge_exclusion
                )));
            }
        }
        Ok(())
    }

    fn min_len(&self) -> usize {
        2 * self.edge_exclusion + self.gap_len
    }

    fn limit(&self, s: Strategy) -> usize {
        self.max_gaps.get(&s).copied().unwrap_or(usize::MAX)
    }

    fn strategies_sorted(&self) -> Vec<Strategy> {
        let mut s = self.strategies.clone();
        s.sort();
        s.dedup();
        s
    }
}

/// The trained artifacts a strategy may need.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalModels<'a> {
    /// Bidirectional model for `gsn`.
    pub bi: Option<&'a BiRnnParams>,
    /// Missing-token bidirectional model for `nade`.
    pub nade: Option<&'a BiRnnParams>,
    /// Unidirectional model for `bayes_mcmc` and `oneway`.
    pub uni: Option<&'a UniRnnParams>,
    pub onegram: Option<&'a OneGram>,
}

impl EvalModels<'_> {
    /// Names of the artifacts missing for the given strategies.
    pub fn missing_for(&self, strategies: &[Strategy]) -> Vec<String> {
        let mut out = Vec::new();
        for &s in strategies {
            let ok = match s {
                Strategy::Gsn => self.bi.is_some(),
                Strategy::Nade => self.nade.is_some(),
                Strategy::BayesMcmc | Strategy::Oneway => self.uni.is_some(),
                Strategy::Onegram => self.onegram.is_some(),
            };
            if !ok {
                out.push(format!("{s}: {}", requirement(s)));
            }
        }
        out
    }
}

fn requirement(s: Strategy) -> &'static str {
    match s {
        Strategy::Gsn => "bidirectional checkpoint",
        Strategy::Nade => "bidirectional checkpoint trained with the missing-value channel",
        Strategy::BayesMcmc | Strategy::Oneway => "unidirectional checkpoint",
        Strategy::Onegram => "unigram statistics",
    }
}

/// Runs one strategy on one gap.
pub fn run_strategy(
    models: &EvalModels<'_>,
    strategy: Strategy,
    x: &Sequence,
    gap: GapSpec,
    chain: &ChainConfig,
) -> Result<GapResult> {
    let need = || Error::invalid(format!("strategy {strategy} needs a {}", requirement(strategy)));
    match strategy {
        Strategy::Gsn => gsn_fill(models.bi.ok_or_else(need)?, x, gap, chain),
        Strategy::Nade => nade_exact_gap_nll(models.nade.ok_or_else(need)?, x, gap),
        Strategy::BayesMcmc => bayes_mcmc_fill(models.uni.ok_or_else(need)?, x, gap, chain),
        Strategy::Oneway => oneway_fill(models.uni.ok_or_else(need)?, x, gap, chain),
        Strategy::Onegram => onegram_nll(models.onegram.ok_or_else(need)?, x, gap),
    }
}

/// One sampled gap: `window` of sequence `sequence` starting at
/// `window_start`, with `gap` in window coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapSite {
    pub sequence: usize,
    pub window_start: usize,
    pub window_len: usize,
    pub gap: GapSpec,
}

impl GapSite {
    pub fn window(&self, corpus: &Corpus) -> Sequence {
        corpus.sequences[self.sequence].window(self.window_start, self.window_len)
    }
}

/// Samples up to `n_gaps` distinct gap positions, uniformly without
/// replacement among all positions that respect the edge exclusion.
pub fn sample_gap_sites(corpus: &Corpus, cfg: &EvalConfig, gap_len: usize) -> Result<Vec<GapSite>> {
    let edge = cfg.edge_exclusion;
    let min_len = 2 * edge + gap_len;
    let win = cfg.window_len;
    // Eligible starts per sequence: [edge, len − edge − g].
    let counts: Vec<usize> = corpus
        .sequences
        .iter()
        .map(|s| {
            let ok = s.len() >= min_len && win.is_none_or(|w| s.len() >= w);
            if ok {
                s.len() - min_len + 1
            } else {
                0
            }
        })
        .collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::invalid(format!(
            "no sequence is long enough for a gap of {gap_len} with {edge} excluded steps at each edge \
             (needs at least {} steps)",
            win.map_or(min_len, |w| w.max(min_len))
        )));
    }
    let mut rng = rng::stream(cfg.seed, &[label::GAPS, gap_len as u64]);
    let n = cfg.n_gaps.min(total);
    let picks = index::sample(&mut rng, total, n);
    let mut sites = Vec::with_capacity(n);
    for mut k in picks.into_iter() {
        let mut seq = 0;
        while k >= counts[seq] {
            k -= counts[seq];
            seq += 1;
        }
        let start = edge + k;
        let len = corpus.sequences[seq].len();
        let (window_start, window_len) = match win {
            None => (0, len),
            Some(w) => {
                let centered = (start + gap_len / 2).saturating_sub(w / 2);
                (centered.min(len - w), w)
            }
        };
        sites.push(GapSite {
            sequence: seq,
            window_start,
            window_len,
            gap: GapSpec {
                start: start - window_start,
                len: gap_len,
            },
        });
    }
    Ok(sites)
}

fn strategy_index(s: Strategy) -> u64 {
    Strategy::ALL.iter().position(|&x| x == s).unwrap_or(0) as u64
}

fn chain_for(cfg: &EvalConfig, gap_index: usize, s: Strategy, gap_len: usize) -> ChainConfig {
    ChainConfig {
        seed: rng::derive_path(
            cfg.seed,
            &[label::EVAL, gap_len as u64, gap_index as u64, strategy_index(s)],
        ),
        ..cfg.chain.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub index: usize,
    pub site: GapSite,
    pub results: Vec<GapResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub n_gaps: usize,
    pub n_flagged: usize,
    /// Mean over unflagged gaps.
    pub mean_gap_nll: f64,
    /// Mean per-position NLL over unflagged gaps that report one.
    pub per_position_nll: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCurvePoint {
    #[serde(rename = "M")]
    pub mcmc_steps: usize,
    pub gsn_gap_nll: f64,
    pub nade_gap_nll: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleStepRow {
    pub model: String,
    pub n_gaps: usize,
    pub mean_nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub summaries: Vec<StrategySummary>,
    pub records: Vec<GapRecord>,
    #[serde(default)]
    pub step_curve: Vec<StepCurvePoint>,
    #[serde(default)]
    pub single_step: Vec<SingleStepRow>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn summarize(strategy: Strategy, results: &[&GapResult], g: usize) -> StrategySummary {
    let ok: Vec<&&GapResult> = results.iter().filter(|r| !r.is_flagged()).collect();
    let nll: Vec<f64> = ok.iter().map(|r| r.gap_nll).collect();
    let with_pp: Vec<&&&GapResult> = ok.iter().filter(|r| r.per_position_nll.len() == g).collect();
    let per_position = if with_pp.is_empty() {
        Vec::new()
    } else {
        (0..g)
            .map(|k| {
                let col: Vec<f64> = with_pp
                    .iter()
                    .map(|r| r.per_position_nll[k])
                    .filter(|v| v.is_finite())
                    .collect();
                mean(&col)
            })
            .collect()
    };
    StrategySummary {
        strategy,
        n_gaps: results.len(),
        n_flagged: results.len() - ok.len(),
        mean_gap_nll: mean(&nll),
        per_position_nll: per_position,
    }
}

/// Samples gaps from `corpus` and scores every configured strategy on them.
pub fn evaluate_gaps(models: &EvalModels<'_>, corpus: &Corpus, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let strategies = cfg.strategies_sorted();
    let missing = models.missing_for(&strategies);
    if !missing.is_empty() {
        return Err(Error::invalid(format!("missing inputs: {}", missing.join("; "))));
    }
    let sites = sample_gap_sites(corpus, cfg, cfg.gap_len)?;
    let mut records = Vec::with_capacity(sites.len());
    for (i, site) in sites.iter().enumerate() {
        let x = site.window(corpus);
        let mut results = Vec::new();
        for &s in &strategies {
            if i < cfg.limit(s) {
                results.push(run_strategy(models, s, &x, site.gap, &chain_for(cfg, i, s, cfg.gap_len))?);
            }
        }
        if (i + 1) % 50 == 0 {
            log::info!("evaluated {}/{} gaps", i + 1, sites.len());
        }
        records.push(GapRecord {
            index: i,
            site: *site,
            results,
        });
    }
    let summaries = strategies
        .iter()
        .map(|&s| {
            let rs: Vec<&GapResult> = records
                .iter()
                .flat_map(|r| r.results.iter().filter(move |x| x.strategy == s))
                .collect();
            summarize(s, &rs, cfg.gap_len)
        })
        .collect();
    Ok(EvalReport {
        config: cfg.clone(),
        summaries,
        records,
        step_curve: Vec::new(),
        single_step: Vec::new(),
    })
}

impl EvalReport {
    pub fn summary(&self, s: Strategy) -> Option<&StrategySummary> {
        self.summaries.iter().find(|x| x.strategy == s)
    }

    /// Mean gap NLL of `a` and `b` over the gaps both scored without flags.
    pub fn paired_means(&self, a: Strategy, b: Strategy) -> (f64, f64, usize) {
        let mut va = Vec::new();
        let mut vb = Vec::new();
        for r in &self.records {
            let ra = r.results.iter().find(|x| x.strategy == a);
            let rb = r.results.iter().find(|x| x.strategy == b);
            if let (Some(ra), Some(rb)) = (ra, rb) {
                if !ra.is_flagged() && !rb.is_flagged() {
                    va.push(ra.gap_nll);
                    vb.push(rb.gap_nll);
                }
            }
        }
        (mean(&va), mean(&vb), va.len())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `report.json`, `table1.csv`, `fig2.csv`, `fig3.csv` and
    /// `table2.csv` into `dir`.
    pub fn write_all(&self, dir: impl AsRef<Path>, dataset: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        std::fs::write(dir.join("table1.csv"), table1_csv(self))?;
        std::fs::write(dir.join("fig2.csv"), per_position_curves(self))?;
        std::fs::write(dir.join("fig3.csv"), step_curve_csv(dataset, &self.step_curve))?;
        std::fs::write(dir.join("table2.csv"), single_step_csv(&self.single_step))?;
        Ok(())
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

pub fn table1_csv(report: &EvalReport) -> String {
    let mut out = String::from("strategy,n_gaps,n_flagged,mean_gap_nll\n");
    for s in &report.summaries {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            s.strategy,
            s.n_gaps,
            s.n_flagged,
            fmt_num(s.mean_gap_nll)
        );
    }
    out
}

/// One row per strategy, one column per gap position.
pub fn per_position_curves(report: &EvalReport) -> String {
    let g = report.config.gap_len;
    let mut out = String::from("strategy");
    for k in 1..=g {
        let _ = write!(out, ",pos{k}");
    }
    out.push('\n');
    for s in &report.summaries {
        if s.per_position_nll.len() != g {
            continue;
        }
        out.push_str(s.strategy.as_str());
        for v in &s.per_position_nll {
            let _ = write!(out, ",{}", fmt_num(*v));
        }
        out.push('\n');
    }
    out
}

pub fn step_curve_csv(dataset: &str, curve: &[StepCurvePoint]) -> String {
    let mut out = String::from("dataset,M,gsn_gap_nll,nade_gap_nll,difference\n");
    for p in curve {
        let _ = writeln!(
            out,
            "{dataset},{},{},{},{}",
            p.mcmc_steps,
            fmt_num(p.gsn_gap_nll),
            fmt_num(p.nade_gap_nll),
            fmt_num(p.difference)
        );
    }
    out
}

pub fn single_step_csv(rows: &[SingleStepRow]) -> String {
    let mut out = String::from("model,n_gaps,mean_nll\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.model, r.n_gaps, fmt_num(r.mean_nll));
    }
    out
}

/// GSN minus exact NADE gap NLL as a function of the chain length, on one
/// fixed gap sample. Means are over gaps where both are unflagged.
pub fn gsn_step_curve(
    bi: &BiRnnParams,
    nade: &BiRnnParams,
    corpus: &Corpus,
    m_grid: &[usize],
    cfg: &EvalConfig,
) -> Result<Vec<StepCurvePoint>> {
    cfg.validate()?;
    let min_m = *m_grid
        .iter()
        .min()
        .ok_or_else(|| Error::invalid("empty M grid"))?;
    if min_m < cfg.gap_len {
        return Err(Error::invalid(format!(
            "M grid contains {min_m}, smaller than the gap length {}",
            cfg.gap_len
        )));
    }
    let sites = sample_gap_sites(corpus, cfg, cfg.gap_len)?;
    let models = EvalModels {
        bi: Some(bi),
        nade: Some(nade),
        ..EvalModels::default()
    };
    let nade_results: Vec<GapResult> = sites
        .iter()
        .map(|s| nade_exact_gap_nll(nade, &s.window(corpus), s.gap))
        .collect::<Result<_>>()?;
    let mut curve = Vec::with_capacity(m_grid.len());
    for &m in m_grid {
        let mut gsn_v = Vec::new();
        let mut nade_v = Vec::new();
        for (i, site) in sites.iter().enumerate() {
            let mut chain = chain_for(cfg, i, Strategy::Gsn, cfg.gap_len);
            chain.mcmc_steps = m;
            chain.per_position = false;
            let r = run_strategy(&models, Strategy::Gsn, &site.window(corpus), site.gap, &chain)?;
            if !r.is_flagged() && !nade_results[i].is_flagged() {
                gsn_v.push(r.gap_nll);
                nade_v.push(nade_results[i].gap_nll);
            }
        }
        let (a, b) = (mean(&gsn_v), mean(&nade_v));
        curve.push(StepCurvePoint {
            mcmc_steps: m,
            gsn_gap_nll: a,
            nade_gap_nll: b,
            difference: a - b,
        });
    }
    Ok(curve)
}

/// Mean NLL of single-step gaps for each named model: the bidirectional
/// conditional (with the step marked missing for models that have the
/// missing channel) or the unidirectional next-step prediction.
pub fn single_step_nll(
    models: &[(String, &Model)],
    corpus: &Corpus,
    cfg: &EvalConfig,
) -> Result<Vec<SingleStepRow>> {
    let sites = sample_gap_sites(corpus, cfg, 1)?;
    let mut rows = Vec::with_capacity(models.len());
    for (name, model) in models {
        let mut v = Vec::with_capacity(sites.len());
        for site in &sites {
            let x = site.window(corpus);
            let t = site.gap.start;
            let nll = match model {
                Model::Uni(p) => {
                    let chain = ChainConfig {
                        per_position: false,
                        ..cfg.chain.clone()
                    };
                    oneway_fill(p, &x, site.gap, &chain)?.gap_nll
                }
                Model::Bi(p) => {
                    let mut xi = to_model_input(&x, p.input_dim(), p.output_dim())?;
                    if p.has_missing_channel() {
                        xi.mark_missing(t)?;
                    }
                    let dists = crate::models::bi_forward(p, &xi)?;
                    -dists[t].log_prob(x.step(t))
                }
            };
            if nll.is_finite() {
                v.push(nll);
            }
        }
        rows.push(SingleStepRow {
            model: name.clone(),
            n_gaps: v.len(),
            mean_nll: mean(&v),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sequence;
    use crate::models::OutputFamily;
    use rand::Rng;

    fn random_corpus(d: usize, len: usize, seed: u64) -> Corpus {
        let mut rng = rng::rng_from_seed(seed);
        let idx: Vec<usize> = (0..len).map(|_| rng.gen_range(0..d)).collect();
        Corpus::new(OutputFamily::Softmax, d, vec![Sequence::from_indices(&idx, d, false)]).unwrap()
    }

    #[test]
    fn sites_respect_edge_exclusion() {
        let corpus = random_corpus(3, 400, 1);
        let cfg = EvalConfig {
            n_gaps: 200,
            ..EvalConfig::default()
        };
        let sites = sample_gap_sites(&corpus, &cfg, 5).unwrap();
        assert_eq!(sites.len(), 200);
        let mut seen = std::collections::HashSet::new();
        for s in &sites {
            assert!(s.gap.start >= 10);
            assert!(s.gap.end() <= s.window_len - 10);
            let abs = s.window_start + s.gap.start;
            assert!(abs >= 10 && abs + 5 <= 390);
            assert!(seen.insert(abs));
        }
    }

    #[test]
    fn too_short_corpus_rejected() {
        let corpus = random_corpus(3, 24, 1);
        let cfg = EvalConfig {
            window_len: None,
            ..EvalConfig::default()
        };
        assert!(sample_gap_sites(&corpus, &cfg, 5).is_err());
    }

    #[test]
    fn onegram_limit_and_consistency() {
        let corpus = random_corpus(4, 20_000, 2);
        let stats = OneGram::from_probs(OutputFamily::Softmax, vec![0.25; 4]).unwrap();
        let models = EvalModels {
            onegram: Some(&stats),
            ..EvalModels::default()
        };
        let cfg = EvalConfig {
            n_gaps: 1000,
            strategies: vec![Strategy::Onegram],
            ..EvalConfig::default()
        };
        let report = evaluate_gaps(&models, &corpus, &cfg).unwrap();
        let s = report.summary(Strategy::Onegram).unwrap();
        assert!((s.mean_gap_nll - 5.0 * 4f64.ln()).abs() < 1e-9);
        let recs: Vec<f64> = report.records.iter().map(|r| r.results[0].gap_nll).collect();
        assert_eq!(s.mean_gap_nll, recs.iter().sum::<f64>() / recs.len() as f64);
        assert_eq!(table1_csv(&report).lines().count(), 2);
        let fig2 = per_position_curves(&report);
        assert_eq!(fig2.lines().next().unwrap().split(',').count(), 6);
    }

    #[test]
    fn missing_models_are_listed() {
        let corpus = random_corpus(3, 200, 3);
        let cfg = EvalConfig {
            strategies: vec![Strategy::Gsn, Strategy::Oneway],
            ..EvalConfig::default()
        };
        let err = evaluate_gaps(&EvalModels::default(), &corpus, &cfg)
            .unwrap_err()
            .to_string();
        assert!(err.contains("gsn") && err.contains("oneway"), "{err}");
    }

    #[test]
    fn zero_models_give_zero_step_difference() {
        let corpus = random_corpus(3, 300, 4);
        let mut bi = BiRnnParams::zeros(3, 3, 2, OutputFamily::Softmax);
        bi.b_y = vec![0.1, 0.2, -0.4];
        let mut nade = BiRnnParams::zeros(4, 3, 2, OutputFamily::Softmax);
        nade.b_y = bi.b_y.clone();
        let cfg = EvalConfig {
            n_gaps: 5,
            chain: ChainConfig {
                n_chains: 3,
                ..ChainConfig::default()
            },
            ..EvalConfig::default()
        };
        let curve = gsn_step_curve(&bi, &nade, &corpus, &[5], &cfg).unwrap();
        assert_eq!(curve.len(), 1);
        assert!(curve[0].difference.abs() < 1e-9);
        assert!(gsn_step_curve(&bi, &nade, &corpus, &[4, 10], &cfg).is_err());
    }
}
