use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use gapfill::corpus::{build_alphabet, save_pianoroll, synthetic_chord_rolls};
use gapfill::eval::{evaluate_gaps, gsn_step_curve, single_step_nll, EvalConfig, EvalModels};
use gapfill::inference::{
    bayes_mcmc_fill, gsn_fill, nade_exact_gap_nll, nade_fill, oneway_fill, onegram_nll, ChainConfig,
    GapResult, OneGram, Strategy, MAX_EXACT_NADE_GAP,
};
use gapfill::models::{load_checkpoint, save_checkpoint, BiRnnParams, Model, OutputFamily, UniRnnParams};
use gapfill::rng::{self, label};
use gapfill::training::{evaluate_loss, train as train_model, write_trace_csv};
use gapfill::{Alphabet, Burnin, Corpus, GapSpec, Regime, Sequence, TrainConfig};
use log::{info, warn};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::settings::{
    infer_format, resolve, DataArgs, DataFormat, EvalArgs, FillArgs, GridArgs, Kind, PrepareArgs,
    TrainArgs,
};
use crate::UsageError;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Serialize)]
struct InputDigest {
    path: PathBuf,
    sha256: String,
}

/// Written next to every command's outputs; its `config` object can be fed
/// back through `--config` to repeat the run.
#[derive(Debug, Serialize)]
struct RunManifest {
    command: &'static str,
    version: &'static str,
    config: Value,
    seed: u64,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
    wall_time_secs: f64,
}

struct Run {
    command: &'static str,
    out: PathBuf,
    started: Instant,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

impl Run {
    fn start(command: &'static str, out: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self {
            command,
            out: out.to_path_buf(),
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256: format!("{:x}", Sha256::digest(&bytes)),
        });
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn finish(mut self, config: &impl Serialize, seed: u64) -> anyhow::Result<()> {
        let path = self.path("manifest.json");
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config: serde_json::to_value(config)?,
            seed,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        };
        fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Looks for an alphabet: the explicit path, else `alphabet.json` beside
/// any of the given files.
fn find_alphabet(explicit: Option<&Path>, beside: &[Option<&Path>]) -> Option<PathBuf> {
    if let Some(p) = explicit {
        return Some(p.to_path_buf());
    }
    beside
        .iter()
        .flatten()
        .filter_map(|p| p.parent().map(|d| d.join("alphabet.json")))
        .find(|p| p.is_file())
}

/// Loads a training or test corpus. For text without an alphabet file the
/// alphabet is built from the data and returned for saving.
fn load_corpus(
    data: &DataArgs,
    beside: &[Option<&Path>],
    run: &mut Run,
) -> anyhow::Result<(Corpus, Option<Alphabet>, bool)> {
    let path = data.data.as_deref().ok_or_else(|| usage("--data is required"))?;
    run.input(path)?;
    match infer_format(path, data.format) {
        DataFormat::Pianoroll => Ok((Corpus::from_pianoroll(path)?, None, false)),
        DataFormat::Text => {
            let text = read_text(path)?;
            let (alphabet, built) = match find_alphabet(data.alphabet.as_deref(), beside) {
                Some(a) => {
                    run.input(&a)?;
                    (Alphabet::load(&a)?, false)
                }
                None => (build_alphabet(&text, data.max_symbols.unwrap_or(usize::MAX))?, true),
            };
            Ok((Corpus::from_text(&text, &alphabet), Some(alphabet), built))
        }
    }
}

fn load_model(path: &Path, run: &mut Run) -> anyhow::Result<Model> {
    run.input(path)?;
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn prepare(config: Option<&Path>, cli: &PrepareArgs, out: &Path) -> anyhow::Result<()> {
    let args: PrepareArgs = resolve(config, cli)?;
    let sources = [args.text.is_some(), args.pianoroll.is_some(), args.synthetic == Some(true)];
    if sources.iter().filter(|&&s| s).count() != 1 {
        return Err(usage("give exactly one of --text, --pianoroll or --synthetic"));
    }
    let fraction = args.test_fraction.unwrap_or(0.1);
    let seed = args.seed.unwrap_or(0);
    let mut run = Run::start("prepare", out)?;

    let train = if let Some(path) = &args.text {
        run.input(path)?;
        let mut text = read_text(path)?;
        if args.lowercase == Some(true) {
            text = text.to_lowercase();
        }
        let alphabet = build_alphabet(&text, args.max_symbols.unwrap_or(usize::MAX))?;
        let chars: Vec<char> = text.chars().collect();
        let cut = ((1.0 - fraction) * chars.len() as f64).round() as usize;
        let (a, b): (String, String) = (chars[..cut].iter().collect(), chars[cut..].iter().collect());
        alphabet.save(run.path("alphabet.json"))?;
        fs::write(run.path("train.txt"), &a)?;
        fs::write(run.path("test.txt"), &b)?;
        info!(
            "{} symbols (+1 out-of-vocabulary), {} train / {} test characters",
            alphabet.size() - 1,
            cut,
            chars.len() - cut
        );
        Corpus::from_text(&a, &alphabet)
    } else {
        let corpus = if let Some(path) = &args.pianoroll {
            run.input(path)?;
            Corpus::from_pianoroll(path)?
        } else {
            let dim = args.synth_dim.unwrap_or(8);
            let mut r = rng::stream(seed, &[label::INIT]);
            let scores = synthetic_chord_rolls(
                dim,
                args.synth_scores.unwrap_or(60),
                args.synth_len.unwrap_or(200),
                args.synth_hold.unwrap_or(4),
                args.synth_noise.unwrap_or(0.1),
                &mut r,
            );
            Corpus::new(OutputFamily::Bernoulli, dim, scores)?
        };
        let (a, b) = corpus.split(fraction)?;
        save_pianoroll(run.path("train.json"), a.dim, &a.sequences)?;
        save_pianoroll(run.path("test.json"), b.dim, &b.sequences)?;
        info!(
            "{} keys, {} train / {} test scores",
            a.dim,
            a.sequences.len(),
            b.sequences.len()
        );
        a
    };
    OneGram::estimate(&train)?.save(run.path("onegram.json"))?;
    run.finish(&args, seed)
}

fn train_config(args: &TrainArgs) -> anyhow::Result<TrainConfig> {
    let regime = match (args.kind, args.regime) {
        (None, None) => Regime::Uni,
        (Some(Kind::Uni), None) => Regime::Uni,
        (Some(Kind::Brnn), None) => Regime::Brnn,
        (None, Some(r)) => r,
        (Some(k), Some(r)) => {
            let ok = match k {
                Kind::Uni => r == Regime::Uni,
                Kind::Brnn => r != Regime::Uni,
            };
            if !ok {
                return Err(usage(format!(
                    "regime {} cannot train a {} model",
                    r.as_str(),
                    if k == Kind::Uni { "unidirectional" } else { "bidirectional" }
                )));
            }
            r
        }
    };
    let d = TrainConfig::default();
    let burnin = if args.burnin_head.is_some() || args.burnin_tail.is_some() {
        let base = Burnin::for_kind(regime.kind());
        Some(Burnin {
            head: args.burnin_head.unwrap_or(base.head),
            tail: args.burnin_tail.unwrap_or(base.tail),
        })
    } else {
        None
    };
    let cfg = TrainConfig {
        regime,
        minibatch_size: args.batch.unwrap_or(d.minibatch_size),
        seq_len: args.seq_len.unwrap_or(d.seq_len),
        step_size: args.step_size.unwrap_or(d.step_size),
        total_updates: args.updates.unwrap_or(d.total_updates),
        hidden_size: args.hidden.unwrap_or(d.hidden_size),
        burnin,
        nade_gap_len: args.nade_gap.unwrap_or(d.nade_gap_len),
        nade_stride: args.nade_stride.unwrap_or(d.nade_stride),
        seed: args.seed.unwrap_or(d.seed),
        log_every: args.log_every.unwrap_or(d.log_every),
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

pub fn train(config: Option<&Path>, cli: &TrainArgs, out: &Path) -> anyhow::Result<()> {
    let args: TrainArgs = resolve(config, cli)?;
    let cfg = train_config(&args)?;
    let mut run = Run::start("train", out)?;
    let (corpus, alphabet, _) = load_corpus(&args.data, &[], &mut run)?;
    if let Some(a) = &alphabet {
        a.save(run.path("alphabet.json"))?;
    }
    info!(
        "training {} (c={}, T={}, {} updates) on {} steps of dimension {}",
        cfg.regime.as_str(),
        cfg.hidden_size,
        cfg.seq_len,
        cfg.total_updates,
        corpus.total_steps(),
        corpus.dim
    );
    let outcome = train_model(&corpus, &cfg)?;
    save_checkpoint(&outcome.model, run.path("model.ckpt"))?;
    write_trace_csv(run.path("trace.csv"), &outcome.trace)?;
    if let Some(last) = outcome.trace.last() {
        info!("final minibatch loss {:.4} at update {}", last.loss, last.update);
    }
    run.finish(&args, cfg.seed)
}

fn render(seq: &Sequence, gap: GapSpec, alphabet: Option<&Alphabet>) -> String {
    match alphabet {
        Some(a) => a.decode(seq),
        None => gap
            .range()
            .map(|t| {
                let bits: String = seq.step(t).iter().map(|&v| if v > 0.5 { '1' } else { '0' }).collect();
                format!("{t}: {bits}")
            })
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

pub fn fill(config: Option<&Path>, cli: &FillArgs, out: &Path) -> anyhow::Result<()> {
    let args: FillArgs = resolve(config, cli)?;
    let strategy = args.strategy.ok_or_else(|| usage("--strategy is required"))?;
    let input = args.input.as_deref().ok_or_else(|| usage("--input is required"))?;
    let gap = args.gap.ok_or_else(|| usage("--gap start:len is required"))?;
    let seed = args.seed.unwrap_or(0);
    let mut run = Run::start("fill", out)?;
    run.input(input)?;

    let (x, alphabet) = match infer_format(input, args.format) {
        DataFormat::Text => {
            let path = find_alphabet(
                args.alphabet.as_deref(),
                &[args.checkpoint.as_deref(), args.stats.as_deref()],
            )
            .ok_or_else(|| usage("text input needs --alphabet (or alphabet.json beside the checkpoint)"))?;
            run.input(&path)?;
            let alphabet = Alphabet::load(&path)?;
            let text = read_text(input)?;
            let text = text.strip_suffix('\n').unwrap_or(&text);
            let x = Corpus::from_text(text, &alphabet).sequences.remove(0);
            (x, Some(alphabet))
        }
        DataFormat::Pianoroll => {
            let corpus = Corpus::from_pianoroll(input)?;
            let i = args.score.unwrap_or(0);
            let x = corpus
                .sequences
                .get(i)
                .cloned()
                .ok_or_else(|| usage(format!("score {i} not in {}", input.display())))?;
            (x, None)
        }
    };
    gap.check(x.len()).map_err(|e| usage(e.to_string()))?;

    let chain = ChainConfig {
        mcmc_steps: args.mcmc_steps.unwrap_or(ChainConfig::default().mcmc_steps),
        n_chains: args.chains.unwrap_or(ChainConfig::default().n_chains),
        seed: rng::derive_path(seed, &[label::CHAINS]),
        keep_samples: true,
        ..ChainConfig::default()
    };
    let mut fill_rng = rng::stream(seed, &[label::FILL]);

    let (result, filled): (Option<GapResult>, Sequence) = if strategy == Strategy::Onegram {
        let path = args.stats.as_deref().ok_or_else(|| usage("onegram needs --stats"))?;
        run.input(path)?;
        let stats = OneGram::load(path)?;
        let r = onegram_nll(&stats, &x, gap)?;
        let dist = stats.distribution();
        let mut filled = x.clone();
        let mut buf = vec![0.0; dist.dim()];
        for t in gap.range() {
            dist.sample_into(&mut fill_rng, &mut buf);
            filled.set_step_data(t, &buf);
        }
        (Some(r), filled)
    } else {
        let path = args
            .checkpoint
            .as_deref()
            .ok_or_else(|| usage(format!("{strategy} needs --checkpoint")))?;
        let model = load_model(path, &mut run)?;
        if model.output_dim() != x.data_dim() {
            bail!(
                "checkpoint predicts {} channels but the input has {}",
                model.output_dim(),
                x.data_dim()
            );
        }
        let first_sample = |r: &GapResult| -> Sequence {
            let mut filled = x.clone();
            if let Some(s) = r.samples.first() {
                for t in gap.range() {
                    filled.set_step_data(t, &s.step(t)[..x.data_dim()]);
                }
            }
            filled
        };
        match (strategy, &model) {
            (Strategy::Gsn, Model::Bi(p)) => {
                let r = gsn_fill(p, &x, gap, &chain)?;
                let f = first_sample(&r);
                (Some(r), f)
            }
            (Strategy::Nade, Model::Bi(p)) => {
                let f = nade_fill(p, &x, gap, &mut fill_rng)?;
                let r = if gap.len <= MAX_EXACT_NADE_GAP {
                    Some(nade_exact_gap_nll(p, &x, gap)?)
                } else {
                    warn!(
                        "gap of {} exceeds {MAX_EXACT_NADE_GAP}; exact NADE likelihood skipped",
                        gap.len
                    );
                    None
                };
                (r, f.filled)
            }
            (Strategy::BayesMcmc, Model::Uni(p)) => {
                let r = bayes_mcmc_fill(p, &x, gap, &chain)?;
                let f = first_sample(&r);
                (Some(r), f)
            }
            (Strategy::Oneway, Model::Uni(p)) => {
                let r = oneway_fill(p, &x, gap, &chain)?;
                let f = first_sample(&r);
                (Some(r), f)
            }
            (s, m) => {
                return Err(usage(format!(
                    "strategy {s} cannot use a {} checkpoint",
                    match m {
                        Model::Uni(_) => "unidirectional",
                        Model::Bi(_) => "bidirectional",
                    }
                )))
            }
        }
    };

    if let Some(r) = &result {
        fs::write(run.path("gap_result.json"), serde_json::to_string_pretty(r)?)?;
        info!("{strategy}: gap NLL {:.4} nats{}", r.gap_nll, if r.is_flagged() {
            format!(" (flags: {})", r.flags.join(", "))
        } else {
            String::new()
        });
    }
    match &alphabet {
        Some(a) => fs::write(run.path("filled.txt"), a.decode(&filled))?,
        None => save_pianoroll(run.path("filled.json"), filled.data_dim(), std::slice::from_ref(&filled))?,
    }
    println!("{}", render(&filled, gap, alphabet.as_ref()));
    run.finish(&args, seed)
}

fn parse_max_gaps(items: &[String]) -> anyhow::Result<BTreeMap<Strategy, usize>> {
    items
        .iter()
        .map(|s| {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| usage(format!("--max-gaps entry `{s}` is not strategy=count")))?;
            let k: Strategy = k.parse().map_err(|e| usage(format!("{e}")))?;
            let v: usize = v.parse().map_err(|_| usage(format!("bad gap count `{v}`")))?;
            Ok((k, v))
        })
        .collect()
}

pub fn eval(config: Option<&Path>, cli: &EvalArgs, out: &Path) -> anyhow::Result<()> {
    let args: EvalArgs = resolve(config, cli)?;
    let d = EvalConfig::default();
    let cfg = EvalConfig {
        gap_len: args.gap_len.unwrap_or(d.gap_len),
        n_gaps: args.n_gaps.unwrap_or(d.n_gaps),
        edge_exclusion: args.edge_exclusion.unwrap_or(d.edge_exclusion),
        strategies: args.strategies.clone().unwrap_or(d.strategies),
        seed: args.seed.unwrap_or(d.seed),
        window_len: match args.window {
            Some(0) => None,
            Some(w) => Some(w),
            None => d.window_len,
        },
        chain: ChainConfig {
            mcmc_steps: args.mcmc_steps.unwrap_or(d.chain.mcmc_steps),
            n_chains: args.chains.unwrap_or(d.chain.n_chains),
            ..d.chain
        },
        max_gaps: parse_max_gaps(args.max_gaps.as_deref().unwrap_or_default())?,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    for s in &cfg.strategies {
        if matches!(s, Strategy::Gsn | Strategy::BayesMcmc) {
            cfg.chain.validate(cfg.gap_len).map_err(|e| usage(e.to_string()))?;
        }
    }
    let fig3 = args.fig3 == Some(true);
    let table2 = args.table2 == Some(true);

    let provided = EvalModelsPaths {
        uni: args.uni.is_some(),
        bi: args.bi.is_some(),
        nade: args.nade.is_some(),
        stats: args.stats.is_some(),
    };
    let mut missing = provided.missing(&cfg.strategies);
    if fig3 && !(provided.bi && provided.nade) {
        missing.push("fig3: --bi and --nade checkpoints".into());
    }
    if !missing.is_empty() {
        return Err(usage(format!("missing inputs: {}", missing.join("; "))));
    }

    let mut run = Run::start("eval", out)?;
    let beside = [
        args.uni.as_deref(),
        args.bi.as_deref(),
        args.nade.as_deref(),
        args.stats.as_deref(),
    ];
    let (corpus, _, built) = load_corpus(&args.data, &beside, &mut run)?;
    if built {
        warn!("no alphabet file found; built one from the evaluation data");
    }
    let load = |p: &Option<PathBuf>, run: &mut Run| p.as_deref().map(|p| load_model(p, run)).transpose();
    let uni = load(&args.uni, &mut run)?;
    let bi = load(&args.bi, &mut run)?;
    let nade = load(&args.nade, &mut run)?;
    let nade_no_mask = load(&args.nade_no_mask, &mut run)?;
    let stats = match &args.stats {
        Some(p) => {
            run.input(p)?;
            Some(OneGram::load(p)?)
        }
        None => None,
    };
    let models = EvalModels {
        uni: as_uni(uni.as_ref(), "uni")?,
        bi: as_bi(bi.as_ref(), "bi")?,
        nade: as_bi(nade.as_ref(), "nade")?,
        onegram: stats.as_ref(),
    };

    let mut report = evaluate_gaps(&models, &corpus, &cfg)?;
    if fig3 {
        let grid = args.m_grid.clone().unwrap_or_else(|| vec![5, 10, 20, 50, 100, 200]);
        let fig_cfg = EvalConfig {
            n_gaps: args.fig3_gaps.unwrap_or(cfg.n_gaps),
            ..cfg.clone()
        };
        let (b, n) = (models.bi.expect("checked"), models.nade.expect("checked"));
        report.step_curve = gsn_step_curve(b, n, &corpus, &grid, &fig_cfg)?;
    }
    if table2 {
        let mut named: Vec<(String, &Model)> = Vec::new();
        for (name, m) in [
            ("uni", &uni),
            ("brnn", &bi),
            ("nade_masked", &nade),
            ("nade_no_mask", &nade_no_mask),
        ] {
            if let Some(m) = m {
                named.push((name.to_string(), m));
            }
        }
        report.single_step = single_step_nll(&named, &corpus, &cfg)?;
    }

    let dataset = args.dataset.clone().unwrap_or_else(|| {
        args.data
            .data
            .as_deref()
            .and_then(|p| p.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    report.write_all(out, &dataset)?;
    for name in ["report.json", "table1.csv", "fig2.csv", "fig3.csv", "table2.csv"] {
        run.path(name);
    }
    println!("strategy      gaps  flagged  mean gap NLL");
    for s in &report.summaries {
        println!(
            "{:<12} {:>5} {:>8}  {:.4}",
            s.strategy.as_str(),
            s.n_gaps,
            s.n_flagged,
            s.mean_gap_nll
        );
    }
    run.finish(&args, cfg.seed)
}

fn as_uni<'a>(m: Option<&'a Model>, flag: &str) -> anyhow::Result<Option<&'a UniRnnParams>> {
    match m {
        None => Ok(None),
        Some(Model::Uni(p)) => Ok(Some(p)),
        Some(_) => Err(usage(format!("--{flag} expects a unidirectional checkpoint"))),
    }
}

fn as_bi<'a>(m: Option<&'a Model>, flag: &str) -> anyhow::Result<Option<&'a BiRnnParams>> {
    match m {
        None => Ok(None),
        Some(Model::Bi(p)) => Ok(Some(p)),
        Some(_) => Err(usage(format!("--{flag} expects a bidirectional checkpoint"))),
    }
}

struct EvalModelsPaths {
    uni: bool,
    bi: bool,
    nade: bool,
    stats: bool,
}

impl EvalModelsPaths {
    fn missing(&self, strategies: &[Strategy]) -> Vec<String> {
        strategies
            .iter()
            .filter_map(|s| match s {
                Strategy::Gsn if !self.bi => Some("gsn: --bi checkpoint".to_string()),
                Strategy::Nade if !self.nade => Some("nade: --nade checkpoint".to_string()),
                Strategy::BayesMcmc | Strategy::Oneway if !self.uni => {
                    Some(format!("{s}: --uni checkpoint"))
                }
                Strategy::Onegram if !self.stats => Some("onegram: --stats file".to_string()),
                _ => None,
            })
            .collect()
    }
}

pub fn gridsearch(config: Option<&Path>, cli: &GridArgs, out: &Path) -> anyhow::Result<()> {
    let args: GridArgs = resolve(config, cli)?;
    let grid = args.grid.clone().unwrap_or_default();
    if grid.is_empty() {
        return Err(usage("--grid needs at least one step size"));
    }
    if let Some(bad) = grid.iter().find(|&&r| !(r > 0.0 && r.is_finite())) {
        return Err(usage(format!("step size {bad} is not positive")));
    }
    let base = train_config(&args.train)?;
    let mut run = Run::start("gridsearch", out)?;
    let (corpus, _, _) = load_corpus(&args.train.data, &[], &mut run)?;
    let (train_part, valid) = corpus.split(args.valid_fraction.unwrap_or(0.1))?;
    let n_valid = args.valid_batches.unwrap_or(10);

    let mut rows = String::from("step_size,final_train_loss,valid_loss\n");
    let mut best: Option<(f64, f64)> = None;
    for &rate in &grid {
        let cfg = TrainConfig {
            step_size: rate,
            ..base.clone()
        };
        let outcome = train_model(&train_part, &cfg)?;
        let v = evaluate_loss(&outcome.model, &valid, &cfg, n_valid, cfg.seed)?;
        let last = outcome.trace.last().map_or(f64::NAN, |p| p.loss);
        info!("step size {rate}: train {last:.4}, validation {v:.4}");
        rows.push_str(&format!("{rate},{last},{v}\n"));
        if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
            best = Some((rate, v));
        }
    }
    fs::write(run.path("gridsearch.csv"), rows)?;
    match best {
        Some((rate, v)) => println!("best step size {rate} (validation loss {v:.4})"),
        None => println!("no step size gave a finite validation loss"),
    }
    run.finish(&args, base.seed)
}
