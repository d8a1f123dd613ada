use gapfill::corpus::{Alphabet, Corpus, GapSpec};
use gapfill::eval::{single_step_nll, EvalConfig};
use gapfill::inference::{nade_exact_gap_nll, oneway_fill, onegram_nll, ChainConfig, OneGram};
use gapfill::models::Model;
use gapfill::training::{evaluate_loss, train, Regime, TrainConfig};

const CYCLE: &str = "abcdefghijklmnopqrst";

/// A 20-symbol cycle, repeated. The alphabet has exactly those symbols (plus
/// the reserved out-of-vocabulary channel).
fn cycle_corpus(repeats: usize) -> Corpus {
    let alphabet = Alphabet::new(CYCLE.chars().collect()).unwrap();
    Corpus::from_text(&CYCLE.repeat(repeats), &alphabet)
}

fn cfg(regime: Regime, updates: usize) -> TrainConfig {
    TrainConfig {
        regime,
        minibatch_size: 8,
        seq_len: 30,
        hidden_size: 20,
        total_updates: updates,
        log_every: 100,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn uni_learns_deterministic_cycle() {
    let corpus = cycle_corpus(100);
    let c = cfg(Regime::Uni, 2000);
    let a = train(&corpus, &c).unwrap();
    let nll = evaluate_loss(&a.model, &corpus, &c, 10, 99).unwrap();
    assert!(nll < 0.05, "per-step NLL {nll}");

    let b = train(&corpus, &c).unwrap();
    let bits = |t: &[gapfill::training::TracePoint]| -> Vec<u64> { t.iter().map(|p| p.loss.to_bits()).collect() };
    assert_eq!(bits(&a.trace), bits(&b.trace));

    // With history determining everything, one-way per-position NLL is flat
    // and near zero.
    let Model::Uni(p) = &a.model else { unreachable!() };
    let x = corpus.sequences[0].window(0, 60);
    let chain = ChainConfig {
        n_chains: 20,
        ..ChainConfig::default()
    };
    let r = oneway_fill(p, &x, GapSpec::new(30, 5, 60).unwrap(), &chain).unwrap();
    for v in &r.per_position_nll {
        assert!(*v < 0.05, "{:?}", r.per_position_nll);
    }
}

#[test]
fn nade_masked_beats_onegram_on_cycle() {
    let corpus = cycle_corpus(100);
    let c = TrainConfig {
        nade_stride: 15,
        ..cfg(Regime::NadeMasked, 2000)
    };
    let out = train(&corpus, &c).unwrap();
    let Model::Bi(p) = &out.model else { unreachable!() };
    let stats = OneGram::estimate(&corpus).unwrap();
    let x = corpus.sequences[0].window(0, 60);
    for start in [12, 25, 40] {
        let gap = GapSpec::new(start, 5, 60).unwrap();
        let nade = nade_exact_gap_nll(p, &x, gap).unwrap();
        let one = onegram_nll(&stats, &x, gap).unwrap();
        assert!(nade.gap_nll < one.gap_nll, "gap at {start}: {} vs {}", nade.gap_nll, one.gap_nll);
    }
}

#[test]
fn brnn_single_step_beats_uni_on_cycle() {
    let corpus = cycle_corpus(100);
    let uni = train(&corpus, &cfg(Regime::Uni, 2000)).unwrap().model;
    let bi = train(&corpus, &cfg(Regime::Brnn, 2000)).unwrap().model;
    let ecfg = EvalConfig {
        n_gaps: 100,
        window_len: Some(40),
        ..EvalConfig::default()
    };
    let rows = single_step_nll(&[("uni".into(), &uni), ("brnn".into(), &bi)], &corpus, &ecfg).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].mean_nll < rows[0].mean_nll, "{rows:?}");
}
