//! Generate the regime-switching synthetic benchmark, score the classical
//! baselines on its test periods, then train the gated model and compare.
//!
//! This mirrors the pinned benchmark in the end-to-end test suite.
//!
//! Run with `cargo run --release --example synthetic_benchmark`.

use navis::model::Aggregation;
use navis::synth::{gen_dataset, SynthConfig};
use navis::train::{
    evaluate, evaluate_baseline, train, BaselineKind, Portion, TrainConfig,
};

fn main() {
    let synth = SynthConfig::default();
    let dataset = gen_dataset(&synth).unwrap();
    println!(
        "generated {} events, {} nodes, {} labeled queries over {} periods\n",
        dataset.stream.events.len(),
        dataset.index.d(),
        dataset.sequence.queries.len(),
        dataset.sequence.num_periods
    );

    let config = TrainConfig {
        learning_rate: 1e-2,
        aggregation: Aggregation::Mean,
        seed: 1,
        ..TrainConfig::default()
    };

    println!("{:<18} {:>8} {:>8}", "predictor", "ndcg@10", "mean l1");
    for kind in [
        BaselineKind::Persistent,
        BaselineKind::Ema { alpha: 0.2 },
        BaselineKind::Sma { window: 5 },
        BaselineKind::HistoricalMean,
        BaselineKind::Ar1,
    ] {
        let r = evaluate_baseline(&dataset, kind, config.fractions, config.ndcg_k, Portion::Test)
            .unwrap();
        println!("{:<18} {:>8.4} {:>8.4}", kind.label(), r.mean_ndcg, r.mean_l1);
    }

    let outcome = train(&config, &dataset).unwrap();
    let report = evaluate(&outcome.best, &dataset, Portion::Test).unwrap();
    println!(
        "{:<18} {:>8.4} {:>8.4}   (best val ndcg {:.4} after {} epochs)",
        "trained model",
        report.mean_ndcg,
        report.mean_l1,
        outcome.best_val_ndcg,
        outcome.metrics.len()
    );
}
