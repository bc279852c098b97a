//! Run the component ablation grid on the synthetic benchmark: the gated
//! linear state update vs a GRU update, the virtual global vector on vs
//! off, and the rank loss vs cross-entropy vs dropping the margin term.
//!
//! Trains five models; prefer `--release`.
//!
//! Run with `cargo run --release --example component_ablation`.

use navis::model::Aggregation;
use navis::synth::{gen_dataset, SynthConfig};
use navis::train::{run_ablation, TrainConfig};

fn main() {
    let dataset = gen_dataset(&SynthConfig::default()).unwrap();
    let base = TrainConfig {
        learning_rate: 1e-2,
        aggregation: Aggregation::Mean,
        seed: 1,
        ..TrainConfig::default()
    };

    let rows = run_ablation(&base, &dataset).unwrap();
    println!("{:<30} {:>8} {:>8}", "variant", "ndcg@10", "mean l1");
    for row in &rows {
        println!("{:<30} {:>8.4} {:>8.4}", row.label, row.test_ndcg, row.test_l1);
    }

    let main = &rows[0];
    let against = |label: &str| {
        let other = rows.iter().find(|r| r.label == label).unwrap();
        main.test_ndcg - other.test_ndcg
    };
    println!(
        "\nmargins of the full model: global vector {:+.4}, rank-vs-ce {:+.4}, \
         regularization {:+.4}",
        against("linear -global rank+reg"),
        against("linear +global ce"),
        against("linear +global rank (no reg)")
    );
}
