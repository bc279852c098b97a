//! Train on a small synthetic dataset, save the best checkpoint, reload
//! it, and confirm the reloaded model evaluates identically — the
//! checkpoint is a complete, exact snapshot (parameters, optimizer
//! moments, and the full run configuration).
//!
//! Run with `cargo run --example train_and_checkpoint`.

use navis::model::Aggregation;
use navis::synth::{gen_dataset, SynthConfig};
use navis::train::{evaluate, train, Checkpoint, Portion, TrainConfig};

fn main() {
    let synth = SynthConfig {
        nodes: 10,
        periods: 40,
        events_per_node: 30.0,
        ..SynthConfig::default()
    };
    let dataset = gen_dataset(&synth).unwrap();

    let config = TrainConfig {
        learning_rate: 1e-2,
        aggregation: Aggregation::Mean,
        epochs: 10,
        seed: 0,
        ..TrainConfig::default()
    };
    let outcome = train(&config, &dataset).unwrap();
    for m in &outcome.metrics {
        println!(
            "epoch {:>2}  train loss {:>10.4}  val ndcg@10 {:.4}",
            m.epoch, m.train_loss, m.val_ndcg
        );
    }

    let dir = std::env::temp_dir().join("navis_checkpoint_example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("checkpoint.json");
    outcome.best.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    println!(
        "\nsaved best checkpoint (config hash {}…) to {}",
        &loaded.config_hash[..12],
        path.display()
    );

    let before = evaluate(&outcome.best, &dataset, Portion::Test).unwrap();
    let after = evaluate(&loaded, &dataset, Portion::Test).unwrap();
    println!(
        "test ndcg@10 before save {:.10}, after reload {:.10} (bit-identical: {})",
        before.mean_ndcg,
        after.mean_ndcg,
        before.mean_ndcg.to_bits() == after.mean_ndcg.to_bits()
            && before.mean_l1.to_bits() == after.mean_l1.to_bits()
    );
}
