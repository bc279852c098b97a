//! The gated model strictly generalizes the forecasting heuristics: with
//! saturated gates it *is* EMA(alpha) or the persistent forecast, so
//! training can only move away from a heuristic when that helps.
//!
//! Run with `cargo run --example gate_saturation`.

use navis::heuristics::{ema_step, EmaState};
use navis::model::{ema_equivalent_params, navis_forward, pf_equivalent_params, WeightMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let d = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = vec![0.0; d];

    // EMA(0.7) as a gated model: every weight zero, the state-gate bias at
    // logit(0.7) and the output-gate bias saturated high (s = h).
    let alpha = 0.7;
    let params = ema_equivalent_params(d, alpha);
    let mut h = vec![0.0; d];
    let mut ema = EmaState::new(d, alpha).unwrap();
    let mut max_dev = 0.0f64;
    for _ in 0..100 {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (h_next, s, _) = navis_forward(&params, &h, &x, &g, WeightMode::InnerProduct).unwrap();
        h = h_next;
        ema_step(&mut ema, &x).unwrap();
        for (a, b) in s.iter().zip(&ema.h) {
            max_dev = max_dev.max((a - b).abs());
        }
    }
    println!("saturated gates vs EMA({alpha}): max deviation {max_dev:e} over 100 steps");

    // Persistent forecast: output gate saturated low (s = x).
    let params = pf_equivalent_params(d);
    let mut h = vec![0.0; d];
    let mut max_dev = 0.0f64;
    for _ in 0..100 {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (h_next, s, _) = navis_forward(&params, &h, &x, &g, WeightMode::InnerProduct).unwrap();
        h = h_next;
        for (a, b) in s.iter().zip(&x) {
            max_dev = max_dev.max((a - b).abs());
        }
    }
    println!("saturated gates vs persistent forecast: max deviation {max_dev:e} over 100 steps");

    println!(
        "\nBounded recurrent cells (tanh/sigmoid outputs in [-1, 1]) cannot \
         express the persistent forecast for inputs outside that range; the \
         gated linear update can, because its output mixes h and x directly."
    );
}
