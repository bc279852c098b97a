//! Show that a single linear state-space layer reproduces the classical
//! forecasting heuristics exactly: PF, EMA(alpha), and SMA(w) are all
//! specific diagonal parameterizations of `h = A h + B x`, `s = C h + D x`.
//!
//! Run with `cargo run --example ssm_heuristic_equivalence`.

use navis::heuristics::{ema_step, sma_step, EmaState, SmaState};
use navis::ssm::{instantiate_heuristic, ssm_step, HeuristicKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let d = 4;
    let steps = 200;
    let kinds = [
        HeuristicKind::Pf,
        HeuristicKind::Ema { alpha: 0.3 },
        HeuristicKind::Sma { window: 4 },
    ];

    for kind in kinds {
        let params = instantiate_heuristic(kind, d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut h = vec![0.0; d];
        let mut ema = EmaState::new(d, 0.3).unwrap();
        let mut sma = SmaState::new(d, 4).unwrap();
        let mut max_dev = 0.0f64;

        for _ in 0..steps {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
            let (h_next, s) = ssm_step(&params, &h, &x).unwrap();
            h = h_next;
            let reference = match kind {
                HeuristicKind::Pf => x.clone(),
                HeuristicKind::Ema { .. } => {
                    ema_step(&mut ema, &x).unwrap();
                    ema.h.clone()
                }
                HeuristicKind::Sma { .. } => {
                    sma_step(&mut sma, &x).unwrap();
                    sma.h.clone()
                }
            };
            for (a, b) in s.iter().zip(&reference) {
                max_dev = max_dev.max((a - b).abs());
            }
        }
        println!("{kind:?}: max |ssm - heuristic| over {steps} steps = {max_dev:e}");
    }

    println!("\nThe SMA(w) recursion is itself an EMA with alpha = (w-1)/w,");
    println!("which is why one diagonal SSM template covers the whole family.");
}
