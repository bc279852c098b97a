//! Verify the analytic backward pass of the gated linear model against
//! central finite differences, end to end through the rank loss.
//!
//! Run with `cargo run --example gradient_check`.

use navis::loss::{rank_loss_with_grad, RankOptions, RankingContext};
use navis::model::{
    init_params, navis_backward, navis_forward, InitScheme, NavisParams, WeightMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss_of(params: &NavisParams, h: &[f64], x: &[f64], g: &[f64], y: &[f64]) -> f64 {
    let (_, s, _) = navis_forward(params, h, x, g, WeightMode::InnerProduct).unwrap();
    let ctx = RankingContext::build(&s, y, RankOptions::default()).unwrap();
    rank_loss_with_grad(&s, y, &ctx, Some(1e-3)).unwrap().0
}

fn main() {
    let d = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut params = init_params(d, InitScheme::FanIn, 3);
    for v in params.b_h.iter_mut().chain(params.b_s.iter_mut()) {
        *v = rng.gen_range(-0.5..0.5);
    }
    let rand_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d).map(|_| rng.gen_range(0.0..1.0)).collect()
    };
    let h_prev = rand_vec(&mut rng);
    let x = rand_vec(&mut rng);
    let g = rand_vec(&mut rng);
    let mut y = rand_vec(&mut rng);
    let sum: f64 = y.iter().sum();
    y.iter_mut().for_each(|v| *v /= sum);

    // Analytic gradient: loss -> scores -> parameters.
    let (_, s, cache) = navis_forward(&params, &h_prev, &x, &g, WeightMode::InnerProduct).unwrap();
    let ctx = RankingContext::build(&s, &y, RankOptions::default()).unwrap();
    let (loss, ds) = rank_loss_with_grad(&s, &y, &ctx, Some(1e-3)).unwrap();
    let grads = navis_backward(&params, None, &cache, &ds, WeightMode::InnerProduct);

    println!("loss = {loss:.6}\n");
    println!("{:<6} {:>3}  {:>14}  {:>14}  {:>10}", "row", "k", "analytic", "numeric", "rel err");
    let eps = 1e-5;
    let names = ["w_xh", "w_hh", "w_xs", "w_hs", "w_gs", "b_h", "b_s"];
    let mut worst = 0.0f64;
    for (row_idx, name) in names.iter().enumerate() {
        for k in 0..d {
            let mut plus = params.clone();
            plus.rows_mut()[row_idx][k] += eps;
            let mut minus = params.clone();
            minus.rows_mut()[row_idx][k] -= eps;
            let numeric = (loss_of(&plus, &h_prev, &x, &g, &y)
                - loss_of(&minus, &h_prev, &x, &g, &y))
                / (2.0 * eps);
            let analytic = grads.params.rows()[row_idx][k];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            if k == 0 {
                println!("{name:<6} {k:>3}  {analytic:>14.8}  {numeric:>14.8}  {rel:>10.2e}");
            }
        }
    }
    println!("\nmax relative error over all {} entries: {worst:.2e}", names.len() * d);
}
