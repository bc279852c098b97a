//! Forecast a short affinity series with every built-in heuristic:
//! persistent forecast, EMA, SMA, historical average, and AR(1).
//!
//! Run with `cargo run --example heuristic_forecasting`.

use navis::ctdg::AffinityVector;
use navis::heuristics::{
    ar1_predict, ema_step, fit_ar1, pf_predict, sma_step, EmaState, SmaState,
};

fn main() {
    // A node's affinity over three destinations, one vector per period,
    // slowly rotating mass from the first destination to the third.
    let series: Vec<AffinityVector> = (0..8)
        .map(|t| {
            let a = 0.7 - 0.05 * t as f64;
            let c = 0.1 + 0.05 * t as f64;
            AffinityVector::from_scores(vec![a, 0.2, c])
        })
        .collect();
    let d = series[0].len();

    let mut ema = EmaState::new(d, 0.5).unwrap();
    let mut sma = SmaState::new(d, 3).unwrap();
    let mut hist_sum = vec![0.0; d];

    println!("{:>6}  {:>22}  {:>22}  {:>22}", "period", "pf", "ema(0.5)", "sma(3)");
    for (t, x) in series.iter().enumerate() {
        // Predictions for period t use only data before it.
        if t > 0 {
            let pf = pf_predict(&series[t - 1]);
            println!(
                "{t:>6}  {:>22}  {:>22}  {:>22}",
                fmt(&pf.scores),
                fmt(&ema.h),
                fmt(&sma.h)
            );
        }
        ema_step(&mut ema, &x.scores).unwrap();
        sma_step(&mut sma, &x.scores).unwrap();
        for (s, &v) in hist_sum.iter_mut().zip(&x.scores) {
            *s += v;
        }
    }

    let mean: Vec<f64> = hist_sum.iter().map(|&s| s / series.len() as f64).collect();
    println!("\nhistorical mean over all periods: {}", fmt(&mean));

    // AR(1) extrapolates the drift the smoothers lag behind.
    let coeffs = fit_ar1(&series).unwrap();
    let next = ar1_predict(coeffs, series.last().unwrap());
    println!(
        "ar(1) fit: a = {:.3}, b = {:.3}; next-period forecast: {}",
        coeffs.a,
        coeffs.b,
        fmt(&next.scores)
    );
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}
