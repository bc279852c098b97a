//! Baseline forecasters: Persistent Forecast, EMA, SMA, Historical Average,
//! and a per-node AR(1).
//!
//! All states initialize to zero before the first observation, matching the
//! zero prior of the interaction-count estimator.

use crate::ctdg::{AffinityVector, CandidateIndex, InteractionEvent, NodeId};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("dimension mismatch: state has {state}, input has {input}")]
    DimensionMismatch { state: usize, input: usize },
    #[error("alpha must lie in [0, 1], got {0}")]
    BadAlpha(f64),
    #[error("window size must be >= 1, got {0}")]
    BadWindow(usize),
    #[error("AR(1) fit needs a series of length >= 2, got {0}")]
    ShortSeries(usize),
}

/// Persistent Forecast: the previous affinity vector is the prediction.
pub fn pf_predict(x: &AffinityVector) -> AffinityVector {
    x.clone()
}

/// Exponential moving average state `h` with decay `alpha`.
#[derive(Debug, Clone)]
pub struct EmaState {
    pub h: Vec<f64>,
    pub alpha: f64,
}

impl EmaState {
    pub fn new(d: usize, alpha: f64) -> Result<Self, HeuristicError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(HeuristicError::BadAlpha(alpha));
        }
        Ok(Self {
            h: vec![0.0; d],
            alpha,
        })
    }
}

/// One EMA update: `h <- alpha * h_prev + (1 - alpha) * x`.
pub fn ema_step(state: &mut EmaState, x: &[f64]) -> Result<(), HeuristicError> {
    if state.h.len() != x.len() {
        return Err(HeuristicError::DimensionMismatch {
            state: state.h.len(),
            input: x.len(),
        });
    }
    let a = state.alpha;
    for (h, &xi) in state.h.iter_mut().zip(x) {
        *h = a * *h + (1.0 - a) * xi;
    }
    Ok(())
}

/// Simple moving average in recursive form, window `w`.
#[derive(Debug, Clone)]
pub struct SmaState {
    pub h: Vec<f64>,
    pub window: usize,
}

impl SmaState {
    pub fn new(d: usize, window: usize) -> Result<Self, HeuristicError> {
        if window < 1 {
            return Err(HeuristicError::BadWindow(window));
        }
        Ok(Self {
            h: vec![0.0; d],
            window,
        })
    }
}

/// One SMA update: `h <- ((w-1)/w) * h_prev + (1/w) * x`.
pub fn sma_step(state: &mut SmaState, x: &[f64]) -> Result<(), HeuristicError> {
    if state.h.len() != x.len() {
        return Err(HeuristicError::DimensionMismatch {
            state: state.h.len(),
            input: x.len(),
        });
    }
    let w = state.window as f64;
    for (h, &xi) in state.h.iter_mut().zip(x) {
        *h = (w - 1.0) / w * *h + xi / w;
    }
    Ok(())
}

/// Historical Average: each entry is the mean weight of all past
/// interactions of `(query, dest)` in the stream prefix.
pub fn historical_average(
    events: &[InteractionEvent],
    query: NodeId,
    index: &CandidateIndex,
) -> AffinityVector {
    let mut sum = vec![0.0; index.d()];
    let mut count = vec![0usize; index.d()];
    for ev in events {
        if ev.source != query {
            continue;
        }
        if let Some(i) = index.index_of(ev.dest) {
            sum[i] += ev.weight;
            count[i] += 1;
        }
    }
    let scores = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    AffinityVector::from_scores(scores)
}

/// Per-node AR(1) fit `x_i ≈ a * x_{i-1} + b`, pooled across vector entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Coefficients {
    pub a: f64,
    pub b: f64,
}

/// Ordinary least squares on all consecutive `(x_{i-1}, x_i)` entry pairs of
/// one node's series. A degenerate (constant) predictor falls back to
/// `a = 0, b = mean`.
pub fn fit_ar1(series: &[AffinityVector]) -> Result<Ar1Coefficients, HeuristicError> {
    if series.len() < 2 {
        return Err(HeuristicError::ShortSeries(series.len()));
    }
    let mut n = 0.0;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for pair in series.windows(2) {
        for (&xp, &xn) in pair[0].scores.iter().zip(&pair[1].scores) {
            n += 1.0;
            sx += xp;
            sy += xn;
            sxx += xp * xp;
            sxy += xp * xn;
        }
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Ok(Ar1Coefficients {
            a: 0.0,
            b: sy / n,
        });
    }
    let a = (n * sxy - sx * sy) / denom;
    let b = (sy - a * sx) / n;
    Ok(Ar1Coefficients { a, b })
}

/// Entrywise `a * x + b`, clamped at 0 since affinities are non-negative.
pub fn ar1_predict(coeffs: Ar1Coefficients, x: &AffinityVector) -> AffinityVector {
    let scores = x
        .scores
        .iter()
        .map(|&v| (coeffs.a * v + coeffs.b).max(0.0))
        .collect();
    AffinityVector::from_scores(scores)
}

/// Fits one AR(1) per node over that node's label history.
pub fn fit_ar1_per_node(
    series_by_node: &HashMap<NodeId, Vec<AffinityVector>>,
) -> HashMap<NodeId, Ar1Coefficients> {
    series_by_node
        .iter()
        .filter_map(|(&node, series)| fit_ar1(series).ok().map(|c| (node, c)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctdg::CandidateIndex;
    use proptest::prelude::*;

    fn av(scores: Vec<f64>) -> AffinityVector {
        AffinityVector::from_scores(scores)
    }

    #[test]
    fn pf_is_identity_and_idempotent() {
        let x = av(vec![0.2, 0.8]);
        assert_eq!(pf_predict(&x).scores, vec![0.2, 0.8]);
        assert_eq!(pf_predict(&pf_predict(&x)), pf_predict(&x));
        assert!(pf_predict(&AffinityVector::zeros(3)).is_zero());
    }

    #[test]
    fn ema_alpha_zero_is_pf() {
        let mut s = EmaState::new(2, 0.0).unwrap();
        s.h = vec![0.3, 0.7];
        ema_step(&mut s, &[0.9, 0.1]).unwrap();
        assert_eq!(s.h, vec![0.9, 0.1]);
    }

    #[test]
    fn ema_alpha_one_keeps_state() {
        let mut s = EmaState::new(2, 1.0).unwrap();
        s.h = vec![0.3, 0.7];
        ema_step(&mut s, &[0.9, 0.1]).unwrap();
        assert_eq!(s.h, vec![0.3, 0.7]);
    }

    #[test]
    fn ema_half_mixes_evenly() {
        let mut s = EmaState::new(2, 0.5).unwrap();
        s.h = vec![1.0, 0.0];
        ema_step(&mut s, &[0.0, 1.0]).unwrap();
        assert_eq!(s.h, vec![0.5, 0.5]);
    }

    #[test]
    fn ema_rejects_bad_alpha_and_mismatch() {
        assert!(EmaState::new(2, 1.5).is_err());
        let mut s = EmaState::new(2, 0.5).unwrap();
        assert!(ema_step(&mut s, &[1.0]).is_err());
    }

    #[test]
    fn sma_window_one_is_input() {
        let mut s = SmaState::new(2, 1).unwrap();
        s.h = vec![9.0, 9.0];
        sma_step(&mut s, &[0.4, 0.6]).unwrap();
        assert_eq!(s.h, vec![0.4, 0.6]);
    }

    #[test]
    fn sma_window_two() {
        let mut s = SmaState::new(2, 2).unwrap();
        s.h = vec![1.0, 0.0];
        sma_step(&mut s, &[0.0, 1.0]).unwrap();
        assert_eq!(s.h, vec![0.5, 0.5]);
    }

    #[test]
    fn sma_rejects_zero_window() {
        assert!(SmaState::new(2, 0).is_err());
    }

    #[test]
    fn sma_equals_ema_with_matching_alpha() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for w in [1usize, 2, 5, 20] {
            let mut sma = SmaState::new(4, w).unwrap();
            let mut ema = EmaState::new(4, (w as f64 - 1.0) / w as f64).unwrap();
            for _ in 0..50 {
                let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-10.0..10.0)).collect();
                sma_step(&mut sma, &x).unwrap();
                ema_step(&mut ema, &x).unwrap();
                for (a, b) in sma.h.iter().zip(&ema.h) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn historical_average_examples() {
        let idx = CandidateIndex::from_ids(vec![2, 3]);
        let ev = |w: f64| InteractionEvent {
            source: 1,
            dest: 2,
            time: 0.0,
            weight: w,
        };
        assert_eq!(historical_average(&[ev(2.0), ev(4.0)], 1, &idx).scores[0], 3.0);
        assert!(historical_average(&[], 1, &idx).is_zero());
        assert_eq!(historical_average(&[ev(5.0)], 1, &idx).scores[0], 5.0);
    }

    #[test]
    fn historical_average_matches_brute_force() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let idx = CandidateIndex::from_ids((0..6).collect());
        let events: Vec<InteractionEvent> = (0..1000)
            .map(|i| InteractionEvent {
                source: rng.gen_range(0..6),
                dest: rng.gen_range(0..6),
                time: i as f64,
                weight: rng.gen_range(-1.0..3.0),
            })
            .collect();
        for query in 0..6u64 {
            let got = historical_average(&events, query, &idx);
            for v in 0..6u64 {
                let ws: Vec<f64> = events
                    .iter()
                    .filter(|e| e.source == query && e.dest == v)
                    .map(|e| e.weight)
                    .collect();
                let expected = if ws.is_empty() {
                    0.0
                } else {
                    ws.iter().sum::<f64>() / ws.len() as f64
                };
                let i = idx.index_of(v).unwrap();
                assert!((got.scores[i] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ar1_recovers_exact_series() {
        let mut series = vec![av(vec![1.0, 0.5])];
        for _ in 0..10 {
            let prev = series.last().unwrap();
            series.push(av(prev.scores.iter().map(|&v| 0.9 * v).collect()));
        }
        let c = fit_ar1(&series).unwrap();
        assert!((c.a - 0.9).abs() < 1e-9);
        assert!(c.b.abs() < 1e-9);
    }

    #[test]
    fn ar1_constant_series_is_fixed_point() {
        let series = vec![av(vec![0.25, 0.25]); 5];
        let c = fit_ar1(&series).unwrap();
        let pred = ar1_predict(c, &series[0]);
        for &v in &pred.scores {
            assert!((v - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn ar1_identity_coeffs_are_pf() {
        let c = Ar1Coefficients { a: 1.0, b: 0.0 };
        let x = av(vec![0.1, 0.9]);
        assert_eq!(ar1_predict(c, &x).scores, x.scores);
    }

    #[test]
    fn ar1_clamps_negatives() {
        let c = Ar1Coefficients { a: 1.0, b: -0.5 };
        let pred = ar1_predict(c, &av(vec![0.2, 0.9]));
        assert_eq!(pred.scores, vec![0.0, 0.4]);
    }

    #[test]
    fn ar1_short_series_errors() {
        assert!(fit_ar1(&[av(vec![1.0])]).is_err());
    }

    proptest! {
        #[test]
        fn ema_output_is_entrywise_convex(
            alpha in 0.0f64..=1.0,
            h in proptest::collection::vec(-10.0f64..10.0, 1..8),
            shift in proptest::collection::vec(-10.0f64..10.0, 1..8),
        ) {
            let d = h.len().min(shift.len());
            let h = &h[..d];
            let x = &shift[..d];
            let mut s = EmaState::new(d, alpha).unwrap();
            s.h = h.to_vec();
            ema_step(&mut s, x).unwrap();
            for i in 0..d {
                let lo = h[i].min(x[i]) - 1e-12;
                let hi = h[i].max(x[i]) + 1e-12;
                prop_assert!(s.h[i] >= lo && s.h[i] <= hi);
            }
        }

        #[test]
        fn ema_unrolled_matches_recursive(
            alpha in 0.0f64..=1.0,
            seq in proptest::collection::vec(-5.0f64..5.0, 1..50),
        ) {
            let mut s = EmaState::new(1, alpha).unwrap();
            for &x in &seq {
                ema_step(&mut s, &[x]).unwrap();
            }
            // h_n = alpha^n * h_0 + (1 - alpha) * sum alpha^(n-1-k) * x_k, h_0 = 0
            let n = seq.len();
            let mut unrolled = 0.0;
            for (k, &x) in seq.iter().enumerate() {
                unrolled += (1.0 - alpha) * alpha.powi((n - 1 - k) as i32) * x;
            }
            prop_assert!((s.h[0] - unrolled).abs() < 1e-10);
        }
    }
}
