//! Discrete linear state-space layer and the exact parameterizations that
//! reproduce each moving-average heuristic.
//!
//! The recurrence is `h = A h_prev + B x` with readout `s = C h + D x`.
//! All heuristic instantiations are diagonal, so a compact diagonal
//! representation keeps memory O(d); a dense path exists for models that
//! mix entries (e.g. the strict-inclusion counterexample with per-entry
//! decay rates is still diagonal, but general dense matrices are allowed).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SsmError {
    #[error("dimension mismatch: params have d={params}, input has {input}")]
    DimensionMismatch { params: usize, input: usize },
    #[error("matrix is not square or rows have inconsistent lengths")]
    NotSquare,
    #[error("alpha must lie in [0, 1], got {0}")]
    BadAlpha(f64),
    #[error("window size must be >= 1, got {0}")]
    BadWindow(usize),
}

/// One of the four SSM matrices, stored compactly when diagonal.
#[derive(Debug, Clone, PartialEq)]
pub enum SsmMatrix {
    Diagonal(Vec<f64>),
    Dense(Vec<Vec<f64>>),
}

impl SsmMatrix {
    pub fn scaled_identity(d: usize, scale: f64) -> Self {
        SsmMatrix::Diagonal(vec![scale; d])
    }

    pub fn dim(&self) -> usize {
        match self {
            SsmMatrix::Diagonal(v) => v.len(),
            SsmMatrix::Dense(rows) => rows.len(),
        }
    }

    fn check(&self) -> Result<(), SsmError> {
        if let SsmMatrix::Dense(rows) = self {
            let d = rows.len();
            if rows.iter().any(|r| r.len() != d) {
                return Err(SsmError::NotSquare);
            }
        }
        Ok(())
    }

    /// Accumulates `out += M v`.
    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        match self {
            SsmMatrix::Diagonal(diag) => {
                for ((o, &m), &x) in out.iter_mut().zip(diag).zip(v) {
                    *o += m * x;
                }
            }
            SsmMatrix::Dense(rows) => {
                for (o, row) in out.iter_mut().zip(rows) {
                    *o += row.iter().zip(v).map(|(&m, &x)| m * x).sum::<f64>();
                }
            }
        }
    }
}

/// The four matrices of a discrete linear SSM at dimension d.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSsmParams {
    pub a: SsmMatrix,
    pub b: SsmMatrix,
    pub c: SsmMatrix,
    pub d: SsmMatrix,
}

impl LinearSsmParams {
    pub fn new(a: SsmMatrix, b: SsmMatrix, c: SsmMatrix, d: SsmMatrix) -> Result<Self, SsmError> {
        for m in [&a, &b, &c, &d] {
            m.check()?;
        }
        let dim = a.dim();
        if [&b, &c, &d].iter().any(|m| m.dim() != dim) {
            return Err(SsmError::DimensionMismatch {
                params: dim,
                input: b.dim(),
            });
        }
        Ok(Self { a, b, c, d })
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }
}

/// One SSM step: returns `(h, s)` with `h = A h_prev + B x`, `s = C h + D x`.
pub fn ssm_step(
    params: &LinearSsmParams,
    h_prev: &[f64],
    x: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), SsmError> {
    let d = params.dim();
    if h_prev.len() != d || x.len() != d {
        return Err(SsmError::DimensionMismatch {
            params: d,
            input: h_prev.len().max(x.len()),
        });
    }
    let mut h = vec![0.0; d];
    params.a.apply_into(h_prev, &mut h);
    params.b.apply_into(x, &mut h);
    let mut s = vec![0.0; d];
    params.c.apply_into(&h, &mut s);
    params.d.apply_into(x, &mut s);
    Ok((h, s))
}

/// A heuristic a linear SSM can instantiate exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeuristicKind {
    Pf,
    Ema { alpha: f64 },
    Sma { window: usize },
}

/// Returns the exact matrices realizing a heuristic:
/// PF is `D = I` with the rest zero; EMA(alpha) is `A = alpha I`,
/// `B = (1-alpha) I`, `C = I`; SMA(w) is EMA with `alpha = (w-1)/w`.
pub fn instantiate_heuristic(kind: HeuristicKind, d: usize) -> Result<LinearSsmParams, SsmError> {
    let id = |s: f64| SsmMatrix::scaled_identity(d, s);
    match kind {
        HeuristicKind::Pf => LinearSsmParams::new(id(0.0), id(0.0), id(0.0), id(1.0)),
        HeuristicKind::Ema { alpha } => {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(SsmError::BadAlpha(alpha));
            }
            LinearSsmParams::new(id(alpha), id(1.0 - alpha), id(1.0), id(0.0))
        }
        HeuristicKind::Sma { window } => {
            if window < 1 {
                return Err(SsmError::BadWindow(window));
            }
            let w = window as f64;
            LinearSsmParams::new(id((w - 1.0) / w), id(1.0 / w), id(1.0), id(0.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristics::{ema_step, sma_step, EmaState, SmaState};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pf_matrices_give_identity_readout() {
        let p = instantiate_heuristic(HeuristicKind::Pf, 2).unwrap();
        let (h, s) = ssm_step(&p, &[5.0, -3.0], &[0.1, 0.2]).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(s, vec![0.1, 0.2]);
    }

    #[test]
    fn sma_instantiation_matrices() {
        let p = instantiate_heuristic(HeuristicKind::Sma { window: 4 }, 3).unwrap();
        assert_eq!(p.a, SsmMatrix::Diagonal(vec![0.75; 3]));
        assert_eq!(p.b, SsmMatrix::Diagonal(vec![0.25; 3]));
        assert_eq!(p.c, SsmMatrix::Diagonal(vec![1.0; 3]));
        assert_eq!(p.d, SsmMatrix::Diagonal(vec![0.0; 3]));
    }

    #[test]
    fn ema_zero_alpha_outputs_input_from_zero_state() {
        let p = instantiate_heuristic(HeuristicKind::Ema { alpha: 0.0 }, 2).unwrap();
        let (_, s) = ssm_step(&p, &[0.0, 0.0], &[0.3, 0.7]).unwrap();
        assert_eq!(s, vec![0.3, 0.7]);
    }

    #[test]
    fn per_entry_decay_escapes_single_alpha_ema() {
        // A = diag(0.9, 0.5), B = diag(0.1, 0.5): entries converge to 1 at
        // different rates, so no single-alpha EMA matches both.
        let p = LinearSsmParams::new(
            SsmMatrix::Diagonal(vec![0.9, 0.5]),
            SsmMatrix::Diagonal(vec![0.1, 0.5]),
            SsmMatrix::scaled_identity(2, 1.0),
            SsmMatrix::scaled_identity(2, 0.0),
        )
        .unwrap();
        let mut h = vec![0.0, 0.0];
        let mut outputs = Vec::new();
        for _ in 0..20 {
            let (nh, s) = ssm_step(&p, &h, &[1.0, 1.0]).unwrap();
            h = nh;
            outputs.push(s);
        }
        // both converge toward 1, entry 1 faster than entry 0
        assert!(outputs[2][1] > outputs[2][0]);
        assert!(outputs[19][0] > 0.85 && outputs[19][1] > 0.999);
        // no single-alpha EMA reproduces both trajectories: the implied
        // alpha from each entry's first two outputs differs
        let implied = |s1: f64, s2: f64| (s2 - s1) / (1.0 - s1);
        let a0 = implied(outputs[0][0], outputs[1][0]);
        let a1 = implied(outputs[0][1], outputs[1][1]);
        assert!((a0 - a1).abs() > 0.1);
    }

    #[test]
    fn dense_path_matches_diagonal() {
        let diag = instantiate_heuristic(HeuristicKind::Ema { alpha: 0.3 }, 3).unwrap();
        let dense = LinearSsmParams::new(
            SsmMatrix::Dense(vec![
                vec![0.3, 0.0, 0.0],
                vec![0.0, 0.3, 0.0],
                vec![0.0, 0.0, 0.3],
            ]),
            SsmMatrix::Dense(vec![
                vec![0.7, 0.0, 0.0],
                vec![0.0, 0.7, 0.0],
                vec![0.0, 0.0, 0.7],
            ]),
            SsmMatrix::scaled_identity(3, 1.0),
            SsmMatrix::scaled_identity(3, 0.0),
        )
        .unwrap();
        let h = [0.2, -0.4, 1.0];
        let x = [1.0, 2.0, -1.0];
        assert_eq!(ssm_step(&diag, &h, &x).unwrap(), ssm_step(&dense, &h, &x).unwrap());
    }

    #[test]
    fn heuristic_equivalence_over_random_sequences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let d = 16;
        let kinds: Vec<HeuristicKind> = vec![
            HeuristicKind::Pf,
            HeuristicKind::Ema { alpha: 0.2 },
            HeuristicKind::Ema { alpha: 0.9 },
            HeuristicKind::Sma { window: 5 },
        ];
        for kind in kinds {
            let params = instantiate_heuristic(kind, d).unwrap();
            let mut h = vec![0.0; d];
            let mut ema = EmaState::new(d, 0.0).unwrap();
            let mut sma = SmaState::new(d, 1).unwrap();
            match kind {
                HeuristicKind::Ema { alpha } => ema = EmaState::new(d, alpha).unwrap(),
                HeuristicKind::Sma { window } => sma = SmaState::new(d, window).unwrap(),
                HeuristicKind::Pf => {}
            }
            for _ in 0..200 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect();
                let (nh, s) = ssm_step(&params, &h, &x).unwrap();
                h = nh;
                let expected: &[f64] = match kind {
                    HeuristicKind::Pf => &x,
                    HeuristicKind::Ema { .. } => {
                        ema_step(&mut ema, &x).unwrap();
                        &ema.h
                    }
                    HeuristicKind::Sma { .. } => {
                        sma_step(&mut sma, &x).unwrap();
                        &sma.h
                    }
                };
                for (a, b) in s.iter().zip(expected) {
                    assert!((a - b).abs() <= 1e-12, "{kind:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let p = instantiate_heuristic(HeuristicKind::Pf, 3).unwrap();
        assert!(ssm_step(&p, &[0.0; 2], &[0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn ssm_is_linear_in_state_and_input(
            seed in any::<u64>(),
            scale in -3.0f64..3.0,
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let d = 4;
            let rand_diag = |rng: &mut rand_chacha::ChaCha8Rng| {
                SsmMatrix::Diagonal((0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            };
            let p = LinearSsmParams::new(
                rand_diag(&mut rng),
                rand_diag(&mut rng),
                rand_diag(&mut rng),
                rand_diag(&mut rng),
            ).unwrap();
            let h1: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let h2: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let x1: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let x2: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();

            // superposition
            let hsum: Vec<f64> = h1.iter().zip(&h2).map(|(a, b)| a + b).collect();
            let xsum: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + b).collect();
            let (ha, sa) = ssm_step(&p, &h1, &x1).unwrap();
            let (hb, sb) = ssm_step(&p, &h2, &x2).unwrap();
            let (hs, ss) = ssm_step(&p, &hsum, &xsum).unwrap();
            for i in 0..d {
                prop_assert!((hs[i] - (ha[i] + hb[i])).abs() < 1e-9);
                prop_assert!((ss[i] - (sa[i] + sb[i])).abs() < 1e-9);
            }

            // homogeneity
            let hscaled: Vec<f64> = h1.iter().map(|v| v * scale).collect();
            let xscaled: Vec<f64> = x1.iter().map(|v| v * scale).collect();
            let (hc, sc) = ssm_step(&p, &hscaled, &xscaled).unwrap();
            for i in 0..d {
                prop_assert!((hc[i] - scale * ha[i]).abs() < 1e-9);
                prop_assert!((sc[i] - scale * sa[i]).abs() < 1e-9);
            }
        }
    }
}
