//! Reference recurrent cells (plain RNN, LSTM, GRU) with full weight
//! matrices, used to check the bounded-range property that prevents these
//! cells from expressing Persistent Forecast.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CellError {
    #[error("dimension mismatch: cell has d={cell}, input has {input}")]
    DimensionMismatch { cell: usize, input: usize },
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// `out = M v + b` for a d-by-n matrix stored row-major.
fn affine(m: &[Vec<f64>], v: &[f64], b: &[f64]) -> Vec<f64> {
    m.iter()
        .zip(b)
        .map(|(row, &bi)| row.iter().zip(v).map(|(&a, &x)| a * x).sum::<f64>() + bi)
        .collect()
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-bound..bound)).collect())
        .collect()
}

/// Plain RNN cell `h = tanh(W_h h_prev + W_x x + b)`.
#[derive(Debug, Clone)]
pub struct RnnParams {
    pub w_h: Vec<Vec<f64>>,
    pub w_x: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl RnnParams {
    pub fn random(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            w_h: rand_matrix(&mut rng, d, d, 2.0),
            w_x: rand_matrix(&mut rng, d, d, 2.0),
            b: (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        }
    }

    pub fn d(&self) -> usize {
        self.b.len()
    }
}

pub fn rnn_step(params: &RnnParams, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>, CellError> {
    let d = params.d();
    if h_prev.len() != d || x.len() != d {
        return Err(CellError::DimensionMismatch {
            cell: d,
            input: h_prev.len().max(x.len()),
        });
    }
    let mut pre = affine(&params.w_h, h_prev, &params.b);
    let wx = affine(&params.w_x, x, &vec![0.0; d]);
    for (p, w) in pre.iter_mut().zip(&wx) {
        *p += w;
    }
    Ok(pre.iter().map(|&u| u.tanh()).collect())
}

/// LSTM cell over the concatenated `[h_prev; x]` input.
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub w_i: Vec<Vec<f64>>,
    pub b_i: Vec<f64>,
    pub w_f: Vec<Vec<f64>>,
    pub b_f: Vec<f64>,
    pub w_o: Vec<Vec<f64>>,
    pub b_o: Vec<f64>,
    pub w_g: Vec<Vec<f64>>,
    pub b_g: Vec<f64>,
}

impl LstmParams {
    pub fn random(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gate = || {
            (
                rand_matrix(&mut rng, d, 2 * d, 2.0),
                (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>(),
            )
        };
        let (w_i, b_i) = gate();
        let (w_f, b_f) = gate();
        let (w_o, b_o) = gate();
        let (w_g, b_g) = gate();
        Self {
            w_i,
            b_i,
            w_f,
            b_f,
            w_o,
            b_o,
            w_g,
            b_g,
        }
    }

    pub fn d(&self) -> usize {
        self.b_i.len()
    }
}

/// One LSTM step; returns `(h, c)`.
pub fn lstm_step(
    params: &LstmParams,
    h_prev: &[f64],
    c_prev: &[f64],
    x: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), CellError> {
    let d = params.d();
    if h_prev.len() != d || c_prev.len() != d || x.len() != d {
        return Err(CellError::DimensionMismatch {
            cell: d,
            input: h_prev.len().max(x.len()),
        });
    }
    let hx = concat(h_prev, x);
    let i: Vec<f64> = affine(&params.w_i, &hx, &params.b_i)
        .iter()
        .map(|&u| sigmoid(u))
        .collect();
    let f: Vec<f64> = affine(&params.w_f, &hx, &params.b_f)
        .iter()
        .map(|&u| sigmoid(u))
        .collect();
    let o: Vec<f64> = affine(&params.w_o, &hx, &params.b_o)
        .iter()
        .map(|&u| sigmoid(u))
        .collect();
    let g: Vec<f64> = affine(&params.w_g, &hx, &params.b_g)
        .iter()
        .map(|&u| u.tanh())
        .collect();
    let c: Vec<f64> = f
        .iter()
        .zip(c_prev)
        .zip(i.iter().zip(&g))
        .map(|((&fi, &cp), (&ii, &gi))| fi * cp + ii * gi)
        .collect();
    let h: Vec<f64> = o.iter().zip(&c).map(|(&oi, &ci)| oi * ci.tanh()).collect();
    Ok((h, c))
}

/// GRU cell over the concatenated `[h_prev; x]` input.
#[derive(Debug, Clone)]
pub struct GruParams {
    pub w_z: Vec<Vec<f64>>,
    pub b_z: Vec<f64>,
    pub w_r: Vec<Vec<f64>>,
    pub b_r: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl GruParams {
    pub fn random(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gate = || {
            (
                rand_matrix(&mut rng, d, 2 * d, 2.0),
                (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>(),
            )
        };
        let (w_z, b_z) = gate();
        let (w_r, b_r) = gate();
        let (w, b) = gate();
        Self {
            w_z,
            b_z,
            w_r,
            b_r,
            w,
            b,
        }
    }

    pub fn d(&self) -> usize {
        self.b.len()
    }
}

pub fn gru_step(params: &GruParams, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>, CellError> {
    let d = params.d();
    if h_prev.len() != d || x.len() != d {
        return Err(CellError::DimensionMismatch {
            cell: d,
            input: h_prev.len().max(x.len()),
        });
    }
    let hx = concat(h_prev, x);
    let z: Vec<f64> = affine(&params.w_z, &hx, &params.b_z)
        .iter()
        .map(|&u| sigmoid(u))
        .collect();
    let r: Vec<f64> = affine(&params.w_r, &hx, &params.b_r)
        .iter()
        .map(|&u| sigmoid(u))
        .collect();
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(&ri, &hp)| ri * hp).collect();
    let rhx = concat(&rh, x);
    let h_tilde: Vec<f64> = affine(&params.w, &rhx, &params.b)
        .iter()
        .map(|&u| u.tanh())
        .collect();
    Ok(z
        .iter()
        .zip(h_prev.iter().zip(&h_tilde))
        .map(|(&zi, (&hp, &ht))| (1.0 - zi) * hp + zi * ht)
        .collect())
}
