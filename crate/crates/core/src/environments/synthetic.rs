//! Synthetic classification domains.
//!
//! Domain 1 draws a weight vector `m` per task; samples are positive iff
//! `xᵀm > 0` and `m` doubles as the descriptor. Domain 2 plants a shared pair
//! of bases `(L, D)` and a sparse code `s` per task; the task model is `L s`,
//! the descriptor is `D s`.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SYNTH1_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Synth2Config {
    pub d: usize,
    pub d_m: usize,
    pub k: usize,
    pub nnz: usize,
}

impl Default for Synth2Config {
    fn default() -> Self {
        Synth2Config {
            d: 8,
            d_m: 8,
            k: 6,
            nnz: 3,
        }
    }
}

/// The factors shared by every task of a domain-2 suite.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedFactors {
    pub l: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl PlantedFactors {
    pub fn generate(cfg: &Synth2Config, seed: u64) -> Result<Self> {
        if cfg.nnz == 0 || cfg.nnz > cfg.k || cfg.d == 0 || cfg.d_m == 0 {
            return Err(Error::InvalidInput(format!("bad planted dimensions {cfg:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = DMatrix::from_fn(cfg.d, cfg.k, |_, _| StandardNormal.sample(&mut rng));
        let d = DMatrix::from_fn(cfg.d_m, cfg.k, |_, _| StandardNormal.sample(&mut rng));
        Ok(PlantedFactors { l, d })
    }

    /// A code with `nnz` standard-normal entries at uniformly chosen positions.
    pub fn sparse_code<R: Rng + ?Sized>(&self, nnz: usize, rng: &mut R) -> DVector<f64> {
        let k = self.l.ncols();
        let mut s = DVector::zeros(k);
        for idx in sample(rng, k, nnz).into_iter() {
            s[idx] = StandardNormal.sample(rng);
        }
        s
    }
}

/// `+1` iff `x · w > 0`.
pub fn sign_label(x: &DVector<f64>, w: &DVector<f64>) -> f64 {
    if x.dot(w) > 0.0 { 1.0 } else { -1.0 }
}

/// `n` inputs uniform in `[lo, hi]^dim`, labelled by the sign of `x · w`.
pub fn labelled_samples<R: Rng + ?Sized>(
    w: &DVector<f64>,
    n: usize,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> (DMatrix<f64>, DVector<f64>) {
    let dim = w.len();
    let x = DMatrix::from_fn(n, dim, |_, _| rng.random_range(lo..=hi));
    let y = DVector::from_fn(n, |i, _| sign_label(&x.row(i).transpose(), w));
    (x, y)
}
