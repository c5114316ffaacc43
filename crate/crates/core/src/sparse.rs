//! Sparse-coding kernels.
//!
//! The LASSO objective used everywhere is `‖target − Q s‖² + mu ‖s‖₁` with no
//! one-half factor, so the coordinate update soft-thresholds at `mu / 2`.
//! Weighted problems `‖beta − K s‖²_W + mu ‖s‖₁` are reduced to the standard
//! form by a triangular factor of the weight (see [`whiten`]).

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{asymmetry, mean_diagonal};
use crate::{Error, Result};

/// Columns whose squared norm falls below this are treated as absent.
const ZERO_COLUMN_SQ: f64 = 1e-24;

/// Coefficient vector over the `k` dictionary columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode(DVector<f64>);

impl SparseCode {
    pub fn new(values: DVector<f64>) -> Self {
        SparseCode(values)
    }

    pub fn zeros(k: usize) -> Self {
        SparseCode(DVector::zeros(k))
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// Indices of the nonzero coefficients, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.lp_norm(1)
    }
}

impl Deref for SparseCode {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl From<DVector<f64>> for SparseCode {
    fn from(v: DVector<f64>) -> Self {
        SparseCode(v)
    }
}

/// `sign(v) · max(|v| − t, 0)`.
#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Stop once the KKT residual (see [`kkt_residual`]) is at most this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Keep the objective value after every sweep in [`LassoFit::objective_trace`].
    #[serde(default)]
    pub record_objective: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-6,
            max_sweeps: 10_000,
            record_objective: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub code: SparseCode,
    pub kkt_residual: f64,
    pub sweeps: usize,
    /// False when `max_sweeps` ran out; `code` is then the best iterate seen.
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

impl LassoFit {
    /// Turns an unconverged fit into [`Error::NonConvergence`].
    pub fn require_converged(self) -> Result<LassoFit> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                iterations: self.sweeps,
                residual: self.kkt_residual,
            })
        }
    }
}

pub fn lasso_objective(q: &DMatrix<f64>, target: &DVector<f64>, mu: f64, s: &DVector<f64>) -> f64 {
    (target - q * s).norm_squared() + mu * s.lp_norm(1)
}

/// Largest violation of the subgradient optimality conditions of the LASSO
/// objective at `s`.
///
/// With `g = 2 Qᵀ(Q s − target)`, a nonzero coordinate must satisfy
/// `g_j + mu · sign(s_j) = 0` and a zero coordinate `|g_j| ≤ mu`.
pub fn kkt_residual(q: &DMatrix<f64>, target: &DVector<f64>, mu: f64, s: &DVector<f64>) -> f64 {
    let grad = (q.transpose() * (q * s - target)) * 2.0;
    grad.iter()
        .zip(s.iter())
        .map(|(g, sj)| {
            if *sj != 0.0 {
                (g + mu * sj.signum()).abs()
            } else {
                (g.abs() - mu).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn check_lasso_inputs(q: &DMatrix<f64>, target: &DVector<f64>, mu: f64) -> Result<()> {
    if q.nrows() != target.len() {
        return Err(Error::dims("lasso target", q.nrows(), target.len()));
    }
    if q.ncols() == 0 {
        return Err(Error::InvalidInput("dictionary has no columns".into()));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidInput(format!("mu must be finite and >= 0, got {mu}")));
    }
    if !q.iter().chain(target.iter()).all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite entry in lasso inputs".into()));
    }
    Ok(())
}

/// Cyclic coordinate descent for `min_s ‖target − Q s‖² + mu ‖s‖₁`.
///
/// Coordinates are visited in ascending order, so the result is a
/// deterministic function of the inputs. Once the KKT residual reaches
/// `opts.tol`, the active set is re-solved exactly with its signs fixed and
/// the refined point is kept if it still certifies.
pub fn lasso(
    q: &DMatrix<f64>,
    target: &DVector<f64>,
    mu: f64,
    opts: &LassoOptions,
) -> Result<LassoFit> {
    check_lasso_inputs(q, target, mu)?;
    let k = q.ncols();
    let col_sq: Vec<f64> = q.column_iter().map(|c| c.norm_squared()).collect();
    let half_mu = 0.5 * mu;

    let mut s = DVector::zeros(k);
    let mut residual = target.clone();
    let mut trace = Vec::new();
    let mut best = (f64::INFINITY, s.clone());
    let mut sweeps = 0;

    while sweeps < opts.max_sweeps {
        sweeps += 1;
        for j in 0..k {
            if col_sq[j] < ZERO_COLUMN_SQ {
                continue;
            }
            let col = q.column(j);
            let old = s[j];
            let rho = col.dot(&residual) + col_sq[j] * old;
            let new = soft_threshold(rho, half_mu) / col_sq[j];
            if new != old {
                residual.axpy(old - new, &col, 1.0);
                s[j] = new;
            }
        }
        residual = target - q * &s;
        if opts.record_objective {
            trace.push(residual.norm_squared() + mu * s.lp_norm(1));
        }
        let kkt = kkt_residual(q, target, mu, &s);
        if kkt < best.0 {
            best = (kkt, s.clone());
        }
        if kkt <= opts.tol {
            let (code, kkt) = polish_active_set(q, target, mu, s, kkt);
            return Ok(LassoFit {
                code: SparseCode(code),
                kkt_residual: kkt,
                sweeps,
                converged: true,
                objective_trace: trace,
            });
        }
    }

    Ok(LassoFit {
        code: SparseCode(best.1),
        kkt_residual: best.0,
        sweeps,
        converged: false,
        objective_trace: trace,
    })
}

/// Exact solve on the support of `s` with fixed signs:
/// `Q_Aᵀ Q_A s_A = Q_Aᵀ target − (mu/2) sign(s_A)`.
fn polish_active_set(
    q: &DMatrix<f64>,
    target: &DVector<f64>,
    mu: f64,
    s: DVector<f64>,
    kkt: f64,
) -> (DVector<f64>, f64) {
    let active: Vec<usize> = (0..s.len()).filter(|&j| s[j] != 0.0).collect();
    if active.is_empty() {
        return (s, kkt);
    }
    let qa = q.select_columns(&active);
    let gram = qa.transpose() * &qa;
    let Some(chol) = gram.cholesky() else {
        return (s, kkt);
    };
    let signs = DVector::from_iterator(active.len(), active.iter().map(|&j| s[j].signum()));
    let rhs = qa.transpose() * target - signs.clone() * (0.5 * mu);
    let sol = chol.solve(&rhs);
    if sol.iter().zip(signs.iter()).any(|(v, sg)| v * sg <= 0.0) {
        return (s, kkt);
    }
    let mut polished = DVector::zeros(s.len());
    for (idx, &j) in active.iter().enumerate() {
        polished[j] = sol[idx];
    }
    let polished_kkt = kkt_residual(q, target, mu, &polished);
    if polished_kkt <= kkt {
        (polished, polished_kkt)
    } else {
        (s, kkt)
    }
}

/// PSD weight of the norm `‖v‖²_W = vᵀ W v`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedQuadratic {
    pub weight: DMatrix<f64>,
    /// Added to the diagonal before factoring.
    pub jitter: f64,
}

impl WeightedQuadratic {
    pub fn new(weight: DMatrix<f64>) -> Self {
        WeightedQuadratic { weight, jitter: 0.0 }
    }

    pub fn with_jitter(weight: DMatrix<f64>, jitter: f64) -> Self {
        WeightedQuadratic { weight, jitter }
    }

    pub fn dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Upper-triangular `W` with `Wᵀ W = weight + jitter · I`.
///
/// If the factorization fails at the requested jitter (a singular PSD weight),
/// it is retried with `1e-8 · mean(diag(weight))` added, escalating by powers
/// of ten a few times before giving up with [`Error::NotPsd`].
pub fn whiten(w: &WeightedQuadratic) -> Result<DMatrix<f64>> {
    whiten_reporting_jitter(w).map(|(f, _)| f)
}

/// Like [`whiten`], also returning the jitter that was finally applied.
pub fn whiten_reporting_jitter(w: &WeightedQuadratic) -> Result<(DMatrix<f64>, f64)> {
    let n = w.weight.nrows();
    if w.weight.ncols() != n {
        return Err(Error::dims("whiten (square weight)", n, w.weight.ncols()));
    }
    if !w.weight.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite weight".into()));
    }
    let scale = w.weight.norm().max(1.0);
    if asymmetry(&w.weight) > 1e-10 * scale {
        return Err(Error::InvalidInput("weight is not symmetric".into()));
    }
    let base = {
        let md = mean_diagonal(&w.weight);
        if md > 0.0 { 1e-8 * md } else { 1e-8 }
    };
    let attempts = std::iter::once(w.jitter)
        .chain((0..5).map(|i| w.jitter + base * 10f64.powi(i)));
    let mut last = w.jitter;
    for jitter in attempts {
        last = jitter;
        let mut m = w.weight.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = m.cholesky() {
            return Ok((chol.l().transpose(), jitter));
        }
    }
    Err(Error::NotPsd { jitter: last })
}

/// `argmin_s ‖beta − K s‖²_W + mu ‖s‖₁`, via whitening and [`lasso`].
pub fn weighted_lasso(
    k: &DMatrix<f64>,
    beta: &DVector<f64>,
    w: &WeightedQuadratic,
    mu: f64,
    opts: &LassoOptions,
) -> Result<LassoFit> {
    if k.nrows() != beta.len() {
        return Err(Error::dims("weighted_lasso target", k.nrows(), beta.len()));
    }
    if w.dim() != beta.len() {
        return Err(Error::dims("weighted_lasso weight", beta.len(), w.dim()));
    }
    let factor = whiten(w)?;
    lasso(&(&factor * k), &(&factor * beta), mu, opts)
}

/// Largest absolute cosine between two distinct columns of `q`.
pub fn mutual_coherence(q: &DMatrix<f64>) -> Result<f64> {
    if q.ncols() < 2 {
        return Err(Error::InvalidInput(
            "mutual coherence needs at least two columns".into(),
        ));
    }
    let norms: Vec<f64> = q.column_iter().map(|c| c.norm()).collect();
    if let Some(column) = norms.iter().position(|n| *n < 1e-12) {
        return Err(Error::ZeroColumn { column });
    }
    let mut worst: f64 = 0.0;
    for i in 0..q.ncols() {
        for j in (i + 1)..q.ncols() {
            let c = q.column(i).dot(&q.column(j)).abs() / (norms[i] * norms[j]);
            worst = worst.max(c);
        }
    }
    Ok(worst.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    /// Subgradient check written independently of the solver: for each
    /// coordinate, 0 must lie in the subdifferential up to `tol`.
    fn zero_in_subdifferential(
        q: &DMatrix<f64>,
        y: &DVector<f64>,
        mu: f64,
        s: &DVector<f64>,
        tol: f64,
    ) -> bool {
        (0..s.len()).all(|j| {
            let mut g = 0.0;
            for i in 0..q.nrows() {
                let mut pred = 0.0;
                for l in 0..s.len() {
                    pred += q[(i, l)] * s[l];
                }
                g += 2.0 * q[(i, j)] * (pred - y[i]);
            }
            if s[j] > 0.0 {
                (g + mu).abs() <= tol
            } else if s[j] < 0.0 {
                (g - mu).abs() <= tol
            } else {
                g.abs() <= mu + tol
            }
        })
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(1.0, 0.0), 1.0);
    }

    #[test]
    fn lasso_orthonormal_is_per_coordinate_threshold() {
        let q = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![1.0, 0.2]);
        let fit = lasso(&q, &y, 0.2, &LassoOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.code[0] - 0.9).abs() < 1e-12);
        assert!((fit.code[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn lasso_unpenalized_is_exact_solve() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, -2.0]);
        let fit = lasso(&q, &y, 0.0, &LassoOptions::default()).unwrap();
        let exact = q.clone().lu().solve(&y).unwrap();
        assert!((&*fit.code - exact).norm() < 1e-9);
    }

    #[test]
    fn lasso_random_instance_satisfies_subgradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = gaussian(4, 3, &mut rng);
        let y = DVector::from_fn(4, |_, _| StandardNormal.sample(&mut rng));
        let fit = lasso(&q, &y, 0.5, &LassoOptions::default()).unwrap();
        assert!(zero_in_subdifferential(&q, &y, 0.5, &fit.code, 1e-6));
    }

    #[test]
    fn lasso_rejects_bad_shapes() {
        let q = DMatrix::identity(3, 2);
        let y = DVector::zeros(2);
        assert!(matches!(
            lasso(&q, &y, 0.1, &LassoOptions::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn lasso_flags_exhausted_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = gaussian(6, 5, &mut rng);
        let y = DVector::from_fn(6, |_, _| StandardNormal.sample(&mut rng));
        let opts = LassoOptions { tol: 1e-15, max_sweeps: 1, record_objective: false };
        let fit = lasso(&q, &y, 0.01, &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.sweeps, 1);
        assert!(matches!(fit.require_converged(), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn lasso_skips_zero_columns() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![2.0, 1.0]);
        let fit = lasso(&q, &y, 0.0, &LassoOptions::default()).unwrap();
        assert_eq!(fit.code[1], 0.0);
        assert!((fit.code[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn whiten_examples() {
        let w = whiten(&WeightedQuadratic::new(DMatrix::identity(3, 3))).unwrap();
        assert_eq!(w, DMatrix::identity(3, 3));

        let w = whiten(&WeightedQuadratic::new(DMatrix::from_diagonal(&DVector::from_vec(
            vec![4.0, 9.0],
        ))))
        .unwrap();
        assert!((w - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]))).norm() < 1e-15);

        let weight = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let w = whiten(&WeightedQuadratic::new(weight.clone())).unwrap();
        assert!((w.transpose() * &w - weight).norm() <= 1e-12);
    }

    #[test]
    fn whiten_adds_jitter_for_singular_psd() {
        let weight = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (w, jitter) = whiten_reporting_jitter(&WeightedQuadratic::new(weight.clone())).unwrap();
        assert!(jitter > 0.0 && jitter < 1e-4);
        let mut expected = weight;
        expected[(0, 0)] += jitter;
        expected[(1, 1)] += jitter;
        assert!((w.transpose() * &w - expected).norm() < 1e-10);
    }

    #[test]
    fn whiten_rejects_indefinite() {
        let weight = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            whiten(&WeightedQuadratic::new(weight)),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn weighted_lasso_identity_matches_lasso() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = gaussian(5, 3, &mut rng);
        let beta = DVector::from_fn(5, |_, _| StandardNormal.sample(&mut rng));
        let opts = LassoOptions::default();
        let a = weighted_lasso(&k, &beta, &WeightedQuadratic::new(DMatrix::identity(5, 5)), 0.3, &opts)
            .unwrap();
        let b = lasso(&k, &beta, 0.3, &opts).unwrap();
        assert_eq!(a.code, b.code);
    }

    #[test]
    fn weighted_lasso_on_sample_covariance_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = gaussian(6, 4, &mut rng);
        let beta = DVector::from_fn(6, |_, _| StandardNormal.sample(&mut rng));
        let x = gaussian(20, 6, &mut rng);
        let gamma = x.transpose() * &x / 20.0;
        let mu = 0.4;
        let fit = weighted_lasso(&k, &beta, &WeightedQuadratic::new(gamma.clone()), mu, &LassoOptions::default())
            .unwrap();
        // Oracle on the weighted objective directly: grad = 2 Kᵀ Γ (K s − beta).
        let grad = k.transpose() * &gamma * (&k * &*fit.code - &beta) * 2.0;
        for j in 0..4 {
            let sj = fit.code[j];
            if sj != 0.0 {
                assert!((grad[j] + mu * sj.signum()).abs() <= 1e-6);
            } else {
                assert!(grad[j].abs() <= mu + 1e-6);
            }
        }
    }

    #[test]
    fn coherence_examples() {
        assert_eq!(mutual_coherence(&DMatrix::identity(3, 3)).unwrap(), 0.0);
        let dup = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        assert!((mutual_coherence(&dup).unwrap() - 1.0).abs() < 1e-15);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let q = DMatrix::from_row_slice(2, 2, &[1.0, r, 0.0, r]);
        assert!((mutual_coherence(&q).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn coherence_errors() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(mutual_coherence(&q), Err(Error::ZeroColumn { column: 1 }));
        assert!(mutual_coherence(&DMatrix::identity(3, 1)).is_err());
    }
}
