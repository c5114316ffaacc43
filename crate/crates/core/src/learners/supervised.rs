use nalgebra::{DMatrix, DVector};

use super::SingleTaskSolution;
use crate::linalg::block_diag;
use crate::{Error, Result};

fn check_xy(x: &DMatrix<f64>, y_len: usize) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    if x.nrows() != y_len {
        return Err(Error::dims("samples vs labels", x.nrows(), y_len));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature".into()));
    }
    Ok(())
}

/// Cholesky solve that also rejects numerically singular systems, whose
/// factorization can succeed on round-off alone.
fn spd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = m.clone().cholesky().ok_or(Error::SingularSystem)?;
    let scale = m.diagonal().amax();
    let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, v| a.min(v * v));
    if !(min_pivot > 1e-12 * scale) {
        return Err(Error::SingularSystem);
    }
    Ok(chol.solve(rhs))
}

/// Ridge regression on `(1/n)‖y − Xθ‖² + reg‖θ‖²`.
///
/// `gamma` is the exact Hessian `(2/n) XᵀX + 2·reg·I`.
pub fn fit_linear_regression(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    reg: f64,
) -> Result<SingleTaskSolution> {
    check_xy(x, y.len())?;
    if !(reg >= 0.0) {
        return Err(Error::InvalidInput(format!("reg must be >= 0, got {reg}")));
    }
    let n = x.nrows() as f64;
    let d = x.ncols();
    let gram = x.transpose() * x / n;
    let mut normal = gram.clone();
    for i in 0..d {
        normal[(i, i)] += reg;
    }
    let rhs = x.transpose() * y / n;
    let alpha = spd_solve(&normal, &rhs)?;
    let gamma = normal * 2.0;
    let loss = (y - x * &alpha).norm_squared() / n + reg * alpha.norm_squared();
    Ok(SingleTaskSolution {
        alpha,
        gamma,
        loss_at_alpha: loss,
    })
}

/// Ridge regression with several outputs sharing one design matrix.
///
/// `y` is `n × c`. The solution stacks the per-output weight vectors
/// (output 0 first) and the curvature is block diagonal with `c` copies of
/// the single-output Hessian.
pub fn fit_multi_output_regression(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    reg: f64,
) -> Result<SingleTaskSolution> {
    check_xy(x, y.nrows())?;
    let mut alphas = Vec::with_capacity(y.ncols());
    let mut gamma = None;
    let mut loss = 0.0;
    for c in 0..y.ncols() {
        let sol = fit_linear_regression(x, &y.column(c).into_owned(), reg)?;
        loss += sol.loss_at_alpha;
        alphas.extend(sol.alpha.iter().copied());
        gamma.get_or_insert(sol.gamma);
    }
    let block = gamma.ok_or_else(|| Error::InvalidInput("no outputs".into()))?;
    let blocks: Vec<&DMatrix<f64>> = std::iter::repeat_n(&block, y.ncols()).collect();
    Ok(SingleTaskSolution {
        alpha: DVector::from_vec(alphas),
        gamma: block_diag(&blocks),
        loss_at_alpha: loss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LogisticOptions {
    /// Target Euclidean norm of the gradient.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            tol: 1e-8,
            max_iters: 100,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(−z))` without overflow.
fn log1p_exp_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// `(1/n) Σ log(1 + exp(−yᵢ xᵢᵀθ)) + reg ‖θ‖²`.
pub fn logistic_loss(x: &DMatrix<f64>, y: &DVector<f64>, reg: f64, theta: &DVector<f64>) -> f64 {
    let margins = x * theta;
    let n = x.nrows() as f64;
    margins
        .iter()
        .zip(y.iter())
        .map(|(m, yi)| log1p_exp_neg(yi * m))
        .sum::<f64>()
        / n
        + reg * theta.norm_squared()
}

pub fn logistic_gradient(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    reg: f64,
    theta: &DVector<f64>,
) -> DVector<f64> {
    let margins = x * theta;
    let n = x.nrows() as f64;
    let weights = DVector::from_iterator(
        y.len(),
        margins
            .iter()
            .zip(y.iter())
            .map(|(m, yi)| -yi * sigmoid(-yi * m)),
    );
    x.transpose() * weights / n + theta * (2.0 * reg)
}

fn logistic_hessian(x: &DMatrix<f64>, reg: f64, theta: &DVector<f64>) -> DMatrix<f64> {
    let margins = x * theta;
    let n = x.nrows() as f64;
    let d = x.ncols();
    let mut h = DMatrix::zeros(d, d);
    for (i, m) in margins.iter().enumerate() {
        let p = sigmoid(*m);
        let row = x.row(i);
        h.ger(p * (1.0 - p) / n, &row.transpose(), &row.transpose(), 1.0);
    }
    for i in 0..d {
        h[(i, i)] += 2.0 * reg;
    }
    h
}

/// L2-regularized logistic regression with labels in `{+1, −1}`, solved by
/// damped Newton iterations.
///
/// `gamma` is the Hessian `(1/n) Σ σᵢ(1−σᵢ) xᵢxᵢᵀ + 2·reg·I` at the optimum.
pub fn fit_logistic_regression(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    reg: f64,
    opts: &LogisticOptions,
) -> Result<SingleTaskSolution> {
    check_xy(x, y.len())?;
    if !(reg > 0.0) {
        return Err(Error::InvalidInput(format!("reg must be > 0, got {reg}")));
    }
    if let Some(bad) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
        return Err(Error::InvalidInput(format!("label {bad} is not +1/-1")));
    }
    let mut theta = DVector::zeros(x.ncols());
    let mut loss = logistic_loss(x, y, reg, &theta);
    let mut grad = logistic_gradient(x, y, reg, &theta);
    let mut iters = 0;
    while grad.norm() > opts.tol {
        if iters == opts.max_iters {
            return Err(Error::NonConvergence {
                iterations: iters,
                residual: grad.norm(),
            });
        }
        iters += 1;
        let hess = logistic_hessian(x, reg, &theta);
        let step = hess.cholesky().ok_or(Error::SingularSystem)?.solve(&grad);
        let decrement = grad.dot(&step);
        let mut t = 1.0;
        loop {
            let cand = &theta - &step * t;
            let cand_loss = logistic_loss(x, y, reg, &cand);
            if cand_loss <= loss - 0.25 * t * decrement || t < 1e-10 {
                theta = cand;
                loss = cand_loss;
                break;
            }
            t *= 0.5;
        }
        grad = logistic_gradient(x, y, reg, &theta);
    }
    let gamma = logistic_hessian(x, reg, &theta);
    Ok(SingleTaskSolution {
        alpha: theta,
        gamma,
        loss_at_alpha: loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{asymmetry, min_eigenvalue};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn exact_fit_scalar() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let y = DVector::from_vec(vec![2.0, 4.0]);
        let sol = fit_linear_regression(&x, &y, 0.0).unwrap();
        assert!((sol.alpha[0] - 2.0).abs() < 1e-12);
        assert!((sol.gamma[(0, 0)] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_targets_give_zero_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian(5, 3, &mut rng);
        let sol = fit_linear_regression(&x, &DVector::zeros(5), 0.1).unwrap();
        assert_eq!(sol.alpha.norm(), 0.0);
    }

    #[test]
    fn ridge_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian(20, 3, &mut rng);
        let y = DVector::from_fn(20, |_, _| StandardNormal.sample(&mut rng));
        let sol = fit_linear_regression(&x, &y, 0.1).unwrap();
        let direct = (x.transpose() * &x + DMatrix::identity(3, 3) * 2.0)
            .try_inverse()
            .unwrap()
            * (x.transpose() * &y);
        assert!((sol.alpha - direct).norm() < 1e-10);
    }

    #[test]
    fn singular_unregularized_regression() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(fit_linear_regression(&x, &y, 0.0), Err(Error::SingularSystem));
    }

    #[test]
    fn multi_output_is_block_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gaussian(6, 2, &mut rng);
        let y = gaussian(6, 3, &mut rng);
        let sol = fit_multi_output_regression(&x, &y, 0.01).unwrap();
        assert_eq!(sol.alpha.len(), 6);
        assert_eq!(sol.gamma.shape(), (6, 6));
        let single = fit_linear_regression(&x, &y.column(1).into_owned(), 0.01).unwrap();
        assert!((sol.alpha.rows(2, 2) - &single.alpha).norm() < 1e-14);
        assert_eq!(sol.gamma.view((2, 2), (2, 2)), single.gamma);
        assert_eq!(sol.gamma[(0, 3)], 0.0);
    }

    #[test]
    fn logistic_near_zero_curvature() {
        let x = DMatrix::from_row_slice(2, 1, &[2.0, -2.0]);
        let y = DVector::from_vec(vec![1.0, -1.0]);
        let reg = 1e4;
        let sol = fit_logistic_regression(&x, &y, reg, &LogisticOptions::default()).unwrap();
        assert!(sol.alpha[0].abs() < 1e-3);
        assert!((sol.gamma[(0, 0)] - (1.0 + 2.0 * reg)).abs() < 1e-6);
    }

    #[test]
    fn logistic_label_flip_negates_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gaussian(15, 3, &mut rng);
        let y = DVector::from_fn(15, |i, _| if x[(i, 0)] + 0.3 * x[(i, 1)] > 0.0 { 1.0 } else { -1.0 });
        let opts = LogisticOptions::default();
        let a = fit_logistic_regression(&x, &y, 0.05, &opts).unwrap();
        let b = fit_logistic_regression(&x, &(-&y), 0.05, &opts).unwrap();
        assert!((a.alpha + b.alpha).norm() < 1e-9);
    }

    #[test]
    fn logistic_gradient_vanishes_and_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian(30, 4, &mut rng);
        let y = DVector::from_fn(30, |i, _| if x[(i, 2)] - x[(i, 0)] > 0.2 { 1.0 } else { -1.0 });
        let reg = 0.02;
        let sol = fit_logistic_regression(&x, &y, reg, &LogisticOptions::default()).unwrap();
        let h = 1e-5;
        let mut fd = DVector::zeros(4);
        for j in 0..4 {
            let mut p = sol.alpha.clone();
            let mut m = sol.alpha.clone();
            p[j] += h;
            m[j] -= h;
            fd[j] = (logistic_loss(&x, &y, reg, &p) - logistic_loss(&x, &y, reg, &m)) / (2.0 * h);
        }
        assert!(fd.norm() <= 1e-6);

        // Away from the optimum the analytic gradient must agree with central
        // differences to 1e-4 relative error.
        let probe = DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1]);
        let analytic = logistic_gradient(&x, &y, reg, &probe);
        for j in 0..4 {
            let mut p = probe.clone();
            let mut m = probe.clone();
            p[j] += h;
            m[j] -= h;
            let fdj = (logistic_loss(&x, &y, reg, &p) - logistic_loss(&x, &y, reg, &m)) / (2.0 * h);
            assert!((fdj - analytic[j]).abs() <= 1e-4 * analytic[j].abs().max(1e-3));
        }
        assert!(asymmetry(&sol.gamma) < 1e-10);
        assert!(min_eigenvalue(&sol.gamma) >= -1e-8);
    }

    #[test]
    fn logistic_rejects_bad_labels_and_reg() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let opts = LogisticOptions::default();
        assert!(fit_logistic_regression(&x, &DVector::from_vec(vec![1.0, 0.0]), 0.1, &opts).is_err());
        assert!(fit_logistic_regression(&x, &DVector::from_vec(vec![1.0, -1.0]), 0.0, &opts).is_err());
    }

    #[test]
    fn logistic_reports_nonconvergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = gaussian(10, 3, &mut rng);
        let y = DVector::from_fn(10, |i, _| if x[(i, 0)] > 0.0 { 1.0 } else { -1.0 });
        let opts = LogisticOptions { tol: 1e-14, max_iters: 1 };
        assert!(matches!(
            fit_logistic_regression(&x, &y, 1e-3, &opts),
            Err(Error::NonConvergence { .. })
        ));
    }
}
