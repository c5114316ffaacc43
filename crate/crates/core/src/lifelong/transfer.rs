use nalgebra::DVector;

use crate::dictionary::CoupledDictionary;
use crate::environments::Environment;
use crate::learners::{pg_single_task, PgOptions, PgOutcome};
use crate::sparse::{lasso, LassoOptions, SparseCode};
use crate::{Error, Result};

/// A model predicted from a descriptor alone.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroShotPrediction {
    pub s_tilde: SparseCode,
    /// Always exactly `L · s_tilde`.
    pub theta_tilde: DVector<f64>,
    pub converged: bool,
}

/// `s̃ = argmin ‖φ − D s‖² + μ‖s‖₁`, `θ̃ = L s̃`.
pub fn zero_shot(
    dict: &CoupledDictionary,
    phi: &DVector<f64>,
    mu: f64,
    opts: &LassoOptions,
) -> Result<ZeroShotPrediction> {
    if phi.len() != dict.descriptor_dim() {
        return Err(Error::dims("zero-shot descriptor", dict.descriptor_dim(), phi.len()));
    }
    let fit = lasso(&dict.d, phi, mu, opts)?;
    let theta_tilde = &dict.l * &*fit.code;
    Ok(ZeroShotPrediction {
        s_tilde: fit.code,
        theta_tilde,
        converged: fit.converged,
    })
}

/// Policy-gradient learning started from the zero-shot policy. The first
/// point of the returned curve is the evaluation of `θ̃` itself.
pub fn warm_start(
    dict: &CoupledDictionary,
    phi: &DVector<f64>,
    mu: f64,
    lasso_opts: &LassoOptions,
    env: &dyn Environment,
    pg: &PgOptions,
    seed: u64,
) -> Result<PgOutcome> {
    let prediction = zero_shot(dict, phi, mu, lasso_opts)?;
    pg_single_task(env, &prediction.theta_tilde, pg, seed)
}
