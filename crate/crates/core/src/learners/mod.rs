//! Single-task learners.
//!
//! Each learner returns a point estimate `alpha` together with the curvature
//! `gamma` of its own objective at that point, which is what the second-order
//! surrogate of the lifelong objective consumes.

mod policy_gradient;
mod supervised;

use nalgebra::{DMatrix, DVector};

pub use policy_gradient::{
    evaluate_policy, lower_bound_curvature, normalize_returns, pg_single_task, policy_evaluation_seed,
    reinforce_gradient, rollout,
    sample_batch, GaussianLinearPolicy, PgOptions, PgOutcome, Trajectory,
};
pub use supervised::{
    fit_linear_regression, fit_logistic_regression, fit_multi_output_regression,
    logistic_loss, logistic_gradient, LogisticOptions,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SingleTaskSolution {
    pub alpha: DVector<f64>,
    /// Symmetric PSD curvature at `alpha`.
    pub gamma: DMatrix<f64>,
    pub loss_at_alpha: f64,
}

impl SingleTaskSolution {
    pub fn dim(&self) -> usize {
        self.alpha.len()
    }
}
