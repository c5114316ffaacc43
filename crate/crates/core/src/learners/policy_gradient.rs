//! Episodic REINFORCE with a Gaussian linear policy `a = θᵀx + σε`.
//!
//! Returns are min–max normalized to `[0, 1]` within each batch before they
//! weight anything, so the lower-bound curvature below is PSD by
//! construction.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SingleTaskSolution;
use crate::environments::Environment;
use crate::{Error, Result};

const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLinearPolicy {
    pub theta: DVector<f64>,
    pub sigma: f64,
}

impl GaussianLinearPolicy {
    pub fn new(theta: DVector<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma must be > 0, got {sigma}")));
        }
        Ok(GaussianLinearPolicy { theta, sigma })
    }

    pub fn mean_action(&self, x: &DVector<f64>) -> f64 {
        self.theta.dot(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.rewards.len()
    }

    /// `R(τ) = (1/H) Σ r_h`.
    pub fn average_return(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PgOptions {
    pub iters: usize,
    pub n_traj: usize,
    pub horizon: usize,
    pub step_size: f64,
    pub sigma: f64,
    pub jitter: f64,
    /// Step halvings tried when a step lowers the batch return.
    pub max_halvings: usize,
}

impl Default for PgOptions {
    fn default() -> Self {
        PgOptions {
            iters: 30,
            n_traj: 20,
            horizon: 100,
            step_size: 0.05,
            sigma: 0.3,
            jitter: 1e-6,
            max_halvings: 5,
        }
    }
}

impl PgOptions {
    fn validate(&self) -> Result<()> {
        if self.iters == 0 || self.n_traj == 0 || self.horizon == 0 {
            return Err(Error::InvalidInput("iters, n_traj and horizon must be >= 1".into()));
        }
        if !(self.step_size > 0.0) || !(self.sigma > 0.0) || !(self.jitter >= 0.0) {
            return Err(Error::InvalidInput(format!("bad policy-gradient options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgOutcome {
    pub solution: SingleTaskSolution,
    /// Noise-free evaluation of the policy before each of the `iters` updates.
    pub curve: Vec<f64>,
    pub thetas: Vec<DVector<f64>>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One episode. A non-finite state ends it early; the remaining steps repeat
/// the last reward so that `R(τ)` stays an average over `horizon` steps.
pub fn rollout(
    env: &dyn Environment,
    policy: &GaussianLinearPolicy,
    horizon: usize,
    explore: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let n = env.state_dim();
    if policy.theta.len() != n {
        return Err(Error::dims("policy parameters", n, policy.theta.len()));
    }
    let mut state = env.initial_state(rng);
    let mut traj = Trajectory {
        states: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
    };
    for _ in 0..horizon {
        let noise: f64 = if explore { StandardNormal.sample(rng) } else { 0.0 };
        let action = policy.mean_action(&state) + policy.sigma * noise;
        match env.step(&state, action) {
            Ok((next, reward)) if reward.is_finite() => {
                traj.states.push(state);
                traj.actions.push(action);
                traj.rewards.push(reward);
                state = next;
            }
            Ok(_) | Err(Error::NonFinite) => break,
            Err(e) => return Err(e),
        }
    }
    let fill = traj.rewards.last().copied().unwrap_or(-DIVERGENCE_LIMIT);
    traj.rewards.resize(horizon, fill);
    Ok(traj)
}

/// `n_traj` exploring rollouts; rollout `i` draws from stream `i` of `seed`,
/// so two policies sampled with the same seed share initial states and noise.
pub fn sample_batch(
    env: &dyn Environment,
    policy: &GaussianLinearPolicy,
    n_traj: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    (0..n_traj)
        .map(|i| rollout(env, policy, horizon, true, &mut stream_rng(seed, i as u64)))
        .collect()
}

/// Mean `R(τ)` over `n_traj` rollouts of the noise-free policy `a = θᵀx`.
pub fn evaluate_policy(
    theta: &DVector<f64>,
    env: &dyn Environment,
    n_traj: usize,
    horizon: usize,
    seed: u64,
) -> Result<f64> {
    if n_traj == 0 || horizon == 0 {
        return Err(Error::InvalidInput("n_traj and horizon must be >= 1".into()));
    }
    let policy = GaussianLinearPolicy { theta: theta.clone(), sigma: 1.0 };
    let mut total = 0.0;
    for i in 0..n_traj {
        let traj = rollout(env, &policy, horizon, false, &mut stream_rng(seed, i as u64))?;
        total += traj.average_return();
    }
    Ok(total / n_traj as f64)
}

/// Min–max normalization to `[0, 1]`; a degenerate batch maps to all ones.
pub fn normalize_returns(returns: &[f64]) -> Vec<f64> {
    let lo = returns.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 1e-12 * (1.0 + lo.abs().max(hi.abs()))) {
        return vec![1.0; returns.len()];
    }
    returns.iter().map(|r| (r - lo) / span).collect()
}

fn batch_weights(batch: &[Trajectory]) -> Vec<f64> {
    let returns: Vec<f64> = batch.iter().map(Trajectory::average_return).collect();
    normalize_returns(&returns)
}

/// REINFORCE estimate `(1/N) Σ_τ R̃(τ) Σ_h (a_h − θᵀx_h) x_h / σ²`.
pub fn reinforce_gradient(batch: &[Trajectory], policy: &GaussianLinearPolicy) -> DVector<f64> {
    let weights = batch_weights(batch);
    let var = policy.sigma * policy.sigma;
    let mut grad = DVector::zeros(policy.theta.len());
    for (traj, w) in batch.iter().zip(&weights) {
        for (x, a) in traj.states.iter().zip(&traj.actions) {
            let score = (a - policy.mean_action(x)) / var;
            grad.axpy(w * score, x, 1.0);
        }
    }
    grad / batch.len() as f64
}

/// Curvature of the negative lower bound:
/// `(1/(σ² N)) Σ_τ R̃(τ) Σ_h x_h x_hᵀ + jitter·I`.
pub fn lower_bound_curvature(batch: &[Trajectory], sigma: f64, jitter: f64, dim: usize) -> DMatrix<f64> {
    let weights = batch_weights(batch);
    let mut gamma = DMatrix::zeros(dim, dim);
    for (traj, w) in batch.iter().zip(&weights) {
        for x in &traj.states {
            gamma.ger(*w, x, x, 1.0);
        }
    }
    gamma /= sigma * sigma * batch.len().max(1) as f64;
    for i in 0..dim {
        gamma[(i, i)] += jitter;
    }
    gamma
}

fn mean_return(batch: &[Trajectory]) -> f64 {
    batch.iter().map(Trajectory::average_return).sum::<f64>() / batch.len() as f64
}

fn check_diverged(theta: &DVector<f64>) -> Result<()> {
    let magnitude = theta.amax();
    if !(magnitude <= DIVERGENCE_LIMIT) {
        return Err(Error::DivergedPolicy { magnitude });
    }
    Ok(())
}

/// Seed of the noise-free evaluations that make up a learning curve.
pub fn policy_evaluation_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Gradient ascent on the expected average return from `theta0`.
///
/// Each step is halved (up to `max_halvings` times) while it lowers the batch
/// return measured on the same rollout seeds; if every halving fails the
/// step is skipped.
pub fn pg_single_task(
    env: &dyn Environment,
    theta0: &DVector<f64>,
    opts: &PgOptions,
    seed: u64,
) -> Result<PgOutcome> {
    opts.validate()?;
    let dim = env.state_dim();
    if theta0.len() != dim {
        return Err(Error::dims("initial policy", dim, theta0.len()));
    }
    let eval_seed = policy_evaluation_seed(seed);
    let mut policy = GaussianLinearPolicy::new(theta0.clone(), opts.sigma)?;
    let mut curve = Vec::with_capacity(opts.iters);
    let mut thetas = Vec::with_capacity(opts.iters + 1);
    for it in 0..opts.iters {
        thetas.push(policy.theta.clone());
        curve.push(evaluate_policy(&policy.theta, env, opts.n_traj, opts.horizon, eval_seed)?);
        let batch_seed = seed.wrapping_add(1 + it as u64);
        let batch = sample_batch(env, &policy, opts.n_traj, opts.horizon, batch_seed)?;
        let base = mean_return(&batch);
        let grad = reinforce_gradient(&batch, &policy);
        let mut step = opts.step_size;
        for _ in 0..=opts.max_halvings {
            let trial = GaussianLinearPolicy {
                theta: &policy.theta + &grad * step,
                sigma: policy.sigma,
            };
            check_diverged(&trial.theta)?;
            let trial_batch = sample_batch(env, &trial, opts.n_traj, opts.horizon, batch_seed)?;
            if mean_return(&trial_batch) >= base {
                policy = trial;
                break;
            }
            step *= 0.5;
        }
    }
    thetas.push(policy.theta.clone());
    let final_seed = seed.wrapping_add(1 + opts.iters as u64);
    let batch = sample_batch(env, &policy, opts.n_traj, opts.horizon, final_seed)?;
    let gamma = lower_bound_curvature(&batch, opts.sigma, opts.jitter, dim);
    Ok(PgOutcome {
        solution: SingleTaskSolution {
            loss_at_alpha: -mean_return(&batch),
            alpha: policy.theta,
            gamma,
        },
        curve,
        thetas,
    })
}
