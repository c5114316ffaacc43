//! Experiment protocols: online and batch training, single-task baselines,
//! zero-shot evaluation with jumpstart and warm starts, descriptor ablation,
//! runtime scaling, basis convergence and grid search.

use std::collections::BTreeMap;
use std::time::Instant;

use lll_core::dictionary::{model_surrogate, CoupledDictionary, TaskId, TaskRecord};
use lll_core::environments::robot::featurize_angles;
use lll_core::environments::{Domain, TaskSpec};
use lll_core::learners::{
    evaluate_policy, fit_logistic_regression, fit_multi_output_regression, pg_single_task,
    policy_evaluation_seed, PgOptions, SingleTaskSolution,
};
use lll_core::lifelong::{batch_mtl, zero_shot, BatchOptions, BatchTask, Hyper, LearnerState, Mode};
use lll_core::sparse::SparseCode;
use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Algo, ExperimentConfig};
use crate::descriptors::DescriptorMap;
use crate::error::{HarnessError, HarnessResult};
use crate::io::{DictionaryEntry, ModelFile, RegistryEntry, SCHEMA_VERSION};
use crate::stats::{mean, stderr};

const TAG_ORDER: u64 = 1;
const TAG_PG: u64 = 2;
const TAG_EVAL: u64 = 3;
const TAG_INIT: u64 = 4;
const TAG_DICT: u64 = 5;

/// Independent per-purpose seed derived from the run seed.
pub fn derive_seed(base: u64, tag: u64, id: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(id);
    rng.next_u64()
}

/// Uniform sampling with replacement until every task has been drawn once.
pub fn presentation_order(n_tasks: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_ORDER, 0));
    let mut seen = vec![false; n_tasks];
    let mut remaining = n_tasks;
    let mut order = Vec::new();
    while remaining > 0 {
        let i = rng.random_range(0..n_tasks);
        if !seen[i] {
            seen[i] = true;
            remaining -= 1;
        }
        order.push(i);
    }
    order
}

pub fn metric_name(domain: Domain) -> &'static str {
    match domain {
        Domain::Sm | Domain::Cp | Domain::Bk => "return",
        Domain::Robot => "mse",
        Domain::Synth1 | Domain::Synth2 => "accuracy",
    }
}

pub fn higher_is_better(domain: Domain) -> bool {
    domain != Domain::Robot
}

/// Seed of the rollouts that score policies on a task; shared by every
/// method so comparisons are paired.
pub fn evaluation_seed(cfg: &ExperimentConfig, id: TaskId) -> u64 {
    derive_seed(cfg.seed, TAG_EVAL, id)
}

/// The policy-gradient seed whose learning curve is scored on the same
/// rollouts as [`performance`].
pub fn curve_seed(cfg: &ExperimentConfig, id: TaskId) -> u64 {
    policy_evaluation_seed(evaluation_seed(cfg, id))
}

fn missing_data(task: &TaskSpec) -> HarnessError {
    HarnessError::Config(format!("task {} of domain {} has no training data", task.id, task.domain))
}

fn system(task: &TaskSpec) -> HarnessResult<lll_core::environments::systems::BenchmarkSystem> {
    task.system()
        .ok_or_else(|| HarnessError::Config(format!("task {} is not a control task", task.id)))
}

/// The single-task fit of a supervised task.
pub fn supervised_solution(task: &TaskSpec, cfg: &ExperimentConfig) -> HarnessResult<SingleTaskSolution> {
    let data = task.data.as_ref().ok_or_else(|| missing_data(task))?;
    let reg = cfg.supervised.reg;
    let sol = match task.domain {
        Domain::Robot => fit_multi_output_regression(&featurize_angles(&data.x)?, &data.y, reg)?,
        Domain::Synth1 | Domain::Synth2 => {
            fit_logistic_regression(&data.x, &data.labels(), reg, &cfg.supervised.logistic)?
        }
        _ => return Err(missing_data(task)),
    };
    Ok(sol)
}

/// Task performance of model parameters `theta`: mean return of the
/// noise-free policy, accuracy on fresh samples, or MSE on fresh samples.
pub fn performance(task: &TaskSpec, theta: &DVector<f64>, cfg: &ExperimentConfig) -> HarnessResult<f64> {
    let seed = evaluation_seed(cfg, task.id);
    if task.domain.is_rl() {
        let env = system(task)?;
        return Ok(evaluate_policy(theta, &env, cfg.rl.pg.n_traj, cfg.rl.pg.horizon, seed)?);
    }
    let data = task.evaluation_set(cfg.supervised.eval_samples, seed, &cfg.generation)?;
    match task.domain {
        Domain::Robot => {
            let f = featurize_angles(&data.x)?;
            let p = f.ncols();
            if theta.len() != p * data.y.ncols() {
                return Err(lll_core::Error::DimensionMismatch {
                    context: "robot model",
                    expected: p * data.y.ncols(),
                    found: theta.len(),
                }
                .into());
            }
            let mut sq = 0.0;
            for c in 0..data.y.ncols() {
                let pred = &f * theta.rows(c * p, p);
                sq += (pred - data.y.column(c)).norm_squared();
            }
            Ok(sq / (data.y.len() as f64))
        }
        _ => {
            if theta.len() != data.x.ncols() {
                return Err(lll_core::Error::DimensionMismatch {
                    context: "classifier",
                    expected: data.x.ncols(),
                    found: theta.len(),
                }
                .into());
            }
            let scores = &data.x * theta;
            let correct = scores
                .iter()
                .zip(data.y.column(0).iter())
                .filter(|(z, y)| (if **z > 0.0 { 1.0 } else { -1.0 }) == **y)
                .count();
            Ok(correct as f64 / data.len() as f64)
        }
    }
}

/// Model dimension of a domain's tasks.
pub fn model_dim(domain: Domain, cfg: &ExperimentConfig) -> usize {
    match domain {
        Domain::Sm | Domain::Bk => 2,
        Domain::Cp => 4,
        Domain::Robot => lll_core::environments::robot::MODEL_DIM,
        Domain::Synth1 => lll_core::environments::synthetic::SYNTH1_DIM,
        Domain::Synth2 => cfg.generation.synth2.d,
    }
}

/// One single-task learning result, plus the learning curve for control
/// tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct Learned {
    pub solution: SingleTaskSolution,
    pub curve: Option<Vec<f64>>,
}

/// Single-task results for every presentation in `order`. Supervised fits
/// are computed once per task; control tasks run a fresh policy-gradient
/// session per presentation, continuing from the task's previous policy.
/// The stream depends only on tasks, order and config, so every method
/// compared on the same order sees identical inputs.
pub fn solution_stream(
    tasks: &[TaskSpec],
    order: &[usize],
    cfg: &ExperimentConfig,
) -> HarnessResult<Vec<Learned>> {
    let mut visits: Vec<Vec<usize>> = vec![Vec::new(); tasks.len()];
    for (pos, &i) in order.iter().enumerate() {
        visits.get_mut(i)
            .ok_or_else(|| HarnessError::Config(format!("order refers to task index {i}")))?
            .push(pos);
    }
    let per_task: Vec<HarnessResult<Vec<(usize, Learned)>>> = tasks
        .par_iter()
        .zip(visits.par_iter())
        .map(|(task, positions)| {
            let mut out = Vec::with_capacity(positions.len());
            if positions.is_empty() {
                return Ok(out);
            }
            if task.domain.is_rl() {
                let env = system(task)?;
                let mut theta = DVector::zeros(model_dim(task.domain, cfg));
                for (visit, &pos) in positions.iter().enumerate() {
                    let seed = derive_seed(cfg.seed, TAG_PG, (task.id << 16) + visit as u64);
                    let outcome = pg_single_task(&env, &theta, &cfg.rl.pg, seed)?;
                    theta = outcome.solution.alpha.clone();
                    out.push((pos, Learned { solution: outcome.solution, curve: Some(outcome.curve) }));
                }
            } else {
                let solution = supervised_solution(task, cfg)?;
                for &pos in positions {
                    out.push((pos, Learned { solution: solution.clone(), curve: None }));
                }
            }
            Ok(out)
        })
        .collect();
    let mut slots: Vec<Option<Learned>> = vec![None; order.len()];
    for chunk in per_task {
        for (pos, learned) in chunk? {
            slots[pos] = Some(learned);
        }
    }
    Ok(slots.into_iter().map(|s| s.expect("every position filled")).collect())
}

/// Descriptor features of every task under `map`.
pub fn descriptor_features(tasks: &[TaskSpec], map: &DescriptorMap) -> HarnessResult<Vec<DVector<f64>>> {
    tasks.iter().map(|t| map.apply(&t.descriptor_raw)).collect()
}

/// One row of the training metrics file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub task_id: TaskId,
    pub encounter_index: usize,
    pub iter: usize,
    pub value: f64,
    pub metric_name: String,
}

pub const METRIC_HEADER: [&str; 5] = ["task_id", "encounter_index", "iter", "value", "metric_name"];

/// A trained model of any algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub algo: Algo,
    pub domain: Domain,
    pub hyper: Hyper,
    pub descriptor_map: DescriptorMap,
    pub dict: Option<CoupledDictionary>,
    pub registry: BTreeMap<TaskId, TaskRecord>,
    /// Final per-task model parameters.
    pub models: BTreeMap<TaskId, DVector<f64>>,
    /// Presentation order as task indices.
    pub order: Vec<usize>,
    pub metrics: Vec<MetricRow>,
    /// Solver calls that stopped at their iteration cap.
    pub unconverged: usize,
}

impl Trained {
    pub fn to_model_file(&self, with_gamma: bool) -> ModelFile {
        ModelFile {
            schema_version: SCHEMA_VERSION,
            mode: self.algo,
            domain: self.domain,
            hyper: self.hyper,
            descriptor_map: self.descriptor_map.clone(),
            dictionary: self
                .dict
                .as_ref()
                .map(|d| DictionaryEntry::from_dict(d, &self.hyper, self.registry.len())),
            registry: self
                .registry
                .values()
                .map(|r| RegistryEntry::from_record(r, with_gamma))
                .collect(),
            presentations: self.order.len(),
        }
    }

    pub fn predictor(&self) -> HarnessResult<Predictor> {
        let dict = self
            .dict
            .clone()
            .ok_or_else(|| HarnessError::Config(format!("{} models cannot predict from descriptors", self.algo)))?;
        Ok(Predictor {
            dict,
            hyper: self.hyper,
            descriptor_map: self.descriptor_map.clone(),
        })
    }
}

/// Online training over a presentation order with a precomputed stream.
pub fn train_online(
    tasks: &[TaskSpec],
    cfg: &ExperimentConfig,
    mode: Mode,
    order: &[usize],
    stream: &[Learned],
) -> HarnessResult<(LearnerState, Vec<MetricRow>, usize)> {
    let map = DescriptorMap::resolve(cfg.domain, &cfg.descriptors, &cfg.generation)?;
    let phis = descriptor_features(tasks, &map)?;
    let d = model_dim(cfg.domain, cfg);
    let mut state = LearnerState::new(d, map.dim(), cfg.hyper, mode, derive_seed(cfg.seed, TAG_DICT, 0))?;
    let mut metrics = Vec::new();
    let mut unconverged = 0;
    for (enc, (&i, learned)) in order.iter().zip(stream).enumerate() {
        let task = &tasks[i];
        let start = Instant::now();
        let report = state.encounter(task.id, &learned.solution, Some(&phis[i]))?;
        let seconds = start.elapsed().as_secs_f64();
        if !report.converged {
            if cfg.strict {
                return Err(lll_core::Error::NonConvergence {
                    iterations: cfg.hyper.lasso.max_sweeps,
                    residual: report.kkt_residual,
                }
                .into());
            }
            unconverged += 1;
        }
        metrics.push(MetricRow {
            task_id: task.id,
            encounter_index: enc,
            iter: 0,
            value: seconds,
            metric_name: "update_seconds".into(),
        });
        if let Some(curve) = &learned.curve {
            metrics.extend(curve.iter().enumerate().map(|(it, v)| MetricRow {
                task_id: task.id,
                encounter_index: enc,
                iter: it,
                value: *v,
                metric_name: "pg_return".into(),
            }));
        }
    }
    Ok((state, metrics, unconverged))
}

fn final_rows(tasks: &[TaskSpec], models: &BTreeMap<TaskId, DVector<f64>>, order: &[usize], cfg: &ExperimentConfig) -> HarnessResult<Vec<MetricRow>> {
    let last_seen: BTreeMap<TaskId, usize> = order
        .iter()
        .enumerate()
        .map(|(enc, &i)| (tasks[i].id, enc))
        .collect();
    let name = metric_name(cfg.domain);
    tasks
        .par_iter()
        .filter_map(|t| models.get(&t.id).map(|m| (t, m)))
        .map(|(t, m)| {
            Ok(MetricRow {
                task_id: t.id,
                encounter_index: last_seen.get(&t.id).copied().unwrap_or(0),
                iter: 0,
                value: performance(t, m, cfg)?,
                metric_name: name.into(),
            })
        })
        .collect()
}

/// Trains `cfg.algo` on `tasks`, reusing `stream` when it was computed for
/// `order` already.
pub fn train_with(
    tasks: &[TaskSpec],
    cfg: &ExperimentConfig,
    order: &[usize],
    stream: &[Learned],
) -> HarnessResult<Trained> {
    cfg.validate()?;
    let map = DescriptorMap::resolve(cfg.domain, &cfg.descriptors, &cfg.generation)?;
    let algo = cfg.algo;
    let mut trained = Trained {
        algo,
        domain: cfg.domain,
        hyper: cfg.hyper,
        descriptor_map: map.clone(),
        dict: None,
        registry: BTreeMap::new(),
        models: BTreeMap::new(),
        order: order.to_vec(),
        metrics: Vec::new(),
        unconverged: 0,
    };
    match (algo, algo.mode()) {
        (Algo::Tadell | Algo::Ella, Some(mode)) => {
            let (state, metrics, unconverged) = train_online(tasks, cfg, mode, order, stream)?;
            trained.models = state
                .registry
                .keys()
                .map(|id| (*id, state.model_for(*id).expect("registered")))
                .collect();
            trained.dict = Some(state.dict);
            trained.registry = state.registry;
            trained.metrics = metrics;
            trained.unconverged = unconverged;
        }
        (_, Some(mode)) => {
            let phis = descriptor_features(tasks, &map)?;
            let latest = latest_solutions(order, stream);
            let batch: Vec<BatchTask> = latest
                .iter()
                .map(|(i, sol)| BatchTask {
                    id: tasks[*i].id,
                    solution: (*sol).clone(),
                    phi: Some(phis[*i].clone()),
                })
                .collect();
            let opts = BatchOptions {
                hyper: cfg.hyper,
                mode,
                outer_iters: cfg.batch.outer_iters,
                tol: cfg.batch.tol,
                seed: derive_seed(cfg.seed, TAG_DICT, 0),
            };
            let out = batch_mtl(&batch, map.dim(), &opts)?;
            if !out.codes_converged {
                if cfg.strict {
                    return Err(lll_core::Error::NonConvergence { iterations: out.iterations, residual: f64::NAN }.into());
                }
                trained.unconverged += 1;
            }
            trained.metrics = out
                .objective
                .iter()
                .enumerate()
                .map(|(it, v)| MetricRow {
                    task_id: 0,
                    encounter_index: 0,
                    iter: it,
                    value: *v,
                    metric_name: "surrogate".into(),
                })
                .collect();
            trained.models = out
                .registry
                .iter()
                .map(|(id, r)| (*id, &out.dict.l * &*r.code))
                .collect();
            trained.registry = out.registry;
            trained.dict = Some(out.dict);
        }
        _ => {
            let phis = descriptor_features(tasks, &map)?;
            for (i, sol) in latest_solutions(order, stream) {
                let id = tasks[i].id;
                trained.models.insert(id, sol.alpha.clone());
                trained.registry.insert(
                    id,
                    TaskRecord {
                        id,
                        code: SparseCode::zeros(0),
                        alpha: sol.alpha.clone(),
                        gamma: sol.gamma.clone(),
                        phi: phis[i].clone(),
                        rho: 0.0,
                    },
                );
            }
        }
    }
    let rows = final_rows(tasks, &trained.models, order, cfg)?;
    trained.metrics.extend(rows);
    Ok(trained)
}

fn latest_solutions<'a>(order: &[usize], stream: &'a [Learned]) -> Vec<(usize, &'a SingleTaskSolution)> {
    let mut latest: BTreeMap<usize, &SingleTaskSolution> = BTreeMap::new();
    for (&i, l) in order.iter().zip(stream) {
        latest.insert(i, &l.solution);
    }
    latest.into_iter().collect()
}

/// The full protocol: presentation order from the run seed, then training.
/// Batch and single-task algorithms see each task once.
pub fn train(tasks: &[TaskSpec], cfg: &ExperimentConfig) -> HarnessResult<Trained> {
    if tasks.is_empty() {
        return Err(HarnessError::Config("no training tasks".into()));
    }
    let order = if cfg.algo.is_batch() || cfg.algo == Algo::Stl {
        (0..tasks.len()).collect()
    } else {
        presentation_order(tasks.len(), cfg.seed)
    };
    let stream = solution_stream(tasks, &order, cfg)?;
    train_with(tasks, cfg, &order, &stream)
}

/// Everything zero-shot prediction needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub dict: CoupledDictionary,
    pub hyper: Hyper,
    pub descriptor_map: DescriptorMap,
}

impl Predictor {
    pub fn from_model(model: &ModelFile) -> HarnessResult<Self> {
        let entry = model
            .dictionary
            .as_ref()
            .ok_or_else(|| HarnessError::Config(format!("{} models cannot predict from descriptors", model.mode)))?;
        let dict = entry.to_dict().map_err(|m| HarnessError::Format { path: "model".into(), message: m })?;
        if dict.descriptor_dim() != model.descriptor_map.dim() {
            return Err(lll_core::Error::DimensionMismatch {
                context: "model descriptor basis",
                expected: model.descriptor_map.dim(),
                found: dict.descriptor_dim(),
            }
            .into());
        }
        Ok(Predictor {
            dict,
            hyper: model.hyper,
            descriptor_map: model.descriptor_map.clone(),
        })
    }

    pub fn predict(&self, task: &TaskSpec) -> HarnessResult<DVector<f64>> {
        let phi = self.descriptor_map.apply(&task.descriptor_raw)?;
        Ok(zero_shot(&self.dict, &phi, self.hyper.mu, &self.hyper.lasso)?.theta_tilde)
    }
}

/// Gaussian random policy used as the reference initialization.
pub fn random_init(task: &TaskSpec, cfg: &ExperimentConfig) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_INIT, task.id));
    let scale = cfg.rl.random_init_scale;
    DVector::from_fn(model_dim(task.domain, cfg), |_, _| {
        scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    })
}

/// `evaluate(θ_init) − evaluate(θ_ref)` on the same rollouts.
pub fn jumpstart(
    task: &TaskSpec,
    theta_init: &DVector<f64>,
    reference: &DVector<f64>,
    cfg: &ExperimentConfig,
) -> HarnessResult<f64> {
    let a = performance(task, theta_init, cfg)?;
    let b = performance(task, reference, cfg)?;
    Ok(if higher_is_better(task.domain) { a - b } else { b - a })
}

/// Held-out evaluation of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOutResult {
    pub task_id: TaskId,
    pub zero_shot: f64,
    /// Single-task learner trained on the task itself.
    pub stl: Option<f64>,
    /// Random initialization (control tasks).
    pub random_init: Option<f64>,
    pub warm: Option<Vec<f64>>,
    pub cold: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroShotRow {
    pub task_id: TaskId,
    pub metric_name: String,
    pub iter: usize,
    pub value: f64,
}

pub const ZEROSHOT_HEADER: [&str; 4] = ["task_id", "metric_name", "iter", "value"];

impl HeldOutResult {
    pub fn rows(&self, domain: Domain) -> Vec<ZeroShotRow> {
        let name = metric_name(domain);
        let row = |metric: String, iter: usize, value: f64| ZeroShotRow {
            task_id: self.task_id,
            metric_name: metric,
            iter,
            value,
        };
        let mut rows = vec![row(format!("zeroshot_{name}"), 0, self.zero_shot)];
        if let Some(v) = self.stl {
            rows.push(row(format!("stl_{name}"), 0, v));
        }
        if let Some(v) = self.random_init {
            rows.push(row(format!("random_init_{name}"), 0, v));
            rows.push(row("jumpstart".into(), 0, self.zero_shot - v));
        }
        for (label, curve) in [("warmstart", &self.warm), ("coldstart", &self.cold)] {
            if let Some(c) = curve {
                rows.extend(c.iter().enumerate().map(|(i, v)| row(format!("{label}_{name}"), i, *v)));
            }
        }
        rows
    }
}

/// Zero-shot performance on held-out tasks. Control tasks are also scored
/// from a random initialization, and with `warm_iters` both the warm start
/// from the prediction and the cold start from the random initialization
/// are trained for that many iterations on the same seeds. Supervised tasks
/// are compared with the single-task learner trained on their own data.
pub fn evaluate_heldout(
    predictor: &Predictor,
    heldout: &[TaskSpec],
    cfg: &ExperimentConfig,
    warm_iters: Option<usize>,
) -> HarnessResult<Vec<HeldOutResult>> {
    heldout
        .par_iter()
        .map(|task| {
            let theta = predictor.predict(task)?;
            let zero_shot = performance(task, &theta, cfg)?;
            let mut result = HeldOutResult {
                task_id: task.id,
                zero_shot,
                stl: None,
                random_init: None,
                warm: None,
                cold: None,
            };
            if task.domain.is_rl() {
                let reference = random_init(task, cfg);
                result.random_init = Some(performance(task, &reference, cfg)?);
                if let Some(iters) = warm_iters.filter(|n| *n > 0) {
                    let env = system(task)?;
                    let pg = PgOptions { iters, ..cfg.rl.pg };
                    let seed = curve_seed(cfg, task.id);
                    let warm = pg_single_task(&env, &theta, &pg, seed)?;
                    let cold = pg_single_task(&env, &reference, &pg, seed)?;
                    result.stl = Some(performance(task, &cold.solution.alpha, cfg)?);
                    result.warm = Some(warm.curve);
                    result.cold = Some(cold.curve);
                }
            } else if task.data.is_some() {
                let sol = supervised_solution(task, cfg)?;
                result.stl = Some(performance(task, &sol.alpha, cfg)?);
            }
            Ok(result)
        })
        .collect()
}

/// Summary line of a set of per-task values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub label: String,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(label: impl Into<String>, metric: impl Into<String>, values: &[f64]) -> Self {
        Summary {
            label: label.into(),
            metric: metric.into(),
            mean: mean(values),
            stderr: stderr(values),
            n: values.len(),
        }
    }
}

pub const SUMMARY_HEADER: [&str; 5] = ["label", "metric", "mean", "stderr", "n"];

/// Lifelong performance of a trained model on its own tasks.
pub fn lifelong_values(trained: &Trained) -> Vec<f64> {
    let name = metric_name(trained.domain);
    trained
        .metrics
        .iter()
        .filter(|r| r.metric_name == name)
        .map(|r| r.value)
        .collect()
}

/// Every non-empty subset of a domain's descriptor groups, as
/// `(label, mask)`.
pub fn descriptor_subsets(domain: Domain, cfg: &ExperimentConfig) -> HarnessResult<Vec<(String, Vec<bool>)>> {
    let groups = domain.descriptor_groups();
    if groups.is_empty() {
        return Err(HarnessError::Config(format!("domain {domain} has no named descriptor groups")));
    }
    let dm = domain.descriptor_dim(&cfg.generation.synth2);
    let mut out = Vec::new();
    for bits in 1u32..(1 << groups.len()) {
        let mut mask = vec![false; dm];
        let mut label = String::new();
        for (g, (name, idx)) in groups.iter().enumerate() {
            if bits & (1 << g) != 0 {
                label.push_str(name);
                for &i in idx {
                    mask[i] = true;
                }
            }
        }
        out.push((label, mask));
    }
    Ok(out)
}

/// One line of the ablation table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub subset: String,
    pub groups: usize,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
}

/// Trains one descriptor-coupled model per descriptor subset on a shared
/// single-task stream and scores zero-shot predictions on held-out tasks:
/// jumpstart over random initialization for control tasks, MSE or accuracy
/// otherwise.
pub fn ablate_descriptors(
    train_tasks: &[TaskSpec],
    heldout: &[TaskSpec],
    cfg: &ExperimentConfig,
) -> HarnessResult<Vec<AblationRow>> {
    let subsets = descriptor_subsets(cfg.domain, cfg)?;
    let order = presentation_order(train_tasks.len(), cfg.seed);
    let stream = solution_stream(train_tasks, &order, cfg)?;
    let groups = cfg.domain.descriptor_groups();
    subsets
        .par_iter()
        .map(|(label, mask)| {
            let mut sub = cfg.clone();
            sub.algo = Algo::Tadell;
            sub.descriptors.mask = Some(mask.clone());
            let trained = train_with(train_tasks, &sub, &order, &stream)?;
            let predictor = trained.predictor()?;
            let results = evaluate_heldout(&predictor, heldout, &sub, None)?;
            let (metric, values): (String, Vec<f64>) = if cfg.domain.is_rl() {
                (
                    "jumpstart".into(),
                    results.iter().map(|r| r.zero_shot - r.random_init.unwrap_or(0.0)).collect(),
                )
            } else {
                (
                    format!("zeroshot_{}", metric_name(cfg.domain)),
                    results.iter().map(|r| r.zero_shot).collect(),
                )
            };
            let n_groups = groups.iter().filter(|(name, _)| label.contains(*name)).count();
            Ok(AblationRow {
                subset: label.clone(),
                groups: n_groups,
                metric,
                mean: mean(&values),
                stderr: stderr(&values),
            })
        })
        .collect()
}

/// Per-encounter dictionary update time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub encounter_index: usize,
    pub task_count: usize,
    pub seconds: f64,
}

/// Times the dictionary update of each task presented once, in file order.
/// Sparse coding runs untimed; the basis update is timed `repeats` times on
/// a copy of the state and the minimum is kept.
pub fn bench_runtime(
    tasks: &[TaskSpec],
    cfg: &ExperimentConfig,
    repeats: usize,
) -> HarnessResult<Vec<TimingRow>> {
    let mode = cfg.algo.mode().unwrap_or(Mode::Tadell);
    let order: Vec<usize> = (0..tasks.len()).collect();
    let stream = solution_stream(tasks, &order, cfg)?;
    let map = DescriptorMap::resolve(cfg.domain, &cfg.descriptors, &cfg.generation)?;
    let phis = descriptor_features(tasks, &map)?;
    let d = model_dim(cfg.domain, cfg);
    let mut state = LearnerState::new(d, map.dim(), cfg.hyper, mode, derive_seed(cfg.seed, TAG_DICT, 0))?;
    let mut rows = Vec::with_capacity(order.len());
    for (enc, (&i, learned)) in order.iter().zip(&stream).enumerate() {
        let (id, sol, phi) = (tasks[i].id, &learned.solution, Some(&phis[i]));
        let (fit, rho) = state.code_task(sol, phi)?;
        let mut best = f64::INFINITY;
        for _ in 0..repeats.max(1) {
            let mut trial = state.clone();
            let code = fit.code.clone();
            let start = Instant::now();
            trial.update_dictionary(id, sol, phi, code, rho)?;
            best = best.min(start.elapsed().as_secs_f64());
        }
        state.update_dictionary(id, sol, phi, fit.code, rho)?;
        rows.push(TimingRow {
            encounter_index: enc,
            task_count: state.task_count(),
            seconds: best,
        });
    }
    Ok(rows)
}

/// Change of the model basis and of the surrogate as tasks arrive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub task_count: usize,
    /// `‖L_T − L_{T−1}‖_F`.
    pub basis_change: f64,
    /// `|ĝ_T(L_T) − ĝ_T(L_{T−1})|` over the first `T` tasks.
    pub surrogate_change: f64,
}

/// Presents each task once, in file order, and tracks how much each new
/// task moves the model basis.
pub fn basis_convergence(tasks: &[TaskSpec], cfg: &ExperimentConfig) -> HarnessResult<Vec<ConvergenceRow>> {
    let mode = cfg.algo.mode().unwrap_or(Mode::Tadell);
    let order: Vec<usize> = (0..tasks.len()).collect();
    let stream = solution_stream(tasks, &order, cfg)?;
    let map = DescriptorMap::resolve(cfg.domain, &cfg.descriptors, &cfg.generation)?;
    let phis = descriptor_features(tasks, &map)?;
    let d = model_dim(cfg.domain, cfg);
    let mut state = LearnerState::new(d, map.dim(), cfg.hyper, mode, derive_seed(cfg.seed, TAG_DICT, 0))?;
    let mut rows = Vec::with_capacity(tasks.len());
    for (&i, learned) in order.iter().zip(&stream) {
        let before = state.dict.l.clone();
        state.encounter(tasks[i].id, &learned.solution, Some(&phis[i]))?;
        let (mu, lambda) = (state.hyper.mu, state.hyper.lambda);
        let g_new = model_surrogate(&state.dict.l, &state.registry, mu, lambda);
        let g_old = model_surrogate(&before, &state.registry, mu, lambda);
        rows.push(ConvergenceRow {
            task_count: state.task_count(),
            basis_change: (&state.dict.l - &before).norm(),
            surrogate_change: (g_new - g_old).abs(),
        });
    }
    Ok(rows)
}

/// One grid-search cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub k: usize,
    pub mu: f64,
    pub lambda: f64,
    pub lifelong: f64,
    pub zeroshot: f64,
}

/// Evaluates every `(k, μ, λ)` combination: lifelong performance on the
/// training tasks and zero-shot performance on the held-out tasks.
pub fn grid_search(
    train_tasks: &[TaskSpec],
    heldout: &[TaskSpec],
    cfg: &ExperimentConfig,
    ks: &[usize],
    mus: &[f64],
    lambdas: &[f64],
) -> HarnessResult<Vec<GridRow>> {
    let order = presentation_order(train_tasks.len(), cfg.seed);
    let stream = solution_stream(train_tasks, &order, cfg)?;
    let cells: Vec<(usize, f64, f64)> = ks
        .iter()
        .flat_map(|&k| mus.iter().flat_map(move |&mu| lambdas.iter().map(move |&l| (k, mu, l))))
        .collect();
    cells
        .par_iter()
        .map(|&(k, mu, lambda)| {
            let mut sub = cfg.clone();
            sub.hyper.k = k;
            sub.hyper.mu = mu;
            sub.hyper.lambda = lambda;
            let trained = train_with(train_tasks, &sub, &order, &stream)?;
            let lifelong = mean(&lifelong_values(&trained));
            let zeroshot = match trained.predictor() {
                Ok(p) => {
                    let r = evaluate_heldout(&p, heldout, &sub, None)?;
                    mean(&r.iter().map(|r| r.zero_shot).collect::<Vec<_>>())
                }
                Err(_) => f64::NAN,
            };
            Ok(GridRow { k, mu, lambda, lifelong, zeroshot })
        })
        .collect()
}

/// Thread pool capped by `LLL_THREADS` when set.
pub fn thread_pool() -> rayon::ThreadPool {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("LLL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            builder = builder.num_threads(n);
        }
    }
    builder.build().expect("thread pool")
}
