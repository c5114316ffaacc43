use std::collections::BTreeMap;

use nalgebra::DVector;

use super::engine::{code_system, Hyper, Mode};
use crate::dictionary::{accumulate_registry, coupled_surrogate, model_surrogate, CoupledDictionary, TaskId, TaskRecord};
use crate::learners::SingleTaskSolution;
use crate::sparse::lasso;
use crate::{Error, Result};

/// One task of a batch multi-task problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTask {
    pub id: TaskId,
    pub solution: SingleTaskSolution,
    pub phi: Option<DVector<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub hyper: Hyper,
    pub mode: Mode,
    pub outer_iters: usize,
    /// Stop once one alternation lowers the surrogate by less than this.
    pub tol: f64,
    /// Seed of the initial random dictionary.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub dict: CoupledDictionary,
    pub registry: BTreeMap<TaskId, TaskRecord>,
    /// Surrogate value after every half step (codes, then bases).
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Every LASSO subproblem reached its tolerance.
    pub codes_converged: bool,
}

fn surrogate(dict: &CoupledDictionary, registry: &BTreeMap<TaskId, TaskRecord>, hyper: &Hyper, mode: Mode) -> f64 {
    match mode {
        Mode::Tadell => coupled_surrogate(dict, registry.values(), hyper.mu, hyper.lambda),
        Mode::Ella => model_surrogate(&dict.l, registry, hyper.mu, hyper.lambda),
    }
}

/// Batch coupled multi-task learning by alternating exact block
/// minimization: all codes given the bases, then both bases given the codes.
/// Without descriptors this is the plain shared-basis factorization.
pub fn batch_mtl(tasks: &[BatchTask], d_m: usize, opts: &BatchOptions) -> Result<BatchOutcome> {
    let hyper = &opts.hyper;
    hyper.validate()?;
    let first = tasks
        .first()
        .ok_or_else(|| Error::InvalidInput("batch learning needs at least one task".into()))?;
    let d = first.solution.dim();
    let coupled = opts.mode.uses_descriptors();
    let mut dict = CoupledDictionary::random(d, d_m, hyper.k, opts.seed)?;
    let mut registry = BTreeMap::new();
    let mut objective = Vec::new();
    let mut converged = false;
    let mut codes_converged = true;
    let mut iterations = 0;
    let mut previous = f64::INFINITY;

    while iterations < opts.outer_iters {
        iterations += 1;
        registry.clear();
        for task in tasks {
            let rho = hyper.rho_for(&task.solution.gamma);
            let descriptor = match (&task.phi, coupled) {
                (Some(phi), true) => Some((phi, rho)),
                (None, true) => {
                    return Err(Error::InvalidInput(format!("task {} has no descriptor", task.id)))
                }
                (_, false) => None,
            };
            let (q, t) = code_system(&dict, &task.solution.alpha, &task.solution.gamma, descriptor)?;
            let fit = lasso(&q, &t, hyper.mu, &hyper.lasso)?;
            codes_converged &= fit.converged;
            registry.insert(
                task.id,
                TaskRecord {
                    id: task.id,
                    code: fit.code,
                    alpha: task.solution.alpha.clone(),
                    gamma: task.solution.gamma.clone(),
                    phi: match (&task.phi, coupled) {
                        (Some(phi), true) => phi.clone(),
                        _ => DVector::zeros(d_m),
                    },
                    rho: if coupled { rho } else { 0.0 },
                },
            );
        }
        objective.push(surrogate(&dict, &registry, hyper, opts.mode));

        let accs = accumulate_registry(d, d_m, hyper.k, registry.values(), coupled)?;
        dict.l = accs.model.recompute_basis(registry.len(), hyper.lambda)?;
        if coupled {
            dict.d = accs.descriptor.recompute_basis(registry.len(), hyper.lambda)?;
        }
        let value = surrogate(&dict, &registry, hyper, opts.mode);
        objective.push(value);
        if previous - value < opts.tol {
            converged = true;
            break;
        }
        previous = value;
    }

    Ok(BatchOutcome {
        dict,
        registry,
        objective,
        iterations,
        converged,
        codes_converged,
    })
}
