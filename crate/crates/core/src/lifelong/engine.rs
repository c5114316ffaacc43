use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::{encounter_task, CoupledAccumulators, CoupledDictionary, TaskId, TaskRecord};
use crate::learners::SingleTaskSolution;
use crate::linalg::mean_diagonal;
use crate::sparse::{lasso, whiten, LassoFit, LassoOptions, SparseCode, WeightedQuadratic};
use crate::{Error, Result};

/// Whether descriptors take part in coding and in the dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ella,
    Tadell,
}

impl Mode {
    pub fn uses_descriptors(self) -> bool {
        self == Mode::Tadell
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ella => "ella",
            Mode::Tadell => "tadell",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ella" => Ok(Mode::Ella),
            "tadell" => Ok(Mode::Tadell),
            _ => Err(Error::InvalidInput(format!("unknown mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub k: usize,
    pub mu: f64,
    pub lambda: f64,
    /// Fixed descriptor weight; `None` uses `mean(diag Γ)` of each task.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub lasso: LassoOptions,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            k: 6,
            mu: 0.1,
            lambda: 0.01,
            rho: None,
            lasso: LassoOptions::default(),
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidInput("k must be >= 1".into()));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidInput(format!("mu must be >= 0, got {}", self.mu)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if let Some(rho) = self.rho {
            if !(rho >= 0.0 && rho.is_finite()) {
                return Err(Error::InvalidInput(format!("rho must be >= 0, got {rho}")));
            }
        }
        Ok(())
    }

    /// The descriptor weight for a task with curvature `gamma`.
    pub fn rho_for(&self, gamma: &DMatrix<f64>) -> f64 {
        self.rho.unwrap_or_else(|| mean_diagonal(gamma))
    }
}

/// What one encounter did.
#[derive(Debug, Clone, PartialEq)]
pub struct EncounterReport {
    pub id: TaskId,
    pub revisit: bool,
    pub rho: f64,
    pub converged: bool,
    pub kkt_residual: f64,
}

/// Whitened coding system for one task: `[W_Γ L; √ρ D] s ≈ [W_Γ α; √ρ φ]`,
/// or only the top block without descriptors. The block factor of
/// `blockdiag(Γ, ρ I)` is `blockdiag(W_Γ, √ρ I)`, which stays exact at
/// `ρ = 0`.
pub(crate) fn code_system(
    dict: &CoupledDictionary,
    alpha: &DVector<f64>,
    gamma: &DMatrix<f64>,
    descriptor: Option<(&DVector<f64>, f64)>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let d = dict.model_dim();
    if alpha.len() != d {
        return Err(Error::dims("task parameters", d, alpha.len()));
    }
    if gamma.shape() != (d, d) {
        return Err(Error::dims("task curvature", d, gamma.nrows()));
    }
    let w = whiten(&WeightedQuadratic::new(gamma.clone()))?;
    let top_q = &w * &dict.l;
    let top_t = &w * alpha;
    let Some((phi, rho)) = descriptor else {
        return Ok((top_q, top_t));
    };
    let dm = dict.descriptor_dim();
    if phi.len() != dm {
        return Err(Error::dims("task descriptor", dm, phi.len()));
    }
    let root = rho.sqrt();
    let mut q = DMatrix::zeros(d + dm, dict.k());
    q.rows_mut(0, d).copy_from(&top_q);
    q.rows_mut(d, dm).copy_from(&(&dict.d * root));
    let mut t = DVector::zeros(d + dm);
    t.rows_mut(0, d).copy_from(&top_t);
    t.rows_mut(d, dm).copy_from(&(phi * root));
    Ok((q, t))
}

/// Dictionary, accumulators and the per-task registry of an online run.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub dict: CoupledDictionary,
    pub accs: CoupledAccumulators,
    pub registry: BTreeMap<TaskId, TaskRecord>,
    pub hyper: Hyper,
    pub mode: Mode,
    /// Encounters so far, revisits included.
    pub encounters: usize,
}

impl LearnerState {
    /// A fresh learner with a random dictionary drawn from `seed`.
    pub fn new(d: usize, d_m: usize, hyper: Hyper, mode: Mode, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let dict = CoupledDictionary::random(d, d_m, hyper.k, seed)?;
        Ok(LearnerState {
            accs: CoupledAccumulators::zeros(d, d_m, hyper.k),
            dict,
            registry: BTreeMap::new(),
            hyper,
            mode,
            encounters: 0,
        })
    }

    /// Unique tasks seen.
    pub fn task_count(&self) -> usize {
        self.registry.len()
    }

    /// `θ = L s` for a registered task.
    pub fn model_for(&self, id: TaskId) -> Option<DVector<f64>> {
        self.registry.get(&id).map(|r| &self.dict.l * &*r.code)
    }

    /// The sparse code of a task under the current dictionary, without
    /// touching any state.
    pub fn code_task(
        &self,
        solution: &SingleTaskSolution,
        phi: Option<&DVector<f64>>,
    ) -> Result<(LassoFit, f64)> {
        let rho = self.hyper.rho_for(&solution.gamma);
        let descriptor = match (self.mode, phi) {
            (Mode::Tadell, Some(phi)) => Some((phi, rho)),
            (Mode::Tadell, None) => {
                return Err(Error::InvalidInput("descriptor-coupled mode needs a descriptor".into()))
            }
            (Mode::Ella, _) => None,
        };
        let (q, t) = code_system(&self.dict, &solution.alpha, &solution.gamma, descriptor)?;
        Ok((lasso(&q, &t, self.hyper.mu, &self.hyper.lasso)?, rho))
    }

    /// One online update: code the task against the current dictionary,
    /// replace any earlier contribution of the same task, and re-solve the
    /// bases. An unconverged code is kept and flagged in the report.
    pub fn encounter(
        &mut self,
        id: TaskId,
        solution: &SingleTaskSolution,
        phi: Option<&DVector<f64>>,
    ) -> Result<EncounterReport> {
        let (fit, rho) = self.code_task(solution, phi)?;
        let report = EncounterReport {
            id,
            revisit: self.registry.contains_key(&id),
            rho: if self.mode.uses_descriptors() { rho } else { 0.0 },
            converged: fit.converged,
            kkt_residual: fit.kkt_residual,
        };
        self.update_dictionary(id, solution, phi, fit.code, rho)?;
        Ok(report)
    }

    /// The basis half of [`LearnerState::encounter`]: stores `code` for the
    /// task and re-solves `L` (and `D` in coupled mode).
    pub fn update_dictionary(
        &mut self,
        id: TaskId,
        solution: &SingleTaskSolution,
        phi: Option<&DVector<f64>>,
        code: SparseCode,
        rho: f64,
    ) -> Result<()> {
        let coupled = self.mode.uses_descriptors();
        if coupled && phi.is_none() {
            return Err(Error::InvalidInput("descriptor-coupled mode needs a descriptor".into()));
        }
        let record = TaskRecord {
            id,
            code,
            alpha: solution.alpha.clone(),
            gamma: solution.gamma.clone(),
            phi: match phi {
                Some(p) if coupled => p.clone(),
                _ => DVector::zeros(self.dict.descriptor_dim()),
            },
            rho: if coupled { rho } else { 0.0 },
        };
        let prior = self.registry.get(&id);
        let count = self.registry.len() + usize::from(prior.is_none());
        encounter_task(
            &mut self.dict,
            &mut self.accs,
            &record,
            prior,
            count,
            self.hyper.lambda,
            coupled,
        )?;
        self.registry.insert(id, record);
        self.encounters += 1;
        Ok(())
    }
}
