//! The coupled dictionary `K = [L; D]` and its online maintenance.
//!
//! Each basis `B` (either `L` over model parameters or `D` over descriptors)
//! is the minimizer of
//!
//! ```text
//! (1/T) Σ_t ‖target_t − B s_t‖²_{W_t} + λ ‖B‖²_F
//! ```
//!
//! for the current codes. Its normal equations are kept as running sums
//! `A = Σ (s sᵀ) ⊗ W` and `b = Σ vec(W target sᵀ)`, so one encounter costs a
//! rank-one Kronecker update plus a `kp × kp` solve regardless of `T`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{kron, unvec};
use crate::sparse::SparseCode;
use crate::{Error, Result};

pub type TaskId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledDictionary {
    /// Model basis, `d × k`.
    pub l: DMatrix<f64>,
    /// Descriptor basis, `d_m × k`.
    pub d: DMatrix<f64>,
}

impl CoupledDictionary {
    pub fn new(l: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        if l.ncols() != d.ncols() {
            return Err(Error::dims("coupled dictionary columns", l.ncols(), d.ncols()));
        }
        if l.ncols() == 0 || l.nrows() == 0 || d.nrows() == 0 {
            return Err(Error::InvalidInput("dictionary dimensions must be >= 1".into()));
        }
        Ok(CoupledDictionary { l, d })
    }

    /// I.i.d. standard-normal entries from a generator seeded with `seed`;
    /// `L` is filled first (column-major), then `D`.
    pub fn random(d: usize, d_m: usize, k: usize, seed: u64) -> Result<Self> {
        if d == 0 || d_m == 0 || k == 0 {
            return Err(Error::InvalidInput("dictionary dimensions must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = DMatrix::from_fn(d, k, |_, _| StandardNormal.sample(&mut rng));
        let dm = DMatrix::from_fn(d_m, k, |_, _| StandardNormal.sample(&mut rng));
        Ok(CoupledDictionary { l, d: dm })
    }

    pub fn k(&self) -> usize {
        self.l.ncols()
    }

    pub fn model_dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn descriptor_dim(&self) -> usize {
        self.d.nrows()
    }

    /// `[L; D]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (d, dm, k) = (self.model_dim(), self.descriptor_dim(), self.k());
        let mut out = DMatrix::zeros(d + dm, k);
        out.rows_mut(0, d).copy_from(&self.l);
        out.rows_mut(d, dm).copy_from(&self.d);
        out
    }
}

/// Whether a contribution is being added or withdrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contribution {
    Add,
    Remove,
}

impl Contribution {
    fn sign(self) -> f64 {
        match self {
            Contribution::Add => 1.0,
            Contribution::Remove => -1.0,
        }
    }
}

/// Running normal equations for one basis with `rows` rows and `k` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    rows: usize,
    k: usize,
}

impl Accumulator {
    pub fn zeros(rows: usize, k: usize) -> Self {
        Accumulator {
            a: DMatrix::zeros(rows * k, rows * k),
            b: DVector::zeros(rows * k),
            rows,
            k,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `A ← A ± (s sᵀ) ⊗ W`, `b ← b ± vec(sᵀ ⊗ (targetᵀ W))`.
    pub fn accumulate(
        &mut self,
        s: &DVector<f64>,
        target: &DVector<f64>,
        weight: &DMatrix<f64>,
        contribution: Contribution,
    ) -> Result<()> {
        if s.len() != self.k {
            return Err(Error::dims("accumulate code", self.k, s.len()));
        }
        if target.len() != self.rows {
            return Err(Error::dims("accumulate target", self.rows, target.len()));
        }
        if weight.nrows() != self.rows || weight.ncols() != self.rows {
            return Err(Error::dims("accumulate weight", self.rows, weight.nrows()));
        }
        let sign = contribution.sign();
        let outer = s * s.transpose();
        self.a += kron(&outer, weight) * sign;
        // Block j of b is s_j · W target (W symmetric).
        let wt = weight.transpose() * target;
        for j in 0..self.k {
            let sj = s[j];
            if sj != 0.0 {
                self.b
                    .rows_mut(j * self.rows, self.rows)
                    .axpy(sign * sj, &wt, 1.0);
            }
        }
        Ok(())
    }

    /// Same as [`Accumulator::accumulate`] for a scaled identity weight
    /// `rho · I`, without forming the Kronecker product densely.
    pub fn accumulate_scaled_identity(
        &mut self,
        s: &DVector<f64>,
        target: &DVector<f64>,
        rho: f64,
        contribution: Contribution,
    ) -> Result<()> {
        if s.len() != self.k {
            return Err(Error::dims("accumulate code", self.k, s.len()));
        }
        if target.len() != self.rows {
            return Err(Error::dims("accumulate target", self.rows, target.len()));
        }
        let sign = contribution.sign() * rho;
        let p = self.rows;
        for bj in 0..self.k {
            for bi in 0..self.k {
                let v = sign * s[bi] * s[bj];
                if v != 0.0 {
                    for r in 0..p {
                        self.a[(bi * p + r, bj * p + r)] += v;
                    }
                }
            }
            if s[bj] != 0.0 {
                self.b.rows_mut(bj * p, p).axpy(sign * s[bj], target, 1.0);
            }
        }
        Ok(())
    }

    /// Closed-form basis `mat(((1/T) A + λ I)⁻¹ (1/T) b)`, solved by Cholesky.
    pub fn recompute_basis(&self, task_count: usize, lambda: f64) -> Result<DMatrix<f64>> {
        if task_count == 0 {
            return Err(Error::InvalidInput("task count must be >= 1".into()));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
        }
        let inv_t = 1.0 / task_count as f64;
        let mut m = &self.a * inv_t;
        for i in 0..m.nrows() {
            m[(i, i)] += lambda;
        }
        crate::linalg::symmetrize(&mut m);
        let rhs = &self.b * inv_t;
        let chol = m.cholesky().ok_or(Error::SingularSystem)?;
        let x = chol.solve(&rhs);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularSystem);
        }
        unvec(&x, self.rows, self.k)
    }
}

/// Everything the dictionary remembers about one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub id: TaskId,
    pub code: SparseCode,
    pub alpha: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub phi: DVector<f64>,
    /// Descriptor weight; the descriptor norm is `rho · I`.
    pub rho: f64,
}

impl TaskRecord {
    pub fn check_dims(&self, dict: &CoupledDictionary) -> Result<()> {
        let (d, dm, k) = (dict.model_dim(), dict.descriptor_dim(), dict.k());
        if self.code.len() != k {
            return Err(Error::dims("record code", k, self.code.len()));
        }
        if self.alpha.len() != d {
            return Err(Error::dims("record alpha", d, self.alpha.len()));
        }
        if self.gamma.shape() != (d, d) {
            return Err(Error::dims("record gamma", d, self.gamma.nrows()));
        }
        if self.phi.len() != dm {
            return Err(Error::dims("record descriptor", dm, self.phi.len()));
        }
        Ok(())
    }
}

/// Both accumulators of a coupled dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledAccumulators {
    pub model: Accumulator,
    pub descriptor: Accumulator,
}

impl CoupledAccumulators {
    pub fn zeros(d: usize, d_m: usize, k: usize) -> Self {
        CoupledAccumulators {
            model: Accumulator::zeros(d, k),
            descriptor: Accumulator::zeros(d_m, k),
        }
    }

    fn apply(
        &mut self,
        record: &TaskRecord,
        contribution: Contribution,
        with_descriptor: bool,
    ) -> Result<()> {
        self.model
            .accumulate(&record.code, &record.alpha, &record.gamma, contribution)?;
        if with_descriptor {
            self.descriptor.accumulate_scaled_identity(
                &record.code,
                &record.phi,
                record.rho,
                contribution,
            )?;
        }
        Ok(())
    }
}

/// One dictionary update for an encountered task.
///
/// `prior` is the task's previous record when it has been seen before; its
/// contribution is withdrawn before the new one is added so that revisits do
/// not double count. `task_count` is the number of unique tasks including
/// this one. When `with_descriptor` is false only `L` is touched.
pub fn encounter_task(
    dict: &mut CoupledDictionary,
    accs: &mut CoupledAccumulators,
    record: &TaskRecord,
    prior: Option<&TaskRecord>,
    task_count: usize,
    lambda: f64,
    with_descriptor: bool,
) -> Result<()> {
    record.check_dims(dict)?;
    if let Some(prior) = prior {
        prior.check_dims(dict)?;
        if prior.id != record.id {
            return Err(Error::InvalidInput(format!(
                "prior record belongs to task {} not {}",
                prior.id, record.id
            )));
        }
        accs.apply(prior, Contribution::Remove, with_descriptor)?;
    }
    accs.apply(record, Contribution::Add, with_descriptor)?;
    dict.l = accs.model.recompute_basis(task_count, lambda)?;
    if with_descriptor {
        dict.d = accs.descriptor.recompute_basis(task_count, lambda)?;
    }
    Ok(())
}

/// Rebuilds the accumulators from scratch from a registry.
pub fn accumulate_registry<'a>(
    d: usize,
    d_m: usize,
    k: usize,
    records: impl IntoIterator<Item = &'a TaskRecord>,
    with_descriptor: bool,
) -> Result<CoupledAccumulators> {
    let mut accs = CoupledAccumulators::zeros(d, d_m, k);
    for r in records {
        accs.apply(r, Contribution::Add, with_descriptor)?;
    }
    Ok(accs)
}

/// The sparse-coded surrogate of the multi-task objective over `L` with the
/// codes held fixed: `(1/T) Σ [‖α − L s‖²_Γ + μ‖s‖₁] + λ‖L‖²_F`.
pub fn model_surrogate(
    l: &DMatrix<f64>,
    registry: &BTreeMap<TaskId, TaskRecord>,
    mu: f64,
    lambda: f64,
) -> f64 {
    if registry.is_empty() {
        return lambda * l.norm_squared();
    }
    let sum: f64 = registry
        .values()
        .map(|r| {
            let e = &r.alpha - l * &*r.code;
            e.dot(&(&r.gamma * &e)) + mu * r.code.l1_norm()
        })
        .sum();
    sum / registry.len() as f64 + lambda * l.norm_squared()
}

/// The coupled surrogate including the descriptor fit:
/// `(1/T) Σ [‖α − L s‖²_Γ + ρ‖φ − D s‖² + μ‖s‖₁] + λ(‖L‖²_F + ‖D‖²_F)`.
pub fn coupled_surrogate<'a>(
    dict: &CoupledDictionary,
    records: impl IntoIterator<Item = &'a TaskRecord>,
    mu: f64,
    lambda: f64,
) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in records {
        let e = &r.alpha - &dict.l * &*r.code;
        let f = &r.phi - &dict.d * &*r.code;
        sum += e.dot(&(&r.gamma * &e)) + r.rho * f.norm_squared() + mu * r.code.l1_norm();
        n += 1;
    }
    let reg = lambda * (dict.l.norm_squared() + dict.d.norm_squared());
    if n == 0 {
        reg
    } else {
        sum / n as f64 + reg
    }
}
