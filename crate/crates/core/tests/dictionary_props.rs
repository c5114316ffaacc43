use std::collections::BTreeMap;

use lll_core::dictionary::{
    accumulate_registry, encounter_task, Accumulator, Contribution, CoupledAccumulators,
    CoupledDictionary, TaskRecord,
};
use lll_core::learners::SingleTaskSolution;
use lll_core::lifelong::{Hyper, LearnerState, Mode};
use lll_core::linalg::asymmetry;
use lll_core::sparse::SparseCode;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn psd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n + 1, |_, _| normal(rng));
    &a * a.transpose() / n as f64
}

fn record(id: u64, d: usize, dm: usize, k: usize, rng: &mut ChaCha8Rng) -> TaskRecord {
    TaskRecord {
        id,
        code: SparseCode::new(DVector::from_fn(k, |_, _| normal(rng))),
        alpha: DVector::from_fn(d, |_, _| normal(rng)),
        gamma: psd(d, rng),
        phi: DVector::from_fn(dm, |_, _| normal(rng)),
        rho: 0.5,
    }
}

/// Minimizer of `(1/T) Σ ‖α − L s‖²_Γ + λ‖L‖²_F` as one stacked least-squares
/// problem in `vec(L)`, solved by SVD.
fn ridge_oracle(records: &[TaskRecord], d: usize, k: usize, lambda: f64) -> DMatrix<f64> {
    let t = records.len() as f64;
    let n = d * k;
    let mut rows = DMatrix::zeros(records.len() * d + n, n);
    let mut rhs = DVector::zeros(records.len() * d + n);
    for (i, r) in records.iter().enumerate() {
        let root = r.gamma.clone().cholesky().unwrap().l().transpose() / t.sqrt();
        // L s = (sᵀ ⊗ I) vec(L)
        let mut design = DMatrix::zeros(d, n);
        for j in 0..k {
            for row in 0..d {
                design[(row, j * d + row)] = r.code[j];
            }
        }
        rows.rows_mut(i * d, d).copy_from(&(&root * design));
        rhs.rows_mut(i * d, d).copy_from(&(&root * &r.alpha));
    }
    let base = records.len() * d;
    for i in 0..n {
        rows[(base + i, i)] = lambda.sqrt();
    }
    let x = rows.svd(true, true).solve(&rhs, 1e-14).unwrap();
    DMatrix::from_column_slice(d, k, x.as_slice())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn accumulator_stays_symmetric(seed in any::<u64>(), d in 1usize..=5, k in 1usize..=4, n in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = Accumulator::zeros(d, k);
        let recs: Vec<_> = (0..n as u64).map(|i| record(i, d, 1, k, &mut rng)).collect();
        for (i, r) in recs.iter().enumerate() {
            acc.accumulate(&r.code, &r.alpha, &r.gamma, Contribution::Add).unwrap();
            prop_assert!(asymmetry(&acc.a) <= 1e-10 * acc.a.norm().max(1e-300));
            if i % 2 == 1 {
                acc.accumulate(&r.code, &r.alpha, &r.gamma, Contribution::Remove).unwrap();
                prop_assert!(asymmetry(&acc.a) <= 1e-10 * acc.a.norm().max(1e-300));
            }
        }
    }

    #[test]
    fn accumulation_order_does_not_matter(seed in any::<u64>(), d in 1usize..=5, k in 1usize..=4, n in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let recs: Vec<_> = (0..n as u64).map(|i| record(i, d, 3, k, &mut rng)).collect();
        let forward = accumulate_registry(d, 3, k, &recs, true).unwrap();
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut rng);
        let other = accumulate_registry(d, 3, k, &shuffled, true).unwrap();
        let tol = |m: f64| 1e-10 * m.max(1.0);
        prop_assert!((&forward.model.a - &other.model.a).norm() <= tol(forward.model.a.norm()));
        prop_assert!((&forward.model.b - &other.model.b).norm() <= tol(forward.model.b.norm()));
        prop_assert!((&forward.descriptor.a - &other.descriptor.a).norm() <= tol(forward.descriptor.a.norm()));
        prop_assert!((&forward.descriptor.b - &other.descriptor.b).norm() <= tol(forward.descriptor.b.norm()));
    }

    #[test]
    fn basis_matches_ridge_oracle(seed in any::<u64>(), d in 1usize..=6, k in 1usize..=4, n in 1usize..=6, lambda in 1e-3f64..1.0) {
        prop_assume!(d * k <= 24);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let recs: Vec<_> = (0..n as u64).map(|i| record(i, d, 2, k, &mut rng)).collect();
        let accs = accumulate_registry(d, 2, k, &recs, false).unwrap();
        let l = accs.model.recompute_basis(n, lambda).unwrap();
        let oracle = ridge_oracle(&recs, d, k, lambda);
        prop_assert!((&l - &oracle).norm() <= 1e-8 * oracle.norm().max(1.0));
    }

    #[test]
    fn revisit_replaces_contribution(seed in any::<u64>(), d in 1usize..=4, k in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = record(0, d, 2, k, &mut rng);
        let second = record(1, d, 2, k, &mut rng);
        let mut again = record(0, d, 2, k, &mut rng);
        again.id = 0;
        let mut dict = CoupledDictionary::random(d, 2, k, seed).unwrap();
        let mut accs = CoupledAccumulators::zeros(d, 2, k);
        encounter_task(&mut dict, &mut accs, &first, None, 1, 0.1, true).unwrap();
        encounter_task(&mut dict, &mut accs, &second, None, 2, 0.1, true).unwrap();
        encounter_task(&mut dict, &mut accs, &again, Some(&first), 2, 0.1, true).unwrap();
        let fresh = accumulate_registry(d, 2, k, [&again, &second], true).unwrap();
        let tol = 1e-9 * fresh.model.a.norm().max(1.0);
        prop_assert!((&accs.model.a - &fresh.model.a).norm() <= tol);
        prop_assert!((&accs.model.b - &fresh.model.b).norm() <= tol);
    }
}

fn planted_stream(seed: u64, n: usize) -> Vec<(SingleTaskSolution, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, dm, k) = (6, 4, 3);
    let l = DMatrix::from_fn(d, k, |_, _| normal(&mut rng));
    let dd = DMatrix::from_fn(dm, k, |_, _| normal(&mut rng));
    (0..n)
        .map(|_| {
            let mut s = DVector::zeros(k);
            s[rng.random_range(0..k)] = normal(&mut rng);
            let noise = DVector::from_fn(d, |_, _| 0.1 * normal(&mut rng));
            let sol = SingleTaskSolution {
                alpha: &l * &s + noise,
                gamma: psd(d, &mut rng) + DMatrix::identity(d, d) * 0.1,
                loss_at_alpha: 0.0,
            };
            (sol, &dd * &s)
        })
        .collect()
}

#[test]
fn basis_changes_shrink_with_more_tasks() {
    let stream = planted_stream(5, 100);
    let hyper = Hyper { k: 3, mu: 0.01, lambda: 0.01, ..Hyper::default() };
    let mut state = LearnerState::new(6, 4, hyper, Mode::Tadell, 1).unwrap();
    let mut changes = Vec::new();
    for (i, (sol, phi)) in stream.iter().enumerate() {
        let before = state.dict.l.clone();
        state.encounter(i as u64, sol, Some(phi)).unwrap();
        changes.push((&state.dict.l - before).norm());
    }
    let quarter = changes.len() / 4;
    let first: f64 = changes[..quarter].iter().sum::<f64>() / quarter as f64;
    let last: f64 = changes[changes.len() - quarter..].iter().sum::<f64>() / quarter as f64;
    assert!(last < first, "{last} vs {first}");
}

#[test]
fn surrogate_change_shrinks_with_more_tasks() {
    let stream = planted_stream(9, 100);
    let hyper = Hyper { k: 3, mu: 0.01, lambda: 0.01, ..Hyper::default() };
    let mut state = LearnerState::new(6, 4, hyper, Mode::Ella, 2).unwrap();
    let mut changes = Vec::new();
    for (i, (sol, _)) in stream.iter().enumerate() {
        let before = state.dict.l.clone();
        state.encounter(i as u64, sol, None).unwrap();
        let reg: BTreeMap<_, _> = state.registry.clone();
        let now = lll_core::dictionary::model_surrogate(&state.dict.l, &reg, 0.01, 0.01);
        let then = lll_core::dictionary::model_surrogate(&before, &reg, 0.01, 0.01);
        changes.push((now - then).abs());
    }
    let quarter = changes.len() / 4;
    let first: f64 = changes[..quarter].iter().sum::<f64>() / quarter as f64;
    let last: f64 = changes[changes.len() - quarter..].iter().sum::<f64>() / quarter as f64;
    assert!(last < first, "{last} vs {first}");
}
