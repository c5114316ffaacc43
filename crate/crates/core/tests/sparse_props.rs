use lll_core::sparse::{
    kkt_residual, lasso, lasso_objective, mutual_coherence, weighted_lasso, whiten, LassoOptions,
    WeightedQuadratic,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut *rng))
}

fn instance(seed: u64, d: usize, k: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = gaussian(d, k, &mut rng);
    let t = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
    (q, t)
}

/// Exhaustive LASSO oracle: for every sign pattern in {−,0,+}^k solve the
/// stationarity equations on the support, keep sign-consistent candidates,
/// and return the one with the smallest objective.
fn brute_force(q: &DMatrix<f64>, t: &DVector<f64>, mu: f64) -> DVector<f64> {
    let k = q.ncols();
    let mut best = (lasso_objective(q, t, mu, &DVector::zeros(k)), DVector::zeros(k));
    for code in 0..3usize.pow(k as u32) {
        let mut signs = vec![0.0; k];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = [0.0, 1.0, -1.0][c % 3];
            c /= 3;
        }
        let support: Vec<usize> = (0..k).filter(|&j| signs[j] != 0.0).collect();
        if support.is_empty() {
            continue;
        }
        let qa = q.select_columns(&support);
        let g = qa.transpose() * &qa;
        let rhs = qa.transpose() * t
            - DVector::from_iterator(support.len(), support.iter().map(|&j| 0.5 * mu * signs[j]));
        let Some(sol) = g.lu().solve(&rhs) else { continue };
        if support.iter().zip(sol.iter()).any(|(&j, v)| v * signs[j] <= 0.0) {
            continue;
        }
        let mut s = DVector::zeros(k);
        for (i, &j) in support.iter().enumerate() {
            s[j] = sol[i];
        }
        let obj = lasso_objective(q, t, mu, &s);
        if obj < best.0 {
            best = (obj, s);
        }
    }
    best.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kkt_certificate_holds(seed in any::<u64>(), d in 1usize..=12, k in 1usize..=8, mu in 0.0f64..2.0) {
        let (q, t) = instance(seed, d, k);
        let fit = lasso(&q, &t, mu, &LassoOptions::default()).unwrap();
        prop_assert!(fit.converged);
        let s = &*fit.code;
        let g = (q.transpose() * (&q * s - &t)) * 2.0;
        for j in 0..k {
            if s[j] != 0.0 {
                prop_assert!((g[j] + mu * s[j].signum()).abs() <= 1e-6);
            } else {
                prop_assert!(g[j].abs() <= mu + 1e-6);
            }
        }
        prop_assert!(kkt_residual(&q, &t, mu, s) <= 1e-6);
    }

    #[test]
    fn objective_never_increases(seed in any::<u64>(), d in 2usize..=10, k in 1usize..=8, mu in 0.01f64..1.0) {
        let (q, t) = instance(seed, d, k);
        let opts = LassoOptions { record_objective: true, ..LassoOptions::default() };
        let fit = lasso(&q, &t, mu, &opts).unwrap();
        let mut last = t.norm_squared();
        for v in &fit.objective_trace {
            prop_assert!(*v <= last + 1e-12 * last.max(1.0));
            last = *v;
        }
    }

    #[test]
    fn large_mu_gives_zero(seed in any::<u64>(), d in 1usize..=10, k in 1usize..=8, extra in 0.0f64..3.0) {
        let (q, t) = instance(seed, d, k);
        let mu = 2.0 * (q.transpose() * &t).amax() * (1.0 + extra);
        let fit = lasso(&q, &t, mu, &LassoOptions::default()).unwrap();
        prop_assert!(fit.code.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn whiten_round_trip(seed in any::<u64>(), n in 1usize..=10, jitter in 0.0f64..0.1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(n, n + 2, &mut rng);
        let weight = &a * a.transpose();
        let w = whiten(&WeightedQuadratic::with_jitter(weight.clone(), jitter)).unwrap();
        let mut target = weight.clone();
        for i in 0..n {
            target[(i, i)] += jitter;
        }
        prop_assert!((w.transpose() * &w - target).norm() <= 1e-10 * weight.norm());
    }

    #[test]
    fn coherence_is_bounded_and_scale_free(seed in any::<u64>(), d in 2usize..=10, k in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = gaussian(d, k, &mut rng);
        let c = mutual_coherence(&q).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
        let mut scaled = q.clone();
        for j in 0..k {
            let f = 0.1 + (j as f64) * 1.7;
            scaled.column_mut(j).scale_mut(f);
        }
        prop_assert!((mutual_coherence(&scaled).unwrap() - c).abs() < 1e-12);
    }

    #[test]
    fn weighted_lasso_matches_explicit_whitening(seed in any::<u64>(), d in 1usize..=8, k in 1usize..=6, mu in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kmat = gaussian(d, k, &mut rng);
        let beta = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let a = gaussian(d, d, &mut rng);
        let weight = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
        let wq = WeightedQuadratic::new(weight.clone());
        let fit = weighted_lasso(&kmat, &beta, &wq, mu, &LassoOptions::default()).unwrap();
        // Same problem through a symmetric square root of the weight.
        let eig = weight.symmetric_eigen();
        let root = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
            * eig.eigenvectors.transpose();
        let other = lasso(&(&root * &kmat), &(&root * &beta), mu, &LassoOptions::default()).unwrap();
        let scale = other.code.norm().max(1.0);
        prop_assert!((&*fit.code - &*other.code).norm() <= 1e-5 * scale);
    }
}

#[test]
fn lasso_agrees_with_exhaustive_search() {
    let opts = LassoOptions { tol: 1e-12, ..LassoOptions::default() };
    for seed in 0..200u64 {
        let k = 1 + (seed % 4) as usize;
        let d = k + 1 + (seed % 5) as usize;
        let (q, t) = instance(seed, d, k);
        let mu = 0.05 + (seed % 7) as f64 * 0.3;
        let fit = lasso(&q, &t, mu, &opts).unwrap();
        let oracle = brute_force(&q, &t, mu);
        assert!((&*fit.code - &oracle).norm() <= 1e-8, "seed {seed}");
    }
}

#[test]
fn stacking_lowers_mean_coherence() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut top, mut stacked) = (0.0, 0.0);
    for _ in 0..200 {
        let l = gaussian(10, 5, &mut rng);
        let d = gaussian(10, 5, &mut rng);
        let mut s = DMatrix::zeros(20, 5);
        s.rows_mut(0, 10).copy_from(&l);
        s.rows_mut(10, 10).copy_from(&d);
        top += mutual_coherence(&l).unwrap();
        stacked += mutual_coherence(&s).unwrap();
    }
    assert!(stacked < top, "{stacked} vs {top}");
}
