use isorobust::attacks::*;
use isorobust::classify::{Classifier, LossKind};
use isorobust::gaussian::{sample_std_gaussian, RngStream};
use isorobust::genmodel::{ConditionalModel, Generator, LabeledSample};
use isorobust::linalg::{distance, dot, Matrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rayon::prelude::*;

/// Minimal on-manifold distance to the decision boundary of a halfspace for
/// the affine generator `x = A z + b`: `m / ‖P w‖` with `P` the projector onto
/// the column space of `A`, i.e. `m / √(wᵀ A (AᵀA)⁻¹ Aᵀ w)`.
fn qp_oracle(a: &Matrix, w: &[f64], margin: f64) -> f64 {
    let a = DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice());
    let w = DVector::from_column_slice(w);
    let atw = a.transpose() * &w;
    let gram = a.transpose() * &a;
    let solved = gram.lu().solve(&atw).expect("injective generator");
    margin / atw.dot(&solved).sqrt()
}

fn injective_model() -> (Matrix, ConditionalModel) {
    let a = Matrix::from_rows(&[vec![1.0, 0.3], vec![-0.4, 0.8], vec![0.5, 0.5]]).unwrap();
    let model = ConditionalModel::uniform(vec![Generator::linear(a.clone(), vec![0.6, 0.2, 0.9]).unwrap()]).unwrap();
    (a, model)
}

#[test]
fn pgd_matches_margin_oracle_on_many_points() {
    let w = [0.6, -0.8, 0.0];
    let f = Classifier::halfspace(w.to_vec(), 0.25).unwrap();
    let mut rng = RngStream::new(31, 0).rng();
    for _ in 0..300 {
        let x: Vec<f64> = sample_std_gaussian(3, &mut rng).unwrap().iter().map(|v| 1.5 * v).collect();
        let score = dot(&w, &x) + 0.25;
        let label = if score >= 0.0 { 0 } else { 1 };
        let margin = score.abs();
        for eps in [0.5, 1.0, 2.0] {
            let cfg = PgdConfig::for_eps(eps);
            let out = pgd_l2(&f, &x, label, &cfg).unwrap();
            assert!(out.verify(&f, &x, label, eps, None).unwrap());
            if margin < eps - 1e-9 {
                assert!(out.success, "margin {margin} eps {eps}");
                assert!(out.perturbation <= margin + cfg.step_size + 1e-9);
                assert!(out.perturbation >= margin - 1e-9);
            } else if margin > eps {
                assert!(!out.success, "margin {margin} eps {eps}");
            }
        }
    }
}

#[test]
fn pgd_flags_nonfinite_gradients() {
    let f = Classifier::halfspace(vec![1.0, 0.0], 0.0).unwrap();
    assert!(pgd_l2(&f, &[f64::NAN, 0.0], 0, &PgdConfig::for_eps(1.0)).is_err());
    let mut bad = PgdConfig::for_eps(1.0);
    bad.eps = 0.0;
    assert!(pgd_l2(&f, &[1.0, 0.0], 0, &bad).is_err());
}

#[test]
fn recorded_z_init_regenerates_the_sample() {
    let (_, model) = injective_model();
    let s = model.sample_many(1, RngStream::new(2, 0)).unwrap().remove(0);
    let (z, residual) = manifold_init(model.generator(0), &s.x, InitStrategy::RecordedZ, Some(&s.z), RngStream::new(0, 0)).unwrap();
    assert_eq!(z, s.z);
    assert_eq!(residual, 0.0);
    assert!(manifold_init(model.generator(0), &s.x, InitStrategy::RecordedZ, None, RngStream::new(0, 0)).is_err());
}

#[test]
fn optimized_init_solves_least_squares() {
    let (a, model) = injective_model();
    let g = model.generator(0);
    let x = [2.0, -1.0, 0.5];
    // normal equations: z = (AᵀA)⁻¹ Aᵀ (x − b)
    let am = DMatrix::from_row_slice(3, 2, a.as_slice());
    let rhs = DVector::from_column_slice(&[2.0 - 0.6, -1.0 - 0.2, 0.5 - 0.9]);
    let z_star = (am.transpose() * &am).lu().solve(&(am.transpose() * &rhs)).unwrap();
    let oracle = (&am * &z_star - &rhs).norm();
    let mut residuals = Vec::new();
    for start in 0..2 {
        let (_, r) = manifold_init(g, &x, InitStrategy::Optimize, None, RngStream::new(start, 7)).unwrap();
        assert!((r - oracle).abs() <= 1e-6, "{r} vs {oracle}");
        residuals.push(r);
    }
    assert!((residuals[0] - residuals[1]).abs() <= 1e-6);
}

fn qp_agreement(n: usize, eps: f64) -> (usize, usize, f64) {
    let (a, model) = injective_model();
    let w = [1.0, 0.5, -0.3];
    let f = Classifier::halfspace(w.to_vec(), -1.0).unwrap();
    let samples: Vec<LabeledSample> = model
        .sample_many(4 * n, RngStream::new(41, 0))
        .unwrap()
        .into_iter()
        .filter(|s| f.predict(&s.x).unwrap() == 0)
        .take(n)
        .collect();
    assert_eq!(samples.len(), n);
    let cfg = ManifoldAttackConfig { eps, ..Default::default() };
    let results: Vec<(bool, bool, f64)> = samples
        .par_iter()
        .map(|s| {
            let margin = dot(&w, &s.x) - 1.0;
            let need = qp_oracle(&a, &w, margin);
            let out = manifold_attack(&f, &model, s, &cfg).unwrap();
            assert!(out.verify(&f, &s.x, 0, eps, Some(model.generator(0))).unwrap());
            // 5% relative, with an absolute floor for margins at the scale of one inner step
            let rel = if out.success { (out.perturbation - need).abs() / need.max(0.02) } else { 0.0 };
            (need <= eps, out.success, rel)
        })
        .collect();
    let oracle_hits = results.iter().filter(|r| r.0).count();
    let disagree = results.iter().filter(|r| r.0 != r.1).count();
    let worst = results.iter().map(|r| r.2).fold(0.0, f64::max);
    (oracle_hits, disagree, worst)
}

#[test]
fn manifold_attack_matches_constrained_qp_oracle() {
    let n = 100;
    let (hits, disagree, worst) = qp_agreement(n, 1.0);
    assert!(hits > 10 && hits < n - 10, "oracle successes {hits}");
    assert!(disagree as f64 <= 0.02 * n as f64, "{disagree} disagreements");
    assert!(worst <= 0.05, "perturbation off by {worst}");
}

#[test]
fn manifold_success_is_monotone_in_eps() {
    let (_, model) = injective_model();
    let f = Classifier::halfspace(vec![1.0, 0.5, -0.3], -1.0).unwrap();
    let samples = model.sample_many(30, RngStream::new(43, 0)).unwrap();
    for s in samples.iter().filter(|s| f.predict(&s.x).unwrap() == 0) {
        let mut prev = false;
        for eps in [0.25, 0.5, 1.0, 2.0] {
            let out = manifold_attack(&f, &model, s, &ManifoldAttackConfig { eps, ..Default::default() }).unwrap();
            assert!(out.success || !prev, "success lost when eps grew to {eps}");
            prev = out.success;
        }
    }
}

#[test]
fn identity_manifold_agrees_with_pgd_away_from_the_boundary() {
    let model = ConditionalModel::uniform(vec![Generator::linear(Matrix::identity(2), vec![0.0, 0.0]).unwrap()]).unwrap();
    let f = Classifier::halfspace(vec![0.8, 0.6], 0.0).unwrap();
    let eps = 1.0;
    let pgd = PgdConfig::for_eps(eps);
    let cfg = ManifoldAttackConfig { eps, ..Default::default() };
    let samples = model.sample_many(60, RngStream::new(44, 0)).unwrap();
    for s in samples.iter().filter(|s| f.predict(&s.x).unwrap() == 0) {
        let margin = dot(&[0.8, 0.6], &s.x);
        if (margin - eps).abs() <= pgd.step_size {
            continue;
        }
        let a = pgd_l2(&f, &s.x, 0, &pgd).unwrap().success;
        let b = manifold_attack(&f, &model, s, &cfg).unwrap().success;
        assert_eq!(a, b, "margin {margin}");
    }
}

#[test]
fn cross_entropy_lagrangian_also_finds_boundary_crossings() {
    let model = ConditionalModel::uniform(vec![Generator::linear(Matrix::identity(2), vec![0.0, 0.0]).unwrap()]).unwrap();
    let f = Classifier::halfspace(vec![1.0, 0.0], 0.0).unwrap();
    let s = LabeledSample {
        x: vec![0.4, 0.0],
        label: 0,
        z: vec![0.4, 0.0],
    };
    let cfg = ManifoldAttackConfig {
        eps: 1.0,
        loss: LossKind::CrossEntropy,
        ..Default::default()
    };
    let out = manifold_attack(&f, &model, &s, &cfg).unwrap();
    assert!(out.success);
    assert!(out.verify(&f, &s.x, 0, 1.0, Some(model.generator(0))).unwrap());
    assert!(distance(&out.x_adv, &s.x) <= 1.0);
}

#[test]
fn adam_optimizer_option_runs() {
    let model = ConditionalModel::uniform(vec![Generator::linear(Matrix::identity(2), vec![0.0, 0.0]).unwrap()]).unwrap();
    let f = Classifier::halfspace(vec![1.0, 0.0], 0.0).unwrap();
    let s = LabeledSample {
        x: vec![0.5, 0.2],
        label: 0,
        z: vec![0.5, 0.2],
    };
    let cfg = ManifoldAttackConfig {
        eps: 1.0,
        optimizer: LatentOptimizer::Adam,
        ..Default::default()
    };
    let out = manifold_attack(&f, &model, &s, &cfg).unwrap();
    assert!(out.success);
    assert!(out.perturbation <= 0.5 * 1.05, "{}", out.perturbation);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn pgd_success_implies_invariants(seed in any::<u64>(), eps in 0.05f64..3.0) {
        let f = Classifier::halfspace(vec![1.0, -1.0], 0.1).unwrap();
        let x = sample_std_gaussian(2, &mut RngStream::new(seed, 0).rng()).unwrap();
        let label = f.predict(&x).unwrap();
        let out = pgd_l2(&f, &x, label, &PgdConfig { random_starts: 2, seed, ..PgdConfig::for_eps(eps) }).unwrap();
        prop_assert!(out.perturbation <= eps);
        prop_assert!(out.verify(&f, &x, label, eps, None).unwrap());
    }
}

#[test]
fn stopping_within_budget_keeps_the_verdict() {
    let (_, model) = injective_model();
    let f = Classifier::halfspace(vec![1.0, 0.5, -0.3], -1.0).unwrap();
    for s in model.sample_many(40, RngStream::new(45, 0)).unwrap() {
        if f.predict(&s.x).unwrap() != 0 {
            continue;
        }
        let full = ManifoldAttackConfig { eps: 0.8, ..Default::default() };
        let quick = ManifoldAttackConfig { stop_within_budget: true, ..full };
        let a = manifold_attack(&f, &model, &s, &full).unwrap();
        let b = manifold_attack(&f, &model, &s, &quick).unwrap();
        assert_eq!(a.success, b.success);
        assert!(b.iterations <= a.iterations);
    }
}
