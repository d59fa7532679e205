use isorobust::attacks::PgdConfig;
use isorobust::classify::*;
use isorobust::gaussian::{sample_std_gaussian, RngStream};
use isorobust::genmodel::{ConditionalModel, Generator, SyntheticSpec};
use isorobust::linalg::Matrix;
use isorobust::nn::{Activation, LayerStack};
use isorobust::risk::{estimate_adv_risk, estimate_risk};
use isorobust::Error;
use proptest::prelude::*;

fn random_net(sizes: &[usize], act: Activation, seed: u64) -> LayerStack {
    let mut rng = RngStream::new(seed, 3).rng();
    let mut net = LayerStack::random(sizes, act, Activation::Identity, &mut rng).unwrap();
    for layer in net.layers_mut() {
        for b in &mut layer.bias {
            *b = 0.2 * sample_std_gaussian(1, &mut rng).unwrap()[0];
        }
    }
    net
}

fn grad_fd_error(f: &Classifier, x: &[f64], target: usize, kind: LossKind, v: &[f64]) -> f64 {
    let h = 1e-4;
    let at = |s: f64| -> Vec<f64> { x.iter().zip(v).map(|(x, v)| x + s * h * v).collect() };
    let (lp, _, _) = f.loss_and_grad(&at(1.0), target, kind).unwrap();
    let (lm, _, _) = f.loss_and_grad(&at(-1.0), target, kind).unwrap();
    let fd = (lp - lm) / (2.0 * h);
    let g = f.grad_input(x, target, kind).unwrap();
    let analytic: f64 = g.iter().zip(v).map(|(g, v)| g * v).sum();
    (fd - analytic).abs() / analytic.abs().max(1e-6)
}

#[test]
fn input_gradients_match_finite_differences() {
    for act in [Activation::Identity, Activation::Relu, Activation::Tanh, Activation::Sigmoid] {
        for hidden in [vec![], vec![7], vec![6, 5]] {
            let mut sizes = vec![4];
            sizes.extend(&hidden);
            sizes.push(3);
            for seed in 0..4 {
                let f = Classifier::Layered(random_net(&sizes, act, seed));
                let mut rng = RngStream::new(seed, 4).rng();
                let x = sample_std_gaussian(4, &mut rng).unwrap();
                let v = sample_std_gaussian(4, &mut rng).unwrap();
                for kind in [LossKind::CrossEntropy, LossKind::CwMargin] {
                    let target = seed as usize % 3;
                    let err = grad_fd_error(&f, &x, target, kind, &v);
                    assert!(err <= 1e-4, "{} {hidden:?} {kind:?}: {err}", act.name());
                }
            }
        }
    }
}

#[test]
fn halfspace_margin_gradient_is_collinear_with_normal() {
    let f = Classifier::halfspace(vec![2.0, -1.0, 0.5], 0.3).unwrap();
    for target in 0..2 {
        let g = f.grad_input(&[0.1, 0.4, -2.0], target, LossKind::CwMargin).unwrap();
        let sign = if target == 0 { 1.0 } else { -1.0 };
        assert_eq!(g, vec![2.0 * sign, -sign, 0.5 * sign]);
    }
    let err = grad_fd_error(&f, &[0.1, 0.4, -2.0], 1, LossKind::CrossEntropy, &[1.0, 1.0, 1.0]);
    assert!(err <= 1e-4);
}

#[test]
fn symmetric_net_has_symmetric_gradient_at_zero() {
    // every input column identical, so swapping inputs leaves the net unchanged
    let w1 = Matrix::from_rows(&[vec![0.7, 0.7, 0.7], vec![-0.4, -0.4, -0.4]]).unwrap();
    let w2 = Matrix::from_rows(&[vec![1.0, 0.5], vec![-0.3, 2.0]]).unwrap();
    let net = LayerStack::new(vec![
        isorobust::nn::Dense::new(w1, vec![0.1, -0.2], Activation::Tanh).unwrap(),
        isorobust::nn::Dense::new(w2, vec![0.0, 0.0], Activation::Identity).unwrap(),
    ])
    .unwrap();
    let g = Classifier::Layered(net).grad_input(&[0.0; 3], 0, LossKind::CrossEntropy).unwrap();
    assert_eq!(g[0], g[1]);
    assert_eq!(g[1], g[2]);
}

#[test]
fn shape_mismatch_is_rejected() {
    let f = Classifier::halfspace(vec![1.0, 0.0], 0.0).unwrap();
    assert!(matches!(f.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
    assert!(Classifier::halfspace(vec![0.0, 0.0], 0.0).is_err());
}

#[test]
fn erm_on_shifted_identity_nears_bayes_risk() {
    let model = SyntheticSpec::ShiftedIdentity { c: 1.0, d: 2 }.build().unwrap();
    let trained = train(&Architecture::linear(), &model, &TrainConfig::default()).unwrap();
    let risk = estimate_risk(&trained.classifier, &model, 20_000, RngStream::new(77, 0)).unwrap();
    assert!(risk.value <= 0.1787, "{}", risk.value);
}

#[test]
fn zero_epochs_returns_the_initial_network() {
    let model = SyntheticSpec::ShiftedIdentity { c: 1.0, d: 2 }.build().unwrap();
    let arch = Architecture {
        hidden: vec![5],
        activation: Activation::Relu,
    };
    let cfg = TrainConfig { epochs: 0, seed: 4, ..Default::default() };
    let trained = train(&arch, &model, &cfg).unwrap();
    assert_eq!(trained.classifier, Classifier::Layered(arch.init(2, 2, 4).unwrap()));
}

#[test]
fn full_batch_erm_loss_never_increases() {
    let model = SyntheticSpec::LinearRandom { d: 3, n: 4, k: 3, seed: 5 }.build().unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.05,
        epochs: 60,
        batch_size: 300,
        train_size: 300,
        method: TrainMethod::Erm,
        seed: 1,
    };
    let arch = Architecture {
        hidden: vec![8],
        activation: Activation::Tanh,
    };
    let losses = train(&arch, &model, &cfg).unwrap().epoch_losses;
    for pair in losses.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-12, "{losses:?}");
    }
    assert!(losses.last().unwrap() < &losses[0]);
}

#[test]
fn training_is_deterministic_in_seed() {
    let model = SyntheticSpec::ShiftedIdentity { c: 1.0, d: 2 }.build().unwrap();
    let cfg = TrainConfig { epochs: 3, train_size: 200, seed: 9, ..Default::default() };
    let a = train(&Architecture::linear(), &model, &cfg).unwrap();
    let b = train(&Architecture::linear(), &model, &cfg).unwrap();
    assert_eq!(a.classifier.to_bytes(), b.classifier.to_bytes());
    assert_eq!(a.epoch_losses, b.epoch_losses);
}

/// A robust feature `x₁ = ±1 + z₁` next to a highly predictive but fragile
/// one `x₂ = ±0.2 + 0.05 z₂`.
fn fragile_feature_model() -> ConditionalModel {
    let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.05]]).unwrap();
    ConditionalModel::uniform(vec![
        Generator::linear(a.clone(), vec![-1.0, -0.2]).unwrap(),
        Generator::linear(a, vec![1.0, 0.2]).unwrap(),
    ])
    .unwrap()
}

#[test]
fn adversarial_training_lowers_adversarial_risk() {
    let model = fragile_feature_model();
    let eps = 0.3;
    let mut wins = 0;
    for seed in 0..5 {
        let base = TrainConfig {
            learning_rate: 0.2,
            epochs: 15,
            batch_size: 32,
            train_size: 1000,
            method: TrainMethod::Erm,
            seed,
        };
        let adv = TrainConfig {
            method: TrainMethod::AdvTrain { eps, step: 0.1, steps: 10 },
            ..base
        };
        let erm = train(&Architecture::linear(), &model, &base).unwrap().classifier;
        let robust = train(&Architecture::linear(), &model, &adv).unwrap().classifier;
        let pgd = PgdConfig::for_eps(eps);
        let stream = RngStream::new(100 + seed, 0);
        let r_erm = estimate_adv_risk(&erm, &model, &pgd, 2000, stream).unwrap().value;
        let r_adv = estimate_adv_risk(&robust, &model, &pgd, 2000, stream).unwrap().value;
        wins += (r_adv <= r_erm) as usize;
    }
    assert!(wins >= 4, "adversarial training won {wins}/5");
}

#[test]
fn trained_classifiers_round_trip_bit_exactly() {
    let model = SyntheticSpec::ShiftedIdentity { c: 1.0, d: 3 }.build().unwrap();
    let arch = Architecture {
        hidden: vec![4, 4],
        activation: Activation::Sigmoid,
    };
    let cfg = TrainConfig { epochs: 2, train_size: 100, ..Default::default() };
    let f = train(&arch, &model, &cfg).unwrap().classifier;
    let dir = tempfile::tempdir().unwrap();
    for (i, c) in [f, Classifier::halfspace(vec![1.0, -2.0, 0.1], 0.7).unwrap(), Classifier::constant(1, 2, 3).unwrap()]
        .into_iter()
        .enumerate()
    {
        let path = dir.path().join(format!("c{i}.ircf"));
        c.save(&path).unwrap();
        let back = Classifier::load(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), c.to_bytes());
    }
}

#[test]
fn corrupted_classifier_files_are_parse_errors() {
    let bytes = Classifier::halfspace(vec![1.0, 2.0], 0.5).unwrap().to_bytes();
    for cut in 0..bytes.len() {
        assert!(matches!(Classifier::from_bytes(&bytes[..cut]), Err(Error::Parse { .. })));
    }
    let mut wrong = bytes.clone();
    wrong[..5].copy_from_slice(b"IRGM1");
    assert!(matches!(Classifier::from_bytes(&wrong), Err(Error::Parse { .. })));
}

proptest! {
    #[test]
    fn argmax_ignores_logit_offsets(logits in proptest::collection::vec(-50.0f64..50.0, 1..8), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = logits.iter().map(|s| s + c).collect();
        // the shift must not merge distinct values through rounding
        let distinct = |v: &[f64]| v.iter().enumerate().all(|(i, a)| v[..i].iter().all(|b| a != b));
        prop_assume!(distinct(&logits) && distinct(&shifted));
        prop_assert_eq!(argmax(&logits), argmax(&shifted));
    }

    #[test]
    fn layered_prediction_is_argmax_of_logits(seed in any::<u64>()) {
        let f = Classifier::Layered(random_net(&[3, 5, 4], Activation::Relu, seed));
        let x = sample_std_gaussian(3, &mut RngStream::new(seed, 5).rng()).unwrap();
        prop_assert_eq!(f.predict(&x).unwrap(), argmax(&f.logits(&x).unwrap()));
    }
}
