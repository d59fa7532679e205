use isorobust::gaussian::{sample_std_gaussian, RngStream};
use isorobust::genmodel::{ConditionalModel, Generator, SyntheticSpec};
use isorobust::linalg::{dot, Matrix};
use isorobust::nn::{Activation, LayerStack};
use isorobust::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

const ACTIVATIONS: [Activation; 4] = [Activation::Identity, Activation::Relu, Activation::Tanh, Activation::Sigmoid];

fn random_stack(sizes: &[usize], act: Activation, seed: u64) -> LayerStack {
    let mut rng = RngStream::new(seed, 1).rng();
    let mut net = LayerStack::random(sizes, act, act, &mut rng).unwrap();
    for layer in net.layers_mut() {
        for b in &mut layer.bias {
            *b = 0.3 * sample_std_gaussian(1, &mut rng).unwrap()[0];
        }
    }
    net
}

/// Relative error between the reverse-mode directional derivative `uᵀ J v`
/// and its central-difference estimate.
fn vjp_fd_error(g: &Generator, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 2).rng();
    let z = sample_std_gaussian(g.latent_dim(), &mut rng).unwrap();
    let v = sample_std_gaussian(g.latent_dim(), &mut rng).unwrap();
    let u = sample_std_gaussian(g.output_dim(), &mut rng).unwrap();
    let h = 1e-4;
    let shifted = |s: f64| -> Vec<f64> { z.iter().zip(&v).map(|(z, v)| z + s * h * v).collect() };
    let plus = g.forward(&shifted(1.0)).unwrap();
    let minus = g.forward(&shifted(-1.0)).unwrap();
    let fd: f64 = u.iter().zip(plus.iter().zip(&minus)).map(|(u, (p, m))| u * (p - m) / (2.0 * h)).sum();
    let analytic = dot(&g.vjp_latent(&z, &u).unwrap(), &v);
    (fd - analytic).abs() / analytic.abs().max(1e-6)
}

#[test]
fn vjp_matches_finite_differences_across_architectures() {
    for act in ACTIVATIONS {
        for depth in 1..=3 {
            let mut sizes = vec![3];
            sizes.extend(std::iter::repeat(6).take(depth - 1));
            sizes.push(4);
            for seed in 0..5 {
                let g = Generator::Layered(random_stack(&sizes, act, seed));
                let err = vjp_fd_error(&g, seed + 100);
                assert!(err <= 1e-4, "{} depth {depth} seed {seed}: {err}", act.name());
            }
        }
    }
}

#[test]
fn linear_vjp_is_transpose_product() {
    let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.0, 4.0]]).unwrap();
    let g = Generator::linear(a, vec![1.0, 1.0, 1.0]).unwrap();
    let u = [0.5, -1.0, 2.0];
    assert_eq!(g.vjp_latent(&[0.3, 0.7], &u).unwrap(), vec![0.5 + 3.0, 1.0 - 0.5 + 8.0]);
    assert_eq!(g.vjp_latent(&[0.3, 0.7], &[0.0; 3]).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn vjp_rejects_shape_mismatch() {
    let g = Generator::Layered(random_stack(&[2, 3], Activation::Tanh, 0));
    assert!(matches!(g.vjp_latent(&[0.0, 0.0], &[1.0]), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(g.forward(&[0.0]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn balanced_priors_sample_evenly() {
    let model = SyntheticSpec::ShiftedIdentity { c: 1.0, d: 2 }.build().unwrap();
    let samples = model.sample_many(100_000, RngStream::new(5, 0)).unwrap();
    let zeros = samples.iter().filter(|s| s.label == 0).count() as f64 / 1e5;
    assert!((zeros - 0.5).abs() <= 0.005, "{zeros}");
}

#[test]
fn single_class_model_always_labels_zero() {
    let model = SyntheticSpec::ScaledIdentity { c: 2.0, d: 3 }.build().unwrap();
    let samples = model.sample_many(1000, RngStream::new(6, 0)).unwrap();
    assert!(samples.iter().all(|s| s.label == 0));
}

#[test]
fn samples_regenerate_bit_exactly() {
    for spec in [
        "shifted-identity:c=1.5,d=3",
        "linear-random:d=3,n=5,k=3,seed=2",
        "mlp-random:layers=2-8-4,act=relu,k=2,seed=1",
    ] {
        let model: ConditionalModel = spec.parse::<SyntheticSpec>().unwrap().build().unwrap();
        for s in model.sample_many(200, RngStream::new(7, 0)).unwrap() {
            assert_eq!(model.generator(s.label).forward(&s.z).unwrap(), s.x, "{spec}");
        }
    }
}

#[test]
fn shifted_identity_pushforward_moments() {
    let c = 1.0;
    let model = SyntheticSpec::ShiftedIdentity { c, d: 2 }.build().unwrap();
    let mut rng = RngStream::new(8, 0).rng();
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|_| model.sample_class(1, &mut rng).unwrap().x[0]).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - c).abs() <= 3.0 / (n as f64).sqrt(), "{mean}");
    // variance of the sample variance is 2/n for a unit Gaussian
    assert!((var - 1.0).abs() <= 3.0 * (2.0 / n as f64).sqrt(), "{var}");
}

#[test]
fn scaled_identity_doubles() {
    let model = SyntheticSpec::ScaledIdentity { c: 2.0, d: 3 }.build().unwrap();
    assert_eq!(model.generator(0).forward(&[1.0, -0.5, 3.0]).unwrap(), vec![2.0, -1.0, 6.0]);
}

#[test]
fn shifted_identity_generators_differ_only_in_offset_sign() {
    let model = SyntheticSpec::ShiftedIdentity { c: 1.0, d: 2 }.build().unwrap();
    let z = [0.25, -0.75];
    assert_eq!(model.generator(0).forward(&z).unwrap(), vec![-0.75, -0.75]);
    assert_eq!(model.generator(1).forward(&z).unwrap(), vec![1.25, -0.75]);
}

#[test]
fn linear_jacobian_norm_matches_svd() {
    let model = SyntheticSpec::LinearRandom { d: 4, n: 6, k: 3, seed: 9 }.build().unwrap();
    for g in model.generators() {
        let Generator::Linear { a, .. } = g else { panic!("linear family") };
        let sigma = DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice()).singular_values().max();
        // power iteration on AᵀA through the generator's own vjp
        let mut v = vec![1.0; 4];
        for _ in 0..500 {
            let av = g.displacement(&[0.0; 4], &v).unwrap();
            let w = g.vjp_latent(&[0.0; 4], &av).unwrap();
            let n = dot(&w, &w).sqrt();
            v = w.iter().map(|x| x / n).collect();
        }
        let av = g.displacement(&[0.0; 4], &v).unwrap();
        assert!((dot(&av, &av).sqrt() - sigma).abs() <= 1e-9 * sigma);
    }
}

#[test]
fn every_family_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    for (i, spec) in [
        "shifted-identity:c=1,d=2",
        "scaled-identity:c=2,d=4",
        "linear-random:d=3,n=5,k=4,seed=7",
        "mlp-random:layers=3-16-16-5,act=sigmoid,k=2,seed=3",
    ]
    .iter()
    .enumerate()
    {
        let model = spec.parse::<SyntheticSpec>().unwrap().build().unwrap();
        let path = dir.path().join(format!("m{i}.irgm"));
        model.save(&path).unwrap();
        let back = ConditionalModel::load(&path).unwrap();
        assert_eq!(back.to_bytes(), model.to_bytes(), "{spec}");
        assert_eq!(back, model);
    }
}

#[test]
fn every_truncation_is_rejected() {
    let bytes = SyntheticSpec::MlpRandom {
        layers: vec![2, 4, 3],
        activation: Activation::Tanh,
        k: 2,
        seed: 0,
    }
    .build()
    .unwrap()
    .to_bytes();
    for cut in 0..bytes.len() {
        assert!(matches!(ConditionalModel::from_bytes(&bytes[..cut]), Err(Error::Parse { .. })), "cut {cut}");
    }
}

#[test]
fn priors_summing_to_point_nine_are_rejected() {
    let model = ConditionalModel::new(
        vec![
            Generator::linear(Matrix::identity(1), vec![0.0]).unwrap(),
            Generator::linear(Matrix::identity(1), vec![1.0]).unwrap(),
        ],
        vec![0.5, 0.5],
    )
    .unwrap();
    let mut bytes = model.to_bytes();
    // header: magic(5) version(2) d(8) n(8) K(8), then the priors
    bytes[31..39].copy_from_slice(&0.4f64.to_le_bytes());
    let err = ConditionalModel::from_bytes(&bytes).unwrap_err();
    assert!(err.to_string().contains("priors do not sum to 1"), "{err}");
}

proptest! {
    #[test]
    fn identity_stack_collapses_to_one_affine(seed in any::<u64>()) {
        let net = random_stack(&[3, 5, 2], Activation::Identity, seed);
        let [l1, l2] = net.layers() else { unreachable!() };
        let w = l2.weight.matmul(&l1.weight).unwrap();
        let b: Vec<f64> = l2.weight.matvec(&l1.bias).iter().zip(&l2.bias).map(|(x, y)| x + y).collect();
        let collapsed = Generator::linear(w, b).unwrap();
        let layered = Generator::Layered(net);
        let z = sample_std_gaussian(3, &mut RngStream::new(seed, 9).rng()).unwrap();
        let (a, c) = (layered.forward(&z).unwrap(), collapsed.forward(&z).unwrap());
        for (a, c) in a.iter().zip(&c) {
            prop_assert!((a - c).abs() <= 1e-12 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn spec_strings_round_trip(c in 0.1f64..5.0, d in 1usize..6, seed in 0u64..1000) {
        for spec in [
            SyntheticSpec::ShiftedIdentity { c, d },
            SyntheticSpec::LinearRandom { d, n: d + 1, k: 3, seed },
        ] {
            prop_assert_eq!(spec.to_string().parse::<SyntheticSpec>().unwrap(), spec);
        }
    }

    #[test]
    fn model_construction_is_deterministic(seed in 0u64..1000) {
        let spec = SyntheticSpec::MlpRandom { layers: vec![2, 5, 3], activation: Activation::Relu, k: 2, seed };
        prop_assert_eq!(spec.build().unwrap(), spec.build().unwrap());
    }
}
