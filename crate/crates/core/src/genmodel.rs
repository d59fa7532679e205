//! Generators `g: R^d -> R^n`, conditional models `{(g_i, p_i)}`, synthetic
//! model families and the `IRGM1` model file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::container::{Reader, Writer};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{sample_std_gaussian, RngStream};
use crate::linalg::{self, Matrix};
use crate::nn::{Activation, LayerStack};

pub const MODEL_MAGIC: &[u8; 5] = b"IRGM1";

/// Tolerance on `|Σ p_i − 1|`.
pub const PRIOR_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// `g(z) = A z + b`
    Linear { a: Matrix, b: Vec<f64> },
    Layered(LayerStack),
}

impl Generator {
    pub fn linear(a: Matrix, b: Vec<f64>) -> Result<Self> {
        check_dim("generator offset", a.rows(), b.len())?;
        if a.rows() == 0 || a.cols() == 0 {
            return Err(Error::param("generator", "empty matrix"));
        }
        if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear generator weights".into()));
        }
        Ok(Generator::Linear { a, b })
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Generator::Linear { a, .. } => a.cols(),
            Generator::Layered(net) => net.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Generator::Linear { a, .. } => a.rows(),
            Generator::Layered(net) => net.output_dim(),
        }
    }

    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim("latent vector", self.latent_dim(), z.len())?;
        let x = match self {
            Generator::Linear { a, b } => a.matvec(z).into_iter().zip(b).map(|(v, c)| v + c).collect(),
            Generator::Layered(net) => net.forward(z)?,
        };
        ensure_finite(x, "generator output")
    }

    /// `Jᵀ u` where `J` is the Jacobian of [`Generator::forward`] at `z`.
    pub fn vjp_latent(&self, z: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_vjp(z, u)?.1)
    }

    /// Forward output and `Jᵀ u` in one pass.
    pub fn forward_vjp(&self, z: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim("latent vector", self.latent_dim(), z.len())?;
        check_dim("image cotangent", self.output_dim(), u.len())?;
        let (x, g) = match self {
            Generator::Linear { .. } => {
                let x = self.forward(z)?;
                let Generator::Linear { a, .. } = self else { unreachable!() };
                (x, a.matvec_t(u))
            }
            Generator::Layered(net) => net.forward_vjp(z, u)?,
        };
        let x = ensure_finite(x, "generator output")?;
        let g = ensure_finite(g, "latent gradient")?;
        Ok((x, g))
    }

    /// Forward output and `Jᵀ u`, where `u` is computed from the output.
    pub fn forward_vjp_with<F>(&self, z: &[f64], cotangent: F) -> Result<(Vec<f64>, Vec<f64>)>
    where
        F: FnOnce(&[f64]) -> Result<Vec<f64>>,
    {
        check_dim("latent vector", self.latent_dim(), z.len())?;
        let (x, g) = match self {
            Generator::Linear { a, .. } => {
                let x = self.forward(z)?;
                let u = cotangent(&x)?;
                check_dim("image cotangent", self.output_dim(), u.len())?;
                (x, a.matvec_t(&u))
            }
            Generator::Layered(net) => {
                let (x, g) = net.forward_vjp_with(z, |x| {
                    if x.iter().all(|v| v.is_finite()) {
                        cotangent(x)
                    } else {
                        Err(Error::NonFinite("generator output".into()))
                    }
                })?;
                (x, g)
            }
        };
        let x = ensure_finite(x, "generator output")?;
        let g = ensure_finite(g, "latent gradient")?;
        Ok((x, g))
    }

    /// `g(ẑ) − g(z)`. Affine generators evaluate `A (ẑ − z)` directly, which
    /// keeps the offset out of the rounding.
    pub fn displacement(&self, z: &[f64], z_hat: &[f64]) -> Result<Vec<f64>> {
        check_dim("latent vector", self.latent_dim(), z.len())?;
        check_dim("latent vector", self.latent_dim(), z_hat.len())?;
        match self {
            Generator::Linear { a, .. } => ensure_finite(a.matvec(&linalg::sub(z_hat, z)), "generator output"),
            Generator::Layered(_) => Ok(linalg::sub(&self.forward(z_hat)?, &self.forward(z)?)),
        }
    }
}

fn ensure_finite(v: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// A labeled draw from a conditional model, `x = g_label(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub label: usize,
    pub z: Vec<f64>,
}

/// The mixture `μ = Σ p_i · (g_i)_*(ν_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalModel {
    generators: Vec<Generator>,
    priors: Vec<f64>,
}

impl ConditionalModel {
    pub fn new(generators: Vec<Generator>, priors: Vec<f64>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::Validation("model has no classes".into()));
        }
        check_dim("class priors", generators.len(), priors.len())?;
        validate_priors(&priors)?;
        let (d, n) = (generators[0].latent_dim(), generators[0].output_dim());
        for g in &generators[1..] {
            check_dim("generator latent dimension", d, g.latent_dim())?;
            check_dim("generator output dimension", n, g.output_dim())?;
        }
        Ok(ConditionalModel { generators, priors })
    }

    pub fn uniform(generators: Vec<Generator>) -> Result<Self> {
        let k = generators.len().max(1);
        Self::new(generators, vec![1.0 / k as f64; k])
    }

    pub fn num_classes(&self) -> usize {
        self.generators.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.generators[0].latent_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.generators[0].output_dim()
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn generator(&self, class: usize) -> &Generator {
        &self.generators[class]
    }

    /// Draws a class by prior, then `z ~ N(0, I_d)` and `x = g_class(z)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LabeledSample> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut label = self.priors.len() - 1;
        for (i, &p) in self.priors.iter().enumerate() {
            acc += p;
            if u < acc {
                label = i;
                break;
            }
        }
        // Zero-prior classes are never drawn, including through the fallback.
        while self.priors[label] == 0.0 && label > 0 {
            label -= 1;
        }
        self.sample_class(label, rng)
    }

    pub fn sample_class<R: Rng + ?Sized>(&self, label: usize, rng: &mut R) -> Result<LabeledSample> {
        let z = sample_std_gaussian(self.latent_dim(), rng)?;
        let x = self.generators[label].forward(&z)?;
        Ok(LabeledSample { x, label, z })
    }

    /// `n` samples, sample `i` drawn from `stream.child(i)`.
    pub fn sample_many(&self, n: usize, stream: RngStream) -> Result<Vec<LabeledSample>> {
        (0..n)
            .map(|i| self.sample(&mut stream.child(i as u64).rng()))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_magic(MODEL_MAGIC);
        w.usize(self.latent_dim());
        w.usize(self.output_dim());
        w.usize(self.num_classes());
        w.f64s(&self.priors);
        for g in &self.generators {
            match g {
                Generator::Linear { .. } => w.u8(0),
                Generator::Layered(net) => {
                    w.u8(1);
                    w.stack_schema(net);
                }
            }
        }
        for g in &self.generators {
            match g {
                Generator::Linear { a, b } => {
                    w.f64s(a.as_slice());
                    w.f64s(b);
                }
                Generator::Layered(net) => w.stack_weights(net),
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, MODEL_MAGIC)?;
        let d = r.dim("latent_dim")?;
        let n = r.dim("output_dim")?;
        let k = r.dim("num_classes")?;
        let priors = r.f64s(k, "priors")?;
        validate_priors(&priors)?;

        enum Shape {
            Linear,
            Layered(crate::container::StackSchema),
        }
        let mut shapes = Vec::with_capacity(k.min(1024));
        for i in 0..k {
            let field = format!("class[{i}].kind");
            shapes.push(match r.u8(&field)? {
                0 => Shape::Linear,
                1 => {
                    let schema = r.stack_schema(&format!("class[{i}]"))?;
                    if schema.input_dim() != d || schema.output_dim() != n {
                        return Err(Error::parse(
                            format!("class[{i}].layers"),
                            format!(
                                "maps {} -> {}, header declares {d} -> {n}",
                                schema.input_dim(),
                                schema.output_dim()
                            ),
                        ));
                    }
                    Shape::Layered(schema)
                }
                other => return Err(Error::parse(field, format!("unknown generator kind {other}"))),
            });
        }
        let mut generators = Vec::with_capacity(k);
        for (i, shape) in shapes.iter().enumerate() {
            generators.push(match shape {
                Shape::Linear => {
                    let a = r.f64s(n * d, &format!("class[{i}].A"))?;
                    let b = r.f64s(n, &format!("class[{i}].b"))?;
                    Generator::linear(Matrix::from_row_major(n, d, a)?, b)
                        .map_err(|e| Error::parse(format!("class[{i}]"), e.to_string()))?
                }
                Shape::Layered(schema) => Generator::Layered(r.stack_weights(schema, &format!("class[{i}]"))?),
            });
        }
        r.finish()?;
        ConditionalModel::new(generators, priors)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn validate_priors(priors: &[f64]) -> Result<()> {
    if let Some(i) = priors.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Validation(format!("prior {i} is {} (must be >= 0)", priors[i])));
    }
    let sum: f64 = priors.iter().sum();
    if (sum - 1.0).abs() > PRIOR_SUM_TOLERANCE {
        return Err(Error::Validation(format!("priors do not sum to 1 (sum = {sum})")));
    }
    Ok(())
}

/// Desk-scale synthetic model families.
///
/// Parsed from `family:key=value,...`, e.g. `shifted-identity:c=1,d=2` or
/// `mlp-random:layers=2-16-4,act=tanh,k=3,seed=5`.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticSpec {
    /// Two classes, `g_0(z) = z − c e₁`, `g_1(z) = z + c e₁`.
    ShiftedIdentity { c: f64, d: usize },
    /// One class, `g(z) = c z`.
    ScaledIdentity { c: f64, d: usize },
    /// `k` affine generators with i.i.d. `N(0, 1/d)` matrices and `N(0, 4)` offsets.
    LinearRandom { d: usize, n: usize, k: usize, seed: u64 },
    /// `k` random layer stacks of the given widths, identity output layer.
    MlpRandom {
        layers: Vec<usize>,
        activation: Activation,
        k: usize,
        seed: u64,
    },
}

impl SyntheticSpec {
    pub fn build(&self) -> Result<ConditionalModel> {
        match *self {
            SyntheticSpec::ShiftedIdentity { c, d } => {
                check_positive_dim(d)?;
                let shift = |sign: f64| {
                    let mut b = vec![0.0; d];
                    b[0] = sign * c;
                    Generator::linear(Matrix::identity(d), b)
                };
                ConditionalModel::uniform(vec![shift(-1.0)?, shift(1.0)?])
            }
            SyntheticSpec::ScaledIdentity { c, d } => {
                check_positive_dim(d)?;
                ConditionalModel::uniform(vec![Generator::linear(Matrix::scaled_identity(d, c), vec![0.0; d])?])
            }
            SyntheticSpec::LinearRandom { d, n, k, seed } => {
                check_positive_dim(d)?;
                check_positive_dim(n)?;
                check_classes(k)?;
                let mut rng = RngStream::new(seed, 0).rng();
                let scale = 1.0 / (d as f64).sqrt();
                let gens = (0..k)
                    .map(|_| {
                        let a = (0..n * d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
                        let b = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
                        Generator::linear(Matrix::from_row_major(n, d, a)?, b)
                    })
                    .collect::<Result<Vec<_>>>()?;
                ConditionalModel::uniform(gens)
            }
            SyntheticSpec::MlpRandom {
                ref layers,
                activation,
                k,
                seed,
            } => {
                check_classes(k)?;
                let mut rng = RngStream::new(seed, 0).rng();
                let gens = (0..k)
                    .map(|_| {
                        let mut net = LayerStack::random(layers, activation, Activation::Identity, &mut rng)?;
                        let last = net.layers().len() - 1;
                        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
                            let scale = if l == last { 2.0 } else { 0.5 };
                            for b in &mut layer.bias {
                                *b = scale * rng.sample::<f64, _>(StandardNormal);
                            }
                        }
                        Ok(Generator::Layered(net))
                    })
                    .collect::<Result<Vec<_>>>()?;
                ConditionalModel::uniform(gens)
            }
        }
    }
}

fn check_positive_dim(d: usize) -> Result<()> {
    if d == 0 {
        Err(Error::param("d", "dimension must be >= 1"))
    } else {
        Ok(())
    }
}

fn check_classes(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::param("k", "need at least one class"))
    } else {
        Ok(())
    }
}

impl FromStr for SyntheticSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (family, args) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = std::collections::BTreeMap::new();
        for part in args.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::param("model spec", format!("expected key=value, got `{part}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |key: &str| kv.get(key).map(String::as_str);
        let num = |key: &'static str, default: Option<f64>| -> Result<f64> {
            match get(key) {
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::param(key, format!("not a number: `{v}`"))),
                None => default.ok_or_else(|| Error::param(key, "missing")),
            }
        };
        let int = |key: &'static str, default: Option<u64>| -> Result<u64> {
            match get(key) {
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::param(key, format!("not an integer: `{v}`"))),
                None => default.ok_or_else(|| Error::param(key, "missing")),
            }
        };
        let known: &[&str] = match family {
            "shifted-identity" | "scaled-identity" => &["c", "d"],
            "linear-random" => &["d", "n", "k", "seed"],
            "mlp-random" => &["layers", "act", "k", "seed"],
            other => return Err(Error::param("model spec", format!("unknown family `{other}`"))),
        };
        if let Some(extra) = kv.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::param("model spec", format!("unknown key `{extra}` for {family}")));
        }
        Ok(match family {
            "shifted-identity" => SyntheticSpec::ShiftedIdentity {
                c: num("c", Some(1.0))?,
                d: int("d", Some(2))? as usize,
            },
            "scaled-identity" => SyntheticSpec::ScaledIdentity {
                c: num("c", Some(1.0))?,
                d: int("d", Some(2))? as usize,
            },
            "linear-random" => SyntheticSpec::LinearRandom {
                d: int("d", None)? as usize,
                n: int("n", None)? as usize,
                k: int("k", Some(2))? as usize,
                seed: int("seed", Some(0))?,
            },
            _ => {
                let layers = get("layers")
                    .ok_or_else(|| Error::param("layers", "missing"))?
                    .split('-')
                    .map(|w| w.parse::<usize>().map_err(|_| Error::param("layers", format!("bad width `{w}`"))))
                    .collect::<Result<Vec<_>>>()?;
                SyntheticSpec::MlpRandom {
                    layers,
                    activation: get("act").unwrap_or("tanh").parse()?,
                    k: int("k", Some(2))? as usize,
                    seed: int("seed", Some(0))?,
                }
            }
        })
    }
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyntheticSpec::ShiftedIdentity { c, d } => write!(f, "shifted-identity:c={c},d={d}"),
            SyntheticSpec::ScaledIdentity { c, d } => write!(f, "scaled-identity:c={c},d={d}"),
            SyntheticSpec::LinearRandom { d, n, k, seed } => {
                write!(f, "linear-random:d={d},n={n},k={k},seed={seed}")
            }
            SyntheticSpec::MlpRandom {
                layers,
                activation,
                k,
                seed,
            } => {
                let widths: Vec<String> = layers.iter().map(ToString::to_string).collect();
                write!(
                    f,
                    "mlp-random:layers={},act={},k={k},seed={seed}",
                    widths.join("-"),
                    activation.name()
                )
            }
        }
    }
}
