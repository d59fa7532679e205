//! Monte Carlo estimators for risk, adversarial risk and in-distribution
//! adversarial risk, a latent-grid oracle for the latter, and an empirical
//! check of Gaussian set expansion.
//!
//! Attack-based estimates are lower bounds: an attack that fails to find an
//! adversarial example does not prove none exists. The [`RiskKind`] carried
//! by every estimate records that direction.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::attacks::{manifold_attack, pgd_l2, AttackOutcome, ManifoldAttackConfig, PgdConfig};
use crate::classify::Classifier;
use crate::error::{Error, Result};
use crate::gaussian::{sample_std_gaussian, RngStream};
use crate::genmodel::{ConditionalModel, LabeledSample};
use crate::linalg::{distance, dot, norm};

pub const REPORT_CSV_HEADER: &str = "quantity,kind,value,stderr,n,eps,classifier_id,model_id,seed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RiskKind {
    Risk,
    AdvRiskLower,
    InAdvRiskLower,
    ExactGrid,
}

impl RiskKind {
    pub fn name(self) -> &'static str {
        match self {
            RiskKind::Risk => "risk",
            RiskKind::AdvRiskLower => "adv_risk_lower",
            RiskKind::InAdvRiskLower => "in_adv_risk_lower",
            RiskKind::ExactGrid => "exact_grid",
        }
    }
}

impl fmt::Display for RiskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Error counts for one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCount {
    pub samples: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskEstimate {
    pub kind: RiskKind,
    pub value: f64,
    pub n_samples: usize,
    /// Binomial standard error `√(v (1 − v) / n)`.
    pub std_error: f64,
    pub per_class: Vec<ClassCount>,
}

impl RiskEstimate {
    fn from_flags(kind: RiskKind, samples: &[LabeledSample], flags: &[bool], num_classes: usize) -> Self {
        let mut per_class = vec![ClassCount::default(); num_classes];
        for (s, &hit) in samples.iter().zip(flags) {
            per_class[s.label].samples += 1;
            per_class[s.label].errors += hit as usize;
        }
        let errors = flags.iter().filter(|&&b| b).count();
        let n = flags.len();
        let value = if n == 0 { 0.0 } else { errors as f64 / n as f64 };
        RiskEstimate {
            kind,
            value,
            n_samples: n,
            std_error: binomial_se(value, n),
            per_class,
        }
    }

    /// Per-class error rates; classes that were never sampled report 0.
    pub fn per_class_rates(&self) -> Vec<f64> {
        self.per_class
            .iter()
            .map(|c| if c.samples == 0 { 0.0 } else { c.errors as f64 / c.samples as f64 })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn write_csv_row<W: Write>(
        &self,
        quantity: &str,
        eps: f64,
        classifier_id: &str,
        model_id: &str,
        seed: u64,
        mut out: W,
    ) -> std::io::Result<()> {
        writeln!(
            out,
            "{quantity},{},{},{},{},{eps},{classifier_id},{model_id},{seed}",
            self.kind, self.value, self.std_error, self.n_samples
        )
    }
}

pub fn binomial_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

/// Fraction of samples misclassified relative to their conditioning label.
pub fn risk_on_samples(f: &Classifier, samples: &[LabeledSample], num_classes: usize) -> Result<RiskEstimate> {
    let flags = samples
        .par_iter()
        .map(|s| Ok(f.predict(&s.x)? != s.label))
        .collect::<Result<Vec<bool>>>()?;
    Ok(RiskEstimate::from_flags(RiskKind::Risk, samples, &flags, num_classes))
}

pub fn estimate_risk(f: &Classifier, model: &ConditionalModel, n: usize, stream: RngStream) -> Result<RiskEstimate> {
    check_n(n)?;
    let samples = model.sample_many(n, stream)?;
    risk_on_samples(f, &samples, model.num_classes())
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::param("n", "sample count must be >= 1"))
    } else {
        Ok(())
    }
}

/// Runs PGD on every sample. With `eps == 0` no attack runs and a sample
/// counts iff it is already misclassified.
pub fn pgd_outcomes(f: &Classifier, samples: &[LabeledSample], cfg: &PgdConfig) -> Result<Vec<AttackOutcome>> {
    samples
        .par_iter()
        .map(|s| {
            if cfg.eps == 0.0 {
                let wrong = f.predict(&s.x)? != s.label;
                Ok(AttackOutcome {
                    success: wrong,
                    perturbation: 0.0,
                    x_adv: s.x.clone(),
                    z_adv: None,
                    iterations: 0,
                    lambda_final: None,
                    diagnostics: Vec::new(),
                })
            } else {
                pgd_l2(f, &s.x, s.label, cfg)
            }
        })
        .collect()
}

pub fn adv_risk_on_samples(
    f: &Classifier,
    samples: &[LabeledSample],
    cfg: &PgdConfig,
    num_classes: usize,
) -> Result<RiskEstimate> {
    let flags: Vec<bool> = pgd_outcomes(f, samples, cfg)?.iter().map(|o| o.success).collect();
    Ok(RiskEstimate::from_flags(RiskKind::AdvRiskLower, samples, &flags, num_classes))
}

/// Fraction of samples on which PGD finds a misclassified point within `ε`.
pub fn estimate_adv_risk(
    f: &Classifier,
    model: &ConditionalModel,
    cfg: &PgdConfig,
    n: usize,
    stream: RngStream,
) -> Result<RiskEstimate> {
    check_n(n)?;
    let samples = model.sample_many(n, stream)?;
    adv_risk_on_samples(f, &samples, cfg, model.num_classes())
}

/// Runs the on-manifold attack on every sample; clean errors short-circuit
/// with zero perturbation.
pub fn manifold_outcomes(
    f: &Classifier,
    model: &ConditionalModel,
    samples: &[LabeledSample],
    cfg: &ManifoldAttackConfig,
) -> Result<Vec<AttackOutcome>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            if f.predict(&s.x)? != s.label {
                return Ok(AttackOutcome {
                    success: true,
                    perturbation: 0.0,
                    x_adv: s.x.clone(),
                    z_adv: Some(s.z.clone()),
                    iterations: 0,
                    lambda_final: None,
                    diagnostics: Vec::new(),
                });
            }
            let cfg = ManifoldAttackConfig {
                seed: RngStream::new(cfg.seed, 0).child(i as u64).stream_id,
                ..*cfg
            };
            manifold_attack(f, model, s, &cfg)
        })
        .collect()
}

pub fn in_adv_risk_on_samples(
    f: &Classifier,
    model: &ConditionalModel,
    samples: &[LabeledSample],
    cfg: &ManifoldAttackConfig,
) -> Result<RiskEstimate> {
    // only the verdict is consumed, so the search may stop at the first success within budget
    let cfg = ManifoldAttackConfig {
        stop_within_budget: true,
        ..*cfg
    };
    let flags: Vec<bool> = manifold_outcomes(f, model, samples, &cfg)?.iter().map(|o| o.success).collect();
    Ok(RiskEstimate::from_flags(RiskKind::InAdvRiskLower, samples, &flags, model.num_classes()))
}

/// Fraction of samples on which the on-manifold attack succeeds within `ε`.
pub fn estimate_in_adv_risk(
    f: &Classifier,
    model: &ConditionalModel,
    cfg: &ManifoldAttackConfig,
    n: usize,
    stream: RngStream,
) -> Result<RiskEstimate> {
    check_n(n)?;
    let samples = model.sample_many(n, stream)?;
    in_adv_risk_on_samples(f, model, &samples, cfg)
}

/// Latent grid `[−bound, bound]^d` with spacing `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub bound: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { bound: 5.0, step: 0.01 }
    }
}

/// Misclassified generated points of every class over the latent grid.
pub struct ErrorImages {
    per_class: Vec<Vec<Vec<f64>>>,
}

impl ErrorImages {
    /// Scans the grid once per class. Only latent dimensions 1 and 2 are
    /// supported.
    pub fn scan(f: &Classifier, model: &ConditionalModel, grid: &GridSpec) -> Result<Self> {
        let d = model.latent_dim();
        if d > 2 {
            return Err(Error::param("latent dim", format!("grid oracle supports d <= 2, got {d}")));
        }
        if !(grid.bound > 0.0 && grid.step > 0.0) {
            return Err(Error::param("grid", "bound and step must be positive"));
        }
        let per_axis = (2.0 * grid.bound / grid.step).round() as usize + 1;
        let coord = |i: usize| -grid.bound + grid.step * i as f64;
        let total = per_axis.pow(d as u32);
        let per_class = (0..model.num_classes())
            .map(|class| {
                let g = model.generator(class);
                (0..total)
                    .into_par_iter()
                    .filter_map(|idx| {
                        let z: Vec<f64> = if d == 1 {
                            vec![coord(idx)]
                        } else {
                            vec![coord(idx / per_axis), coord(idx % per_axis)]
                        };
                        let x = match g.forward(&z) {
                            Ok(x) => x,
                            Err(e) => return Some(Err(e)),
                        };
                        match f.predict(&x) {
                            Ok(p) if p != class => Some(Ok(x)),
                            Ok(_) => None,
                            Err(e) => Some(Err(e)),
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ErrorImages { per_class })
    }

    /// Distance from `sample.x` to the nearest misclassified grid image of
    /// its class, or infinity if there is none.
    pub fn nearest_error(&self, sample: &LabeledSample) -> f64 {
        self.per_class[sample.label]
            .iter()
            .map(|x| distance(x, &sample.x))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Grid verdicts for in-distribution adversarial risk.
pub fn brute_force_in_adv_risk(
    f: &Classifier,
    model: &ConditionalModel,
    eps: f64,
    grid: &GridSpec,
    samples: &[LabeledSample],
) -> Result<RiskEstimate> {
    let images = ErrorImages::scan(f, model, grid)?;
    let flags: Vec<bool> = samples.par_iter().map(|s| images.nearest_error(s) <= eps).collect();
    Ok(RiskEstimate::from_flags(RiskKind::ExactGrid, samples, &flags, model.num_classes()))
}

/// A subset of `R^d` described by its Euclidean distance function (zero
/// inside the set).
pub trait LatentSet: Sync {
    fn distance(&self, z: &[f64]) -> f64;
}

/// `{z : a·z ≤ t}`
#[derive(Debug, Clone)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub threshold: f64,
}

impl HalfSpace {
    /// The half-space `{z : z₁ ≤ Φ⁻¹(p)}` of Gaussian measure `p` in `d`
    /// dimensions.
    pub fn with_measure(d: usize, p: f64) -> Self {
        let mut normal = vec![0.0; d];
        normal[0] = 1.0;
        HalfSpace {
            normal,
            threshold: crate::gaussian::std_normal_quantile(p),
        }
    }
}

impl LatentSet for HalfSpace {
    fn distance(&self, z: &[f64]) -> f64 {
        ((dot(&self.normal, z) - self.threshold) / norm(&self.normal)).max(0.0)
    }
}

/// Closed ball `B(center, radius)`.
#[derive(Debug, Clone)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl LatentSet for Ball {
    fn distance(&self, z: &[f64]) -> f64 {
        (distance(z, &self.center) - self.radius).max(0.0)
    }
}

/// `{z : lo ≤ a·z ≤ hi}`
#[derive(Debug, Clone)]
pub struct Slab {
    pub normal: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl LatentSet for Slab {
    fn distance(&self, z: &[f64]) -> f64 {
        let s = dot(&self.normal, z) / norm(&self.normal);
        let n = norm(&self.normal);
        let (lo, hi) = (self.lo / n, self.hi / n);
        (lo - s).max(s - hi).max(0.0)
    }
}

/// Monte Carlo estimate of a probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub n_samples: usize,
    pub std_error: f64,
}

/// Estimates `ν_d(E_r)`, the standard Gaussian measure of the
/// `r`-expansion of `set`. Samples are drawn in chunks of 4096; chunk `c`
/// uses `stream.child(c)`.
pub fn mc_expansion_measure(set: &dyn LatentSet, r: f64, d: usize, n: usize, stream: RngStream) -> Result<McEstimate> {
    if !(r >= 0.0) {
        return Err(Error::param("r", format!("must be >= 0, got {r}")));
    }
    check_n(n)?;
    const CHUNK: usize = 4096;
    let hits: usize = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.child(c as u64).rng();
            let end = ((c + 1) * CHUNK).min(n);
            let mut hits = 0usize;
            for _ in c * CHUNK..end {
                let z = sample_std_gaussian(d, &mut rng)?;
                hits += (set.distance(&z) <= r) as usize;
            }
            Ok(hits)
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum();
    let value = hits as f64 / n as f64;
    Ok(McEstimate {
        value,
        n_samples: n,
        std_error: binomial_se(value, n),
    })
}
