//! ℓ2 attacks: projected gradient ascent in input space, and the on-manifold
//! attack that searches the generator's latent space.
//!
//! The on-manifold attack minimises the Lagrangian
//!
//! ```text
//!     ‖G(z, y) − x‖₂ + λ · L(f(G(z, y)), y)
//! ```
//!
//! over `z` for a short schedule of `λ` values, records the closest
//! misclassified generated point seen along the way, and only then applies
//! the budget `ε`. Because the search itself never looks at `ε`, the success
//! set grows monotonically with `ε` for a fixed schedule.

use std::io::Write;
use std::str::FromStr;

use crate::classify::{Classifier, LossKind};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{sample_std_gaussian, sample_uniform_ball, RngStream};
use crate::genmodel::{ConditionalModel, Generator, LabeledSample};
use crate::linalg::{self, distance, norm};

pub const TRACE_CSV_HEADER: &str = "sample_id,attack,success,perturbation,iterations,lambda_final";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdConfig {
    pub eps: f64,
    pub step_size: f64,
    pub steps: usize,
    pub loss: LossKind,
    /// Extra restarts from uniform points in the ε-ball; 0 starts at `x` only.
    pub random_starts: usize,
    pub seed: u64,
}

impl PgdConfig {
    /// 100 steps; step size 0.1, 0.3, 0.5 at ε = 1, 2, 3, linear in between
    /// and `0.1 ε` below 1.
    pub fn for_eps(eps: f64) -> Self {
        let step_size = if eps <= 1.0 { 0.1 * eps } else { 0.2 * eps - 0.1 };
        PgdConfig {
            eps,
            step_size,
            steps: 100,
            loss: LossKind::CwMargin,
            random_starts: 0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::param("eps", format!("must be positive, got {}", self.eps)));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::param("step_size", "must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::param("steps", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub success: bool,
    /// `‖x_adv − x‖₂`
    pub perturbation: f64,
    pub x_adv: Vec<f64>,
    /// Latent point of `x_adv` for on-manifold attacks.
    pub z_adv: Option<Vec<f64>>,
    pub iterations: usize,
    pub lambda_final: Option<f64>,
    /// Aborted branches and other non-fatal events.
    pub diagnostics: Vec<String>,
}

impl AttackOutcome {
    /// Recomputes the success invariants from the stored points: within
    /// budget, misclassified, and (for on-manifold results) regenerated
    /// exactly by `generator`. Returns true for failures.
    pub fn verify(
        &self,
        f: &Classifier,
        x: &[f64],
        label: usize,
        eps: f64,
        generator: Option<&Generator>,
    ) -> Result<bool> {
        if !self.success {
            return Ok(true);
        }
        let within = distance(&self.x_adv, x) <= eps;
        let wrong = f.predict(&self.x_adv)? != label;
        let on_manifold = match (generator, &self.z_adv) {
            (Some(g), Some(z)) => g.forward(z)? == self.x_adv,
            (Some(_), None) => false,
            (None, _) => true,
        };
        Ok(within && wrong && on_manifold)
    }

    pub fn write_csv_row<W: Write>(&self, sample_id: usize, attack: &str, mut out: W) -> std::io::Result<()> {
        let lambda = self.lambda_final.map(|l| l.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{sample_id},{attack},{},{},{},{lambda}",
            self.success, self.perturbation, self.iterations
        )
    }
}

fn project(center: &[f64], point: &mut [f64], radius: f64) {
    let d = distance(point, center);
    if d > radius {
        let scale = radius / d;
        for (p, c) in point.iter_mut().zip(center) {
            *p = c + (*p - c) * scale;
        }
        // rounding can leave the point an ulp outside
        while distance(point, center) > radius {
            for (p, c) in point.iter_mut().zip(center) {
                *p = c + (*p - c) * (1.0 - 1e-12);
            }
        }
    }
}

/// ℓ2 PGD with early exit on the first misclassified iterate.
pub fn pgd_l2(f: &Classifier, x: &[f64], label: usize, cfg: &PgdConfig) -> Result<AttackOutcome> {
    pgd_l2_trace(f, x, label, cfg, true)
}

/// ℓ2 PGD. With `early_exit = false` every start runs all steps and the
/// outcome holds the final iterate of the last start (used to generate
/// training examples).
pub fn pgd_l2_trace(f: &Classifier, x: &[f64], label: usize, cfg: &PgdConfig, early_exit: bool) -> Result<AttackOutcome> {
    cfg.validate()?;
    check_dim("attack input", f.input_dim(), x.len())?;
    if early_exit && f.predict(x)? != label {
        return Ok(AttackOutcome {
            success: true,
            perturbation: 0.0,
            x_adv: x.to_vec(),
            z_adv: None,
            iterations: 0,
            lambda_final: None,
            diagnostics: Vec::new(),
        });
    }
    // Ascend CE; descend the margin.
    let sign = match cfg.loss {
        LossKind::CrossEntropy => 1.0,
        LossKind::CwMargin => -1.0,
    };
    let base = RngStream::new(cfg.seed, 0x96d);
    let mut iterations = 0;
    let mut last = x.to_vec();
    for start in 0..=cfg.random_starts {
        let mut xt = if start == 0 {
            x.to_vec()
        } else {
            sample_uniform_ball(x, cfg.eps, &mut base.child(start as u64).rng())?
        };
        if early_exit && start > 0 && f.predict(&xt)? != label {
            return Ok(success_outcome(x, xt, iterations));
        }
        for _ in 0..cfg.steps {
            let (_, g, _) = f.loss_and_grad(&xt, label, cfg.loss)?;
            let gn = norm(&g);
            if gn == 0.0 {
                break;
            }
            iterations += 1;
            linalg::axpy(sign * cfg.step_size / gn, &g, &mut xt);
            project(x, &mut xt, cfg.eps);
            if early_exit && f.predict(&xt)? != label {
                return Ok(success_outcome(x, xt, iterations));
            }
        }
        last = xt;
    }
    let wrong = f.predict(&last)? != label;
    Ok(AttackOutcome {
        success: wrong,
        perturbation: distance(&last, x),
        x_adv: last,
        z_adv: None,
        iterations,
        lambda_final: None,
        diagnostics: Vec::new(),
    })
}

fn success_outcome(x: &[f64], x_adv: Vec<f64>, iterations: usize) -> AttackOutcome {
    AttackOutcome {
        success: true,
        perturbation: distance(&x_adv, x),
        x_adv,
        z_adv: None,
        iterations,
        lambda_final: None,
        diagnostics: Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Gradient descent on `‖G(z) − x‖²` from a random latent start.
    Optimize,
    /// The latent vector the sample was generated from.
    RecordedZ,
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimize" => Ok(InitStrategy::Optimize),
            "recorded-z" | "recorded" => Ok(InitStrategy::RecordedZ),
            other => Err(Error::param("init", format!("unknown init strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentOptimizer {
    GradientDescent,
    Adam,
}

impl FromStr for LatentOptimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" | "sgd" => Ok(LatentOptimizer::GradientDescent),
            "adam" => Ok(LatentOptimizer::Adam),
            other => Err(Error::param("optimizer", format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldAttackConfig {
    pub eps: f64,
    pub lambda_init: f64,
    pub rounds: usize,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub step_size: f64,
    pub max_iterations: usize,
    /// A λ round stops once it has gone this many iterations without
    /// improving: the best perturbation after its first success, the
    /// Lagrangian value before it.
    pub patience: usize,
    /// Stop the whole search at the first verified success within `eps`.
    /// The verdict is unchanged; the reported perturbation is then no longer
    /// the smallest one the schedule would find.
    pub stop_within_budget: bool,
    pub init: InitStrategy,
    pub loss: LossKind,
    pub optimizer: LatentOptimizer,
    pub seed: u64,
}

impl Default for ManifoldAttackConfig {
    fn default() -> Self {
        ManifoldAttackConfig {
            eps: 1.0,
            lambda_init: 1.0,
            rounds: 5,
            lambda_lo: 1e-3,
            lambda_hi: 1e3,
            step_size: 0.01,
            max_iterations: 10_000,
            patience: 500,
            stop_within_budget: false,
            init: InitStrategy::RecordedZ,
            loss: LossKind::CwMargin,
            optimizer: LatentOptimizer::GradientDescent,
            seed: 0,
        }
    }
}

impl ManifoldAttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::param("eps", format!("must be >= 0, got {}", self.eps)));
        }
        if self.rounds == 0 || self.max_iterations == 0 {
            return Err(Error::param("rounds/max_iterations", "must be >= 1"));
        }
        if !(self.step_size > 0.0 && self.lambda_init > 0.0 && self.lambda_lo > 0.0 && self.lambda_lo <= self.lambda_hi) {
            return Err(Error::param("lambda/step_size", "must be positive with lo <= hi"));
        }
        Ok(())
    }
}

const INIT_MAX_ITERATIONS: usize = 10_000;

/// Initial latent point for the on-manifold search, with its residual
/// `‖G(z) − x‖₂`.
pub fn manifold_init(
    g: &Generator,
    x: &[f64],
    strategy: InitStrategy,
    recorded_z: Option<&[f64]>,
    stream: RngStream,
) -> Result<(Vec<f64>, f64)> {
    check_dim("attack target", g.output_dim(), x.len())?;
    match strategy {
        InitStrategy::RecordedZ => {
            let z = recorded_z
                .ok_or_else(|| Error::param("init", "recorded-z needs the sample's latent vector"))?
                .to_vec();
            let residual = distance(&g.forward(&z)?, x);
            Ok((z, residual))
        }
        InitStrategy::Optimize => {
            let mut z = sample_std_gaussian(g.latent_dim(), &mut stream.rng())?;
            // ½‖G(z) − x‖², steepest descent with Armijo backtracking.
            let objective = |z: &[f64]| -> Result<f64> { Ok(0.5 * distance(&g.forward(z)?, x).powi(2)) };
            let mut t = 1.0;
            for _ in 0..INIT_MAX_ITERATIONS {
                let (gz, grad) = g.forward_vjp_with(&z, |gz| Ok(linalg::sub(gz, x)))?;
                let f0 = 0.5 * distance(&gz, x).powi(2);
                let gn2 = linalg::dot(&grad, &grad);
                if gn2 <= 1e-30 * (1.0 + f0) {
                    break;
                }
                let mut accepted = None;
                while t > 1e-20 {
                    let mut cand = z.clone();
                    linalg::axpy(-t, &grad, &mut cand);
                    let f1 = objective(&cand)?;
                    if f1 <= f0 - 0.5 * t * gn2 {
                        accepted = Some((cand, f1));
                        break;
                    }
                    t *= 0.5;
                }
                match accepted {
                    Some((cand, f1)) => {
                        let stalled = f0 - f1 <= 1e-16 * f0.max(1e-300);
                        z = cand;
                        t *= 2.0;
                        if stalled {
                            break;
                        }
                    }
                    None => break,
                }
            }
            let residual = distance(&g.forward(&z)?, x);
            Ok((z, residual))
        }
    }
}

struct RoundResult {
    best: Option<(f64, Vec<f64>, Vec<f64>)>,
    iterations: usize,
    aborted: Option<String>,
}

/// Adversarial term of the Lagrangian and its gradient in image space.
/// The margin is hinged at 0 so that, once misclassified, only the distance
/// term acts and the iterate settles on the decision boundary.
fn adversarial_term(f: &Classifier, x: &[f64], label: usize, kind: LossKind) -> Result<(f64, Vec<f64>, usize)> {
    let (loss, grad, pred) = f.loss_and_grad(x, label, kind)?;
    Ok(match kind {
        LossKind::CwMargin if loss <= 0.0 => (0.0, vec![0.0; x.len()], pred),
        LossKind::CwMargin => (loss, grad, pred),
        LossKind::CrossEntropy => (-loss, grad.into_iter().map(|v| -v).collect(), pred),
    })
}

fn run_round(
    f: &Classifier,
    g: &Generator,
    x: &[f64],
    label: usize,
    z_init: &[f64],
    lambda: f64,
    cfg: &ManifoldAttackConfig,
) -> RoundResult {
    let mut z = z_init.to_vec();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut since_improvement = 0usize;
    let mut best_objective = f64::INFINITY;
    let (mut m, mut v) = (vec![0.0; z.len()], vec![0.0; z.len()]);
    let (beta1, beta2) = (0.9f64, 0.999f64);

    for it in 0..cfg.max_iterations {
        let mut pred = label;
        let mut dist = 0.0;
        let mut adv_value = 0.0;
        let step = g.forward_vjp_with(&z, |gz| {
            let diff = linalg::sub(gz, x);
            dist = norm(&diff);
            let (value, adv_grad, p) = adversarial_term(f, gz, label, cfg.loss)?;
            adv_value = value;
            pred = p;
            let mut u = if dist > 0.0 {
                diff.iter().map(|d| d / dist).collect::<Vec<_>>()
            } else {
                vec![0.0; diff.len()]
            };
            linalg::axpy(lambda, &adv_grad, &mut u);
            Ok(u)
        });
        let (gz, grad) = match step {
            Ok(r) => r,
            Err(e) => {
                return RoundResult {
                    best,
                    iterations: it,
                    aborted: Some(format!("lambda {lambda}: {e}")),
                }
            }
        };

        if pred != label {
            if best.as_ref().is_none_or(|b| dist < b.0) {
                // only a relative gain above 1e-4 counts as progress for patience
                if best.as_ref().is_none_or(|b| dist < b.0 * (1.0 - 1e-4)) {
                    since_improvement = 0;
                } else {
                    since_improvement += 1;
                }
                best = Some((dist, gz, z.clone()));
                if cfg.stop_within_budget && dist <= cfg.eps {
                    return RoundResult {
                        best,
                        iterations: it + 1,
                        aborted: None,
                    };
                }
            } else {
                since_improvement += 1;
            }
        } else if best.is_some() {
            since_improvement += 1;
        } else {
            let objective = dist + lambda * adv_value;
            if objective < best_objective - 1e-12 * (1.0 + best_objective.abs()) {
                best_objective = objective;
                since_improvement = 0;
            } else {
                since_improvement += 1;
            }
        }
        if since_improvement >= cfg.patience {
            return RoundResult {
                best,
                iterations: it + 1,
                aborted: None,
            };
        }
        if grad.iter().all(|&v| v == 0.0) {
            return RoundResult {
                best,
                iterations: it + 1,
                aborted: None,
            };
        }
        match cfg.optimizer {
            LatentOptimizer::GradientDescent => linalg::axpy(-cfg.step_size, &grad, &mut z),
            LatentOptimizer::Adam => {
                let t = (it + 1) as i32;
                for i in 0..z.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let m_hat = m[i] / (1.0 - beta1.powi(t));
                    let v_hat = v[i] / (1.0 - beta2.powi(t));
                    z[i] -= cfg.step_size * m_hat / (v_hat.sqrt() + 1e-8);
                }
            }
        }
    }
    RoundResult {
        best,
        iterations: cfg.max_iterations,
        aborted: None,
    }
}

/// On-manifold attack on a generated sample, searching the latent space of
/// the sample's class generator.
pub fn manifold_attack(
    f: &Classifier,
    model: &ConditionalModel,
    sample: &LabeledSample,
    cfg: &ManifoldAttackConfig,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    if sample.label >= model.num_classes() {
        return Err(Error::param("label", format!("class {} of {}", sample.label, model.num_classes())));
    }
    let g = model.generator(sample.label);
    check_dim("attack input", f.input_dim(), sample.x.len())?;
    let x = &sample.x;
    let mut diagnostics = Vec::new();

    let (z_init, residual) = manifold_init(g, x, cfg.init, Some(&sample.z), RngStream::new(cfg.seed, 0x1a1))?;
    if cfg.init == InitStrategy::Optimize {
        diagnostics.push(format!("init residual {residual}"));
    }

    let mut lambda = cfg.lambda_init.clamp(cfg.lambda_lo, cfg.lambda_hi);
    let (mut succeeded_at, mut failed_at): (Option<f64>, Option<f64>) = (None, None);
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut best_lambda = None;
    let mut iterations = 0;

    for _ in 0..cfg.rounds {
        let round = run_round(f, g, x, sample.label, &z_init, lambda, cfg);
        iterations += round.iterations;
        if let Some(msg) = round.aborted {
            diagnostics.push(msg);
        }
        let success = round.best.is_some();
        if let Some(candidate) = round.best {
            if best.as_ref().is_none_or(|b| candidate.0 < b.0) {
                best = Some(candidate);
                best_lambda = Some(lambda);
            }
        }
        if success {
            succeeded_at = Some(succeeded_at.map_or(lambda, |s: f64| s.min(lambda)));
        } else {
            failed_at = Some(failed_at.map_or(lambda, |f: f64| f.max(lambda)));
        }
        if cfg.stop_within_budget && best.as_ref().is_some_and(|b| b.0 <= cfg.eps) {
            break;
        }
        lambda = match (failed_at, succeeded_at) {
            (Some(lo), Some(hi)) => (lo * hi).sqrt(),
            (None, Some(hi)) => hi / 2.0,
            (Some(lo), None) => lo * 2.0,
            (None, None) => unreachable!(),
        }
        .clamp(cfg.lambda_lo, cfg.lambda_hi);
    }

    let outcome = match best {
        Some((dist, x_adv, z_adv)) => AttackOutcome {
            success: dist <= cfg.eps,
            perturbation: dist,
            x_adv,
            z_adv: Some(z_adv),
            iterations,
            lambda_final: best_lambda,
            diagnostics,
        },
        None => AttackOutcome {
            success: false,
            perturbation: f64::INFINITY,
            x_adv: x.clone(),
            z_adv: None,
            iterations,
            lambda_final: Some(lambda),
            diagnostics,
        },
    };
    if !outcome.verify(f, x, sample.label, cfg.eps, Some(g))? {
        return Err(Error::Validation(format!(
            "manifold attack reported an unverifiable success (perturbation {})",
            outcome.perturbation
        )));
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn identity_model(d: usize) -> ConditionalModel {
        let g = || Generator::linear(Matrix::identity(d), vec![0.0; d]).unwrap();
        ConditionalModel::uniform(vec![g(), g()]).unwrap()
    }

    #[test]
    fn pgd_crosses_halfspace_margin() {
        let f = Classifier::halfspace(vec![1.0, 0.0], 0.0).unwrap();
        let cfg = PgdConfig::for_eps(1.0);
        let out = pgd_l2(&f, &[0.5, 0.0], 0, &cfg).unwrap();
        assert!(out.success);
        assert!(out.perturbation >= 0.5 && out.perturbation <= 0.5 + cfg.step_size + 1e-12, "{}", out.perturbation);
        assert!(out.verify(&f, &[0.5, 0.0], 0, 1.0, None).unwrap());
    }

    #[test]
    fn pgd_fails_below_margin() {
        let f = Classifier::halfspace(vec![1.0, 0.0], 0.0).unwrap();
        let out = pgd_l2(&f, &[0.5, 0.0], 0, &PgdConfig::for_eps(0.3)).unwrap();
        assert!(!out.success);
        assert!(out.perturbation <= 0.3);
    }

    #[test]
    fn pgd_on_misclassified_point_is_free() {
        let f = Classifier::halfspace(vec![1.0, 0.0], 0.0).unwrap();
        let out = pgd_l2(&f, &[0.5, 0.0], 1, &PgdConfig::for_eps(1.0)).unwrap();
        assert!(out.success);
        assert_eq!(out.perturbation, 0.0);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn pgd_against_constant_classifier_cannot_succeed() {
        let f = Classifier::constant(0, 2, 3).unwrap();
        let out = pgd_l2(&f, &[1.0, 2.0, 3.0], 0, &PgdConfig::for_eps(2.0)).unwrap();
        assert!(!out.success);
    }

    #[test]
    fn pgd_random_starts_are_reproducible() {
        let f = Classifier::halfspace(vec![1.0, 1.0], -0.5).unwrap();
        let cfg = PgdConfig {
            random_starts: 3,
            seed: 4,
            ..PgdConfig::for_eps(0.2)
        };
        let a = pgd_l2(&f, &[2.0, 2.0], 0, &cfg).unwrap();
        let b = pgd_l2(&f, &[2.0, 2.0], 0, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pgd_step_schedule() {
        assert!((PgdConfig::for_eps(1.0).step_size - 0.1).abs() < 1e-15);
        assert!((PgdConfig::for_eps(2.0).step_size - 0.3).abs() < 1e-15);
        assert!((PgdConfig::for_eps(3.0).step_size - 0.5).abs() < 1e-15);
        assert!(PgdConfig::for_eps(0.0).validate().is_err());
    }

    #[test]
    fn recorded_z_init_has_zero_residual() {
        let model = identity_model(3);
        let s = model.sample(&mut RngStream::new(1, 1).rng()).unwrap();
        let (z, r) = manifold_init(model.generator(s.label), &s.x, InitStrategy::RecordedZ, Some(&s.z), RngStream::new(0, 0)).unwrap();
        assert_eq!(z, s.z);
        assert_eq!(r, 0.0);
        assert!(manifold_init(model.generator(0), &s.x, InitStrategy::RecordedZ, None, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn identity_manifold_attack_matches_margin() {
        let model = identity_model(2);
        let f = Classifier::halfspace(vec![1.0, 0.0], 0.0).unwrap();
        let sample = LabeledSample {
            x: vec![0.8, 0.3],
            label: 0,
            z: vec![0.8, 0.3],
        };
        let cfg = ManifoldAttackConfig {
            eps: 1.0,
            ..Default::default()
        };
        let out = manifold_attack(&f, &model, &sample, &cfg).unwrap();
        assert!(out.success);
        assert!((out.perturbation - 0.8).abs() <= 0.05 * 0.8, "{}", out.perturbation);
        let tight = manifold_attack(&f, &model, &sample, &ManifoldAttackConfig { eps: 0.7, ..cfg }).unwrap();
        assert!(!tight.success);
        assert_eq!(tight.perturbation, out.perturbation);
    }

    #[test]
    fn orthogonal_manifold_is_unattackable() {
        // manifold x = (1, z): the halfspace score w·x = x₁ is constant on it
        let g = Generator::linear(Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap(), vec![1.0, 0.0]).unwrap();
        let model = ConditionalModel::uniform(vec![g.clone(), g]).unwrap();
        let f = Classifier::halfspace(vec![1.0, 0.0], 0.0).unwrap();
        let sample = LabeledSample {
            x: vec![1.0, 0.4],
            label: 0,
            z: vec![0.4],
        };
        for eps in [0.5, 5.0, 100.0] {
            let out = manifold_attack(&f, &model, &sample, &ManifoldAttackConfig { eps, ..Default::default() }).unwrap();
            assert!(!out.success);
        }
    }

    #[test]
    fn trace_row_format() {
        let out = AttackOutcome {
            success: true,
            perturbation: 0.25,
            x_adv: vec![],
            z_adv: None,
            iterations: 7,
            lambda_final: Some(0.5),
            diagnostics: vec![],
        };
        let mut buf = Vec::new();
        out.write_csv_row(3, "manifold", &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "3,manifold,true,0.25,7,0.5\n");
    }
}
