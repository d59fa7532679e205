//! Closed-form adversarial-risk lower bounds and intrinsic-robustness upper
//! bounds for conditional generative models.
//!
//! With per-class Lipschitz constants `L_i` and exception probability `δ`,
//! any classifier with per-class risks `R_i` has (in-distribution)
//! adversarial risk at least
//!
//! ```text
//!     Σ_i p_i · Φ(Φ⁻¹(R_i) + ε / L_i) − δ.
//! ```
//!
//! Minimising this over classifier families gives the robustness ceilings
//! computed by [`robustness_upper_bound`]:
//!
//! * [`ClassifierFamily::TotalRisk`] (`Risk ≥ α`):
//!   `1 + δ − min_i p_i · Φ(Φ⁻¹(α / p_i) + η)` with `η = ε / L_max`. The
//!   minimising class is where the worst-case classifier concentrates all
//!   of its error mass.
//! * [`ClassifierFamily::PerClassRisk`] (`Risk_i ≥ α` for every class):
//!   `1 + δ − Σ_i p_i · Φ(Φ⁻¹(α) + η)`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{std_normal_cdf, std_normal_quantile};

pub const CURVE_CSV_HEADER: &str = "alpha,bound_raw,bound_clamped,variant,eps,delta,L_max";

/// A bound as computed, plus its projection onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundValue {
    pub raw: f64,
    /// Class attaining the minimum for [`ClassifierFamily::TotalRisk`].
    pub minimizing_class: Option<usize>,
}

impl BoundValue {
    pub fn clamped(&self) -> f64 {
        self.raw.clamp(0.0, 1.0)
    }
}

/// `Φ(Φ⁻¹(p) + t)` with the sentinel conventions `p = 0 ↦ 0`, `p = 1 ↦ 1`.
fn shifted_mass(p: f64, t: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else if p >= 1.0 {
        1.0
    } else {
        std_normal_cdf(std_normal_quantile(p) + t)
    }
}

fn validate_priors(priors: &[f64]) -> Result<()> {
    if priors.is_empty() {
        return Err(Error::param("priors", "at least one class is required"));
    }
    if priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::param("priors", "priors must be finite and >= 0"));
    }
    let sum: f64 = priors.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("priors do not sum to 1 (sum = {sum})")));
    }
    Ok(())
}

fn validate_eps_delta(eps: f64, delta: f64) -> Result<()> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::param("eps", format!("must be finite and >= 0, got {eps}")));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::param("delta", format!("must lie in [0, 1], got {delta}")));
    }
    Ok(())
}

fn validate_lipschitz(l: f64) -> Result<()> {
    if l > 0.0 && l.is_finite() {
        Ok(())
    } else {
        Err(Error::param("L", format!("Lipschitz constants must be positive, got {l}")))
    }
}

/// Inputs to [`adv_risk_lower_bound`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdvRiskBoundInput {
    /// Per-class risks `Risk_{μ_i}(f)`.
    pub risks: Vec<f64>,
    /// Per-class local Lipschitz constants `L_i(r)`.
    pub lipschitz: Vec<f64>,
    pub priors: Vec<f64>,
    pub eps: f64,
    pub delta: f64,
    /// Latent radius the constants were estimated at. When present, the
    /// requirement `r · L_i(r) ≥ ε` is checked for every class.
    pub radius: Option<f64>,
}

/// Lower bound on the (in-distribution) adversarial risk of any classifier
/// with the given per-class risks.
pub fn adv_risk_lower_bound(input: &AdvRiskBoundInput) -> Result<BoundValue> {
    let k = input.priors.len();
    validate_priors(&input.priors)?;
    check_dim("per-class risks", k, input.risks.len())?;
    check_dim("per-class Lipschitz constants", k, input.lipschitz.len())?;
    validate_eps_delta(input.eps, input.delta)?;
    for (i, (&risk, &l)) in input.risks.iter().zip(&input.lipschitz).enumerate() {
        if !(0.0..=1.0).contains(&risk) {
            return Err(Error::param("risks", format!("class {i} risk {risk} outside [0, 1]")));
        }
        validate_lipschitz(l)?;
        if let Some(r) = input.radius {
            if r * l < input.eps {
                return Err(Error::LipschitzHypothesis {
                    class: i,
                    product: r * l,
                    eps: input.eps,
                });
            }
        }
    }
    let sum: f64 = input
        .priors
        .iter()
        .zip(&input.risks)
        .zip(&input.lipschitz)
        .map(|((&p, &risk), &l)| p * shifted_mass(risk, input.eps / l))
        .sum();
    Ok(BoundValue {
        raw: sum - input.delta,
        minimizing_class: None,
    })
}

/// The imperfect-classifier family a robustness bound ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassifierFamily {
    /// Overall risk at least `α`.
    TotalRisk,
    /// Risk at least `α` on every class.
    PerClassRisk,
}

impl ClassifierFamily {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierFamily::TotalRisk => "alpha",
            ClassifierFamily::PerClassRisk => "tilde",
        }
    }
}

impl fmt::Display for ClassifierFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" | "total" | "F_alpha" => Ok(ClassifierFamily::TotalRisk),
            "tilde" | "per-class" | "F_tilde" => Ok(ClassifierFamily::PerClassRisk),
            other => Err(Error::param("variant", format!("unknown variant `{other}` (use alpha or tilde)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundParams {
    pub family: ClassifierFamily,
    pub alpha: f64,
    pub eps: f64,
    pub delta: f64,
    pub l_max: f64,
    pub priors: Vec<f64>,
}

impl BoundParams {
    pub fn uniform(family: ClassifierFamily, k: usize, alpha: f64, eps: f64, delta: f64, l_max: f64) -> Self {
        BoundParams {
            family,
            alpha,
            eps,
            delta,
            l_max,
            priors: vec![1.0 / k as f64; k],
        }
    }

    /// `η = ε / L_max`
    pub fn eta(&self) -> f64 {
        self.eps / self.l_max
    }

    pub fn validate(&self) -> Result<()> {
        validate_priors(&self.priors)?;
        validate_eps_delta(self.eps, self.delta)?;
        validate_lipschitz(self.l_max)?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::param("alpha", format!("must lie in (0, 1], got {}", self.alpha)));
        }
        if self.family == ClassifierFamily::TotalRisk {
            for (i, &p) in self.priors.iter().enumerate() {
                let ratio = self.alpha / p;
                if !(ratio <= 1.0) {
                    return Err(Error::AlphaExceedsPrior { class: i, ratio });
                }
            }
        }
        Ok(())
    }
}

/// Upper bound on the intrinsic robustness of the classifier family.
pub fn robustness_upper_bound(params: &BoundParams) -> Result<BoundValue> {
    params.validate()?;
    let eta = params.eta();
    let one_plus_delta = 1.0 + params.delta;
    match params.family {
        ClassifierFamily::PerClassRisk => {
            let expanded = shifted_mass(params.alpha, eta);
            let sum: f64 = params.priors.iter().map(|p| p * expanded).sum();
            Ok(BoundValue {
                raw: one_plus_delta - sum,
                minimizing_class: None,
            })
        }
        ClassifierFamily::TotalRisk => {
            let (class, min) = params
                .priors
                .iter()
                .map(|&p| p * shifted_mass(params.alpha / p, eta))
                .enumerate()
                .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best });
            Ok(BoundValue {
                raw: one_plus_delta - min,
                minimizing_class: Some(class),
            })
        }
    }
}

/// Result of the exhaustive allocation search.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexMinimum {
    pub value: f64,
    /// Per-class conditional risks `α_i` at the minimiser.
    pub allocation: Vec<f64>,
}

/// Brute-force minimum of `Σ p_i Φ(Φ⁻¹(α_i) + η)` over allocations with
/// `Σ p_i α_i = α` and `0 ≤ α_i ≤ 1`.
///
/// The constraint face is gridded in error-mass shares: `p_i α_i = α t_i`
/// with `t` on the simplex lattice of spacing `step`, so every corner
/// allocation lies on the grid. Only `K ≤ 3` is accepted. Ties are broken
/// by the lexicographically smallest allocation, which makes the parallel
/// reduction deterministic.
pub fn simplex_brute_force_min(alpha: f64, priors: &[f64], eta: f64, step: f64) -> Result<SimplexMinimum> {
    validate_priors(priors)?;
    let k = priors.len();
    if k > 3 {
        return Err(Error::param("priors", format!("brute force supports K <= 3, got {k}")));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::param("grid step", format!("must lie in (0, 1], got {step}")));
    }
    let cells = (1.0 / step).round();
    if ((cells * step) - 1.0).abs() > 1e-9 {
        return Err(Error::param("grid step", format!("1/step must be an integer, got step = {step}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("alpha", format!("infeasible alpha {alpha}")));
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::param("eta", format!("must be finite and >= 0, got {eta}")));
    }
    let m = cells as usize;

    let evaluate = |shares: &[usize]| -> Option<(f64, Vec<f64>)> {
        let mut value = 0.0;
        let mut allocation = Vec::with_capacity(k);
        for (&p, &s) in priors.iter().zip(shares) {
            let mass = alpha * s as f64 / m as f64;
            if mass == 0.0 {
                allocation.push(0.0);
                continue;
            }
            if p == 0.0 {
                return None;
            }
            let a = mass / p;
            if a > 1.0 + 1e-12 {
                return None;
            }
            let a = a.min(1.0);
            value += p * shifted_mass(a, eta);
            allocation.push(a);
        }
        Some((value, allocation))
    };

    let better = |a: &(f64, Vec<f64>), b: &(f64, Vec<f64>)| -> bool {
        match a.0.total_cmp(&b.0) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => a.1.iter().zip(&b.1).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne())
                == Some(std::cmp::Ordering::Less),
        }
    };
    let pick = |a: Option<(f64, Vec<f64>)>, b: Option<(f64, Vec<f64>)>| match (a, b) {
        (Some(a), Some(b)) => Some(if better(&b, &a) { b } else { a }),
        (a, None) => a,
        (None, b) => b,
    };

    let best = (0..=m)
        .into_par_iter()
        .map(|first| -> Option<(f64, Vec<f64>)> {
            match k {
                1 => (first == m).then(|| evaluate(&[first])).flatten(),
                2 => evaluate(&[first, m - first]),
                _ => (0..=m - first)
                    .map(|second| evaluate(&[first, second, m - first - second]))
                    .fold(None, pick),
            }
        })
        .reduce(|| None, pick);

    best.map(|(value, allocation)| SimplexMinimum { value, allocation })
        .ok_or_else(|| Error::param("alpha", format!("no feasible allocation for alpha = {alpha}")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub alpha: f64,
    pub bound: BoundValue,
}

/// Evaluates the robustness bound at `steps` evenly spaced `α` values in
/// `[alpha_min, alpha_max]`. `params.alpha` is ignored.
pub fn bound_curve(params: &BoundParams, alpha_min: f64, alpha_max: f64, steps: usize) -> Result<Vec<CurveRow>> {
    if !(alpha_min > 0.0 && alpha_min <= alpha_max) {
        return Err(Error::param(
            "alpha range",
            format!("need 0 < alpha_min <= alpha_max, got [{alpha_min}, {alpha_max}]"),
        ));
    }
    if steps == 0 {
        return Err(Error::param("steps", "must be >= 1"));
    }
    for alpha in [alpha_min, alpha_max] {
        BoundParams { alpha, ..params.clone() }.validate()?;
    }
    let steps = if alpha_min == alpha_max { 1 } else { steps };
    (0..steps)
        .map(|i| {
            let alpha = if steps == 1 {
                alpha_min
            } else if i + 1 == steps {
                alpha_max
            } else {
                alpha_min + (alpha_max - alpha_min) * i as f64 / (steps - 1) as f64
            };
            let bound = robustness_upper_bound(&BoundParams { alpha, ..params.clone() })?;
            Ok(CurveRow { alpha, bound })
        })
        .collect()
}

/// Writes curve rows under [`CURVE_CSV_HEADER`]; `header` controls whether
/// the header line is emitted.
pub fn write_curve_csv<W: Write>(params: &BoundParams, rows: &[CurveRow], header: bool, mut out: W) -> std::io::Result<()> {
    if header {
        writeln!(out, "{CURVE_CSV_HEADER}")?;
    }
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.alpha,
            row.bound.raw,
            row.bound.clamped(),
            params.family,
            params.eps,
            params.delta,
            params.l_max
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tilde(alpha: f64, eps: f64, delta: f64, l: f64) -> f64 {
        robustness_upper_bound(&BoundParams::uniform(ClassifierFamily::PerClassRisk, 10, alpha, eps, delta, l))
            .unwrap()
            .raw
    }

    #[test]
    fn zero_perturbation_collapses_to_plain_risk() {
        let input = AdvRiskBoundInput {
            risks: vec![0.1, 0.3, 0.05],
            lipschitz: vec![2.0, 3.0, 4.0],
            priors: vec![0.2, 0.5, 0.3],
            eps: 0.0,
            delta: 0.0,
            radius: None,
        };
        let b = adv_risk_lower_bound(&input).unwrap();
        assert!((b.raw - (0.02 + 0.15 + 0.015)).abs() < 1e-12);
    }

    #[test]
    fn zero_risks_give_zero_and_unit_risks_give_prior() {
        let mut input = AdvRiskBoundInput {
            risks: vec![0.0, 0.0],
            lipschitz: vec![1.0, 1.0],
            priors: vec![0.5, 0.5],
            eps: 3.0,
            delta: 0.0,
            radius: None,
        };
        assert_eq!(adv_risk_lower_bound(&input).unwrap().raw, 0.0);
        input.risks = vec![1.0, 0.0];
        assert_eq!(adv_risk_lower_bound(&input).unwrap().raw, 0.5);
    }

    #[test]
    fn radius_hypothesis_names_violating_class() {
        let input = AdvRiskBoundInput {
            risks: vec![0.1, 0.1],
            lipschitz: vec![4.0, 1.0],
            priors: vec![0.5, 0.5],
            eps: 1.0,
            delta: 0.0,
            radius: Some(0.5),
        };
        match adv_risk_lower_bound(&input) {
            Err(Error::LipschitzHypothesis { class, .. }) => assert_eq!(class, 1),
            other => panic!("expected hypothesis error, got {other:?}"),
        }
    }

    #[test]
    fn total_risk_family_requires_alpha_below_priors() {
        let params = BoundParams {
            family: ClassifierFamily::TotalRisk,
            alpha: 0.3,
            eps: 1.0,
            delta: 0.0,
            l_max: 1.0,
            priors: vec![0.8, 0.2],
        };
        assert!(matches!(robustness_upper_bound(&params), Err(Error::AlphaExceedsPrior { class: 1, .. })));
        // the per-class family has no such proviso
        let tilde = BoundParams {
            family: ClassifierFamily::PerClassRisk,
            ..params
        };
        assert!(robustness_upper_bound(&tilde).is_ok());
    }

    #[test]
    fn zero_eps_gives_one_minus_alpha() {
        for family in [ClassifierFamily::TotalRisk, ClassifierFamily::PerClassRisk] {
            let b = robustness_upper_bound(&BoundParams::uniform(family, 4, 0.07, 0.0, 0.0, 3.0)).unwrap();
            assert!((b.raw - 0.93).abs() < 1e-12, "{family}: {}", b.raw);
        }
    }

    #[test]
    fn raw_value_may_exceed_one_and_is_clamped_on_report() {
        let b = robustness_upper_bound(&BoundParams::uniform(ClassifierFamily::PerClassRisk, 2, 1e-9, 0.5, 0.01, 10.0))
            .unwrap();
        assert!(b.raw > 1.0);
        assert_eq!(b.clamped(), 1.0);
    }

    #[test]
    fn bound_decreases_with_eps() {
        assert!(tilde(0.015, 1.0, 0.001, 11.0) > tilde(0.015, 2.0, 0.001, 11.0));
    }

    #[test]
    fn brute_force_rejects_large_k_and_bad_steps() {
        assert!(simplex_brute_force_min(0.1, &[0.25; 4], 1.0, 0.01).is_err());
        assert!(simplex_brute_force_min(0.1, &[0.5, 0.5], 1.0, 0.003).is_err());
        assert!(simplex_brute_force_min(0.0, &[0.5, 0.5], 1.0, 0.01).is_err());
        assert!(simplex_brute_force_min(0.1, &[0.5, 0.5], -1.0, 0.01).is_err());
    }

    #[test]
    fn single_class_brute_force_is_the_only_allocation() {
        let m = simplex_brute_force_min(0.2, &[1.0], 0.5, 0.1).unwrap();
        assert_eq!(m.allocation, vec![0.2]);
    }

    #[test]
    fn curve_rejects_infeasible_endpoints() {
        let params = BoundParams::uniform(ClassifierFamily::TotalRisk, 2, 0.1, 1.0, 0.0, 1.0);
        assert!(bound_curve(&params, 0.1, 0.6, 5).is_err());
        assert!(bound_curve(&params, 0.0, 0.4, 5).is_err());
        assert!(bound_curve(&params, 0.3, 0.2, 5).is_err());
        assert_eq!(bound_curve(&params, 0.1, 0.4, 7).unwrap().len(), 7);
    }

    #[test]
    fn family_names_parse() {
        assert_eq!("tilde".parse::<ClassifierFamily>().unwrap(), ClassifierFamily::PerClassRisk);
        assert_eq!("alpha".parse::<ClassifierFamily>().unwrap(), ClassifierFamily::TotalRisk);
        assert!("beta".parse::<ClassifierFamily>().is_err());
    }
}
