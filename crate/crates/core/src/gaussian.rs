//! Standard-normal distribution functions, the Gaussian isoperimetric
//! expansion map, and reproducible random streams.
//!
//! Quantiles of 0 and 1 are represented by `f64::NEG_INFINITY` and
//! `f64::INFINITY`. Arithmetic on those sentinels follows IEEE rules, so
//! `std_normal_cdf(-inf + t) == 0` and `std_normal_cdf(inf + t) == 1` for any
//! finite `t`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(Error::param("probability", format!("{value} is outside [0, 1]")))
        }
    }

    /// Clamps into `[0, 1]`; NaN maps to 0.
    pub fn clamped(value: f64) -> Self {
        if value.is_nan() {
            Probability(0.0)
        } else {
            Probability(value.clamp(0.0, 1.0))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, `Φ(x)`.
///
/// Total over the extended reals. Underflows to exactly 0 below about -38.5.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn std_normal_sf(x: f64) -> f64 {
    std_normal_cdf(-x)
}

/// Inverse of [`std_normal_cdf`].
///
/// Acklam's rational approximation followed by one Newton step on the exact
/// CDF. The upper half is computed by reflection, which keeps full relative
/// accuracy in both tails since `1 - p` is exact for `p >= 0.5`.
/// Returns NaN outside `[0, 1]`.
pub fn std_normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        -lower_quantile(1.0 - p)
    } else {
        lower_quantile(p)
    }
}

// p in (0, 0.5]
fn lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    let density = std_normal_pdf(x);
    if density > 0.0 && density.is_finite() {
        x - (std_normal_cdf(x) - p) / density
    } else {
        x
    }
}

/// `Φ(Φ⁻¹(p) + t)`: the smallest Gaussian measure the `t`-expansion of a set
/// of measure `p` can have. Equality holds for half-spaces.
pub fn isoperimetric_expand(p: Probability, t: f64) -> Result<Probability> {
    if !(t >= 0.0) {
        return Err(Error::param("t", format!("expansion radius must be >= 0, got {t}")));
    }
    let p = p.value();
    if p == 0.0 || p == 1.0 || t == 0.0 {
        return Ok(Probability(p));
    }
    let expanded = if t.is_infinite() {
        1.0
    } else {
        std_normal_cdf(std_normal_quantile(p) + t)
    };
    // The rounding in Φ∘Φ⁻¹ must not push the result below p.
    Ok(Probability(expanded.max(p)))
}

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose 64-bit stream parameter gives independent
/// sequences for distinct ids under a shared seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// Derives the stream for sub-task `index`. Children of distinct indices
    /// (or distinct parents) are distinct with overwhelming probability.
    pub fn child(&self, index: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d))),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws `d` i.i.d. standard-normal coordinates.
pub fn sample_std_gaussian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::param("d", "dimension must be >= 1"));
    }
    Ok((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Draws a point uniformly from the solid ball `B(center, radius)`.
pub fn sample_uniform_ball<R: Rng + ?Sized>(
    center: &[f64],
    radius: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::param("radius", format!("must be positive and finite, got {radius}")));
    }
    let d = center.len();
    let direction = loop {
        let v = sample_std_gaussian(d, rng)?;
        let norm = crate::linalg::norm(&v);
        if norm > 0.0 {
            break v.into_iter().map(|x| x / norm).collect::<Vec<_>>();
        }
    };
    let u: f64 = rng.random();
    let rho = radius * u.powf(1.0 / d as f64);
    Ok(center
        .iter()
        .zip(direction)
        .map(|(c, u)| c + rho * u)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_fixed_points() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!(std_normal_cdf(-40.0) < 1e-300);
        assert_eq!(std_normal_cdf(40.0), 1.0);
        assert_eq!(std_normal_cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(std_normal_cdf(f64::INFINITY), 1.0);
    }

    #[test]
    fn quantile_fixed_points() {
        assert_eq!(std_normal_quantile(0.5), 0.0);
        assert_eq!(std_normal_quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(std_normal_quantile(1.0), f64::INFINITY);
        assert!(std_normal_quantile(1.5).is_nan());
        assert!(std_normal_quantile(-0.1).is_nan());
    }

    #[test]
    fn quantile_is_antisymmetric() {
        // dyadic p so that 1 - p is exact
        for &p in &[2f64.powi(-40), 2f64.powi(-20), 0.125, 0.25, 0.375] {
            assert_eq!(std_normal_quantile(p), -std_normal_quantile(1.0 - p));
        }
    }

    #[test]
    fn expand_edge_cases() {
        let p = Probability::new(0.3).unwrap();
        assert_eq!(isoperimetric_expand(p, 0.0).unwrap().value(), 0.3);
        assert_eq!(isoperimetric_expand(Probability::ONE, 5.0).unwrap().value(), 1.0);
        assert_eq!(isoperimetric_expand(Probability::ZERO, 5.0).unwrap().value(), 0.0);
        assert!(isoperimetric_expand(p, -0.1).is_err());
        assert!(isoperimetric_expand(p, f64::NAN).is_err());
    }

    #[test]
    fn probability_rejects_out_of_range() {
        assert!(Probability::new(1.0 + 1e-15).is_err());
        assert!(Probability::new(-0.0).is_ok());
        assert!(Probability::new(f64::NAN).is_err());
        assert_eq!(Probability::clamped(1.2).value(), 1.0);
    }

    #[test]
    fn gaussian_rejects_zero_dim() {
        let mut rng = RngStream::new(1, 0).rng();
        assert!(sample_std_gaussian(0, &mut rng).is_err());
    }

    #[test]
    fn ball_rejects_bad_radius() {
        let mut rng = RngStream::new(1, 0).rng();
        assert!(sample_uniform_ball(&[0.0, 0.0], 0.0, &mut rng).is_err());
        assert!(sample_uniform_ball(&[0.0, 0.0], -1.0, &mut rng).is_err());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = sample_std_gaussian(5, &mut RngStream::new(7, 3).rng()).unwrap();
        let b = sample_std_gaussian(5, &mut RngStream::new(7, 3).rng()).unwrap();
        let c = sample_std_gaussian(5, &mut RngStream::new(7, 4).rng()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let parent = RngStream::new(7, 3);
        assert_ne!(parent.child(0), parent.child(1));
        assert_eq!(parent.child(9), parent.child(9));
    }
}
