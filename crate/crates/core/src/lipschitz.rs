//! Sampled local Lipschitz estimation over the Gaussian latent measure.
//!
//! For each of `S` latent draws `z_i ~ N(0, I_d)` the estimator takes the
//! largest stretch ratio `‖g(ẑ) − g(z_i)‖ / ‖ẑ − z_i‖` over `N` neighbors
//! drawn uniformly from the solid ball `B_r(z_i)`, then reports the
//! nearest-rank `(1 − δ)`-percentile of those `S` maxima. Random sampling
//! can only miss the worst direction, so the result underestimates the true
//! local constant.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{sample_std_gaussian, sample_uniform_ball, RngStream};
use crate::genmodel::{ConditionalModel, Generator};
use crate::linalg::norm;

pub const CSV_HEADER: &str = "class,L,r,delta,S,N,seed";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzConfig {
    /// Outer latent samples `S`.
    pub samples: usize,
    /// Neighbors per sample `N`.
    pub neighbors: usize,
    /// Latent ball radius `r`.
    pub radius: f64,
    /// Exception probability `δ ∈ (0, 1]`.
    pub delta: f64,
    pub seed: u64,
}

impl Default for LipschitzConfig {
    fn default() -> Self {
        LipschitzConfig {
            samples: 1000,
            neighbors: 2000,
            radius: 0.5,
            delta: 0.001,
            seed: 0,
        }
    }
}

impl LipschitzConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::param("S", "sample count must be >= 1"));
        }
        if self.neighbors == 0 {
            return Err(Error::param("N", "neighbor count must be >= 1"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::param("r", format!("radius must be positive, got {}", self.radius)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::param("delta", format!("must lie in (0, 1], got {}", self.delta)));
        }
        Ok(())
    }

    /// One-based nearest-rank index `ceil((1 − δ) S)`, clamped to `[1, S]`.
    pub fn percentile_rank(&self) -> usize {
        let raw = (1.0 - self.delta) * self.samples as f64;
        // absorb representation error, e.g. (1 - 0.001) * 1000 = 999.0000000000001
        let rank = (raw - 1e-9).ceil();
        (rank.max(1.0) as usize).min(self.samples)
    }
}

/// Result for one generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassLipschitz {
    pub value: f64,
    /// Per-sample maxima `L_i`, in sample order.
    pub sample_maxima: Vec<f64>,
}

/// Estimates `L(r)` for a single generator. `class` selects the stream family
/// so that different classes of one model draw independent samples.
pub fn estimate_local_lipschitz(g: &Generator, cfg: &LipschitzConfig, class: usize) -> Result<ClassLipschitz> {
    cfg.validate()?;
    let base = RngStream::new(cfg.seed, class as u64);
    let maxima = (0..cfg.samples)
        .into_par_iter()
        .map(|i| sample_maximum(g, cfg, base.child(i as u64)))
        .collect::<Result<Vec<f64>>>()?;
    let mut sorted = maxima.clone();
    sorted.sort_by(f64::total_cmp);
    let value = sorted[cfg.percentile_rank() - 1];
    Ok(ClassLipschitz {
        value,
        sample_maxima: maxima,
    })
}

fn sample_maximum(g: &Generator, cfg: &LipschitzConfig, stream: RngStream) -> Result<f64> {
    let mut rng = stream.rng();
    let z = sample_std_gaussian(g.latent_dim(), &mut rng)?;
    let mut best = 0.0f64;
    for _ in 0..cfg.neighbors {
        let (z_hat, dz) = loop {
            let z_hat = sample_uniform_ball(&z, cfg.radius, &mut rng)?;
            let dz = crate::linalg::distance(&z_hat, &z);
            if dz > 0.0 {
                break (z_hat, dz);
            }
        };
        let ratio = norm(&g.displacement(&z, &z_hat)?) / dz;
        if !ratio.is_finite() {
            return Err(Error::NonFinite("stretch ratio".into()));
        }
        best = best.max(ratio);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate {
    pub config: LipschitzConfig,
    pub classes: Vec<ClassLipschitz>,
}

impl LipschitzEstimate {
    pub fn per_class(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.value).collect()
    }

    /// `L_max(r) = max_i L_i(r)`.
    pub fn l_max(&self) -> f64 {
        self.classes.iter().map(|c| c.value).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for (i, c) in self.classes.iter().enumerate() {
            let cfg = &self.config;
            writeln!(
                out,
                "{i},{},{},{},{},{},{}",
                c.value, cfg.radius, cfg.delta, cfg.samples, cfg.neighbors, cfg.seed
            )?;
        }
        Ok(())
    }
}

/// Runs the estimator on every class generator.
pub fn estimate_all_classes(model: &ConditionalModel, cfg: &LipschitzConfig) -> Result<LipschitzEstimate> {
    let classes = model
        .generators()
        .iter()
        .enumerate()
        .map(|(i, g)| estimate_local_lipschitz(g, cfg, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(LipschitzEstimate { config: *cfg, classes })
}

/// Mean and sample standard deviation over repeated trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepeatedEstimate {
    pub mean: f64,
    pub std_dev: f64,
}

/// Repeats [`estimate_all_classes`] with seeds `cfg.seed, cfg.seed + 1, ...`
/// and summarises each class as mean ± standard deviation.
pub fn repeat_estimates(model: &ConditionalModel, cfg: &LipschitzConfig, trials: usize) -> Result<Vec<RepeatedEstimate>> {
    if trials == 0 {
        return Err(Error::param("trials", "must be >= 1"));
    }
    let runs = (0..trials)
        .map(|t| {
            let cfg = LipschitzConfig {
                seed: cfg.seed.wrapping_add(t as u64),
                ..*cfg
            };
            estimate_all_classes(model, &cfg).map(|e| e.per_class())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..model.num_classes())
        .map(|k| {
            let vals: Vec<f64> = runs.iter().map(|r| r[k]).collect();
            let mean = vals.iter().sum::<f64>() / trials as f64;
            let var = if trials > 1 {
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64
            } else {
                0.0
            };
            RepeatedEstimate {
                mean,
                std_dev: var.sqrt(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genmodel::SyntheticSpec;

    #[test]
    fn percentile_rank_matches_nearest_rank_rule() {
        let cfg = LipschitzConfig::default();
        assert_eq!(cfg.percentile_rank(), 999);
        assert_eq!(LipschitzConfig { delta: 1.0, ..cfg }.percentile_rank(), 1);
        assert_eq!(LipschitzConfig { delta: 1e-9, ..cfg }.percentile_rank(), 1000);
        assert_eq!(LipschitzConfig { samples: 10, delta: 0.25, ..cfg }.percentile_rank(), 8);
    }

    #[test]
    fn invalid_configs_rejected() {
        let ok = LipschitzConfig::default();
        for bad in [
            LipschitzConfig { samples: 0, ..ok },
            LipschitzConfig { neighbors: 0, ..ok },
            LipschitzConfig { radius: 0.0, ..ok },
            LipschitzConfig { delta: 0.0, ..ok },
            LipschitzConfig { delta: 1.5, ..ok },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn delta_one_takes_minimum_and_tiny_delta_maximum() {
        let model: ConditionalModel = "mlp-random:layers=2-6-3,act=tanh,k=1,seed=2"
            .parse::<SyntheticSpec>()
            .unwrap()
            .build()
            .unwrap();
        let cfg = LipschitzConfig {
            samples: 40,
            neighbors: 30,
            delta: 1.0,
            seed: 5,
            ..Default::default()
        };
        let lo = estimate_local_lipschitz(model.generator(0), &cfg, 0).unwrap();
        let min = lo.sample_maxima.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(lo.value, min);
        let hi = estimate_local_lipschitz(model.generator(0), &LipschitzConfig { delta: 1e-6, ..cfg }, 0).unwrap();
        let max = hi.sample_maxima.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(hi.value, max);
        assert_eq!(lo.sample_maxima, hi.sample_maxima);
    }

    #[test]
    fn csv_has_one_row_per_class() {
        let model = SyntheticSpec::ShiftedIdentity { c: 1.0, d: 2 }.build().unwrap();
        let cfg = LipschitzConfig {
            samples: 5,
            neighbors: 5,
            seed: 1,
            ..Default::default()
        };
        let est = estimate_all_classes(&model, &cfg).unwrap();
        let mut buf = Vec::new();
        est.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "0,1,0.5,0.001,5,5,1");
        assert_eq!(lines.len(), 3);
    }
}
