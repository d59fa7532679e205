//! Single-stage subcommands: direct bound evaluation, Lipschitz estimation,
//! training, attacks and risk evaluation.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use isorobust::attacks::{ManifoldAttackConfig, PgdConfig, TRACE_CSV_HEADER};
use isorobust::bounds::{bound_curve, robustness_upper_bound, write_curve_csv, BoundParams, ClassifierFamily, CurveRow, CURVE_CSV_HEADER};
use isorobust::classify::{train, Architecture, Classifier, TrainConfig, TrainedClassifier};
use isorobust::gaussian::RngStream;
use isorobust::genmodel::{ConditionalModel, SyntheticSpec};
use isorobust::lipschitz::{estimate_all_classes, repeat_estimates, LipschitzConfig};
use isorobust::risk::{
    adv_risk_on_samples, in_adv_risk_on_samples, manifold_outcomes, pgd_outcomes, risk_on_samples, REPORT_CSV_HEADER,
};

use crate::config::parse_f64_list;

const SAMPLE_STREAM: u64 = 0xe7a1;

/// A model file if `arg` names an existing file, otherwise a synthetic spec.
pub fn load_model_arg(arg: &str) -> Result<ConditionalModel> {
    let path = Path::new(arg);
    if path.is_file() {
        return ConditionalModel::load(path).with_context(|| format!("loading model {}", path.display()));
    }
    let spec: SyntheticSpec = arg
        .parse()
        .with_context(|| format!("`{arg}` is neither a model file nor a synthetic model spec"))?;
    Ok(spec.build()?)
}

/// `uniform:K` or a comma-separated list.
pub fn parse_priors(arg: &str) -> Result<Vec<f64>> {
    if let Some(k) = arg.strip_prefix("uniform:") {
        let k: usize = k.trim().parse().with_context(|| format!("bad class count in `{arg}`"))?;
        if k == 0 {
            bail!("need at least one class");
        }
        return Ok(vec![1.0 / k as f64; k]);
    }
    parse_f64_list(arg).map_err(anyhow::Error::msg)
}

pub fn parse_list(arg: &str) -> Result<Vec<f64>> {
    parse_f64_list(arg).map_err(anyhow::Error::msg)
}

/// The classifier given on the command line: a saved file or a halfspace.
pub fn resolve_classifier(file: Option<&Path>, halfspace: Option<&str>, bias: f64) -> Result<Classifier> {
    match (file, halfspace) {
        (Some(p), None) => Classifier::load(p).with_context(|| format!("loading classifier {}", p.display())),
        (None, Some(w)) => Ok(Classifier::halfspace(parse_list(w)?, bias)?),
        _ => bail!("give exactly one of --classifier FILE or --halfspace W"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundArgs {
    pub variant: ClassifierFamily,
    pub alphas: Vec<f64>,
    pub eps: Vec<f64>,
    pub delta: f64,
    pub l_max: f64,
    pub priors: Vec<f64>,
    /// `(alpha_min, alpha_max, steps)`; replaces `alphas` when set.
    pub sweep: Option<(f64, f64, usize)>,
}

/// Evaluates the robustness bound and returns one row per (ε, α).
pub fn bound_rows(args: &BoundArgs) -> Result<Vec<(BoundParams, CurveRow)>> {
    let mut rows = Vec::new();
    for &eps in &args.eps {
        let params = |alpha| BoundParams {
            family: args.variant,
            alpha,
            eps,
            delta: args.delta,
            l_max: args.l_max,
            priors: args.priors.clone(),
        };
        match args.sweep {
            Some((lo, hi, steps)) => {
                for row in bound_curve(&params(lo), lo, hi, steps)? {
                    rows.push((params(row.alpha), row));
                }
            }
            None => {
                for &alpha in &args.alphas {
                    let p = params(alpha);
                    let bound = robustness_upper_bound(&p)?;
                    rows.push((p, CurveRow { alpha, bound }));
                }
            }
        }
    }
    Ok(rows)
}

pub fn bound<W: Write>(args: &BoundArgs, mut out: W) -> Result<()> {
    writeln!(out, "{CURVE_CSV_HEADER}")?;
    for (params, row) in bound_rows(args)? {
        write_curve_csv(&params, &[row], false, &mut out)?;
    }
    Ok(())
}

pub fn lipschitz<W: Write>(model: &ConditionalModel, cfg: &LipschitzConfig, trials: usize, mut out: W) -> Result<()> {
    if trials <= 1 {
        estimate_all_classes(model, cfg)?.write_csv(out)?;
    } else {
        writeln!(out, "class,mean,std,trials,r,delta,S,N,seed")?;
        for (i, e) in repeat_estimates(model, cfg, trials)?.iter().enumerate() {
            writeln!(
                out,
                "{i},{},{},{trials},{},{},{},{},{}",
                e.mean, e.std_dev, cfg.radius, cfg.delta, cfg.samples, cfg.neighbors, cfg.seed
            )?;
        }
    }
    Ok(())
}

pub fn train_and_save(model: &ConditionalModel, arch: &Architecture, cfg: &TrainConfig, path: &Path) -> Result<TrainedClassifier> {
    let trained = train(arch, model, cfg)?;
    trained
        .classifier
        .save(path)
        .with_context(|| format!("saving classifier to {}", path.display()))?;
    Ok(trained)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Pgd,
    Manifold,
}

impl std::str::FromStr for AttackKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgd" => Ok(AttackKind::Pgd),
            "manifold" => Ok(AttackKind::Manifold),
            other => bail!("unknown attack `{other}` (pgd or manifold)"),
        }
    }
}

/// Attacks `n` fresh samples and writes one trace row per sample.
pub fn attack<W: Write>(
    model: &ConditionalModel,
    f: &Classifier,
    kind: AttackKind,
    eps: f64,
    n: usize,
    seed: u64,
    mut out: W,
) -> Result<(usize, usize)> {
    let samples = model.sample_many(n, RngStream::new(seed, SAMPLE_STREAM))?;
    let (outcomes, name) = match kind {
        AttackKind::Pgd => (pgd_outcomes(f, &samples, &PgdConfig { seed, ..PgdConfig::for_eps(eps) })?, "pgd"),
        AttackKind::Manifold => {
            let cfg = ManifoldAttackConfig {
                eps,
                seed,
                ..Default::default()
            };
            (manifold_outcomes(f, model, &samples, &cfg)?, "manifold")
        }
    };
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for (i, o) in outcomes.iter().enumerate() {
        o.write_csv_row(i, name, &mut out)?;
    }
    let successes = outcomes.iter().filter(|o| o.success).count();
    Ok((successes, outcomes.len()))
}

pub struct EvalArgs<'a> {
    pub model: &'a ConditionalModel,
    pub model_id: &'a str,
    pub classifier: &'a Classifier,
    pub classifier_id: &'a str,
    pub eps: &'a [f64],
    pub n: usize,
    pub seed: u64,
    pub pgd: bool,
    pub manifold: bool,
}

/// Risk and attack-based risk estimates in the report CSV schema.
pub fn eval<W: Write>(args: &EvalArgs, mut out: W) -> Result<()> {
    let k = args.model.num_classes();
    let samples = args.model.sample_many(args.n, RngStream::new(args.seed, SAMPLE_STREAM))?;
    writeln!(out, "{REPORT_CSV_HEADER}")?;
    let row = |q: &str, e: &isorobust::risk::RiskEstimate, eps: f64, out: &mut W| {
        e.write_csv_row(q, eps, args.classifier_id, args.model_id, args.seed, out)
    };
    row("risk", &risk_on_samples(args.classifier, &samples, k)?, 0.0, &mut out)?;
    for &eps in args.eps {
        if args.pgd {
            let cfg = PgdConfig {
                seed: args.seed,
                ..PgdConfig::for_eps(eps)
            };
            row("adv_risk", &adv_risk_on_samples(args.classifier, &samples, &cfg, k)?, eps, &mut out)?;
        }
        if args.manifold {
            let cfg = ManifoldAttackConfig {
                eps,
                seed: args.seed,
                ..Default::default()
            };
            row("in_adv_risk", &in_adv_risk_on_samples(args.classifier, args.model, &samples, &cfg)?, eps, &mut out)?;
        }
    }
    Ok(())
}

pub fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
