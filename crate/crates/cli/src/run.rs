//! The experiment pipeline: model → Lipschitz constants → classifiers →
//! attacks → risk estimates → bounds, and the files it emits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use isorobust::bounds::{
    adv_risk_lower_bound, bound_curve, robustness_upper_bound, write_curve_csv, AdvRiskBoundInput, BoundParams,
    ClassifierFamily, CurveRow, CURVE_CSV_HEADER,
};
use isorobust::classify::{train, Classifier};
use isorobust::gaussian::RngStream;
use isorobust::genmodel::ConditionalModel;
use isorobust::lipschitz::{estimate_all_classes, CSV_HEADER as LIPSCHITZ_CSV_HEADER};
use isorobust::risk::{adv_risk_on_samples, in_adv_risk_on_samples, risk_on_samples, RiskEstimate, REPORT_CSV_HEADER};
use isorobust::Error;

use crate::config::{ClassifierSpec, ExperimentConfig, LipschitzSource, ModelSource};
use crate::presets::{self, LipschitzTable};

const EVAL_STREAM: u64 = 0xe7a1;

pub const LIPSCHITZ_FILE: &str = "lipschitz.csv";
pub const BOUNDS_FILE: &str = "bounds.csv";
pub const ROBUSTNESS_FILE: &str = "robustness.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const GNUPLOT_FILE: &str = "bounds.gp";

/// Reads a config from `arg`, which is either a file or a preset name.
pub fn load_config(arg: &str) -> Result<ExperimentConfig> {
    let path = Path::new(arg);
    let text = if path.is_file() {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
    } else if let Some(text) = presets::preset_config(arg) {
        text.to_string()
    } else {
        let known: Vec<&str> = presets::preset_names().collect();
        bail!("`{arg}` is neither a config file nor a preset ({})", known.join(", "));
    };
    ExperimentConfig::parse(&text).with_context(|| format!("in config `{arg}`"))
}

pub fn load_model(source: &ModelSource) -> Result<ConditionalModel> {
    match source {
        ModelSource::Synthetic(spec) => Ok(spec.build()?),
        ModelSource::File(path) => {
            ConditionalModel::load(path).with_context(|| format!("loading model {}", path.display()))
        }
    }
}

/// Per-class Lipschitz constants with the settings they were produced under.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzResult {
    pub per_class: Vec<f64>,
    pub radius: f64,
    pub delta: f64,
    /// `(S, N, seed)` when estimated in this run.
    pub estimator: Option<(usize, usize, u64)>,
    pub source: String,
}

impl LipschitzResult {
    pub fn l_max(&self) -> f64 {
        self.per_class.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn csv(&self) -> String {
        let mut s = format!("{LIPSCHITZ_CSV_HEADER}\n");
        for (i, l) in self.per_class.iter().enumerate() {
            let (samples, neighbors, seed) = match self.estimator {
                Some((a, b, c)) => (a.to_string(), b.to_string(), c.to_string()),
                None => Default::default(),
            };
            let _ = writeln!(s, "{i},{l},{},{},{samples},{neighbors},{seed}", self.radius, self.delta);
        }
        s
    }
}

fn resolve_lipschitz(source: &LipschitzSource, model: Option<&ConditionalModel>) -> Result<LipschitzResult> {
    let table = |t: LipschitzTable, radius, delta, source: String| LipschitzResult {
        per_class: t.values,
        radius,
        delta,
        estimator: None,
        source,
    };
    Ok(match source {
        LipschitzSource::Estimate(cfg) => {
            let model = model.context("estimating Lipschitz constants needs a model")?;
            let est = estimate_all_classes(model, cfg)?;
            LipschitzResult {
                per_class: est.per_class(),
                radius: cfg.radius,
                delta: cfg.delta,
                estimator: Some((cfg.samples, cfg.neighbors, cfg.seed)),
                source: "estimate".into(),
            }
        }
        LipschitzSource::Preset(name) => {
            let text = presets::lipschitz_table(name).with_context(|| format!("unknown preset table `{name}`"))?;
            // the embedded tables were estimated with r = 0.5, δ = 0.001
            table(LipschitzTable::read(text.as_bytes())?, 0.5, 0.001, format!("preset:{name}"))
        }
        LipschitzSource::File { path, radius, delta } => {
            let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let t = LipschitzTable::read(file).with_context(|| format!("reading {}", path.display()))?;
            table(t, *radius, *delta, format!("file:{}", path.display()))
        }
        LipschitzSource::Values { values, radius, delta } => LipschitzResult {
            per_class: values.clone(),
            radius: *radius,
            delta: *delta,
            estimator: None,
            source: "values".into(),
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub params: BoundParams,
    pub row: CurveRow,
    /// Part of the α sweep rather than a configured α.
    pub sweep: bool,
}

/// Estimates for one classifier at one budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub eps: f64,
    pub adv: Option<RiskEstimate>,
    pub in_adv: Option<RiskEstimate>,
    /// Lower bound on the in-distribution adversarial risk given the measured
    /// per-class risks; `None` when `r · L_i < ε` for some class.
    pub adv_risk_floor: Option<f64>,
    /// Robustness bound of the configured family at the measured `α`.
    pub bound_at_measured: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierResult {
    pub id: String,
    pub risk: RiskEstimate,
    /// Overall risk for the total-risk family, smallest per-class risk for
    /// the per-class family.
    pub measured_alpha: f64,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub snapshot: String,
    pub model_summary: Option<String>,
    pub lipschitz: LipschitzResult,
    pub priors: Vec<f64>,
    pub bound_delta: f64,
    pub bounds: Vec<BoundRow>,
    pub classifiers: Vec<ClassifierResult>,
    /// Output files in write order, as (file name, contents).
    pub files: Vec<(String, String)>,
}

impl RunReport {
    /// Configured-α bound values for `eps`, in `bound.alpha` order.
    pub fn bounds_at(&self, eps: f64) -> Vec<f64> {
        self.bounds
            .iter()
            .filter(|b| !b.sweep && b.params.eps == eps)
            .map(|b| b.row.bound.raw)
            .collect()
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }
}

fn build_classifier(spec: &ClassifierSpec, model: &ConditionalModel) -> Result<Classifier> {
    let f = match spec {
        ClassifierSpec::Halfspace { w, b } => Classifier::halfspace(w.clone(), *b)?,
        ClassifierSpec::Constant { class } => Classifier::constant(*class, model.num_classes(), model.output_dim())?,
        ClassifierSpec::File(path) => Classifier::load(path).with_context(|| format!("loading {}", path.display()))?,
        ClassifierSpec::Trained { arch, train: cfg } => train(arch, model, cfg)?.classifier,
    };
    if f.input_dim() != model.output_dim() || f.num_classes() != model.num_classes() {
        bail!(
            "classifier takes {} inputs / {} classes but the model emits {} dims / {} classes",
            f.input_dim(),
            f.num_classes(),
            model.output_dim(),
            model.num_classes()
        );
    }
    Ok(f)
}

fn family_alpha(family: ClassifierFamily, risk: &RiskEstimate) -> f64 {
    match family {
        ClassifierFamily::TotalRisk => risk.value,
        ClassifierFamily::PerClassRisk => risk.per_class_rates().into_iter().fold(f64::INFINITY, f64::min),
    }
}

/// Runs the whole pipeline in memory; nothing is written.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunReport> {
    let model = cfg.model.as_ref().map(load_model).transpose()?;
    let lipschitz = resolve_lipschitz(&cfg.lipschitz, model.as_ref())?;
    if let Some(m) = &model {
        if m.num_classes() != lipschitz.per_class.len() {
            bail!(
                "model has {} classes but {} Lipschitz constants were given",
                m.num_classes(),
                lipschitz.per_class.len()
            );
        }
    }
    let priors = match (&cfg.bound.priors, &model) {
        (Some(p), _) => p.clone(),
        (None, Some(m)) => m.priors().to_vec(),
        (None, None) => vec![1.0 / lipschitz.per_class.len() as f64; lipschitz.per_class.len()],
    };
    let bound_delta = cfg.bound.delta.unwrap_or(lipschitz.delta);
    let l_max = lipschitz.l_max();
    let params_at = |eps: f64, alpha: f64| BoundParams {
        family: cfg.bound.variant,
        alpha,
        eps,
        delta: bound_delta,
        l_max,
        priors: priors.clone(),
    };

    let mut bounds = Vec::new();
    for &eps in &cfg.eps {
        for &alpha in &cfg.bound.alphas {
            let params = params_at(eps, alpha);
            let bound = robustness_upper_bound(&params).with_context(|| format!("bound at eps {eps}, alpha {alpha}"))?;
            bounds.push(BoundRow {
                params,
                row: CurveRow { alpha, bound },
                sweep: false,
            });
        }
    }
    if let Some(sw) = &cfg.bound.sweep {
        for &eps in &cfg.eps {
            let params = params_at(eps, sw.min);
            for row in bound_curve(&params, sw.min, sw.max, sw.steps).context("alpha sweep")? {
                bounds.push(BoundRow {
                    params: BoundParams {
                        alpha: row.alpha,
                        ..params.clone()
                    },
                    row,
                    sweep: true,
                });
            }
        }
    }

    let mut classifiers = Vec::new();
    if let Some(model) = &model {
        let samples = model.sample_many(cfg.eval.n, RngStream::new(cfg.seed, EVAL_STREAM))?;
        let k = model.num_classes();
        for (id, spec) in &cfg.classifiers {
            let f = build_classifier(spec, model).with_context(|| format!("classifier `{id}`"))?;
            let risk = risk_on_samples(&f, &samples, k)?;
            let measured_alpha = family_alpha(cfg.bound.variant, &risk);
            let cells = cfg
                .eps
                .par_iter()
                .map(|&eps| -> Result<Cell> {
                    let adv = match &cfg.eval.pgd {
                        Some(p) => Some(adv_risk_on_samples(&f, &samples, &p.for_eps(eps, cfg.seed), k)?),
                        None => None,
                    };
                    let in_adv = match &cfg.eval.manifold {
                        Some(m) => Some(in_adv_risk_on_samples(&f, model, &samples, &isorobust::attacks::ManifoldAttackConfig { eps, ..*m })?),
                        None => None,
                    };
                    let floor = adv_risk_lower_bound(&AdvRiskBoundInput {
                        risks: risk.per_class_rates(),
                        lipschitz: lipschitz.per_class.clone(),
                        priors: model.priors().to_vec(),
                        eps,
                        delta: lipschitz.delta,
                        radius: Some(lipschitz.radius),
                    });
                    let adv_risk_floor = match floor {
                        Ok(b) => Some(b.raw),
                        Err(Error::LipschitzHypothesis { .. }) => None,
                        Err(e) => return Err(e.into()),
                    };
                    let bound_at_measured = if measured_alpha > 0.0 {
                        robustness_upper_bound(&params_at(eps, measured_alpha)).ok().map(|b| b.raw)
                    } else {
                        None
                    };
                    Ok(Cell {
                        eps,
                        adv,
                        in_adv,
                        adv_risk_floor,
                        bound_at_measured,
                    })
                })
                .collect::<Result<Vec<_>>>()
                .with_context(|| format!("evaluating classifier `{id}`"))?;
            classifiers.push(ClassifierResult {
                id: id.clone(),
                risk,
                measured_alpha,
                cells,
            });
        }
    }

    let model_summary = model.as_ref().map(|m| {
        format!(
            "{} classes, latent dim {}, output dim {}",
            m.num_classes(),
            m.latent_dim(),
            m.output_dim()
        )
    });
    let mut report = RunReport {
        config: cfg.clone(),
        snapshot: cfg.snapshot(),
        model_summary,
        lipschitz,
        priors,
        bound_delta,
        bounds,
        classifiers,
        files: Vec::new(),
    };
    report.files = render_files(&report);
    Ok(report)
}

fn bounds_csv(report: &RunReport) -> String {
    let mut out = format!("{CURVE_CSV_HEADER}\n").into_bytes();
    for b in &report.bounds {
        write_curve_csv(&b.params, std::slice::from_ref(&b.row), false, &mut out).expect("writing to memory");
    }
    String::from_utf8(out).expect("csv is ascii")
}

fn robustness_csv(report: &RunReport) -> String {
    let cfg = &report.config;
    let mut out = format!("{REPORT_CSV_HEADER}\n").into_bytes();
    let mut row = |quantity: &str, est: &RiskEstimate, eps: f64, id: &str| {
        est.write_csv_row(quantity, eps, id, &cfg.model_id, cfg.seed, &mut out)
            .expect("writing to memory");
    };
    for c in &report.classifiers {
        row("risk", &c.risk, 0.0, &c.id);
        for cell in &c.cells {
            if let Some(adv) = &cell.adv {
                row("adv_risk", adv, cell.eps, &c.id);
            }
            if let Some(in_adv) = &cell.in_adv {
                row("in_adv_risk", in_adv, cell.eps, &c.id);
            }
        }
    }
    String::from_utf8(out).expect("csv is ascii")
}

fn pct(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

fn report_txt(report: &RunReport, files: &[&str]) -> String {
    let cfg = &report.config;
    let mut s = String::new();
    let mut line = |text: String| {
        let _ = writeln!(s, "# {text}");
    };
    line("isorobust run report".into());
    match (&cfg.model, &report.model_summary) {
        (Some(_), Some(summary)) => line(format!("model {}: {summary}", cfg.model_id)),
        _ => line("model: none (bounds only)".into()),
    }
    let l = &report.lipschitz;
    let values: Vec<String> = l.per_class.iter().map(|v| format!("{v:.4}")).collect();
    line(format!("lipschitz ({}, r = {}, delta = {}): {}", l.source, l.radius, l.delta, values.join(" ")));
    line(format!("L_max = {}", l.l_max()));
    line(format!(
        "bound family {} with delta = {}, priors {}",
        cfg.bound.variant,
        report.bound_delta,
        report.priors.iter().map(|p| format!("{p:.4}")).collect::<Vec<_>>().join(" ")
    ));
    line(String::new());

    line("robustness (1 - risk); attack columns are upper estimates since attacks only find some adversarial examples".into());
    let mut header = format!("{:<32} {:>8}", "method", "natural");
    for e in &cfg.eps {
        let _ = write!(header, " {:>9}", format!("eps={e}"));
    }
    line(header);
    for c in &report.classifiers {
        let table_row = |label: String, pick: &dyn Fn(&Cell) -> Option<f64>| {
            let mut r = format!("{label:<32} {:>8}", pct(1.0 - c.risk.value));
            for cell in &c.cells {
                let v = pick(cell).map(pct).unwrap_or_else(|| "-".into());
                let _ = write!(r, " {v:>9}");
            }
            r
        };
        if cfg.eval.pgd.is_some() {
            line(table_row(format!("{} (pgd)", c.id), &|cell| cell.adv.as_ref().map(|e| 1.0 - e.value)));
        }
        if cfg.eval.manifold.is_some() {
            line(table_row(format!("{} (on-manifold)", c.id), &|cell| cell.in_adv.as_ref().map(|e| 1.0 - e.value)));
        }
        line(table_row(format!("{} bound @ alpha={:.4}", c.id, c.measured_alpha), &|cell| cell.bound_at_measured.map(|b| b.clamp(0.0, 1.0))));
    }
    for &alpha in &cfg.bound.alphas {
        let mut r = format!("{:<32} {:>8}", format!("bound @ alpha={alpha}"), "-");
        for e in &cfg.eps {
            let v = report
                .bounds
                .iter()
                .find(|b| !b.sweep && b.params.eps == *e && b.row.alpha == alpha)
                .map(|b| pct(b.row.bound.clamped()))
                .unwrap_or_else(|| "-".into());
            let _ = write!(r, " {v:>9}");
        }
        line(r);
    }
    if report.classifiers.iter().any(|c| c.cells.iter().any(|cell| cell.adv_risk_floor.is_some())) {
        line(String::new());
        line("in-distribution adversarial risk: measured vs lower bound from per-class risks".into());
        for c in &report.classifiers {
            for cell in &c.cells {
                let measured = cell.in_adv.as_ref().map(|e| format!("{:.4} +- {:.4}", e.value, e.std_error));
                let floor = cell.adv_risk_floor.map(|f| format!("{f:.4}"));
                line(format!(
                    "{} eps={}: measured {} floor {}",
                    c.id,
                    cell.eps,
                    measured.unwrap_or_else(|| "-".into()),
                    floor.unwrap_or_else(|| "n/a (r*L < eps)".into())
                ));
            }
        }
    }
    line(String::new());
    line(format!("files: {}", files.join(" ")));
    line(String::new());
    line("resolved configuration; rerun with `isorobust run report.txt`".into());
    s.push_str(&report.snapshot);
    s
}

fn gnuplot_script(report: &RunReport) -> String {
    let eps: Vec<String> = report.config.eps.iter().map(ToString::to_string).collect();
    let mut s = String::new();
    let _ = writeln!(s, "# robustness bound against tolerated risk alpha, one curve per budget");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set xlabel 'alpha'");
    let _ = writeln!(s, "set ylabel 'robustness bound'");
    let _ = writeln!(s, "set yrange [0:1]");
    let _ = writeln!(s, "budgets = \"{}\"", eps.join(" "));
    let _ = writeln!(
        s,
        "plot for [e in budgets] '{BOUNDS_FILE}' every ::1 using 1:($5 == e+0 ? $3 : 1/0) with linespoints title sprintf('eps = %s', e)"
    );
    s
}

fn render_files(report: &RunReport) -> Vec<(String, String)> {
    let mut names = vec![LIPSCHITZ_FILE, BOUNDS_FILE, ROBUSTNESS_FILE, REPORT_FILE];
    if report.config.gnuplot {
        names.push(GNUPLOT_FILE);
    }
    let mut files = vec![
        (LIPSCHITZ_FILE.to_string(), report.lipschitz.csv()),
        (BOUNDS_FILE.to_string(), bounds_csv(report)),
        (ROBUSTNESS_FILE.to_string(), robustness_csv(report)),
        (REPORT_FILE.to_string(), report_txt(report, &names)),
    ];
    if report.config.gnuplot {
        files.push((GNUPLOT_FILE.to_string(), gnuplot_script(report)));
    }
    files
}

/// Writes the report's files into `dir`. On failure every file written so far
/// (and `dir`, if this call created it) is removed again.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let created = !dir.exists();
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for (name, contents) in &report.files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, contents) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            if created {
                let _ = fs::remove_dir(dir);
            }
            return Err(e).with_context(|| format!("writing {}", path.display()));
        }
        written.push(path);
    }
    Ok(written)
}

/// Executes `cfg` and writes its outputs to `dir`.
pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<(RunReport, Vec<PathBuf>)> {
    let report = execute(cfg)?;
    let manifest = write_outputs(&report, dir)?;
    Ok((report, manifest))
}
