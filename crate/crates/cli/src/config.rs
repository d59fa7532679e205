//! Experiment configuration: a flat `key = value` text format with dotted
//! section prefixes (`lipschitz.S = 1000`). `#` starts a comment.
//!
//! Every key is resolved against a default, so a parsed config can be written
//! back as a complete snapshot ([`ExperimentConfig::snapshot`]) that parses
//! to the same value.

use std::collections::{BTreeMap, BTreeSet};
use std::cell::RefCell;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use isorobust::attacks::{InitStrategy, LatentOptimizer, ManifoldAttackConfig, PgdConfig};
use isorobust::bounds::ClassifierFamily;
use isorobust::classify::{Architecture, LossKind, TrainConfig, TrainMethod};
use isorobust::genmodel::SyntheticSpec;
use isorobust::lipschitz::LipschitzConfig;
use isorobust::nn::Activation;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, &self.key) {
            (Some(line), Some(key)) => write!(f, "line {line}: key `{key}`: {}", self.message),
            (Some(line), None) => write!(f, "line {line}: {}", self.message),
            (None, Some(key)) => write!(f, "key `{key}`: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug)]
struct Entry {
    line: usize,
    value: String,
}

/// Raw key/value pairs with the line each came from. Lookups are recorded so
/// that leftover (unknown) keys can be reported.
#[derive(Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
    used: RefCell<BTreeSet<String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError {
                    line: Some(line),
                    key: None,
                    message: format!("expected `key = value`, got `{content}`"),
                });
            };
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError {
                    line: Some(line),
                    key: None,
                    message: format!("invalid key `{key}`"),
                });
            }
            if let Some(prev) = entries.get(key) {
                let prev: &Entry = prev;
                return Err(ConfigError {
                    line: Some(line),
                    key: Some(key.to_string()),
                    message: format!("duplicate key (first set on line {})", prev.line),
                });
            }
            entries.insert(
                key.to_string(),
                Entry {
                    line,
                    value: value.trim().to_string(),
                },
            );
        }
        Ok(RawConfig {
            entries,
            used: RefCell::default(),
        })
    }

    fn raw(&self, key: &str) -> Option<(&str, usize)> {
        let e = self.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some((e.value.as_str(), e.line))
    }

    fn error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.entries.get(key).map(|e| e.line),
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn string(&self, key: &str) -> Option<String> {
        self.raw(key).map(|(v, _)| v.to_string())
    }

    fn parsed<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((v, _)) => v
                .parse()
                .map(Some)
                .map_err(|e| self.error(key, format!("expected {what}, got `{v}` ({e})"))),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        let v: f64 = self.parsed(key, "a number")?.unwrap_or(default);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.error(key, "must be finite"))
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parsed(key, "a non-negative integer")?.unwrap_or(default))
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.parsed(key, "a non-negative integer")?.unwrap_or(default))
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        Ok(self.parsed(key, "true or false")?.unwrap_or(default))
    }

    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some((v, _)) = self.raw(key) else {
            return Ok(None);
        };
        parse_f64_list(v).map(Some).map_err(|m| self.error(key, m))
    }

    fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        let Some((v, _)) = self.raw(key) else {
            return Ok(None);
        };
        if v == "none" || v.is_empty() {
            return Ok(Some(Vec::new()));
        }
        v.split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| self.error(key, format!("bad integer `{}`", s.trim()))))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Keys that were never looked up, in line order.
    fn unused(&self) -> Vec<(&str, usize)> {
        let used = self.used.borrow();
        let mut out: Vec<(&str, usize)> = self
            .entries
            .iter()
            .filter(|(k, _)| !used.contains(*k))
            .map(|(k, e)| (k.as_str(), e.line))
            .collect();
        out.sort_by_key(|&(_, line)| line);
        out
    }

    /// Distinct `<id>` values among keys of the form `<prefix>.<id>.<field>`.
    fn section_ids(&self, prefix: &str) -> Vec<String> {
        let mut ids = BTreeSet::new();
        for key in self.entries.keys() {
            if let Some(rest) = key.strip_prefix(prefix).and_then(|r| r.strip_prefix('.')) {
                if let Some((id, _)) = rest.split_once('.') {
                    ids.insert(id.to_string());
                }
            }
        }
        ids.into_iter().collect()
    }
}

pub fn parse_f64_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',')
        .map(|s| {
            let s = s.trim();
            match s.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(format!("bad number `{s}` in list")),
            }
        })
        .collect()
}

fn join<T: fmt::Display>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Synthetic(SyntheticSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LipschitzSource {
    Estimate(LipschitzConfig),
    /// Embedded per-class table, by preset name.
    Preset(String),
    /// CSV file with at least `class` and `L` columns.
    File { path: PathBuf, radius: f64, delta: f64 },
    Values { values: Vec<f64>, radius: f64, delta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSweep {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSection {
    pub variant: ClassifierFamily,
    pub alphas: Vec<f64>,
    /// `None` means: the Lipschitz source's δ.
    pub delta: Option<f64>,
    /// `None` means: the model's priors, or uniform over the Lipschitz classes.
    pub priors: Option<Vec<f64>>,
    pub sweep: Option<AlphaSweep>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierSpec {
    Halfspace { w: Vec<f64>, b: f64 },
    Constant { class: usize },
    File(PathBuf),
    Trained { arch: Architecture, train: TrainConfig },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgdSection {
    /// `None` picks the per-ε default step size.
    pub step: Option<f64>,
    pub steps: usize,
    pub loss: LossKind,
    pub restarts: usize,
}

impl PgdSection {
    pub fn for_eps(&self, eps: f64, seed: u64) -> PgdConfig {
        let mut cfg = PgdConfig::for_eps(eps);
        if let Some(step) = self.step {
            cfg.step_size = step;
        }
        cfg.steps = self.steps;
        cfg.loss = self.loss;
        cfg.random_starts = self.restarts;
        cfg.seed = seed;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub n: usize,
    pub pgd: Option<PgdSection>,
    /// `eps` is filled in per cell.
    pub manifold: Option<ManifoldAttackConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub eps: Vec<f64>,
    pub model: Option<ModelSource>,
    pub model_id: String,
    pub lipschitz: LipschitzSource,
    pub bound: BoundSection,
    pub classifiers: Vec<(String, ClassifierSpec)>,
    pub eval: EvalSection,
    pub gnuplot: bool,
}

fn activation_from(raw: &RawConfig, key: &str, default: Activation) -> Result<Activation> {
    match raw.string(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|e| raw.error(key, format!("{e}"))),
    }
}

fn core_parsed<T>(raw: &RawConfig, key: &str, default: T) -> Result<T>
where
    T: FromStr<Err = isorobust::Error>,
{
    match raw.string(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|e: isorobust::Error| raw.error(key, e.to_string())),
    }
}

fn init_name(init: InitStrategy) -> &'static str {
    match init {
        InitStrategy::Optimize => "optimize",
        InitStrategy::RecordedZ => "recorded-z",
    }
}

fn optimizer_name(opt: LatentOptimizer) -> &'static str {
    match opt {
        LatentOptimizer::GradientDescent => "gd",
        LatentOptimizer::Adam => "adam",
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw = RawConfig::parse(text)?;
        let cfg = Self::from_raw(&raw)?;
        if let Some(&(key, line)) = raw.unused().first() {
            return Err(ConfigError {
                line: Some(line),
                key: Some(key.to_string()),
                message: "unknown key".into(),
            });
        }
        Ok(cfg)
    }

    fn from_raw(raw: &RawConfig) -> Result<Self> {
        let seed = raw.u64_or("seed", 0)?;
        let eps = raw
            .f64_list("eps")?
            .ok_or_else(|| raw.error("eps", "missing (need at least one budget)"))?;
        if let Some(bad) = eps.iter().find(|&&e| e < 0.0) {
            return Err(raw.error("eps", format!("budgets must be >= 0, got {bad}")));
        }

        let model = match (raw.string("model.spec"), raw.string("model.file")) {
            (Some(_), Some(_)) => return Err(raw.error("model.file", "set either model.spec or model.file, not both")),
            (Some(spec), None) => Some(ModelSource::Synthetic(
                spec.parse().map_err(|e: isorobust::Error| raw.error("model.spec", e.to_string()))?,
            )),
            (None, Some(path)) => Some(ModelSource::File(PathBuf::from(path))),
            (None, None) => None,
        };
        let model_id = match raw.string("model.id") {
            Some(id) if valid_id(&id) => id,
            Some(id) => return Err(raw.error("model.id", format!("`{id}` may only use letters, digits, `-` and `_`"))),
            None => match &model {
                Some(ModelSource::Synthetic(spec)) => spec.to_string().split(':').next().unwrap_or("model").to_string(),
                Some(ModelSource::File(p)) => p
                    .file_stem()
                    .map(|s| s.to_string_lossy().replace(|c: char| !(c.is_ascii_alphanumeric() || c == '-'), "_"))
                    .unwrap_or_else(|| "model".into()),
                None => "none".into(),
            },
        };

        let lipschitz = Self::lipschitz_from(raw, seed, model.is_some())?;
        let bound = Self::bound_from(raw)?;

        let mut classifiers = Vec::new();
        for id in raw.section_ids("classifier") {
            if !valid_id(&id) {
                return Err(raw.error(&format!("classifier.{id}.type"), format!("bad classifier id `{id}`")));
            }
            classifiers.push((id.clone(), Self::classifier_from(raw, &id, seed)?));
        }
        if !classifiers.is_empty() && model.is_none() {
            let key = format!("classifier.{}.type", classifiers[0].0);
            return Err(raw.error(&key, "classifiers need a model (model.spec or model.file)"));
        }

        let pgd = if raw.bool_or("eval.pgd", true)? {
            let step = raw.parsed::<f64>("pgd.step", "a number")?;
            if let Some(s) = step {
                if !(s > 0.0) {
                    return Err(raw.error("pgd.step", "must be positive"));
                }
            }
            let section = PgdSection {
                step,
                steps: raw.usize_or("pgd.steps", 100)?,
                loss: core_parsed(raw, "pgd.loss", LossKind::CwMargin)?,
                restarts: raw.usize_or("pgd.restarts", 0)?,
            };
            if section.steps == 0 {
                return Err(raw.error("pgd.steps", "must be >= 1"));
            }
            Some(section)
        } else {
            None
        };
        let manifold = if raw.bool_or("eval.manifold", true)? {
            let d = ManifoldAttackConfig::default();
            let m = ManifoldAttackConfig {
                eps: 1.0,
                lambda_init: raw.f64_or("manifold.lambda", d.lambda_init)?,
                rounds: raw.usize_or("manifold.rounds", d.rounds)?,
                lambda_lo: raw.f64_or("manifold.lambda_min", d.lambda_lo)?,
                lambda_hi: raw.f64_or("manifold.lambda_max", d.lambda_hi)?,
                step_size: raw.f64_or("manifold.lr", d.step_size)?,
                max_iterations: raw.usize_or("manifold.max_iterations", d.max_iterations)?,
                patience: raw.usize_or("manifold.patience", d.patience)?,
                stop_within_budget: true,
                init: core_parsed(raw, "manifold.init", d.init)?,
                loss: core_parsed(raw, "manifold.loss", d.loss)?,
                optimizer: core_parsed(raw, "manifold.optimizer", d.optimizer)?,
                seed,
            };
            m.validate().map_err(|e| raw.error("manifold.lr", e.to_string()))?;
            Some(m)
        } else {
            None
        };
        let n = raw.usize_or("eval.n", 1000)?;
        if n == 0 {
            return Err(raw.error("eval.n", "must be >= 1"));
        }

        Ok(ExperimentConfig {
            seed,
            eps,
            model,
            model_id,
            lipschitz,
            bound,
            classifiers,
            eval: EvalSection { n, pgd, manifold },
            gnuplot: raw.bool_or("output.gnuplot", false)?,
        })
    }

    fn lipschitz_from(raw: &RawConfig, seed: u64, have_model: bool) -> Result<LipschitzSource> {
        let source = raw
            .string("lipschitz.source")
            .unwrap_or_else(|| if raw.has("lipschitz.values") { "values" } else { "estimate" }.into());
        let d = LipschitzConfig::default();
        let radius = raw.f64_or("lipschitz.r", d.radius)?;
        let delta = raw.f64_or("lipschitz.delta", d.delta)?;
        if !(radius > 0.0) {
            return Err(raw.error("lipschitz.r", "must be positive"));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(raw.error("lipschitz.delta", "must lie in (0, 1]"));
        }
        if source == "estimate" {
            if !have_model {
                return Err(raw.error(
                    "lipschitz.source",
                    "estimating Lipschitz constants needs a model; set lipschitz.values or a preset instead",
                ));
            }
            let cfg = LipschitzConfig {
                samples: raw.usize_or("lipschitz.S", d.samples)?,
                neighbors: raw.usize_or("lipschitz.N", d.neighbors)?,
                radius,
                delta,
                seed: raw.u64_or("lipschitz.seed", seed)?,
            };
            cfg.validate().map_err(|e| raw.error("lipschitz.S", e.to_string()))?;
            return Ok(LipschitzSource::Estimate(cfg));
        }
        if source == "values" {
            let values = raw
                .f64_list("lipschitz.values")?
                .ok_or_else(|| raw.error("lipschitz.values", "missing"))?;
            if values.iter().any(|&l| !(l > 0.0)) {
                return Err(raw.error("lipschitz.values", "constants must be positive"));
            }
            return Ok(LipschitzSource::Values { values, radius, delta });
        }
        if let Some(name) = source.strip_prefix("preset:") {
            if crate::presets::lipschitz_table(name).is_none() {
                return Err(raw.error("lipschitz.source", format!("unknown preset table `{name}`")));
            }
            return Ok(LipschitzSource::Preset(name.to_string()));
        }
        if let Some(path) = source.strip_prefix("file:") {
            return Ok(LipschitzSource::File {
                path: PathBuf::from(path),
                radius,
                delta,
            });
        }
        Err(raw.error(
            "lipschitz.source",
            format!("unknown source `{source}` (estimate, values, preset:<name> or file:<path>)"),
        ))
    }

    fn bound_from(raw: &RawConfig) -> Result<BoundSection> {
        let variant = core_parsed(raw, "bound.variant", ClassifierFamily::PerClassRisk)?;
        let alphas = raw.f64_list("bound.alpha")?.unwrap_or_else(|| vec![0.05]);
        if let Some(bad) = alphas.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
            return Err(raw.error("bound.alpha", format!("must lie in (0, 1], got {bad}")));
        }
        let delta = raw.parsed::<f64>("bound.delta", "a number")?;
        if let Some(d) = delta {
            if !(0.0..=1.0).contains(&d) {
                return Err(raw.error("bound.delta", "must lie in [0, 1]"));
            }
        }
        let priors = match raw.string("bound.priors").as_deref() {
            None | Some("auto") => None,
            Some(v) => Some(parse_f64_list(v).map_err(|m| raw.error("bound.priors", m))?),
        };
        let sweep = match raw.f64_list("bound.sweep")? {
            None => None,
            Some(v) => {
                let ok = v.len() == 3 && v[2] >= 1.0 && v[2].fract() == 0.0 && v[0] > 0.0 && v[0] <= v[1];
                if !ok {
                    return Err(raw.error("bound.sweep", "expected `alpha_min, alpha_max, steps`"));
                }
                Some(AlphaSweep {
                    min: v[0],
                    max: v[1],
                    steps: v[2] as usize,
                })
            }
        };
        Ok(BoundSection {
            variant,
            alphas,
            delta,
            priors,
            sweep,
        })
    }

    fn classifier_from(raw: &RawConfig, id: &str, seed: u64) -> Result<ClassifierSpec> {
        let key = |field: &str| format!("classifier.{id}.{field}");
        let kind = raw
            .string(&key("type"))
            .ok_or_else(|| raw.error(&key("type"), "missing (halfspace, constant, file or trained)"))?;
        match kind.as_str() {
            "halfspace" => {
                let w = raw.f64_list(&key("w"))?.ok_or_else(|| raw.error(&key("w"), "missing"))?;
                Ok(ClassifierSpec::Halfspace {
                    w,
                    b: raw.f64_or(&key("b"), 0.0)?,
                })
            }
            "constant" => Ok(ClassifierSpec::Constant {
                class: raw.usize_or(&key("class"), 0)?,
            }),
            "file" => {
                let path = raw.string(&key("path")).ok_or_else(|| raw.error(&key("path"), "missing"))?;
                Ok(ClassifierSpec::File(PathBuf::from(path)))
            }
            "trained" => {
                let d = TrainConfig::default();
                let method = match raw.string(&key("method")).as_deref().unwrap_or("erm") {
                    "erm" => TrainMethod::Erm,
                    "adv" => {
                        let eps = raw.f64_or(&key("adv_eps"), 0.5)?;
                        TrainMethod::AdvTrain {
                            eps,
                            step: raw.f64_or(&key("adv_step"), 0.25 * eps)?,
                            steps: raw.usize_or(&key("adv_steps"), 10)?,
                        }
                    }
                    other => return Err(raw.error(&key("method"), format!("unknown method `{other}` (erm or adv)"))),
                };
                let train = TrainConfig {
                    learning_rate: raw.f64_or(&key("lr"), d.learning_rate)?,
                    epochs: raw.usize_or(&key("epochs"), d.epochs)?,
                    batch_size: raw.usize_or(&key("batch"), d.batch_size)?,
                    train_size: raw.usize_or(&key("train_size"), d.train_size)?,
                    method,
                    seed: raw.u64_or(&key("seed"), seed)?,
                };
                train.validate().map_err(|e| raw.error(&key("method"), e.to_string()))?;
                let arch = Architecture {
                    hidden: raw.usize_list(&key("hidden"))?.unwrap_or_default(),
                    activation: activation_from(raw, &key("activation"), Activation::Relu)?,
                };
                Ok(ClassifierSpec::Trained { arch, train })
            }
            other => Err(raw.error(&key("type"), format!("unknown classifier type `{other}`"))),
        }
    }

    /// Complete, canonical `key = value` listing of the resolved config.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", &self.seed);
        kv("eps", &join(&self.eps));
        match &self.model {
            Some(ModelSource::Synthetic(spec)) => kv("model.spec", spec),
            Some(ModelSource::File(p)) => kv("model.file", &p.display()),
            None => {}
        }
        kv("model.id", &self.model_id);
        match &self.lipschitz {
            LipschitzSource::Estimate(c) => {
                kv("lipschitz.source", &"estimate");
                kv("lipschitz.S", &c.samples);
                kv("lipschitz.N", &c.neighbors);
                kv("lipschitz.r", &c.radius);
                kv("lipschitz.delta", &c.delta);
                kv("lipschitz.seed", &c.seed);
            }
            LipschitzSource::Preset(name) => kv("lipschitz.source", &format!("preset:{name}")),
            LipschitzSource::File { path, radius, delta } => {
                kv("lipschitz.source", &format!("file:{}", path.display()));
                kv("lipschitz.r", radius);
                kv("lipschitz.delta", delta);
            }
            LipschitzSource::Values { values, radius, delta } => {
                kv("lipschitz.source", &"values");
                kv("lipschitz.values", &join(values));
                kv("lipschitz.r", radius);
                kv("lipschitz.delta", delta);
            }
        }
        let b = &self.bound;
        kv("bound.variant", &b.variant);
        kv("bound.alpha", &join(&b.alphas));
        if let Some(d) = b.delta {
            kv("bound.delta", &d);
        }
        match &b.priors {
            Some(p) => kv("bound.priors", &join(p)),
            None => kv("bound.priors", &"auto"),
        }
        if let Some(sw) = &b.sweep {
            kv("bound.sweep", &format!("{}, {}, {}", sw.min, sw.max, sw.steps));
        }
        for (id, spec) in &self.classifiers {
            let key = |field: &str| format!("classifier.{id}.{field}");
            match spec {
                ClassifierSpec::Halfspace { w, b } => {
                    kv(&key("type"), &"halfspace");
                    kv(&key("w"), &join(w));
                    kv(&key("b"), b);
                }
                ClassifierSpec::Constant { class } => {
                    kv(&key("type"), &"constant");
                    kv(&key("class"), class);
                }
                ClassifierSpec::File(p) => {
                    kv(&key("type"), &"file");
                    kv(&key("path"), &p.display());
                }
                ClassifierSpec::Trained { arch, train } => {
                    kv(&key("type"), &"trained");
                    let hidden = if arch.hidden.is_empty() { "none".to_string() } else { join(&arch.hidden) };
                    kv(&key("hidden"), &hidden);
                    kv(&key("activation"), &arch.activation.name());
                    match train.method {
                        TrainMethod::Erm => kv(&key("method"), &"erm"),
                        TrainMethod::AdvTrain { eps, step, steps } => {
                            kv(&key("method"), &"adv");
                            kv(&key("adv_eps"), &eps);
                            kv(&key("adv_step"), &step);
                            kv(&key("adv_steps"), &steps);
                        }
                    }
                    kv(&key("lr"), &train.learning_rate);
                    kv(&key("epochs"), &train.epochs);
                    kv(&key("batch"), &train.batch_size);
                    kv(&key("train_size"), &train.train_size);
                    kv(&key("seed"), &train.seed);
                }
            }
        }
        kv("eval.n", &self.eval.n);
        kv("eval.pgd", &self.eval.pgd.is_some());
        if let Some(p) = &self.eval.pgd {
            match p.step {
                Some(step) => kv("pgd.step", &step),
                None => {}
            }
            kv("pgd.steps", &p.steps);
            kv("pgd.loss", &p.loss.name());
            kv("pgd.restarts", &p.restarts);
        }
        kv("eval.manifold", &self.eval.manifold.is_some());
        if let Some(m) = &self.eval.manifold {
            kv("manifold.lambda", &m.lambda_init);
            kv("manifold.lambda_min", &m.lambda_lo);
            kv("manifold.lambda_max", &m.lambda_hi);
            kv("manifold.rounds", &m.rounds);
            kv("manifold.lr", &m.step_size);
            kv("manifold.max_iterations", &m.max_iterations);
            kv("manifold.patience", &m.patience);
            kv("manifold.init", &init_name(m.init));
            kv("manifold.loss", &m.loss.name());
            kv("manifold.optimizer", &optimizer_name(m.optimizer));
        }
        kv("output.gnuplot", &self.gnuplot);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
eps = 0.5
model.spec = shifted-identity:c=1,d=2
classifier.h.type = halfspace
classifier.h.w = -1, 0
";

    #[test]
    fn minimal_config_resolves_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.eps, vec![0.5]);
        assert_eq!(cfg.model_id, "shifted-identity");
        assert!(matches!(cfg.lipschitz, LipschitzSource::Estimate(c) if c.samples == 1000 && c.seed == 0));
        assert_eq!(cfg.bound.variant, ClassifierFamily::PerClassRisk);
        assert_eq!(cfg.classifiers.len(), 1);
        assert_eq!(cfg.eval.n, 1000);
    }

    #[test]
    fn snapshot_parses_back_to_the_same_config() {
        let text = format!(
            "{MINIMAL}seed = 9\nclassifier.t.type = trained\nclassifier.t.method = adv\nclassifier.t.hidden = 8, 4\n\
             bound.sweep = 0.01, 0.2, 5\npgd.step = 0.05\nmanifold.optimizer = adam\n"
        );
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let again = ExperimentConfig::parse(&cfg.snapshot()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.snapshot(), again.snapshot());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = ExperimentConfig::parse("# header\n\neps = 1, 2 # two budgets\nlipschitz.values = 3\n").unwrap();
        assert_eq!(cfg.eps, vec![1.0, 2.0]);
    }

    #[test]
    fn errors_name_line_and_key() {
        let err = ExperimentConfig::parse("eps = 1\nlipschitz.values = 2\nlipschitz.S = many\n").unwrap_err();
        assert_eq!(err.line, Some(3));
        assert_eq!(err.key.as_deref(), Some("lipschitz.S"));
        assert!(err.to_string().starts_with("line 3: key `lipschitz.S`"), "{err}");

        let err = ExperimentConfig::parse("eps = 1\nlipschitz.values = 2\nbogus.key = 1\n").unwrap_err();
        assert_eq!((err.line, err.key.as_deref()), (Some(3), Some("bogus.key")));

        let err = ExperimentConfig::parse("eps = 1\nno equals sign\n").unwrap_err();
        assert_eq!(err.line, Some(2));

        let err = ExperimentConfig::parse("eps = 1\neps = 2\n").unwrap_err();
        assert_eq!((err.line, err.key.as_deref()), (Some(2), Some("eps")));
    }

    #[test]
    fn eps_list_is_required() {
        let err = ExperimentConfig::parse("lipschitz.values = 2\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("eps"));
    }

    #[test]
    fn classifiers_require_a_model() {
        let err = ExperimentConfig::parse("eps = 1\nlipschitz.values = 2\nclassifier.c.type = constant\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("classifier.c.type"));
        assert_eq!(err.line, Some(3));
    }
}
