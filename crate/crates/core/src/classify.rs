//! Classifiers with input gradients, toy-scale training, and the `IRCF1`
//! classifier file.

use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::attacks::{pgd_l2_trace, PgdConfig};
use crate::container::{Reader, Writer};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::RngStream;
use crate::genmodel::ConditionalModel;
use crate::linalg::{dot, norm};
use crate::nn::{Activation, LayerStack};

pub const CLASSIFIER_MAGIC: &[u8; 5] = b"IRCF1";

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    /// Two classes with logits `(w·x + b, 0)`: class 0 on the positive side.
    Halfspace { w: Vec<f64>, b: f64 },
    /// Layer stack ending in `K` logits.
    Layered(LayerStack),
    /// Always predicts `class`.
    Constant {
        class: usize,
        num_classes: usize,
        input_dim: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `log Σ_j exp(s_j) − s_y`
    CrossEntropy,
    /// `s_y − max_{j≠y} s_j`, positive while `y` wins.
    CwMargin,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" | "cross-entropy" => Ok(LossKind::CrossEntropy),
            "cw" | "cw-margin" | "margin" => Ok(LossKind::CwMargin),
            other => Err(Error::param("loss", format!("unknown loss `{other}` (use ce or cw)"))),
        }
    }
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "ce",
            LossKind::CwMargin => "cw",
        }
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Loss value and its gradient with respect to the logits.
pub fn logit_loss(logits: &[f64], target: usize, kind: LossKind) -> (f64, Vec<f64>) {
    match kind {
        LossKind::CrossEntropy => {
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let loss = total.ln() + max - logits[target];
            let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
            grad[target] -= 1.0;
            (loss, grad)
        }
        LossKind::CwMargin => {
            let mut grad = vec![0.0; logits.len()];
            if logits.len() < 2 {
                return (0.0, grad);
            }
            let runner_up = (0..logits.len())
                .filter(|&j| j != target)
                .fold(None, |best: Option<usize>, j| match best {
                    Some(b) if logits[b] >= logits[j] => Some(b),
                    _ => Some(j),
                })
                .unwrap();
            grad[target] = 1.0;
            grad[runner_up] = -1.0;
            (logits[target] - logits[runner_up], grad)
        }
    }
}

impl Classifier {
    pub fn halfspace(w: Vec<f64>, b: f64) -> Result<Self> {
        if !(norm(&w) > 0.0) || !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("halfspace", "normal vector must be finite and nonzero"));
        }
        Ok(Classifier::Halfspace { w, b })
    }

    pub fn constant(class: usize, num_classes: usize, input_dim: usize) -> Result<Self> {
        if class >= num_classes || input_dim == 0 {
            return Err(Error::param("constant classifier", format!("class {class} of {num_classes}")));
        }
        Ok(Classifier::Constant {
            class,
            num_classes,
            input_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Classifier::Halfspace { w, .. } => w.len(),
            Classifier::Layered(net) => net.input_dim(),
            Classifier::Constant { input_dim, .. } => *input_dim,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Classifier::Halfspace { .. } => 2,
            Classifier::Layered(net) => net.output_dim(),
            Classifier::Constant { num_classes, .. } => *num_classes,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("classifier input", self.input_dim(), x.len())?;
        match self {
            Classifier::Halfspace { w, b } => Ok(vec![dot(w, x) + b, 0.0]),
            Classifier::Layered(net) => net.forward(x),
            Classifier::Constant {
                class, num_classes, ..
            } => {
                let mut s = vec![0.0; *num_classes];
                s[*class] = 1.0;
                Ok(s)
            }
        }
    }

    /// `argmax` of the logits, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Loss value, input gradient, and the prediction at `x`.
    pub fn loss_and_grad(&self, x: &[f64], target: usize, kind: LossKind) -> Result<(f64, Vec<f64>, usize)> {
        check_dim("classifier input", self.input_dim(), x.len())?;
        if target >= self.num_classes() {
            return Err(Error::param("target", format!("class {target} of {}", self.num_classes())));
        }
        let (loss, gx, logits) = match self {
            Classifier::Halfspace { w, .. } => {
                let logits = self.logits(x)?;
                let (loss, gs) = logit_loss(&logits, target, kind);
                (loss, w.iter().map(|wi| wi * gs[0]).collect(), logits)
            }
            Classifier::Layered(net) => {
                let mut loss = 0.0;
                let mut logits = Vec::new();
                let mut grads = net.zero_grads();
                let (_, gx) = net.accumulate_param_grads(x, &mut grads, |s| {
                    let (l, gs) = logit_loss(s, target, kind);
                    loss = l;
                    logits = s.to_vec();
                    gs
                })?;
                (loss, gx, logits)
            }
            Classifier::Constant { .. } => {
                let logits = self.logits(x)?;
                let (loss, _) = logit_loss(&logits, target, kind);
                (loss, vec![0.0; x.len()], logits)
            }
        };
        if !loss.is_finite() || gx.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("classifier loss gradient".into()));
        }
        Ok((loss, gx, argmax(&logits)))
    }

    /// Gradient of the chosen loss with respect to the input.
    pub fn grad_input(&self, x: &[f64], target: usize, kind: LossKind) -> Result<Vec<f64>> {
        Ok(self.loss_and_grad(x, target, kind)?.1)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_magic(CLASSIFIER_MAGIC);
        w.usize(self.input_dim());
        w.usize(self.num_classes());
        match self {
            Classifier::Halfspace { w: normal, b } => {
                w.u8(0);
                w.f64s(normal);
                w.f64(*b);
            }
            Classifier::Layered(net) => {
                w.u8(1);
                w.stack_schema(net);
                w.stack_weights(net);
            }
            Classifier::Constant { class, .. } => {
                w.u8(2);
                w.usize(*class);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, CLASSIFIER_MAGIC)?;
        let n = r.dim("input_dim")?;
        let k = r.dim("num_classes")?;
        let classifier = match r.u8("kind")? {
            0 => {
                if k != 2 {
                    return Err(Error::parse("num_classes", format!("halfspace needs 2 classes, header says {k}")));
                }
                let w = r.f64s(n, "w")?;
                let b = r.f64("b")?;
                Classifier::halfspace(w, b).map_err(|e| Error::parse("w", e.to_string()))?
            }
            1 => {
                let schema = r.stack_schema("network")?;
                if schema.input_dim() != n || schema.output_dim() != k {
                    return Err(Error::parse(
                        "network.layers",
                        format!("maps {} -> {}, header declares {n} -> {k}", schema.input_dim(), schema.output_dim()),
                    ));
                }
                Classifier::Layered(r.stack_weights(&schema, "network")?)
            }
            2 => {
                let class = r.u64("class")? as usize;
                Classifier::constant(class, k, n).map_err(|e| Error::parse("class", e.to_string()))?
            }
            other => return Err(Error::parse("kind", format!("unknown classifier kind {other}"))),
        };
        r.finish()?;
        Ok(classifier)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Hidden widths and activation of a trainable network. No hidden layers
/// gives a linear (multinomial logistic) classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Architecture {
    pub fn linear() -> Self {
        Architecture {
            hidden: Vec::new(),
            activation: Activation::Identity,
        }
    }

    pub fn init(&self, input_dim: usize, num_classes: usize, seed: u64) -> Result<LayerStack> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend(&self.hidden);
        sizes.push(num_classes);
        LayerStack::random(&sizes, self.activation, Activation::Identity, &mut RngStream::new(seed, INIT_STREAM).rng())
    }
}

const INIT_STREAM: u64 = 0x1417;
const DATA_STREAM: u64 = 0xda7a;
const SHUFFLE_STREAM: u64 = 0x5407;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainMethod {
    Erm,
    /// Minimises the loss at PGD adversarial examples of radius `eps`.
    AdvTrain { eps: f64, step: f64, steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_size: usize,
    pub method: TrainMethod,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 20,
            batch_size: 32,
            train_size: 2000,
            method: TrainMethod::Erm,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if self.batch_size == 0 || self.train_size == 0 {
            return Err(Error::param("batch_size/train_size", "must be >= 1"));
        }
        if let TrainMethod::AdvTrain { eps, step, steps } = self.method {
            if !(eps > 0.0 && step > 0.0 && steps > 0) {
                return Err(Error::param("adv-train", "eps, step and steps must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub classifier: Classifier,
    /// Mean training loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mean cross-entropy above this is treated as divergence even while finite.
pub const DIVERGED_LOSS: f64 = 1e12;

/// Trains a network on samples drawn from `model` with cross-entropy loss.
pub fn train(arch: &Architecture, model: &ConditionalModel, cfg: &TrainConfig) -> Result<TrainedClassifier> {
    cfg.validate()?;
    let mut net = arch.init(model.output_dim(), model.num_classes(), cfg.seed)?;
    let data = model.sample_many(cfg.train_size, RngStream::new(cfg.seed, DATA_STREAM))?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut RngStream::new(cfg.seed, SHUFFLE_STREAM).child(epoch as u64).rng());
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = net.zero_grads();
            let current = Classifier::Layered(net.clone());
            for &i in batch {
                let sample = &data[i];
                let x = match cfg.method {
                    TrainMethod::Erm => sample.x.clone(),
                    TrainMethod::AdvTrain { eps, step, steps } => {
                        let pgd = PgdConfig {
                            eps,
                            step_size: step,
                            steps,
                            loss: LossKind::CrossEntropy,
                            random_starts: 0,
                            seed: 0,
                        };
                        pgd_l2_trace(&current, &sample.x, sample.label, &pgd, false)?.x_adv
                    }
                };
                net.accumulate_param_grads(&x, &mut grads, |s| {
                    let (l, g) = logit_loss(s, sample.label, LossKind::CrossEntropy);
                    total += l;
                    g
                })?;
            }
            net.apply_grads(&grads, cfg.learning_rate / batch.len() as f64);
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() || mean > DIVERGED_LOSS || !net.parameters_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: format!("mean loss {mean}"),
            });
        }
        epoch_losses.push(mean);
    }
    Ok(TrainedClassifier {
        classifier: Classifier::Layered(net),
        epoch_losses,
    })
}
