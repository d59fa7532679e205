use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use isorobust::bounds::ClassifierFamily;
use isorobust::classify::{Architecture, TrainConfig, TrainMethod};
use isorobust::lipschitz::LipschitzConfig;
use isorobust::nn::Activation;
use isorobust_cli::commands::{self, AttackKind, BoundArgs, EvalArgs};
use isorobust_cli::run::{load_config, run};
use isorobust_cli::verify::{run_suite, Suite};

/// Intrinsic-robustness bounds, Lipschitz estimation and attacks for
/// conditional generative models.
///
/// The worker thread count can be capped with ISOROBUST_THREADS.
#[derive(Parser)]
#[command(name = "isorobust", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a preset (mnist-bounds,
    /// imagenet10-bounds) and write lipschitz.csv, bounds.csv,
    /// robustness.csv and report.txt
    Run {
        /// Config file, or a preset name
        config: String,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a fixed-seed verification suite: gaussian, bounds, lipschitz,
    /// attacks or all. Exits nonzero if any check fails
    Verify { suite: String },
    /// Evaluate the robustness upper bound directly; prints CSV
    Bound(BoundCmd),
    /// Estimate per-class local Lipschitz constants of a model; prints CSV
    Lipschitz(LipschitzCmd),
    /// Train a classifier on samples from a model and save it
    Train(TrainCmd),
    /// Attack fresh samples and print one trace row per sample
    Attack(AttackCmd),
    /// Estimate risk and attack-based adversarial risks; prints CSV
    Eval(EvalCmd),
}

#[derive(Args)]
struct BoundCmd {
    /// Classifier family: tilde (risk >= alpha on every class) or alpha
    /// (total risk >= alpha)
    #[arg(long, default_value = "tilde")]
    variant: String,
    /// Tolerated risk; comma-separated for several values
    #[arg(long, default_value = "0.05")]
    alpha: String,
    /// Perturbation budgets, comma-separated
    #[arg(long)]
    eps: String,
    /// Lipschitz exception probability
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Largest per-class local Lipschitz constant
    #[arg(long)]
    lmax: f64,
    /// Class priors: uniform:K or a comma-separated list
    #[arg(long, default_value = "uniform:10")]
    priors: String,
    /// Sweep alpha instead: alpha_min,alpha_max,steps
    #[arg(long)]
    sweep: Option<String>,
}

#[derive(Args)]
struct ModelArg {
    /// Model file, or a synthetic spec such as shifted-identity:c=1,d=2
    #[arg(long)]
    model: String,
}

#[derive(Args)]
struct LipschitzCmd {
    #[command(flatten)]
    model: ModelArg,
    /// Outer latent samples
    #[arg(long = "S", default_value_t = 1000)]
    samples: usize,
    /// Neighbours per sample
    #[arg(long = "N", default_value_t = 2000)]
    neighbors: usize,
    /// Latent ball radius
    #[arg(long, default_value_t = 0.5)]
    r: f64,
    #[arg(long, default_value_t = 0.001)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Repeat with seeds seed, seed+1, ... and report mean and std
    #[arg(long, default_value_t = 1)]
    trials: usize,
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    model: ModelArg,
    /// Hidden layer widths, comma-separated; empty for a linear classifier
    #[arg(long, default_value = "")]
    hidden: String,
    #[arg(long, default_value = "relu")]
    activation: String,
    /// erm or adv
    #[arg(long, default_value = "erm")]
    method: String,
    /// PGD budget for adversarial training
    #[arg(long, default_value_t = 0.5)]
    adv_eps: f64,
    /// PGD step for adversarial training; defaults to adv_eps / 4
    #[arg(long)]
    adv_step: Option<f64>,
    #[arg(long, default_value_t = 10)]
    adv_steps: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 2000)]
    train_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the classifier file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifierArg {
    /// Saved classifier file
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// Halfspace normal, comma-separated; predicts class 0 where w.x + b >= 0
    #[arg(long, allow_hyphen_values = true)]
    halfspace: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    bias: f64,
}

#[derive(Args)]
struct AttackCmd {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    classifier: ClassifierArg,
    /// pgd or manifold
    #[arg(long, default_value = "pgd")]
    kind: String,
    #[arg(long)]
    eps: f64,
    /// Number of samples to attack
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalCmd {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    classifier: ClassifierArg,
    /// Perturbation budgets, comma-separated
    #[arg(long)]
    eps: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the PGD estimate
    #[arg(long)]
    no_pgd: bool,
    /// Skip the on-manifold estimate
    #[arg(long)]
    no_manifold: bool,
    #[arg(long, default_value = "model")]
    model_id: String,
    #[arg(long, default_value = "f")]
    classifier_id: String,
}

fn execute(command: Command) -> Result<ExitCode> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::Run { config, out: dir } => {
            let cfg = load_config(&config)?;
            let (report, manifest) = run(&cfg, &dir)?;
            for line in report.file(isorobust_cli::run::REPORT_FILE).unwrap_or_default().lines() {
                match line.strip_prefix("# ") {
                    Some(text) if !text.starts_with("resolved configuration") => writeln!(out, "{text}")?,
                    _ => {}
                }
            }
            for path in manifest {
                writeln!(out, "wrote {}", path.display())?;
            }
        }
        Command::Verify { suite } => {
            let suite: Suite = suite.parse()?;
            let checks = run_suite(suite);
            for c in &checks {
                writeln!(out, "{c}")?;
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            writeln!(out, "{} checks, {failed} failed", checks.len())?;
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Bound(b) => {
            let sweep = match &b.sweep {
                Some(s) => {
                    let v = commands::parse_list(s)?;
                    anyhow::ensure!(v.len() == 3 && v[2] >= 1.0, "--sweep expects alpha_min,alpha_max,steps");
                    Some((v[0], v[1], v[2] as usize))
                }
                None => None,
            };
            let args = BoundArgs {
                variant: b.variant.parse::<ClassifierFamily>()?,
                alphas: commands::parse_list(&b.alpha)?,
                eps: commands::parse_list(&b.eps)?,
                delta: b.delta,
                l_max: b.lmax,
                priors: commands::parse_priors(&b.priors)?,
                sweep,
            };
            commands::bound(&args, &mut out)?;
        }
        Command::Lipschitz(l) => {
            let model = commands::load_model_arg(&l.model.model)?;
            let cfg = LipschitzConfig {
                samples: l.samples,
                neighbors: l.neighbors,
                radius: l.r,
                delta: l.delta,
                seed: l.seed,
            };
            commands::lipschitz(&model, &cfg, l.trials, &mut out)?;
        }
        Command::Train(t) => {
            let model = commands::load_model_arg(&t.model.model)?;
            let hidden = if t.hidden.trim().is_empty() {
                Vec::new()
            } else {
                t.hidden
                    .split(',')
                    .map(|w| w.trim().parse::<usize>().with_context(|| format!("bad width `{w}`")))
                    .collect::<Result<Vec<_>>>()?
            };
            let method = match t.method.as_str() {
                "erm" => TrainMethod::Erm,
                "adv" => TrainMethod::AdvTrain {
                    eps: t.adv_eps,
                    step: t.adv_step.unwrap_or(0.25 * t.adv_eps),
                    steps: t.adv_steps,
                },
                other => anyhow::bail!("unknown method `{other}` (erm or adv)"),
            };
            let arch = Architecture {
                hidden,
                activation: t.activation.parse::<Activation>()?,
            };
            let cfg = TrainConfig {
                learning_rate: t.lr,
                epochs: t.epochs,
                batch_size: t.batch,
                train_size: t.train_size,
                method,
                seed: t.seed,
            };
            let trained = commands::train_and_save(&model, &arch, &cfg, &t.out)?;
            let last = trained.epoch_losses.last().copied().unwrap_or(f64::NAN);
            writeln!(out, "trained {} epochs, final mean loss {last:.6}; wrote {}", cfg.epochs, t.out.display())?;
        }
        Command::Attack(a) => {
            let model = commands::load_model_arg(&a.model.model)?;
            let c = &a.classifier;
            let f = commands::resolve_classifier(c.classifier.as_deref(), c.halfspace.as_deref(), c.bias)?;
            let kind: AttackKind = a.kind.parse()?;
            let (hits, n) = commands::attack(&model, &f, kind, a.eps, a.n, a.seed, &mut out)?;
            eprintln!("{hits}/{n} successful within eps = {}", a.eps);
        }
        Command::Eval(e) => {
            let model = commands::load_model_arg(&e.model.model)?;
            let c = &e.classifier;
            let f = commands::resolve_classifier(c.classifier.as_deref(), c.halfspace.as_deref(), c.bias)?;
            let eps = commands::parse_list(&e.eps)?;
            let args = EvalArgs {
                model: &model,
                model_id: &e.model_id,
                classifier: &f,
                classifier_id: &e.classifier_id,
                eps: &eps,
                n: e.n,
                seed: e.seed,
                pgd: !e.no_pgd,
                manifold: !e.no_manifold,
            };
            commands::eval(&args, &mut out)?;
        }
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = isorobust_cli::configure_threads().and_then(|()| execute(cli.command));
    match result {
        Ok(code) => code,
        // reader went away (e.g. `| head`): not an error
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
