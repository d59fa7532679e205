//! Experiment runner for the `isorobust` library: config parsing, the
//! end-to-end pipeline, built-in presets, verification suites and the
//! subcommand implementations behind the `isorobust` binary.

pub mod commands;
pub mod config;
pub mod presets;
pub mod run;
pub mod verify;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "ISOROBUST_THREADS";

/// Sizes the global rayon pool from [`THREADS_ENV`] when it is set.
pub fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow::anyhow!("{THREADS_ENV} must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}
