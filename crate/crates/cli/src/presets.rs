//! Built-in experiment presets and the per-class Lipschitz tables they read.
//!
//! The tables hold published estimates for trained conditional GANs. They are
//! inputs to the bound, not something this crate can re-estimate.

use std::io::Read;

use anyhow::{bail, Context, Result};

const MNIST_TABLE: &str = include_str!("../presets/mnist_lipschitz.csv");
const IMAGENET10_TABLE: &str = include_str!("../presets/imagenet10_lipschitz.csv");

const PRESETS: &[(&str, &str)] = &[
    ("mnist-bounds", include_str!("../presets/mnist-bounds.conf")),
    ("imagenet10-bounds", include_str!("../presets/imagenet10-bounds.conf")),
];

/// Preset names accepted by `run`.
pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(name, _)| *name)
}

pub fn preset_config(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Raw CSV text of an embedded Lipschitz table (`mnist`, `imagenet10`).
pub fn lipschitz_table(name: &str) -> Option<&'static str> {
    match name {
        "mnist" => Some(MNIST_TABLE),
        "imagenet10" => Some(IMAGENET10_TABLE),
        _ => None,
    }
}

/// Per-class constants read from a table with `class` and `L` columns and
/// optional `name` and `std` columns. `#` lines are comments.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzTable {
    pub values: Vec<f64>,
    pub names: Vec<String>,
    pub std_dev: Option<Vec<f64>>,
}

impl LipschitzTable {
    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
        let headers = reader.headers().context("reading table header")?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(class_col), Some(l_col)) = (col("class"), col("L")) else {
            bail!("table needs `class` and `L` columns, found: {}", headers.iter().collect::<Vec<_>>().join(","));
        };
        let name_col = col("name");
        let std_col = col("std");

        let mut values = Vec::new();
        let mut names = Vec::new();
        let mut std_dev = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.with_context(|| format!("table row {}", row + 1))?;
            let class: usize = record[class_col]
                .parse()
                .with_context(|| format!("table row {}: bad class `{}`", row + 1, &record[class_col]))?;
            if class != values.len() {
                bail!("table row {}: classes must be listed as 0, 1, 2, ... (got {class})", row + 1);
            }
            let l: f64 = record[l_col]
                .parse()
                .with_context(|| format!("table row {}: bad L `{}`", row + 1, &record[l_col]))?;
            if !(l > 0.0 && l.is_finite()) {
                bail!("table row {}: L must be positive, got {l}", row + 1);
            }
            values.push(l);
            names.push(name_col.map(|c| record[c].to_string()).unwrap_or_else(|| format!("class {class}")));
            if let Some(c) = std_col {
                std_dev.push(record[c].parse().with_context(|| format!("table row {}: bad std", row + 1))?);
            }
        }
        if values.is_empty() {
            bail!("table lists no classes");
        }
        Ok(LipschitzTable {
            values,
            names,
            std_dev: std_col.map(|_| std_dev),
        })
    }

    pub fn l_max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}
