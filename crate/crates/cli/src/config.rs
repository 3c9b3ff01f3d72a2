//! Optional TOML defaults read with `--config`. Every key is optional;
//! flags given on the command line win over the file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use crate::args::{ModeArg, PrenormArg, ReferenceArg};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub input: InputSection,
    #[serde(default)]
    pub normalize: NormalizeSection,
    #[serde(default)]
    pub depth: DepthSection,
    #[serde(default)]
    pub outliers: OutliersSection,
    /// Keys of the simulation config; merged over its defaults.
    pub simulate: Option<toml::Table>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    pub format: Option<String>,
    pub header: Option<bool>,
    pub row_names: Option<bool>,
    pub max_zeros: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizeSection {
    pub reference: Option<ReferenceArg>,
    pub mode: Option<ModeArg>,
    pub quantiles: Option<usize>,
    pub prenorm: Option<PrenormArg>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthSection {
    pub prenorm: Option<PrenormArg>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutliersSection {
    pub target_rate: Option<f64>,
    pub replicates: Option<usize>,
    pub g_factor: Option<f64>,
    pub both_members: Option<bool>,
    pub prenorm: Option<PrenormArg>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
