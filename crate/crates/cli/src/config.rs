//! Versioned TOML run configurations.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use sfac_core::gaussfit::{GaussianMixture, SgdConfig};

pub const SCHEMA_VERSION: i64 = 1;

/// Parses a config file, checks `schema_version` and deserializes the rest.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).with_context(|| format!("in {}", path.display()))
}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut table: toml::Table = toml::from_str(text)?;
    match table.remove("schema_version") {
        Some(toml::Value::Integer(SCHEMA_VERSION)) => {}
        Some(other) => bail!("unsupported schema_version {other}, expected {SCHEMA_VERSION}"),
        None => bail!("missing schema_version"),
    }
    Ok(toml::Value::Table(table).try_into()?)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussFitFile {
    pub target: Option<MixtureSpec>,
    pub sgd: SgdConfig,
}

impl GaussFitFile {
    pub fn mixture(&self) -> Result<GaussianMixture> {
        Ok(match &self.target {
            Some(m) => GaussianMixture::new(m.weights.clone(), m.means.clone(), m.stds.clone())?,
            None => GaussianMixture::standard(),
        })
    }
}
