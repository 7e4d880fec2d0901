//! Run manifests: which scenario to simulate, where to write, and which
//! estimator to run.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::{ConfigError, KeyValues};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    #[default]
    CrossingBeam,
    Ekf,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::CrossingBeam => "crossing_beam",
            Estimator::Ekf => "ekf",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown estimator `{0}` (expected crossing_beam or ekf)")]
pub struct UnknownEstimator(pub String);

impl FromStr for Estimator {
    type Err = UnknownEstimator;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "crossing_beam" | "cb" => Ok(Estimator::CrossingBeam),
            "ekf" => Ok(Estimator::Ekf),
            _ => Err(UnknownEstimator(s.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    /// Scenario config file.
    pub config: PathBuf,
    /// Session directory all stages read and write.
    pub output: PathBuf,
    pub estimator: Estimator,
    /// Overrides the config's seed when set.
    pub seed: Option<u64>,
    pub tool_version: String,
}

impl RunManifest {
    /// Parses manifest text; relative paths are taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::parse(text)?;
        let config = base.join(kv.require("config")?);
        let output = base.join(kv.require("output")?);
        let estimator = match kv.take("estimator") {
            Some(s) => s.parse().map_err(|_| ConfigError::Value {
                key: "estimator".into(),
                value: s,
                expected: "crossing_beam or ekf",
            })?,
            None => Estimator::default(),
        };
        let seed = kv.take_parsed("seed", "an unsigned integer")?;
        let tool_version = kv.take("tool_version").unwrap_or_else(|| TOOL_VERSION.into());
        kv.finish()?;
        Ok(RunManifest {
            config,
            output,
            estimator,
            seed,
            tool_version,
        })
    }

    pub fn load(path: &Path) -> Result<Self, crate::pipeline::PipelineError> {
        let text = crate::pipeline::read_text(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(Self::parse(&text, base)?)
    }

    /// Serialized form; paths are written as given.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "tool_version = {}\nconfig = {}\noutput = {}\nestimator = {}\n",
            self.tool_version,
            self.config.display(),
            self.output.display(),
            self.estimator
        );
        if let Some(seed) = self.seed {
            s += &format!("seed = {seed}\n");
        }
        s
    }
}
