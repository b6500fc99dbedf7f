use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rkhs_core::experiments::{LambdaRule, ScenarioSpec};
use serde::{Deserialize, Serialize};

/// Largest tolerated share of failed replications per sample size.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

/// Experiment description read by `rkhs run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    /// Sample sizes, strictly increasing.
    pub ns: Vec<usize>,
    pub lambda_rule: LambdaRule,
    /// Replications per sample size.
    #[serde(rename = "R", alias = "replications")]
    pub r: usize,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub outputs: Option<PathBuf>,
    #[serde(default = "yes")]
    pub emit_plots: bool,
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("invalid config at field `{path}`: {}", e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() {
            bail!("field `ns` must not be empty");
        }
        if self.ns[0] == 0 || self.ns.windows(2).any(|w| w[1] <= w[0]) {
            bail!("field `ns` must hold positive, strictly increasing sample sizes");
        }
        if self.r < 2 {
            bail!("field `R` must be at least 2, got {}", self.r);
        }
        self.lambda_rule.validate().context("field `lambda_rule`")?;
        self.scenario.validate().context("field `scenario`")?;
        Ok(())
    }
}
