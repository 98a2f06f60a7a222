use std::path::Path;

use anyhow::Context;
use iqdeg::dataset::SplitSpec;
use iqdeg::svm::{GridSpec, SmoOptions};
use iqdeg::FilterConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub class_weight: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SmoOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            class_weight: d.class_weight,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SmoOptions {
        SmoOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            class_weight: self.class_weight,
            ..SmoOptions::default()
        }
    }
}

/// Settings shared by the pipeline commands. Loaded from TOML; command-line
/// flags override file values, which override the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub filter: FilterConfig,
    pub split: SplitSpec,
    pub grid: GridSpec,
    pub solver: SolverConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.filter.validate()?;
        self.split.validate()?;
        if self.grid.folds < 2 {
            anyhow::bail!("grid.folds must be at least 2");
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            anyhow::bail!("solver.tol and solver.max_iter must be positive");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

pub fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("[split]\nseed = 7\n[grid]\nc = [1.0]\n").unwrap();
        assert_eq!(cfg.split.seed, 7);
        assert_eq!(cfg.split.train_fraction, 0.75);
        assert_eq!(cfg.grid.c, vec![1.0]);
        assert_eq!(cfg.grid.gamma, GridSpec::default().gamma);
        assert_eq!(cfg.filter, FilterConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[split]\nsed = 7\n").is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.split.seed = 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }
}
