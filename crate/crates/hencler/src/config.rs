//! Run configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use hencler_core::loss::LossTerms;
use hencler_core::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::io::DatasetPaths;

pub const SEED_ENV: &str = "HENCLER_SEED";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{SEED_ENV}={value:?} is not an unsigned integer")]
    SeedEnv { value: String },
    #[error("{0}")]
    Invalid(String),
}

/// A JSON run description. Missing keys take the training defaults; unknown
/// keys are rejected. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub features: PathBuf,
    pub edges: PathBuf,
    pub labels: Option<PathBuf>,
    pub directed: bool,
    /// Falls back to the number of label classes.
    pub num_clusters: Option<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub feature_dim: usize,
    pub latent: Option<usize>,
    pub k_pe: usize,
    pub seed: u64,
    pub losses: LossTerms,
    pub tie_maps: bool,
    pub eval_every: usize,
    pub kmeans_restarts: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            features: PathBuf::from("features.tsv"),
            edges: PathBuf::from("edges.tsv"),
            labels: None,
            directed: true,
            num_clusters: None,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            hidden: t.hidden,
            feature_dim: t.feature_dim,
            latent: t.latent,
            k_pe: t.k_pe,
            seed: t.seed,
            losses: t.losses,
            tie_maps: t.tie_maps,
            eval_every: t.eval_every,
            kmeans_restarts: t.kmeans_restarts,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    /// Reads `path`, resolves relative paths and applies the seed override.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.features);
        fix(&mut self.edges);
        if let Some(l) = &mut self.labels {
            fix(l);
        }
        fix(&mut self.output_dir);
    }

    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<(), ConfigError> {
        if let Some(v) = value {
            self.seed = v.trim().parse().map_err(|_| ConfigError::SeedEnv { value: v.to_owned() })?;
        }
        Ok(())
    }

    pub fn dataset(&self) -> DatasetPaths {
        DatasetPaths {
            features: self.features.clone(),
            edges: self.edges.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Training settings; `num_classes` fills in a missing cluster count.
    pub fn train_config(&self, num_classes: Option<usize>) -> Result<TrainConfig, ConfigError> {
        let num_clusters = self.num_clusters.or(num_classes).ok_or_else(|| {
            ConfigError::Invalid("num_clusters is required when no labels are given".into())
        })?;
        let t = TrainConfig {
            num_clusters,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            hidden: self.hidden,
            feature_dim: self.feature_dim,
            latent: self.latent,
            k_pe: self.k_pe,
            seed: self.seed,
            losses: self.losses,
            tie_maps: self.tie_maps,
            eval_every: if self.labels.is_some() { self.eval_every } else { 0 },
            kmeans_restarts: self.kmeans_restarts,
        };
        t.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(t)
    }
}
