//! Metric summaries written next to training outputs.

use std::fs;
use std::path::Path;

use anyhow::Context;
use hencler_core::{RunRecord, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub repeats: usize,
    pub best_nmi: Option<MeanStd>,
    pub best_f1: Option<MeanStd>,
}

impl Summary {
    pub fn of(runs: &[RunRecord]) -> Self {
        let nmi: Vec<f64> = runs.iter().filter_map(|r| r.best_nmi.map(|b| b.value)).collect();
        let f1: Vec<f64> = runs.iter().filter_map(|r| r.best_f1.map(|b| b.value)).collect();
        Self {
            repeats: runs.len(),
            best_nmi: MeanStd::of(&nmi),
            best_f1: MeanStd::of(&f1),
        }
    }
}

/// Contents of `metrics.json`. Wall times are kept out so that reruns are
/// byte-identical; they go to `timing.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub config: TrainConfig,
    pub summary: Summary,
    pub runs: Vec<RunRecord>,
}

impl MetricsFile {
    pub fn new(config: TrainConfig, runs: &[RunRecord]) -> Self {
        let runs: Vec<RunRecord> = runs
            .iter()
            .map(|r| RunRecord {
                wall_time_secs: None,
                ..r.clone()
            })
            .collect();
        Self {
            config,
            summary: Summary::of(&runs),
            runs,
        }
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seed: u64,
    pub wall_time_secs: Option<f64>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hencler_core::train::BestScore;

    fn run(seed: u64, nmi: f64) -> RunRecord {
        RunRecord {
            seed,
            best_nmi: Some(BestScore { value: nmi, epoch: 1 }),
            best_f1: Some(BestScore { value: 1.0 - nmi, epoch: 2 }),
            wall_time_secs: Some(1.5),
            ..RunRecord::default()
        }
    }

    #[test]
    fn mean_and_population_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        assert!((m.std - 1.25f64.sqrt()).abs() < 1e-15);
        assert!(MeanStd::of(&[]).is_none());
    }

    #[test]
    fn metrics_file_round_trip() {
        let file = MetricsFile::new(TrainConfig::new(3), &[run(0, 0.2), run(1, 0.4)]);
        assert!(file.runs.iter().all(|r| r.wall_time_secs.is_none()));
        let s = file.summary.best_nmi.unwrap();
        assert!((s.mean - 0.3).abs() < 1e-15 && (s.std - 0.1).abs() < 1e-15);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        file.save(&p).unwrap();
        assert_eq!(MetricsFile::load(&p).unwrap(), file);
    }
}
