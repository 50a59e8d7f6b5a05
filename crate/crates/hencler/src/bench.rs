//! Fixed-epoch training timings over graph size.

use std::path::Path;
use std::time::Instant;

use hencler_core::synthetic::{heterophilous_graph, HeterophilousConfig};
use hencler_core::{TrainConfig, Trainer};
use serde::Serialize;

use crate::alloc_meter;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub epochs: usize,
    pub seed: u64,
    pub num_classes: usize,
    pub out_degree: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            epochs: 30,
            seed: 0,
            num_classes: 3,
            out_degree: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub nodes: usize,
    pub edges: usize,
    /// Training epochs only; graph generation and positional encodings are
    /// excluded.
    pub seconds: f64,
    /// Peak heap above the starting level over setup and training, when the
    /// counting allocator is installed.
    pub peak_bytes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Of `seconds ~ a + b·nodes`; `None` with fewer than two sizes.
    pub r_squared: Option<f64>,
}

/// Least-squares line through `(x, y)`; returns `(intercept, slope, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((intercept, slope, r2))
}

pub fn run_one(nodes: usize, opts: &BenchOptions) -> anyhow::Result<BenchRow> {
    let graph = heterophilous_graph(&HeterophilousConfig {
        out_degree: opts.out_degree,
        ..HeterophilousConfig::new(nodes, opts.num_classes, opts.seed)
    })?;
    let config = TrainConfig {
        epochs: opts.epochs,
        eval_every: 0,
        seed: opts.seed,
        ..TrainConfig::new(opts.num_classes)
    };
    let (seconds, peak) = alloc_meter::measure(|| -> anyhow::Result<f64> {
        let mut trainer = Trainer::new(&graph, config)?;
        let start = Instant::now();
        trainer.run()?;
        Ok(start.elapsed().as_secs_f64())
    });
    Ok(BenchRow {
        nodes,
        edges: graph.num_edges(),
        seconds: seconds?,
        peak_bytes: peak,
    })
}

pub fn run_benchmark(sizes: &[usize], opts: &BenchOptions) -> anyhow::Result<BenchReport> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let row = run_one(n, opts)?;
        log::info!("n={n}: {:.3}s, peak {:?} bytes", row.seconds, row.peak_bytes);
        rows.push(row);
    }
    let x: Vec<f64> = rows.iter().map(|r| r.nodes as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
    Ok(BenchReport {
        r_squared: linear_fit(&x, &y).map(|f| f.2),
        rows,
    })
}

pub fn write_csv(path: &Path, report: &BenchReport) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "nodes,edges,seconds,peak_bytes")?;
    for r in &report.rows {
        let peak = r.peak_bytes.map(|b| b.to_string()).unwrap_or_default();
        writeln!(f, "{},{},{},{peak}", r.nodes, r.edges, r.seconds)?;
    }
    f.flush()
}
