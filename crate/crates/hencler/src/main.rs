use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hencler::alloc_meter::CountingAllocator;
use hencler::bench::BenchOptions;
use hencler::commands::{self, BenchmarkArgs, CliError, ExportArgs, GenerateArgs, OracleArgs, TrainArgs, DEFAULT_MAX_NODES};
use hencler_core::loss::LossTerms;
use hencler_core::synthetic::HeterophilousConfig;

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

#[derive(Parser)]
#[command(name = "hencler", version, about = "Heterophilous node clustering with a learned asymmetric similarity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    All,
    Wksvd,
    Reconstr,
}

impl From<LossArg> for LossTerms {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::All => LossTerms::All,
            LossArg::Wksvd => LossTerms::Wksvd,
            LossArg::Reconstr => LossTerms::Reconstr,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Synthetic {
    Blocks,
}

#[derive(Subcommand)]
enum Command {
    /// Train and write metrics, checkpoint, embeddings and assignments.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Loss terms to optimize (overrides the config).
        #[arg(long, value_enum)]
        loss: Option<LossArg>,
        /// Share the two feature-map networks.
        #[arg(long)]
        tie_maps: bool,
        /// Number of seeds, starting at the configured one.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Run the repeats on separate threads.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bicluster the materialized similarity and check the dual relations.
    Oracle {
        #[arg(long, required_unless_present = "synthetic")]
        config: Option<PathBuf>,
        /// Parameters to evaluate; a fresh initialization otherwise.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Use a planted block matrix instead of a dataset.
        #[arg(long, value_enum)]
        synthetic: Option<Synthetic>,
        #[arg(long, default_value_t = DEFAULT_MAX_NODES)]
        max_nodes: usize,
        /// Skip the leading singular pair.
        #[arg(long)]
        drop_leading: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time fixed-epoch training on synthetic graphs of growing size.
    Benchmark {
        #[arg(long, value_delimiter = ',', default_values_t = [1000, 2000, 4000, 8000])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the learned similarity matrix, ordered by label, as CSV.
    ExportSimilarity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_NODES)]
        max_nodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic heterophilous dataset with a matching config.
    Generate {
        #[arg(long, default_value_t = 300)]
        nodes: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            config,
            loss,
            tie_maps,
            repeats,
            parallel,
            out,
        } => {
            let outcome = commands::train(&TrainArgs {
                config,
                losses: loss.map(Into::into),
                tie_maps,
                repeats,
                parallel,
                output_dir: out,
            })?;
            let s = &outcome.metrics.summary;
            match (s.best_nmi, s.best_f1) {
                (Some(n), Some(f)) => println!(
                    "best NMI {:.4} ± {:.4}, best F1 {:.4} ± {:.4} over {} run(s)",
                    n.mean, n.std, f.mean, f.std, s.repeats
                ),
                _ => println!("trained {} run(s) without labels", s.repeats),
            }
            println!("outputs in {}", outcome.output_dir.display());
        }
        Command::Oracle {
            config,
            checkpoint,
            synthetic,
            max_nodes,
            drop_leading,
            out,
        } => {
            let r = commands::oracle(&OracleArgs {
                config,
                checkpoint,
                synthetic_blocks: synthetic.is_some(),
                max_nodes,
                drop_leading,
                output_dir: out,
            })?;
            println!("stationarity residual {:.3e}", r.stationarity_residual);
            println!("eigen-form residual {:.3e}", r.eigen_form_residual);
            if let Some(n) = r.row_nmi {
                println!("row-cluster NMI {n:.4}");
            }
            if let Some(n) = r.col_nmi {
                println!("column-cluster NMI {n:.4}");
            }
        }
        Command::Benchmark { sizes, epochs, seed, out } => {
            let report = commands::benchmark(&BenchmarkArgs {
                sizes,
                options: BenchOptions {
                    epochs,
                    seed,
                    ..BenchOptions::default()
                },
                output_dir: out,
            })?;
            for r in &report.rows {
                let peak = r.peak_bytes.map(|b| format!(", peak {b} bytes")).unwrap_or_default();
                println!("n={} edges={} {:.3}s{peak}", r.nodes, r.edges, r.seconds);
            }
            if let Some(r2) = report.r_squared {
                println!("linear fit R² {r2:.4}");
            }
        }
        Command::ExportSimilarity {
            config,
            checkpoint,
            max_nodes,
            out,
        } => {
            let s = commands::export_similarity(&ExportArgs {
                config,
                checkpoint,
                max_nodes,
                output: out,
            })?;
            println!("{} nodes, max |S - S^T| = {:.3e}", s.nodes, s.max_asymmetry);
            if let (Some(w), Some(o)) = (s.within_block_mean, s.off_block_mean) {
                println!("mean similarity within label blocks {w:.4}, across {o:.4}");
            }
        }
        Command::Generate {
            nodes,
            classes,
            seed,
            out,
        } => {
            let paths = commands::generate(&GenerateArgs {
                graph: HeterophilousConfig::new(nodes, classes, seed),
                output_dir: out.clone(),
            })?;
            println!("wrote {} and config.json in {}", paths.features.display(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
