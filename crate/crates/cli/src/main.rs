use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fedgraph::data::{dataset_stats, filter_and_split, load_dataset, raw_stats, DatasetFormat, DatasetStats, SplitParams};
use fedgraph::experiment::{prepare_dataset, run_cell, run_sweep, ExperimentSpec, ResultLine, ResultRecord, ResultWriter};

/// Federated graph recommendation simulator.
#[derive(Parser)]
#[command(name = "fedgraph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its result record.
    Run {
        #[command(flatten)]
        common: RunArgs,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Results file; the record is printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every cell of the config's sweep grid.
    Sweep {
        #[command(flatten)]
        common: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print dataset statistics.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        /// `movielens-tab` or `csv-generic`.
        #[arg(long)]
        format: DatasetFormat,
        /// Report the data after rating and activity filtering, with default parameters.
        #[arg(long)]
        filtered: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.eval.k`.
    #[arg(long)]
    k: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::from_file(&self.config)?;
        if let Some(k) = self.k {
            spec.run.eval.k = k;
            spec.validate()?;
        }
        Ok(spec)
    }

    fn base_dir(&self) -> Option<&Path> {
        self.config.parent()
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("FEDGRAPH_THREADS") {
        let threads: usize = value
            .parse()
            .with_context(|| format!("FEDGRAPH_THREADS must be a positive integer, got `{value}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    Ok(())
}

fn summarize(record: &ResultRecord) {
    eprintln!(
        "{} / {} (clients {}, seed {}): ndcg@{k} {:.4} ± {:.4}, hr@{k} {:.4} ± {:.4}, best round {} of {}, {:.1}s",
        record.user_strategy,
        record.item_strategy,
        record.clients_per_round,
        record.seed,
        record.test_ndcg,
        record.test_ndcg_ci95,
        record.test_hr,
        record.test_hr_ci95,
        record.best_round,
        record.rounds_run,
        record.wall_time_secs,
        k = record.k,
    );
}

fn print_stats(label: &str, s: &DatasetStats) {
    println!("{label}");
    println!("  users         {}", s.n_users);
    println!("  items         {}", s.n_items);
    println!("  interactions  {}", s.n_edges);
    println!("  sparsity      {:.3}%", s.sparsity * 100.0);
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, seed, out } => {
            let mut spec = common.load()?;
            if let Some(seed) = seed {
                spec.run.seed = seed;
            }
            let ds = prepare_dataset(&spec.dataset, &spec.preprocess, common.base_dir())?;
            let mut cells = spec.cells();
            let cell = if spec.sweep.is_empty() {
                cells.remove(0)
            } else {
                log::warn!("ignoring the sweep section; use `fedgraph sweep` to run the grid");
                let mut plain = spec.clone();
                plain.sweep = Default::default();
                plain.cells().remove(0)
            };
            let writer = out.as_ref().map(ResultWriter::create).transpose()?;
            let (record, _) = run_cell(&ds, &cell, writer.as_ref())?;
            if writer.is_none() {
                println!("{}", serde_json::to_string(&ResultLine::Result(record.clone()))?);
            }
            summarize(&record);
        }
        Command::Sweep { common, out } => {
            let spec = common.load()?;
            let ds = prepare_dataset(&spec.dataset, &spec.preprocess, common.base_dir())?;
            let writer = ResultWriter::create(&out)?;
            eprintln!("running {} cells into {}", spec.n_cells(), out.display());
            for record in run_sweep(&ds, &spec, Some(&writer))? {
                summarize(&record);
            }
        }
        Command::Stats { dataset, format, filtered } => {
            let raw = load_dataset(&dataset, format)?;
            print_stats(&dataset.display().to_string(), &raw_stats(&raw));
            if filtered {
                let ds = filter_and_split(&raw, &SplitParams::default())?;
                print_stats("after filtering", &dataset_stats(&ds));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
