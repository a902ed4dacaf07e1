use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dropfilter_core::harness::{self, fmt_g};
use dropfilter_core::validation::{self, Suite};
use dropfilter_core::{checkpoint, Model, Rng, TrainConfig};

#[derive(Parser)]
#[command(name = "dropfilter", version, about = "Train, sweep and check feature-map regularizers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Where the run configuration comes from.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct ConfigSource {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in profile: full, desk or synthetic.
    #[arg(long)]
    profile: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> Result<TrainConfig> {
        let cfg = match (&self.config, &self.profile) {
            (Some(path), _) => TrainConfig::from_file(path)?,
            (None, Some(name)) => TrainConfig::profile(name)?,
            (None, None) => unreachable!("clap requires one source"),
        };
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one run and write metrics.csv, status.txt and model.ckpt.
    Train {
        #[command(flatten)]
        source: ConfigSource,
        /// Defaults to the first seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the test error of a saved checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Train every (rate, seed) pair and write summary.csv.
    Sweep {
        #[command(flatten)]
        source: ConfigSource,
        /// Comma-separated retain rates (q for scalefilter); 1 means no drop.
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        /// Comma-separated seeds; defaults to the config's seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize every run below a directory as CSV on stdout.
    Aggregate {
        #[arg(long = "in")]
        dir: PathBuf,
    },
    /// Run the statistical and gradient checks; exits nonzero on any failure.
    Validate {
        #[arg(long, default_value = "all")]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn train(cfg: TrainConfig, seed: Option<u64>, out: &Path) -> Result<bool> {
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let mut cfg = cfg;
    cfg.out_dir = Some(out.to_path_buf());
    let m = harness::train_run(&cfg, seed)?;
    match m.failed_at {
        Some(e) => eprintln!("seed {seed}: loss diverged at epoch {e}"),
        None => println!("{}", fmt_g(m.final_test_error())),
    }
    Ok(!m.failed())
}

fn eval(cfg: &TrainConfig, ckpt: &Path) -> Result<()> {
    let mut model = Model::build(&cfg.model, &mut Rng::new(0))?;
    checkpoint::load(&mut model, ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let splits = harness::load_splits(cfg)?;
    let err = harness::evaluate(&model, &splits.test, cfg.batch_size)?;
    println!("{}", fmt_g(err));
    Ok(())
}

fn sweep(cfg: &TrainConfig, rates: &[f64], seeds: &[u64], out: &Path) -> Result<bool> {
    let seeds = if seeds.is_empty() { &cfg.seeds[..] } else { seeds };
    let table = harness::sweep_retain_rate(cfg, rates, seeds, Some(out))?;
    print!("{}", table.to_csv());
    let failed: usize = table.cells.iter().map(|c| c.summary.failed).sum();
    if failed > 0 {
        eprintln!("{failed} run(s) diverged and were left out of the summary");
    }
    Ok(failed == 0)
}

fn validate(suite: Suite, seed: u64) -> Result<bool> {
    let rows = validation::run_suite(suite, seed)?;
    print!("{}", validation::report_csv(&rows));
    let failed = rows.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        eprintln!("{failed} of {} checks failed", rows.len());
    }
    Ok(failed == 0)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Train { source, seed, out } => train(source.load()?, seed, &out),
        Cmd::Eval { checkpoint, source } => eval(&source.load()?, &checkpoint).map(|()| true),
        Cmd::Sweep {
            source,
            rates,
            seeds,
            out,
        } => {
            if rates.is_empty() {
                bail!("--rates needs at least one value");
            }
            sweep(&source.load()?, &rates, &seeds, &out)
        }
        Cmd::Aggregate { dir } => {
            let rows = harness::aggregate_dir(&dir)?;
            print!("{}", harness::aggregate_csv(&rows));
            Ok(true)
        }
        Cmd::Validate { suite, seed } => validate(suite, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
