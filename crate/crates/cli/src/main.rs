use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use miturbo::config::RunConfig;
use miturbo::error::Error;
use miturbo::nn::checkpoint;
use miturbo::trainer::{run, run_ablation};
use miturbo::verify;

/// Semi-supervised classification with mutual-information losses.
#[derive(Debug, Parser)]
#[command(name = "miturbo", version)]
struct Cli {
    /// Worker threads for the ablation fan-out.
    #[arg(long, global = true, env = "MITURBO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One seeded training run.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the first of `train.seeds`.
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every grid cell for every subset size and seed.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a self-check suite and report each property with its margin.
    Verify {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(verify::SUITES))]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Verification,
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::ConfigNotFound(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn out_dir(out: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    out.unwrap_or_else(|| cfg.output_dir.clone())
}

fn train(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let seed = seed.or_else(|| cfg.train.seeds.first().copied()).ok_or_else(|| {
        Failure::Usage("config: train.seeds is empty and no --seed given".into())
    })?;
    let (train, test) = cfg.load_data()?;
    let setup = cfg.setup();
    let output = run(&setup, &train, &test, seed)?;
    let dir = out_dir(out, &cfg);
    output.metrics.write(&dir, &setup)?;
    checkpoint::save(&output.model.store, dir.join("model.ckpt"))?;
    checkpoint::save(&output.model.disc_store, dir.join("discriminator.ckpt"))?;
    println!(
        "seed {seed}: final accuracy {:.4} after {} steps -> {}",
        output.metrics.final_accuracy,
        output.metrics.steps.len(),
        dir.display()
    );
    Ok(())
}

fn ablate(config: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let (train, test) = cfg.load_data()?;
    let report = run_ablation(&cfg.setup(), &cfg.ablation, &train, &test)?;
    let dir = out_dir(out, &cfg);
    report.write(&dir)?;
    print!("{}", report.to_tsv());
    if report.any_success() {
        Ok(())
    } else {
        Err(Failure::Run("every cell of the grid failed".into()))
    }
}

fn verify_suite(suite: &str, seed: u64) -> Result<(), Failure> {
    let report = verify::run_suite(suite, seed)?;
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Train { config, seed, out } => train(&config, seed, out),
        Command::Ablate { config, out } => ablate(&config, out),
        Command::Verify { suite, seed } => verify_suite(&suite, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
