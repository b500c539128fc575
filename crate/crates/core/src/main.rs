use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scvamp::harness::{self, ExperimentConfig};
use scvamp::Result;

/// Spatially coupled sparse superposition codes: decoding experiments,
/// state evolution and thresholds.
#[derive(Parser, Debug)]
#[command(name = "scvamp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Seeded Monte-Carlo decoding; writes per-iteration CSV and a JSON summary.
    Simulate(Common),
    /// Finite-section-size state evolution for the configured code.
    Se(Common),
    /// Large-section-size limit recursion.
    LimitSe(Common),
    /// Algorithmic and information-theoretic rate thresholds.
    Thresholds(Common),
    /// Checks the decoding-wave guarantee of the limit recursion.
    VerifyProp1(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides SCVAMP_OUT_DIR and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

type Runner = fn(&ExperimentConfig, &Path) -> Result<Vec<PathBuf>>;

fn run(common: &Common, runner: Runner) -> Result<()> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.code.seed = seed;
    }
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| scvamp::Error::Config(format!("thread pool: {e}")))?;
    }
    let out = harness::resolve_out_dir(common.out.as_deref(), &config);
    for path in runner(&config, &out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, runner): (&Common, Runner) = match &cli.command {
        Command::Simulate(c) => (c, harness::run_simulate),
        Command::Se(c) => (c, harness::run_se),
        Command::LimitSe(c) => (c, harness::run_limit_se),
        Command::Thresholds(c) => (c, harness::run_thresholds),
        Command::VerifyProp1(c) => (c, harness::run_verify_prop1),
    };
    match run(common, runner) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
