use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use shearlab_cli::config::RunConfig;
use shearlab_cli::runners;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "shearlab",
    version,
    about = "Mixing-driven suppression experiments on the periodic box"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// Configuration file; omits fall back to the verb's desk-scale default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV tables, reports, and checkpoints.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the config's base RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread count; 1 forces fully serial transforms.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Verb {
    /// Decay-rate sweep over flow presets and amplitudes.
    EdSweep,
    /// Source-integral trend study for the advected toy system.
    ToyModel,
    /// Amplitude bisection, baseline companion, and instrumented threshold run.
    Suppression,
    /// Per-window contraction factors under the rewound flow.
    Contraction,
    /// Seeded verification battery for the derivative calculus.
    Checks,
    /// Continue a suppression run from a checkpoint directory.
    Resume { checkpoint: PathBuf },
}

impl Verb {
    fn experiment(&self) -> &'static str {
        match self {
            Verb::EdSweep => "ed-sweep",
            Verb::ToyModel => "toy-model",
            Verb::Suppression | Verb::Resume { .. } => "suppression",
            Verb::Contraction => "contraction",
            Verb::Checks => "checks",
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        shearlab_core::fft::engine().set_parallel(n > 1);
    }

    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default_for(cli.verb.experiment())?,
    };
    if cfg.experiment != cli.verb.experiment() {
        bail!(
            "config is for experiment {:?} but the verb wants {:?}",
            cfg.experiment,
            cli.verb.experiment()
        );
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    let artifacts = match &cli.verb {
        Verb::EdSweep => runners::run_ed_sweep(&cfg, &cli.out)?,
        Verb::ToyModel => runners::run_toy_model(&cfg, &cli.out)?,
        Verb::Suppression => runners::run_suppression(&cfg, &cli.out)?,
        Verb::Contraction => runners::run_contraction(&cfg, &cli.out)?,
        Verb::Checks => runners::run_checks(&cfg, &cli.out)?,
        Verb::Resume { checkpoint } => runners::resume_suppression(&cfg, checkpoint, &cli.out)?,
    };

    for a in &artifacts.assertions {
        println!(
            "[{}] {}: {}",
            if a.pass { "PASS" } else { "FAIL" },
            a.name,
            a.detail
        );
    }
    Ok(artifacts.all_pass())
}
