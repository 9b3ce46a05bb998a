use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plrds::{parse_config, run_experiment, ConfigErrors, Experiment, RayonPool, RunConfig};

/// Pullback attractor experiments for stochastic p-Laplace reaction-diffusion
/// equations.
#[derive(Parser)]
#[command(name = "plrds", version)]
struct Cli {
    /// Run configuration; every key falls back to its default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base noise seed, overriding `[noise] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding `[output] directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, env = "PLRDS_WORKERS", default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structure conditions and the forcing growth integral.
    Validate,
    /// Integrate one trajectory and record its energy series.
    Simulate,
    /// Check the cocycle identity and composition laws.
    CocycleTest,
    /// Audit the energy balance along one trajectory.
    EnergyAudit,
    /// Compare pullback endpoints against the absorbing radius.
    AbsorbCheck,
    /// Measure tail masses outside growing balls.
    TailCheck,
    /// Estimate the attractor section at tau from pullback endpoints.
    EstimateAttractor,
    /// Distances to the deterministic attractor as alpha decreases.
    UscSweep,
    /// Compare attractor estimates one period apart.
    PeriodicityCheck,
    /// Run the experiment named in `[experiment] name`.
    Run,
    /// Print the resolved configuration.
    ShowConfig,
}

fn load(cli: &Cli) -> Result<RunConfig, ConfigErrors> {
    let text = match &cli.config {
        Some(p) => {
            std::fs::read_to_string(p).map_err(|e| ConfigErrors::single(format!("cannot read {}: {e}", p.display())))?
        }
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        cfg.noise.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.directory = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(errors) => {
            eprintln!("configuration error:\n{errors}");
            return ExitCode::from(2);
        }
    };
    let experiment = match cli.command {
        Command::Validate => Experiment::Validate,
        Command::Simulate => Experiment::Simulate,
        Command::CocycleTest => Experiment::CocycleTest,
        Command::EnergyAudit => Experiment::EnergyAudit,
        Command::AbsorbCheck => Experiment::AbsorbCheck,
        Command::TailCheck => Experiment::TailCheck,
        Command::EstimateAttractor => Experiment::EstimateAttractor,
        Command::UscSweep => Experiment::UscSweep,
        Command::PeriodicityCheck => Experiment::PeriodicityCheck,
        Command::Run => match cfg.experiment.name {
            Some(e) => e,
            None => {
                eprintln!("configuration error:\n`run` needs `[experiment] name`");
                return ExitCode::from(2);
            }
        },
        Command::ShowConfig => {
            print!("{}", cfg.to_ini());
            return ExitCode::SUCCESS;
        }
    };
    let pool = RayonPool::new(cli.workers);
    match run_experiment(&cfg, experiment, &pool) {
        Ok(manifest) => {
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            for t in &manifest.tasks {
                let status = if t.status == plrds::Status::Ok { "ok" } else { "FAILED" };
                println!("{}: {status} ({})", t.name, t.detail);
            }
            println!("reports in {}", cfg.output.directory.join(experiment.name()).display());
            if manifest.succeeded() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
