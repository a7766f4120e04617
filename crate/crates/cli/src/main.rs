mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use penflow::experiments::ScenarioName;
use penflow::io::parse_config_with_overrides;
use penflow::Error;

pub const VERSION: &str = env!("PENFLOW_VERSION");

#[derive(Debug, Parser)]
#[command(name = "penflow", version = VERSION, about = "Penalty-based ensemble Navier-Stokes scenarios")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Random seed (cylinder perturbations, Monte Carlo forcing).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Full-scale meshes and final times instead of the desk defaults.
    #[arg(long, global = true)]
    full: bool,
    /// Write the ensemble mean as VTK every N accepted steps (0 = off).
    #[arg(long, global = true, value_name = "N")]
    vtk_every: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Manufactured-solution convergence study.
    Converge {
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Two counter-rotating rotors inside a disk.
    Rotors,
    /// Flow past a cylinder with rotation.
    Cylinder {
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long)]
        members: Option<usize>,
    },
    /// Monte Carlo statistical error of ensemble averages.
    Montecarlo,
}

impl Command {
    fn scenario(&self) -> ScenarioName {
        match self {
            Self::Converge { .. } => ScenarioName::Converge,
            Self::Rotors => ScenarioName::Rotors,
            Self::Cylinder { .. } => ScenarioName::Cylinder,
            Self::Montecarlo => ScenarioName::MonteCarlo,
        }
    }
}

fn overrides(cli: &Cli) -> Vec<(String, String)> {
    let mut ov = vec![("scenario".to_string(), cli.command.scenario().to_string())];
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            ov.push((k.to_string(), v));
        }
    };
    let c = &cli.common;
    push("full", c.full.then(|| "true".to_string()));
    push("out", c.out.as_ref().map(|p| p.display().to_string()));
    push("seed", c.seed.map(|s| s.to_string()));
    push("vtk_every", c.vtk_every.map(|n| n.to_string()));
    match &cli.command {
        Command::Converge { levels } => push("levels", levels.map(|n| n.to_string())),
        Command::Cylinder { omega, members } => {
            // Debug formatting keeps every digit of the float
            push("omega", omega.map(|w| format!("{w:?}")));
            push("members", members.map(|n| n.to_string()));
        }
        Command::Rotors | Command::Montecarlo => {}
    }
    ov
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let text = match &cli.common.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read config {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => String::new(),
    };
    let cfg = match parse_config_with_overrides(&text, &overrides(&cli)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run::run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
