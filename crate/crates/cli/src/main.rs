mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "helfrich", version, about = "Locally area-constrained Helfrich flow of closed surfaces")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dotted-key override, e.g. stepping.horizon=0.5 (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Blow-up frame output.
    #[arg(long, value_enum, global = true)]
    pub frames: Option<OnOff>,
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ParamArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub c0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the flow described by the configuration.
    Flow,
    /// Integrate the round-sphere radius equation.
    Ode {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        r0: f64,
        #[arg(long, default_value_t = f64::INFINITY)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-10)]
        rtol: f64,
    },
    /// Energies, bounds and Gauss–Bonnet residuals of a mesh.
    Energy {
        /// Mesh file (.off/.obj) or generator: icosphere:LEVEL[:RADIUS], torus:R:r, tetrahedron.
        #[arg(long)]
        mesh: String,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Parabolic rescaling (f − x)/r of a mesh with the matching parameters.
    Rescale {
        #[arg(long)]
        mesh: String,
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
        /// Center as x,y,z.
        #[arg(long, allow_hyphen_values = true, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 0.0, 0.0])]
        x: Vec<f64>,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Run validation suites: identities, gradients, rescaling, ode_oracle, shrinker, equilibrium, all.
    Validate {
        #[arg(long, default_value = "all")]
        suite: Vec<String>,
        /// Coarser meshes with wider tolerances.
        #[arg(long)]
        fast: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Failure classes with distinct exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Io,
    Config,
    MeshInvalid,
    Solver,
    ValidationFailed,
}

impl Failure {
    pub fn code(self) -> u8 {
        match self {
            Self::Io => 10,
            Self::Config => 11,
            Self::MeshInvalid => 12,
            Self::Solver => 13,
            Self::ValidationFailed => 14,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Io => "input/output error",
            Self::Config => "configuration error",
            Self::MeshInvalid => "invalid mesh",
            Self::Solver => "solver failure",
            Self::ValidationFailed => "validation failed",
        })
    }
}

impl std::error::Error for Failure {}

/// Outcome of a successful command.
pub enum Outcome {
    Clean,
    Singular,
}

fn main() -> ExitCode {
    // clap's own usage exit code (2) is reserved for singular runs.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(Failure::Config.code());
        }
    };
    match commands::dispatch(&cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Singular) => ExitCode::from(2),
        Err(err) => {
            let failure = err.downcast_ref::<Failure>().copied().unwrap_or(Failure::Io);
            eprintln!("error: {err:#}");
            ExitCode::from(failure.code())
        }
    }
}
