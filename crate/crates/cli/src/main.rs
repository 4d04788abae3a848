use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hjb_cli::{
    cmd_simulate, cmd_solve, cmd_sweep, cmd_validate, load_config, parse_values, CliError,
    Overrides,
};

/// Consumption-investment under a borrowing cap: solve, certify, simulate.
///
/// Exit codes: 0 success, 1 domain failure, 2 usage or parse error.
/// Set HJB_LOG (e.g. HJB_LOG=info) for progress messages.
#[derive(Parser)]
#[command(name = "hjb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Problem config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the number of grid intervals.
    #[arg(long)]
    grid_n: Option<usize>,
    /// Override the upper end of the wealth grid.
    #[arg(long)]
    xmax: Option<f64>,
    /// Override the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            grid_n: self.grid_n,
            x_max: self.xmax,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing assumptions on the model.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the HJB equation; writes value.csv, policy.csv, region.json, diagnostics.json.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve for several cap levels; writes sweep.csv and sweep.json.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Parameter to vary (only L).
        #[arg(long, default_value = "L")]
        sweep_param: String,
        /// Comma-separated values, e.g. 0.5,1,2.
        #[arg(long)]
        values: String,
    },
    /// Monte Carlo check of a policy table; writes sim.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Policy table; defaults to OUT/policy.csv.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { common } => {
            let cfg = load_config(&common.config, &common.overrides())?;
            cmd_validate(&cfg, &mut std::io::stdout())?;
        }
        Command::Solve { common, out } => {
            let cfg = load_config(&common.config, &common.overrides())?;
            let r = cmd_solve(&cfg, &out)?;
            println!(
                "converged in {} iterations, residual {:e}, x* = {}",
                r.diagnostics.iterations,
                r.diagnostics.hjb_residual_scaled,
                r.region
                    .xstar
                    .map_or_else(|| "none".to_string(), |x| x.to_string())
            );
        }
        Command::Sweep {
            common,
            out,
            sweep_param,
            values,
        } => {
            let values = parse_values(&values)?;
            let cfg = load_config(&common.config, &common.overrides())?;
            let s = cmd_sweep(&cfg, &sweep_param, &values, &out)?;
            for r in &s.rows {
                println!(
                    "L = {}: x* = {}",
                    r.l,
                    r.xstar
                        .map_or_else(|| "none".to_string(), |x| x.to_string())
                );
            }
            println!("x* increasing in L: {}", s.xstar_increasing);
        }
        Command::Simulate {
            common,
            out,
            policy,
        } => {
            let cfg = load_config(&common.config, &common.overrides())?;
            let policy = policy.unwrap_or_else(|| out.join("policy.csv"));
            let s = cmd_simulate(&cfg, &policy, &out)?;
            println!(
                "estimate {} +- {} vs V(x0) = {} (tolerance {})",
                s.result.estimate, s.result.stderr, s.v_x0, s.tolerance
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("HJB_LOG"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
