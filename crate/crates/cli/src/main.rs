//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on bad input, 2 on a failure during the run.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "cpsmc", version, about = "Sequential Monte Carlo changepoint analysis of event streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Particle filter on one stream.
    Run(StreamArgs),
    /// Full-history MCMC at every update.
    Smcmc(StreamArgs),
    /// Many streams under a shared particle budget.
    Multi(MultiArgs),
    /// Generate a synthetic stream.
    Simulate(SimulateArgs),
    /// Particle filter against the MCMC reference on one stream.
    Compare(StreamArgs),
}

#[derive(Args, Debug)]
struct StreamArgs {
    /// Event file, one time per line.
    #[arg(long)]
    events: PathBuf,
    /// Reject out-of-order event times instead of sorting them.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct MultiArgs {
    /// Event files, one per stream.
    #[arg(long, num_args = 1.., required = true)]
    events: Vec<PathBuf>,
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SimKind {
    PiecewisePoisson,
    ShotNoise,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    kind: SimKind,
    #[arg(long)]
    horizon: f64,
    /// Comma-separated changepoints (piecewise-poisson).
    #[arg(long, value_delimiter = ',')]
    changepoints: Vec<f64>,
    /// Comma-separated segment rates (piecewise-poisson).
    #[arg(long, value_delimiter = ',')]
    rates: Vec<f64>,
    #[arg(long, default_value_t = 1.0 / 40.0)]
    nu: f64,
    #[arg(long, default_value_t = 0.01)]
    kappa: f64,
    #[arg(long, default_value_t = 2.0 / 3.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the events.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the true changepoints and levels.
    #[arg(long)]
    truth: Option<PathBuf>,
}

/// Run settings. A `--config` file is read first; flags override it.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// File of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// poisson-gamma, prior-only or shot-noise.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    alpha_dm: Option<String>,
    #[arg(long)]
    beta_dm: Option<String>,
    #[arg(long)]
    chi: Option<String>,
    #[arg(long)]
    update_count: Option<String>,
    #[arg(long)]
    update_spacing: Option<String>,
    /// Comma-separated update times.
    #[arg(long)]
    update_times: Option<String>,
    #[arg(long)]
    particles: Option<String>,
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    floor: Option<String>,
    #[arg(long)]
    ess_threshold: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    #[arg(long)]
    burn_in: Option<String>,
    #[arg(long)]
    move_steps: Option<String>,
    #[arg(long)]
    data_driven_birth: Option<String>,
    #[arg(long)]
    bin_width: Option<String>,
    #[arg(long)]
    smoothing: Option<String>,
    /// origin or previous-update.
    #[arg(long)]
    t_star_rule: Option<String>,
    #[arg(long)]
    permute: Option<String>,
    /// pilot or lagged.
    #[arg(long)]
    allocation_timing: Option<String>,
    #[arg(long)]
    smcmc_iterations: Option<String>,
    #[arg(long)]
    smcmc_burn_in: Option<String>,
    #[arg(long)]
    smcmc_draws: Option<String>,
    #[arg(long)]
    smcmc_batches: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Directory for the CSV results.
    #[arg(long)]
    output: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let all = [
            ("model", &self.model),
            ("nu", &self.nu),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("kappa", &self.kappa),
            ("alpha_dm", &self.alpha_dm),
            ("beta_dm", &self.beta_dm),
            ("chi", &self.chi),
            ("update_count", &self.update_count),
            ("update_spacing", &self.update_spacing),
            ("update_times", &self.update_times),
            ("particles", &self.particles),
            ("budget", &self.budget),
            ("floor", &self.floor),
            ("ess_threshold", &self.ess_threshold),
            ("iterations", &self.iterations),
            ("burn_in", &self.burn_in),
            ("move_steps", &self.move_steps),
            ("data_driven_birth", &self.data_driven_birth),
            ("bin_width", &self.bin_width),
            ("smoothing", &self.smoothing),
            ("t_star_rule", &self.t_star_rule),
            ("permute", &self.permute),
            ("allocation_timing", &self.allocation_timing),
            ("smcmc_iterations", &self.smcmc_iterations),
            ("smcmc_burn_in", &self.smcmc_burn_in),
            ("smcmc_draws", &self.smcmc_draws),
            ("smcmc_batches", &self.smcmc_batches),
            ("seed", &self.seed),
            ("output", &self.output),
        ];
        all.into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }
}

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let ok = !e.use_stderr();
            let _ = e.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(&a),
        Command::Smcmc(a) => commands::smcmc(&a),
        Command::Multi(a) => commands::multi(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Compare(a) => commands::compare(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
