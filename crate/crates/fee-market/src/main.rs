use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fee_market::settings::{normalize_key, Table};
use fee_market::{dispatch, load_settings, CliResult};

/// Equilibrium bids, miner thresholds, welfare and Monte Carlo checks for a
/// pay-as-bid transaction fee market.
///
/// Parameters resolve in order: explicit flag, --config file, --preset,
/// built-in default. Exit codes: 2 validation, 3 solver, 4 simulation.
#[derive(Parser)]
#[command(name = "fee-market", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bid curves of the always-operating market, one series per lambda/capacity pair.
    UcBid(UcBidArgs),
    /// Equilibrium and efficient thresholds, optimal reward and welfare.
    EoSolve(EoSolveArgs),
    /// Bid curves of the threshold market, one series per threshold.
    EoBid(EoBidArgs),
    /// Miner surplus, social welfare and threshold conditions over thresholds.
    EoCurves(EoCurvesArgs),
    /// Thresholds and welfare along one parameter.
    Sweep(SweepArgs),
    /// Discrete-event simulation with stationary histogram.
    Simulate(SimulateArgs),
    /// Patient-user discount curve, ODE residuals and deviation scan.
    Patient(PatientArgs),
}

#[derive(Args)]
struct Common {
    /// Flat key=value file using flag names as keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named parameter set (eo-baseline, eo-vary-reward, eo-vary-lambda,
    /// uc-vary-lambda, uc-vary-capacity, patient-baseline).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Write every output and manifest.json here instead of stdout/stderr.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct Market {
    /// Block arrival rate.
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<String>,
    /// Block capacity.
    #[arg(long, allow_negative_numbers = true)]
    capacity: Option<String>,
    /// Operating cost flow.
    #[arg(long, allow_negative_numbers = true)]
    cost: Option<String>,
    /// Block reward.
    #[arg(long, allow_negative_numbers = true)]
    reward: Option<String>,
    /// Mass of committed miners.
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<String>,
}

#[derive(Args)]
struct UcBidArgs {
    /// Comma-separated arrival rates.
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<String>,
    /// Comma-separated capacities.
    #[arg(long, allow_negative_numbers = true)]
    capacity: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    t_max: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    points: Option<String>,
}

#[derive(Args)]
struct EoSolveArgs {
    #[command(flatten)]
    market: Market,
}

#[derive(Args)]
struct EoBidArgs {
    #[command(flatten)]
    market: Market,
    /// Comma-separated thresholds.
    #[arg(long, allow_negative_numbers = true)]
    tstar: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    t_max: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    points: Option<String>,
}

#[derive(Args)]
struct EoCurvesArgs {
    #[command(flatten)]
    market: Market,
    #[arg(long, allow_negative_numbers = true)]
    points: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    market: Market,
    /// lambda, capacity, cost or reward.
    #[arg(long, allow_negative_numbers = true)]
    vary: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    from: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    to: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    points: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    threads: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    market: Market,
    /// uc or eo.
    #[arg(long, allow_negative_numbers = true)]
    model: Option<String>,
    /// Threshold for the eo model: a number, never_suspend or never_operate.
    /// Defaults to the equilibrium threshold.
    #[arg(long, allow_negative_numbers = true)]
    tstar: Option<String>,
    /// Recorded blocks per run.
    #[arg(long, allow_negative_numbers = true)]
    blocks: Option<String>,
    /// Mass of one user cell.
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    burn_in: Option<String>,
    /// Falls back to the SEED environment variable.
    #[arg(long, allow_negative_numbers = true)]
    seed: Option<String>,
    /// First random stream.
    #[arg(long, allow_negative_numbers = true)]
    stream: Option<String>,
    /// Independent runs on consecutive streams, merged in stream order.
    #[arg(long, allow_negative_numbers = true)]
    runs: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    threads: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    bin_width: Option<String>,
}

#[derive(Args)]
struct PatientArgs {
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    capacity: Option<String>,
    /// Discount rate.
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    paths: Option<String>,
    /// Falls back to the SEED environment variable.
    #[arg(long, allow_negative_numbers = true)]
    seed: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    grid_min: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    grid_max: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    grid_step: Option<String>,
    /// Residuals closer than this to a multiple of the capacity are skipped.
    #[arg(long, allow_negative_numbers = true)]
    kink_guard: Option<String>,
    /// Also scan deviation payoffs of the user at this pool time.
    #[arg(long, allow_negative_numbers = true)]
    scan_t: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    scan_points: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    threads: Option<String>,
}

fn put(t: &mut Table, pairs: &[(&str, &Option<String>)]) {
    for (k, v) in pairs {
        if let Some(v) = v {
            t.insert(normalize_key(k), v.clone());
        }
    }
}

impl Market {
    fn flags(&self, t: &mut Table) {
        put(
            t,
            &[
                ("lambda", &self.lambda),
                ("capacity", &self.capacity),
                ("cost", &self.cost),
                ("reward", &self.reward),
                ("eta", &self.eta),
            ],
        );
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::UcBid(_) => "uc-bid",
            Self::EoSolve(_) => "eo-solve",
            Self::EoBid(_) => "eo-bid",
            Self::EoCurves(_) => "eo-curves",
            Self::Sweep(_) => "sweep",
            Self::Simulate(_) => "simulate",
            Self::Patient(_) => "patient",
        }
    }

    fn flags(&self) -> Table {
        let mut t = Table::new();
        match self {
            Self::UcBid(a) => put(
                &mut t,
                &[
                    ("lambda", &a.lambda),
                    ("capacity", &a.capacity),
                    ("t_max", &a.t_max),
                    ("points", &a.points),
                ],
            ),
            Self::EoSolve(a) => a.market.flags(&mut t),
            Self::EoBid(a) => {
                a.market.flags(&mut t);
                put(&mut t, &[("tstar", &a.tstar), ("t_max", &a.t_max), ("points", &a.points)]);
            }
            Self::EoCurves(a) => {
                a.market.flags(&mut t);
                put(&mut t, &[("points", &a.points)]);
            }
            Self::Sweep(a) => {
                a.market.flags(&mut t);
                put(
                    &mut t,
                    &[
                        ("vary", &a.vary),
                        ("from", &a.from),
                        ("to", &a.to),
                        ("points", &a.points),
                        ("threads", &a.threads),
                    ],
                );
            }
            Self::Simulate(a) => {
                a.market.flags(&mut t);
                put(
                    &mut t,
                    &[
                        ("model", &a.model),
                        ("tstar", &a.tstar),
                        ("blocks", &a.blocks),
                        ("dt", &a.dt),
                        ("burn_in", &a.burn_in),
                        ("seed", &a.seed),
                        ("stream", &a.stream),
                        ("runs", &a.runs),
                        ("threads", &a.threads),
                        ("bin_width", &a.bin_width),
                    ],
                );
            }
            Self::Patient(a) => put(
                &mut t,
                &[
                    ("lambda", &a.lambda),
                    ("capacity", &a.capacity),
                    ("rho", &a.rho),
                    ("paths", &a.paths),
                    ("seed", &a.seed),
                    ("grid_min", &a.grid_min),
                    ("grid_max", &a.grid_max),
                    ("grid_step", &a.grid_step),
                    ("kink_guard", &a.kink_guard),
                    ("scan_t", &a.scan_t),
                    ("scan_points", &a.scan_points),
                    ("threads", &a.threads),
                ],
            ),
        }
        t
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let common = cli.common;
    let settings = load_settings(cli.command.flags(), common.config.as_deref(), common.preset.as_deref())?;
    let run = dispatch(cli.command.name(), &settings)?;
    for note in &run.notes {
        eprintln!("{note}");
    }
    match &common.out_dir {
        Some(dir) => {
            run.write_dir(dir)?;
        }
        None => {
            run.write_streams(&mut io::stdout().lock(), &mut io::stderr().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
