use clap::{Args, Parser, Subcommand};
use spinbath::config::SimulationConfig;
use spinbath::run::{
    cmd_cpmg_scan, cmd_fit, cmd_simulate, cmd_sweep_concentration, cmd_verify, RunError,
};
use std::path::PathBuf;
use std::process::ExitCode;

/// Spin-bath decoherence simulator: cluster-correlation expansion of a
/// central electron spin in nuclear and electronic spin baths.
#[derive(Parser)]
#[command(name = "spinbath", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV curves and summary.json.
    #[arg(long)]
    out: PathBuf,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (defaults to the number of cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// One ensemble simulation, optionally fitted to a stretched exponential.
    Simulate(CommonArgs),
    /// Simulate a list of electron-bath concentrations, fit the log-log
    /// scaling, and solve crossovers against target coherence times.
    Sweep(CommonArgs),
    /// Scan CPMG pulse counts and fit the coherence-time power law.
    Cpmg(CommonArgs),
    /// Compare truncated expansions against exact evolution on a small
    /// synthetic bath; fails when the full order disagrees.
    Verify(CommonArgs),
    /// Fit an existing curve, concentration-scan, or pulse-scan CSV.
    Fit(CommonArgs),
}

fn load_config(args: &CommonArgs) -> Result<SimulationConfig, RunError> {
    let mut cfg = SimulationConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn dispatch(command: &Command) -> Result<(), RunError> {
    let args = match command {
        Command::Simulate(a)
        | Command::Sweep(a)
        | Command::Cpmg(a)
        | Command::Verify(a)
        | Command::Fit(a) => a,
    };
    let cfg = load_config(args)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(workers) = args.workers {
        pool = pool.num_threads(workers.max(1));
    }
    let pool = pool.build().expect("thread pool");

    pool.install(|| -> Result<(), RunError> {
        match command {
            Command::Simulate(a) => {
                let record = cmd_simulate(&cfg, &a.out)?;
                if let Some(fit) = &record.fit {
                    println!(
                        "simulate: T2 = {:.6e} ms, beta = {:.4}, rms = {:.2e}",
                        fit.t2, fit.beta, fit.residual_rms
                    );
                } else {
                    println!("simulate: {} points written", record.curve.times.len());
                }
                if let Some(warning) = &record.curve_validation {
                    eprintln!("warning: {warning}");
                }
                if record.curve.meta.divergence_flag {
                    eprintln!(
                        "warning: {} guarded divisions, curve flagged divergent",
                        record.curve.meta.guarded_divisions
                    );
                }
            }
            Command::Sweep(a) => {
                let summary = cmd_sweep_concentration(&cfg, &a.out)?;
                let scan = summary.scan.as_ref().expect("fitted scan");
                println!(
                    "sweep: loglog slope = {:.4}, intercept = {:.4}",
                    scan.slope, scan.intercept
                );
                for (target, result) in &summary.crossovers {
                    match result {
                        Ok(c) => println!(
                            "crossover vs T2 = {:.4e} ms at concentration {:.6} ({:.4}%)",
                            target,
                            c,
                            c * 100.0
                        ),
                        Err(e) => println!("crossover vs T2 = {target:.4e} ms failed: {e}"),
                    }
                }
            }
            Command::Cpmg(a) => {
                let summary = cmd_cpmg_scan(&cfg, &a.out)?;
                for p in &summary.points {
                    if let Some(t2) = p.t2_ms {
                        println!("cpmg n = {}: T2 = {:.6e} ms", p.n_pulses, t2);
                    }
                }
                if let Some(fit) = &summary.power_law {
                    println!(
                        "cpmg power law: T2_0 = {:.6e} ms, p = {:.4}",
                        fit.t2_0, fit.p
                    );
                }
            }
            Command::Verify(a) => {
                let summary = cmd_verify(&cfg, &a.out)?;
                for (order, dev) in summary.deviations.iter().enumerate() {
                    println!("order {}: max deviation {:.3e}", order + 1, dev);
                }
                println!("verify: PASS (tolerance {:.1e})", summary.tolerance);
            }
            Command::Fit(a) => {
                let summary = cmd_fit(&cfg, &a.out)?;
                if let Some(fit) = &summary.stretched {
                    println!(
                        "fit: T2 = {:.6e} ms, beta = {:.4}, rms = {:.2e}",
                        fit.t2, fit.beta, fit.residual_rms
                    );
                }
                if let Some(scan) = &summary.scan {
                    println!(
                        "fit: loglog slope = {:.4}, intercept = {:.4}",
                        scan.slope, scan.intercept
                    );
                    for (target, result) in &summary.crossovers {
                        match result {
                            Ok(c) => println!(
                                "crossover vs T2 = {:.4e} ms at concentration {:.6}",
                                target, c
                            ),
                            Err(e) => println!("crossover vs T2 = {target:.4e} ms failed: {e}"),
                        }
                    }
                }
                if let Some(power) = &summary.power_law {
                    println!(
                        "fit: power law T2_0 = {:.6e} ms, p = {:.4}",
                        power.t2_0, power.p
                    );
                }
            }
        }
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
