use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dam_sim::harness::{emit_outputs, papr_comparison, run_sweep, ExperimentConfig};
use dam_sim::verify;

#[derive(Parser)]
#[command(
    name = "dam-sim",
    version,
    about = "Delay alignment modulation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo spectral-efficiency sweep
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also run waveform-level SINR checks and the PAPR comparison
        #[arg(long)]
        link_level: bool,
    },
    /// Run the built-in invariant checks
    Verify {
        /// Larger Monte Carlo sizes
        #[arg(long)]
        thorough: bool,
    },
    /// PAPR CCDF of DAM against OFDM
    Papr {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(path: Option<&PathBuf>) -> dam_sim::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(cli: Cli) -> dam_sim::Result<bool> {
    match cli.command {
        Command::Sweep {
            config,
            out,
            trials,
            seed,
            link_level,
        } => {
            let mut cfg = load(config.as_ref())?;
            if let Some(t) = trials {
                cfg.sweep.trials = t;
            }
            if let Some(s) = seed {
                cfg.sweep.base_seed = s;
            }
            cfg.link_level.enabled |= link_level;
            let res = run_sweep(&cfg)?;
            for p in &res.points {
                for a in &p.arms {
                    println!(
                        "{}={:<5} {:<9} SE {:.4} ± {:.4} bps/Hz ({} trials)",
                        res.variable.column(),
                        p.value,
                        a.arm,
                        a.mean_se,
                        a.stderr_se,
                        a.trials
                    );
                }
            }
            for f in emit_outputs(&res, &cfg, &out)? {
                println!("wrote {}", f.display());
            }
            Ok(true)
        }
        Command::Verify { thorough } => {
            let checks = verify::run_all(!thorough);
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {failed} failed", checks.len());
            Ok(failed == 0)
        }
        Command::Papr { config } => {
            let cfg = load(config.as_ref())?;
            let papr = papr_comparison(&cfg, 0)?;
            println!("threshold_db,ccdf_dam,ccdf_ofdm");
            for &t in &papr.thresholds_db {
                println!("{t},{},{}", papr.dam.ccdf(t), papr.ofdm.ccdf(t));
            }
            println!(
                "PAPR at 1e-3: DAM {:.2} dB, OFDM {:.2} dB",
                papr.dam.quantile_db(1e-3),
                papr.ofdm.quantile_db(1e-3)
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
