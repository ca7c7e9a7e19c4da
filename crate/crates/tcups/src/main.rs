//! `tcups` — simulate and analyze pulse-pair Stokes interference runs.
//!
//! Exit codes: 0 success, 2 config/validation error, 3 analysis failure,
//! 4 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tcups::config::RunConfig;
use tcups::runner::{self, AnalyzeOptions, RunError};

#[derive(Parser)]
#[command(
    name = "tcups",
    version,
    about = "Phonon dephasing from Stokes pulse-pair fringe visibility: \
             simulation, instrument model, and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML). Defaults describe the bulk-diamond
    /// experiment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the ensemble seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the shot count.
    #[arg(long)]
    shots: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, RunError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        config.apply_env_overrides()?;
        if let Some(out) = &self.out {
            config.output.dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.ensemble.seed = seed;
        }
        if let Some(shots) = self.shots {
            config.ensemble.shots = shots;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate laser/Stokes spectra for every configured delay and write
    /// CSVs plus a manifest.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Reduce a spectra directory to visibilities, the decay fit, and a
    /// JSON report.
    Analyze {
        /// Directory holding laser_*.csv / stokes_*.csv (and optionally a
        /// manifest.json).
        dir: PathBuf,
        /// Also write SVG plots (spectra waterfall, visibility decay).
        #[arg(long)]
        plot: bool,
        /// Print the report JSON to stdout and write no plots.
        #[arg(long, conflicts_with = "plot")]
        json_only: bool,
        /// Seed for the bootstrap error bars.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare the stochastic Langevin integrator against its closed-form
    /// weak-pump limit.
    QuantumCheck {
        #[command(flatten)]
        config: ConfigArgs,
        /// Print the report JSON to stdout only.
        #[arg(long)]
        json_only: bool,
    },
    /// Stokes yield and fringe visibility across the configured pulse
    /// energies.
    PowerScan {
        #[command(flatten)]
        config: ConfigArgs,
        /// Print the report JSON to stdout only.
        #[arg(long)]
        json_only: bool,
    },
}

fn run() -> Result<(), RunError> {
    match Cli::parse().command {
        Command::Simulate { config } => {
            let cfg = config.resolve()?;
            let out_dir = cfg.output.dir.clone();
            let outcome = runner::simulate(&cfg, &out_dir)?;
            println!(
                "wrote {} delay pairs to {} (manifest: {})",
                outcome.manifest.entries.len(),
                out_dir.display(),
                outcome.manifest_path.display()
            );
            Ok(())
        }
        Command::Analyze {
            dir,
            plot,
            json_only,
            seed,
        } => {
            let outcome = runner::analyze(&dir, &AnalyzeOptions { plot, seed })?;
            if json_only {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&outcome.report).expect("report serializes")
                );
            } else {
                let r = &outcome.report;
                println!(
                    "1/Γ = {:.2} ps  (Γ = {:.4} ± {:.4} ps⁻¹, Δν = {:.3} cm⁻¹, Q = {:.0})",
                    r.lifetime_ps,
                    r.gamma_ps_inv,
                    r.gamma_stderr_ps_inv,
                    r.linewidth_cm_inv,
                    r.q_factor
                );
                for w in &r.warnings {
                    eprintln!("warning: {w}");
                }
                println!("report: {}", outcome.report_path.display());
                for p in &outcome.plot_paths {
                    println!("plot: {}", p.display());
                }
            }
            Ok(())
        }
        Command::QuantumCheck { config, json_only } => {
            let cfg = config.resolve()?;
            let report = runner::quantum_check(&cfg.quantum, &[])?;
            if json_only {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                );
            } else {
                println!(
                    "ratio R² = {:.4}, max deviation {:.2}σ, within 3σ: {}",
                    report.ratio_r_squared, report.max_sigma_deviation, report.all_within_3_sigma
                );
                for w in &report.regime_warnings {
                    eprintln!("regime warning: {w}");
                }
                let path = cfg.output.dir.join("quantum_check.json");
                std::fs::create_dir_all(&cfg.output.dir)?;
                std::fs::write(
                    &path,
                    serde_json::to_string_pretty(&report).expect("report serializes"),
                )?;
                println!("report: {}", path.display());
            }
            Ok(())
        }
        Command::PowerScan { config, json_only } => {
            let cfg = config.resolve()?;
            let report = runner::power_scan(&cfg)?;
            if json_only {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                );
            } else {
                println!(
                    "log-log slope {:.4}; yields {:.4} … {:.3} photons/pulse; visibility spread {:.2e}",
                    report.loglog_slope,
                    report.points.first().map(|p| p.yield_photons_per_pulse).unwrap_or(0.0),
                    report.points.last().map(|p| p.yield_photons_per_pulse).unwrap_or(0.0),
                    report.visibility_spread
                );
                let path = cfg.output.dir.join("power_scan.json");
                std::fs::create_dir_all(&cfg.output.dir)?;
                std::fs::write(
                    &path,
                    serde_json::to_string_pretty(&report).expect("report serializes"),
                )?;
                println!("report: {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
