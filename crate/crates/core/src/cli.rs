//! Command-line front end.
//!
//! ```text
//! ris-sim --experiment overhead --alpha-grid 4,8,16
//! ris-sim --experiment convergence --trials 100 --seed 7 --out conv.csv
//! ris-sim --experiment nmse-sweep --config paper.toml --snr-grid-db 0,10,20 --K 4
//! ```
//!
//! Scenario flags carry the same names as the config-file keys and override
//! the file.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;

use crate::config::{ConfigOverrides, SystemConfig};
use crate::error::{Error, Result};
use crate::harness::{run_convergence, run_experiment, ExperimentKind, ExperimentSpec};

#[allow(non_snake_case)]
#[derive(Debug, Parser)]
#[command(
    name = "ris-sim",
    about = "Two-timescale RIS channel estimation experiments",
    allow_negative_numbers = true
)]
pub struct Cli {
    /// convergence | nmse-sweep | overhead | end-to-end
    #[arg(long)]
    pub experiment: String,
    /// TOML scenario file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Uplink SNR grid (dB) for nmse-sweep.
    #[arg(long, value_delimiter = ',')]
    pub snr_grid_db: Option<Vec<f64>>,
    /// Dual-link SINR grid (dB) for convergence.
    #[arg(long, value_delimiter = ',')]
    pub sinr_grid_db: Option<Vec<f64>>,
    /// Timescale ratios for overhead.
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    /// Hold the dual-link SINR (dB) fixed during SNR sweeps.
    #[arg(long)]
    pub pin_sinr_l_db: Option<f64>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-subproblem convergence traces (convergence only).
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Worker threads; 1 is the canonical single-worker mode.
    #[arg(long)]
    pub threads: Option<usize>,

    #[arg(long = "M")]
    pub M: Option<usize>,
    #[arg(long = "N")]
    pub N: Option<usize>,
    #[arg(long = "K")]
    pub K: Option<usize>,
    #[arg(long = "L")]
    pub L: Option<usize>,
    #[arg(long = "tau0")]
    pub tau0: Option<usize>,
    #[arg(long = "P_BS")]
    pub P_BS: Option<f64>,
    #[arg(long = "P_UE")]
    pub P_UE: Option<f64>,
    #[arg(long = "sigma2_n")]
    pub sigma2_n: Option<f64>,
    #[arg(long = "sigma2_i")]
    pub sigma2_i: Option<f64>,
    #[arg(long = "rho_s")]
    pub rho_s: Option<f64>,
    #[arg(long = "d_g")]
    pub d_g: Option<f64>,
    #[arg(long = "d_h")]
    pub d_h: Option<f64>,
    #[arg(long = "d_f")]
    pub d_f: Option<f64>,
    #[arg(long = "alpha_g")]
    pub alpha_g: Option<f64>,
    #[arg(long = "alpha_h")]
    pub alpha_h: Option<f64>,
    #[arg(long = "alpha_f")]
    pub alpha_f: Option<f64>,
    #[arg(long = "rho0_dB")]
    pub rho0_dB: Option<f64>,
    #[arg(long = "d0")]
    pub d0: Option<f64>,
    #[arg(long = "alpha_timescale")]
    pub alpha_timescale: Option<f64>,
    #[arg(long = "I_max")]
    pub I_max: Option<usize>,
    #[arg(long = "epsilon_term")]
    pub epsilon_term: Option<f64>,
}

impl Cli {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            M: self.M,
            N: self.N,
            K: self.K,
            L: self.L,
            tau0: self.tau0,
            P_BS: self.P_BS,
            P_UE: self.P_UE,
            sigma2_n: self.sigma2_n,
            sigma2_i: self.sigma2_i,
            rho_s: self.rho_s,
            d_g: self.d_g,
            d_h: self.d_h,
            d_f: self.d_f,
            alpha_g: self.alpha_g,
            alpha_h: self.alpha_h,
            alpha_f: self.alpha_f,
            rho0_dB: self.rho0_dB,
            d0: self.d0,
            alpha_timescale: self.alpha_timescale,
            I_max: self.I_max,
            epsilon_term: self.epsilon_term,
            seed: self.seed,
        }
    }

    /// Resolves the scenario and experiment description.
    pub fn resolve(&self) -> Result<(SystemConfig, ExperimentSpec)> {
        let mut cfg = match &self.config {
            Some(path) => SystemConfig::from_file(path)?,
            None => SystemConfig::default(),
        };
        cfg.apply(&self.overrides());
        cfg.ensure_valid()?;

        let kind: ExperimentKind = self.experiment.parse()?;
        let mut spec = ExperimentSpec::new(kind, cfg.seed);
        let grid = match kind {
            ExperimentKind::Convergence => &self.sinr_grid_db,
            ExperimentKind::NmseSweep | ExperimentKind::EndToEnd => &self.snr_grid_db,
            ExperimentKind::OverheadSweep => &self.alpha_grid,
        };
        if let Some(g) = grid {
            spec.grid = g.clone();
        }
        if let Some(t) = self.trials {
            spec.trials = t;
        }
        spec.threads = self.threads;
        spec.pin_sinr_l_db = self.pin_sinr_l_db;
        spec.validate()?;
        Ok((cfg, spec))
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

/// Parses, runs and reports; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let (cfg, spec) = cli.resolve()?;
    let (csv, summary) = match (&cli.trace_out, spec.kind) {
        (Some(path), ExperimentKind::Convergence) => {
            let table = run_convergence(&cfg, &spec)?;
            write_file(path, &table.traces_csv())?;
            let summary = format!("convergence: {} subproblems per point", table.subproblems);
            (table.to_csv(), summary)
        }
        _ => run_experiment(&cfg, &spec)?,
    };
    match &cli.out {
        Some(path) => {
            write_file(path, &csv)?;
            println!("{summary} -> {}", path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(csv.as_bytes());
            eprintln!("{summary}");
        }
    }
    Ok(())
}
