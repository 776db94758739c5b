//! Seeded Monte Carlo experiments.
//!
//! Every trial derives its own streams from `(seed, "trial-{i}/...")`, so the
//! same trial index sees the same channel and the same unit-variance noise
//! draws at every grid point and for every estimator. Trials may run on a
//! worker pool; results are reduced in trial order, so output does not
//! depend on the number of workers.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::baseline::estimate_cascaded_ls;
use crate::channel::{cascade, sample_channels, ChannelRealization};
use crate::config::{derive_link_budget, linear_to_db, SystemConfig};
use crate::dual_link::{build_reflection_schedule, decorrelate_products, simulate_dual_link};
use crate::error::{Error, Result};
use crate::metrics::{
    pilot_overhead, sign_aligned_accumulator, FbarStats, NmseAccumulator, OverheadReport,
};
use crate::mobile::{
    assemble_measurement_matrix, estimate_mobile_with, generate_pilot_plan, simulate_uplink_frame,
    LsSolver,
};
use crate::quasi_static::{estimate_bs_ris, BsRisEstimate};
use crate::rng::derive_stream;

/// Redraws of the uplink reflection schedule before a trial is abandoned.
pub const MAX_REDRAWS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Convergence,
    NmseSweep,
    OverheadSweep,
    EndToEnd,
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convergence" => Ok(Self::Convergence),
            "nmse-sweep" | "nmse" => Ok(Self::NmseSweep),
            "overhead-sweep" | "overhead" => Ok(Self::OverheadSweep),
            "end-to-end" => Ok(Self::EndToEnd),
            other => Err(Error::InvalidExperiment(format!(
                "unknown experiment {other:?} (expected convergence, nmse-sweep, overhead or end-to-end)"
            ))),
        }
    }
}

impl ExperimentKind {
    pub fn default_trials(self) -> usize {
        match self {
            Self::Convergence => 100,
            Self::NmseSweep | Self::EndToEnd => 500,
            Self::OverheadSweep => 1,
        }
    }

    /// SINR_L (dB) for convergence, SNR_S (dB) for sweeps, alpha for
    /// overhead. End-to-end runs the configuration as given.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Self::Convergence => vec![0.0, 10.0, 20.0],
            Self::NmseSweep => (0..=6).map(|i| 5.0 * i as f64).collect(),
            Self::OverheadSweep => vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            Self::EndToEnd => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; `Some(1)` is the canonical single-worker mode.
    pub threads: Option<usize>,
    /// Holds the dual-link SINR at this value (dB) during SNR sweeps.
    pub pin_sinr_l_db: Option<f64>,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, seed: u64) -> Self {
        Self {
            kind,
            grid: kind.default_grid(),
            trials: kind.default_trials(),
            seed,
            threads: None,
            pin_sinr_l_db: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidExperiment("trials must be at least 1".into()));
        }
        if self.grid.is_empty() && self.kind != ExperimentKind::EndToEnd {
            return Err(Error::InvalidExperiment("sweep grid is empty".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidExperiment(
                "threads must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn run_trials<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Send + Sync,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.unwrap_or(0))
            .build()
            .map_err(|e| Error::InvalidExperiment(e.to_string()))?;
        pool.install(|| (0..self.trials).into_par_iter().map(&f).collect())
    }
}

/// Formats with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn trial_channels(cfg: &SystemConfig, seed: u64, trial: usize) -> Result<ChannelRealization> {
    let budget = derive_link_budget(cfg)?;
    Ok(sample_channels(
        cfg,
        &budget,
        &mut derive_stream(seed, &format!("trial-{trial}/channels")),
    ))
}

/// Dual-link phase of one trial: products, then Algorithm-style recovery.
/// Also returns `(Σ|a|², count)` over all product estimates.
fn large_timescale(
    real: &ChannelRealization,
    cfg: &SystemConfig,
    seed: u64,
    trial: usize,
) -> Result<(BsRisEstimate, f64, usize)> {
    let budget = derive_link_budget(cfg)?;
    let schedule = build_reflection_schedule(cfg.ris_elements);
    let obs = simulate_dual_link(
        real,
        &schedule,
        cfg,
        &budget,
        &mut derive_stream(seed, &format!("trial-{trial}/dual-link")),
    )?;
    let products = decorrelate_products(&obs, cfg)?;
    let energy = products.a.iter().map(|z| z.norm_sqr()).sum();
    let estimate = estimate_bs_ris(&products, cfg)?;
    Ok((estimate, energy, products.a.len()))
}

// ---------------------------------------------------------------------------
// convergence

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub sinr_db: f64,
    pub iteration: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub sinr_db: f64,
    pub trial: usize,
    pub ris_element: usize,
    pub iteration: usize,
    pub objective: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub traces: Vec<TraceRow>,
    /// Column subproblems aggregated per SINR point.
    pub subproblems: usize,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sinr_db,iteration,mean_fbar,std_fbar\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(r.sinr_db),
                r.iteration,
                fmt_f64(r.mean),
                fmt_f64(r.std)
            );
        }
        out
    }

    pub fn traces_csv(&self) -> String {
        let mut out = String::from("sinr_db,trial,n,i,objective,fbar\n");
        for t in &self.traces {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_f64(t.sinr_db),
                t.trial,
                t.ris_element,
                t.iteration,
                fmt_f64(t.objective),
                fmt_f64(t.normalized)
            );
        }
        out
    }

    pub fn means_at(&self, sinr_db: f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.sinr_db == sinr_db || (r.sinr_db.is_nan() && sinr_db.is_nan()))
            .map(|r| r.mean)
            .collect()
    }
}

/// Normalized-objective statistics per SINR_L point. The normalizer
/// `E{J_n(0)}` is `|S|` times the mean `|a|²` over every product of the
/// point's trials.
pub fn run_convergence(cfg: &SystemConfig, spec: &ExperimentSpec) -> Result<ConvergenceTable> {
    spec.validate()?;
    let max_iters = cfg.max_outer_iters;
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut subproblems = 0;
    for &sinr_db in &spec.grid {
        let point = cfg.with_sinr_l_db(sinr_db)?;
        let results = spec.run_trials(|trial| {
            let real = trial_channels(&point, spec.seed, trial)?;
            let (est, energy, count) = large_timescale(&real, &point, spec.seed, trial)?;
            let padded: Vec<Vec<f64>> = est.traces.iter().map(|t| t.padded(max_iters)).collect();
            Ok((padded, energy, count))
        })?;

        let (energy, count) = results
            .iter()
            .fold((0.0, 0usize), |(e, c), r| (e + r.1, c + r.2));
        let expected_zero = point.pair_count() as f64 * energy / count as f64;

        let mut normalized = Vec::new();
        for (trial, (padded, _, _)) in results.iter().enumerate() {
            for (n, objective) in padded.iter().enumerate() {
                let fbar: Vec<f64> = objective.iter().map(|j| j / expected_zero).collect();
                for (i, (&j, &f)) in objective.iter().zip(&fbar).enumerate() {
                    traces.push(TraceRow {
                        sinr_db,
                        trial,
                        ris_element: n,
                        iteration: i,
                        objective: j,
                        normalized: f,
                    });
                }
                normalized.push(fbar);
            }
        }
        subproblems = normalized.len();
        let stats = FbarStats::from_traces(normalized.iter().map(Vec::as_slice));
        for (i, (&mean, &std)) in stats.mean.iter().zip(&stats.std).enumerate() {
            rows.push(ConvergenceRow {
                sinr_db,
                iteration: i,
                mean,
                std,
            });
        }
    }
    Ok(ConvergenceTable {
        rows,
        traces,
        subproblems,
    })
}

// ---------------------------------------------------------------------------
// end-to-end

/// Per-trial accumulators.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrialOutcome {
    pub cascaded: NmseAccumulator,
    pub direct: NmseAccumulator,
    pub g_signaligned: NmseAccumulator,
    pub baseline_cascaded: NmseAccumulator,
    pub baseline_direct: NmseAccumulator,
    /// Reflection-schedule redraws forced by conditioning.
    pub redraws: usize,
}

/// Runs one full two-timescale trial plus the baseline on the same channel.
///
/// `dual_cfg` sets the noise of the dual-link phase and `uplink_cfg` that of
/// the uplink phase; they differ only when the dual-link SINR is pinned.
pub fn run_trial(
    dual_cfg: &SystemConfig,
    uplink_cfg: &SystemConfig,
    seed: u64,
    trial: usize,
) -> Result<TrialOutcome> {
    let real = trial_channels(uplink_cfg, seed, trial)?;
    let truth = cascade(&real)?;
    let (bs_ris, _, _) = large_timescale(&real, dual_cfg, seed, trial)?;
    let g_hat = &bs_ris.g_hat;

    let mut redraws = 0;
    let (plan, solver) = loop {
        let label = if redraws == 0 {
            format!("trial-{trial}/uplink-plan")
        } else {
            format!("trial-{trial}/uplink-plan/redraw-{redraws}")
        };
        let plan = generate_pilot_plan(uplink_cfg, &mut derive_stream(seed, &label));
        let mat = assemble_measurement_matrix(g_hat, &plan)?;
        match LsSolver::new(&mat) {
            Ok(solver) => break (plan, solver),
            Err(Error::RankDeficient { condition, .. }) => {
                if redraws == MAX_REDRAWS {
                    return Err(Error::RankDeficient {
                        condition,
                        trial: Some(trial),
                    });
                }
                redraws += 1;
            }
            Err(e) => return Err(e),
        }
    };
    let obs = simulate_uplink_frame(
        &real,
        &plan,
        uplink_cfg,
        &mut derive_stream(seed, &format!("trial-{trial}/uplink-noise")),
    )?;
    let mobile = estimate_mobile_with(&solver, g_hat, &plan, &obs)?;
    let baseline = estimate_cascaded_ls(
        &real,
        uplink_cfg,
        &mut derive_stream(seed, &format!("trial-{trial}/baseline-noise")),
    )?;

    let mut out = TrialOutcome {
        g_signaligned: sign_aligned_accumulator(g_hat, &real.g),
        redraws,
        ..Default::default()
    };
    for k in 0..real.users() {
        out.cascaded.add_matrix(&mobile.c_hat[k], &truth.c[k])?;
        out.direct.add_vector(&mobile.h_hat[k], &real.h[k])?;
        out.baseline_cascaded
            .add_matrix(&baseline.c_hat[k], &truth.c[k])?;
        out.baseline_direct
            .add_vector(&baseline.h_hat[k], &real.h[k])?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmseRow {
    pub snr_db: f64,
    pub nmse_c: f64,
    pub nmse_h: f64,
    pub nmse_g_signaligned: f64,
    pub baseline_nmse_c: f64,
    pub baseline_nmse_h: f64,
    pub trials: usize,
    pub redraws: usize,
}

pub fn nmse_csv(rows: &[NmseRow]) -> String {
    let mut out = String::from(
        "snr_db,nmse_c,nmse_h,nmse_g_signaligned,baseline_nmse_c,baseline_nmse_h,trials,redraws\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(r.snr_db),
            fmt_f64(r.nmse_c),
            fmt_f64(r.nmse_h),
            fmt_f64(r.nmse_g_signaligned),
            fmt_f64(r.baseline_nmse_c),
            fmt_f64(r.baseline_nmse_h),
            r.trials,
            r.redraws
        );
    }
    out
}

fn run_point(
    dual_cfg: &SystemConfig,
    uplink_cfg: &SystemConfig,
    snr_db: f64,
    spec: &ExperimentSpec,
) -> Result<NmseRow> {
    let outcomes = spec.run_trials(|trial| run_trial(dual_cfg, uplink_cfg, spec.seed, trial))?;
    let mut total = TrialOutcome::default();
    for o in &outcomes {
        total.cascaded.merge(&o.cascaded);
        total.direct.merge(&o.direct);
        total.g_signaligned.merge(&o.g_signaligned);
        total.baseline_cascaded.merge(&o.baseline_cascaded);
        total.baseline_direct.merge(&o.baseline_direct);
        total.redraws += o.redraws;
    }
    Ok(NmseRow {
        snr_db,
        nmse_c: total.cascaded.value("cascaded channel")?,
        nmse_h: total.direct.value("direct channel")?,
        nmse_g_signaligned: total.g_signaligned.value("BS-RIS channel")?,
        baseline_nmse_c: total.baseline_cascaded.value("cascaded channel")?,
        baseline_nmse_h: total.baseline_direct.value("direct channel")?,
        trials: outcomes.len(),
        redraws: total.redraws,
    })
}

/// SNR_S sweep (`NmseSweep`) or a single point at the configured noise
/// (`EndToEnd`).
pub fn run_end_to_end(cfg: &SystemConfig, spec: &ExperimentSpec) -> Result<Vec<NmseRow>> {
    spec.validate()?;
    let pinned = |c: &SystemConfig| match spec.pin_sinr_l_db {
        Some(db) => c.with_sinr_l_db(db),
        None => Ok(c.clone()),
    };
    if spec.kind == ExperimentKind::EndToEnd && spec.grid.is_empty() {
        let snr_db = linear_to_db(derive_link_budget(cfg)?.snr_s);
        return Ok(vec![run_point(&pinned(cfg)?, cfg, snr_db, spec)?]);
    }
    spec.grid
        .iter()
        .map(|&snr_db| {
            let uplink = cfg.with_snr_s_db(snr_db)?;
            run_point(&pinned(&uplink)?, &uplink, snr_db, spec)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// overhead

#[derive(Debug, Clone, PartialEq)]
pub struct OverheadRow {
    pub alpha: f64,
    pub report: OverheadReport,
}

pub fn run_overhead(cfg: &SystemConfig, spec: &ExperimentSpec) -> Result<Vec<OverheadRow>> {
    spec.validate()?;
    Ok(spec
        .grid
        .iter()
        .map(|&alpha| {
            let c = SystemConfig {
                alpha_timescale: alpha,
                ..cfg.clone()
            };
            OverheadRow {
                alpha,
                report: pilot_overhead(&c),
            }
        })
        .collect())
}

pub fn overhead_csv(rows: &[OverheadRow]) -> String {
    let mut out = String::from("alpha,tau_avg,baseline_mvu,baseline_reduced\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(r.alpha),
            fmt_f64(r.report.tau_avg),
            r.report.baseline_mvu,
            r.report.baseline_reduced
        );
    }
    out
}

/// Runs `spec` and returns the CSV body with a one-line summary.
pub fn run_experiment(cfg: &SystemConfig, spec: &ExperimentSpec) -> Result<(String, String)> {
    match spec.kind {
        ExperimentKind::Convergence => {
            let t = run_convergence(cfg, spec)?;
            let last: Vec<String> = spec
                .grid
                .iter()
                .map(|&s| {
                    let m = t.means_at(s);
                    format!("{s} dB: {:.3e}", m.last().copied().unwrap_or(f64::NAN))
                })
                .collect();
            let summary = format!(
                "convergence: {} subproblems per point, final mean fbar [{}]",
                t.subproblems,
                last.join(", ")
            );
            Ok((t.to_csv(), summary))
        }
        ExperimentKind::NmseSweep | ExperimentKind::EndToEnd => {
            let rows = run_end_to_end(cfg, spec)?;
            let redraws: usize = rows.iter().map(|r| r.redraws).sum();
            let summary = format!(
                "nmse: {} points x {} trials, nmse_c {:.3e}..{:.3e}, {} redraws",
                rows.len(),
                spec.trials,
                rows.first().map_or(f64::NAN, |r| r.nmse_c),
                rows.last().map_or(f64::NAN, |r| r.nmse_c),
                redraws
            );
            Ok((nmse_csv(&rows), summary))
        }
        ExperimentKind::OverheadSweep => {
            let rows = run_overhead(cfg, spec)?;
            let summary = format!(
                "overhead: {} alpha values, tau_avg {:.3}..{:.3}",
                rows.len(),
                rows.first().map_or(f64::NAN, |r| r.report.tau_avg),
                rows.last().map_or(f64::NAN, |r| r.report.tau_avg)
            );
            Ok((overhead_csv(&rows), summary))
        }
    }
}
