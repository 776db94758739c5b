//! NMSE metrics, normalized-objective statistics and pilot-overhead counts.
//!
//! NMSE values are ratios of sums: squared errors are summed over every
//! trial and UE, then divided by the summed channel energy.

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::{CMatrix, CVector};

/// Running numerator and denominator of an NMSE.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NmseAccumulator {
    pub error: f64,
    pub energy: f64,
}

impl NmseAccumulator {
    pub fn add_matrix(&mut self, estimate: &CMatrix, truth: &CMatrix) -> Result<()> {
        check_shape("matrix", estimate.shape(), truth.shape())?;
        self.error += (estimate - truth).norm_squared();
        self.energy += truth.norm_squared();
        Ok(())
    }

    pub fn add_vector(&mut self, estimate: &CVector, truth: &CVector) -> Result<()> {
        check_shape("vector", estimate.shape(), truth.shape())?;
        self.error += (estimate - truth).norm_squared();
        self.energy += truth.norm_squared();
        Ok(())
    }

    pub fn merge(&mut self, other: &NmseAccumulator) {
        self.error += other.error;
        self.energy += other.energy;
    }

    pub fn value(&self, what: &'static str) -> Result<f64> {
        if self.energy > 0.0 {
            Ok(self.error / self.energy)
        } else {
            Err(Error::ZeroEnergy(what))
        }
    }
}

fn check_shape(what: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            what,
            expected: format!("{}x{}", b.0, b.1),
            found: format!("{}x{}", a.0, a.1),
        })
    }
}

fn check_len(what: &'static str, a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            what,
            expected: b.to_string(),
            found: a.to_string(),
        })
    }
}

/// Cascaded-channel NMSE; outer slices are trials, inner are UEs.
pub fn nmse_cascaded(estimates: &[Vec<CMatrix>], truths: &[Vec<CMatrix>]) -> Result<f64> {
    check_len("trial count", estimates.len(), truths.len())?;
    let mut acc = NmseAccumulator::default();
    for (est, tru) in estimates.iter().zip(truths) {
        check_len("UE count", est.len(), tru.len())?;
        for (e, t) in est.iter().zip(tru) {
            acc.add_matrix(e, t)?;
        }
    }
    acc.value("cascaded channel")
}

/// Direct-channel NMSE; outer slices are trials, inner are UEs.
pub fn nmse_direct(estimates: &[Vec<CVector>], truths: &[Vec<CVector>]) -> Result<f64> {
    check_len("trial count", estimates.len(), truths.len())?;
    let mut acc = NmseAccumulator::default();
    for (est, tru) in estimates.iter().zip(truths) {
        check_len("UE count", est.len(), tru.len())?;
        for (e, t) in est.iter().zip(tru) {
            acc.add_vector(e, t)?;
        }
    }
    acc.value("direct channel")
}

/// Error and energy of `Ĝ` after flipping each column to the sign closest
/// to the truth.
pub fn sign_aligned_accumulator(g_hat: &CMatrix, g: &CMatrix) -> NmseAccumulator {
    let mut acc = NmseAccumulator::default();
    for (est, tru) in g_hat.column_iter().zip(g.column_iter()) {
        let plus = (est - tru).norm_squared();
        let minus = (est + tru).norm_squared();
        acc.error += plus.min(minus);
        acc.energy += tru.norm_squared();
    }
    acc
}

/// Diagnostic NMSE of `Ĝ` modulo the per-column sign. Returns NaN when `G`
/// is identically zero.
pub fn nmse_g_signaligned(g_hat: &CMatrix, g: &CMatrix) -> f64 {
    assert_eq!(g_hat.shape(), g.shape(), "BS-RIS estimate shape");
    let acc = sign_aligned_accumulator(g_hat, g);
    acc.error / acc.energy
}

/// Mean and standard deviation of `f̄^(i)` per iteration index.
#[derive(Debug, Clone, PartialEq)]
pub struct FbarStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: usize,
}

impl FbarStats {
    /// Aggregates equally long normalized traces (population std).
    pub fn from_traces<'a, I>(traces: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut sum: Vec<f64> = Vec::new();
        let mut sum_sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for trace in traces {
            if sum.is_empty() {
                sum = vec![0.0; trace.len()];
                sum_sq = vec![0.0; trace.len()];
            }
            assert_eq!(
                trace.len(),
                sum.len(),
                "traces must be padded to equal length"
            );
            for (i, &v) in trace.iter().enumerate() {
                sum[i] += v;
                sum_sq[i] += v * v;
            }
            count += 1;
        }
        let n = count.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, mu)| (sq / n - mu * mu).max(0.0).sqrt())
            .collect();
        Self { mean, std, count }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadReport {
    /// Dual-link slots per large-timescale block.
    pub tau1: usize,
    /// Uplink slots per small-timescale block.
    pub tau2: usize,
    /// Average slots per small-timescale block.
    pub tau_avg: f64,
    /// Full cascaded estimation, `(M+N)K`.
    pub baseline_mvu: usize,
    /// Reference-UE reduced scheme, `K + N + max{K−1, ceil((K−1)N/M)}`.
    pub baseline_reduced: usize,
}

pub fn pilot_overhead(cfg: &SystemConfig) -> OverheadReport {
    let (m, n, k, l) = (
        cfg.bs_antennas,
        cfg.ris_elements,
        cfg.users,
        cfg.tx_antennas,
    );
    let tau1 = (n + 1) * l;
    let tau2 = k * cfg.min_uplink_subframes();
    let tau_avg = tau1 as f64 / cfg.alpha_timescale + tau2 as f64;
    let spread = ((k - 1) * n).div_ceil(m);
    OverheadReport {
        tau1,
        tau2,
        tau_avg,
        baseline_mvu: (m + n) * k,
        baseline_reduced: k + n + (k - 1).max(spread),
    }
}
