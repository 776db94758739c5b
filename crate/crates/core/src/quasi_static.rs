//! Recovery of the BS–RIS channel from dual-link product estimates.
//!
//! Column `n` of `G` only enters the products `a_{m1,m2,n}`, so the problem
//! splits into `N` independent fits of
//!
//! ```text
//! J_n(g) = Σ_{(m1,m2) ∈ S} |a_{m1,m2,n} − g_{m1} g_{m2}|²
//! ```
//!
//! Each fit starts from a triple-product guess and then runs coordinate
//! descent, where every coordinate update is the exact minimizer of `J_n`
//! with the other coefficients held fixed. A column is only identifiable up
//! to a global sign.

use rayon::prelude::*;

use crate::config::SystemConfig;
use crate::dual_link::{PairSet, ProductEstimates};
use crate::error::{Error, Result};
use crate::{CMatrix, C64};

/// Default `(m1, m2, m3)` for the triple-product initialization (0-based).
pub const DEFAULT_TRIPLE: (usize, usize, usize) = (0, 1, 2);

/// `|a_{m2,m3}|` must exceed this fraction of the median `|a|` of the column.
pub const DIVISION_GUARD: f64 = 1e-8;

/// The fit for one RIS element.
#[derive(Debug, Clone)]
pub struct ColumnSubproblem<'a> {
    pub ris_element: usize,
    pub pairs: &'a PairSet,
    /// `a_{m1,m2,n}` ordered like `pairs`.
    pub values: Vec<C64>,
    /// Variance of each product error.
    pub error_variance: f64,
}

impl<'a> ColumnSubproblem<'a> {
    pub fn from_products(prod: &'a ProductEstimates, n: usize, error_variance: f64) -> Self {
        Self {
            ris_element: n,
            pairs: &prod.pairs,
            values: prod.column(n),
            error_variance,
        }
    }

    pub fn bs_antennas(&self) -> usize {
        self.pairs.bs_antennas()
    }

    fn value(&self, m1: usize, m2: usize) -> Result<C64> {
        self.pairs
            .index(m1, m2)
            .map(|i| self.values[i])
            .ok_or(Error::MissingPair { m1, m2 })
    }
}

pub fn objective(sub: &ColumnSubproblem<'_>, g: &[C64]) -> f64 {
    sub.pairs
        .pairs()
        .iter()
        .zip(&sub.values)
        .map(|(&(m1, m2), a)| (a - g[m1] * g[m2]).norm_sqr())
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Initialization {
    pub g: Vec<C64>,
    /// Triple actually used, or `None` when the all-ones fallback was taken.
    pub triple: Option<(usize, usize, usize)>,
}

impl Initialization {
    pub fn is_fallback(&self) -> bool {
        self.triple.is_none()
    }
}

/// Triple-product starting point.
///
/// `g_{m1} = sqrt(a_{m1,m2} a_{m1,m3} / a_{m2,m3})` on the principal branch,
/// then `g_{m'} = a_{m1,m'} / g_{m1}`. If `a_{m2,m3}` fails the division guard
/// the remaining antennas are tried as `m3` in ascending order, and the
/// column starts from all ones if none works.
pub fn initialize_column(
    sub: &ColumnSubproblem<'_>,
    (m1, m2, m3): (usize, usize, usize),
) -> Result<Initialization> {
    let m = sub.bs_antennas();
    if !(m1 < m2 && m2 < sub.pairs.tx_antennas()) || m3 >= m || m3 == m1 || m3 == m2 {
        // reports the first pair that cannot exist for this choice
        let (p, q) = if m2 >= sub.pairs.tx_antennas() || m1 >= m2 {
            (m2, m3)
        } else {
            (m1, m3)
        };
        return Err(Error::MissingPair { m1: p, m2: q });
    }

    let mut mags: Vec<f64> = sub.values.iter().map(|a| a.norm()).collect();
    mags.sort_by(f64::total_cmp);
    let median = if mags.is_empty() {
        0.0
    } else {
        mags[mags.len() / 2]
    };
    let guard = DIVISION_GUARD * median;

    let a12 = sub.value(m1, m2)?;
    let candidates = std::iter::once(m3).chain((0..m).filter(|&x| x != m1 && x != m2 && x != m3));
    for third in candidates {
        let a13 = sub.value(m1, third)?;
        let a23 = sub.value(m2, third)?;
        if a23.norm() <= guard {
            continue;
        }
        let lead = (a12 * a13 / a23).sqrt();
        if !(lead.norm() > 0.0 && lead.is_finite()) {
            continue;
        }
        let mut g = Vec::with_capacity(m);
        for other in 0..m {
            if other == m1 {
                g.push(lead);
            } else {
                g.push(sub.value(m1, other)? / lead);
            }
        }
        if g.iter().all(|z| z.is_finite()) {
            return Ok(Initialization {
                g,
                triple: Some((m1, m2, third)),
            });
        }
    }
    Ok(Initialization {
        g: vec![C64::new(1.0, 0.0); m],
        triple: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub value: C64,
    /// All partner coefficients were zero; `value` is 0.
    pub degenerate: bool,
}

/// Exact minimizer of `J_n` over coordinate `m`, the others fixed at `g`.
///
/// Sums `a conj(g')` over every measured pair containing `m` (in either
/// position) and divides by the matching `Σ |g'|²`.
pub fn refine_coefficient(sub: &ColumnSubproblem<'_>, m: usize, g: &[C64]) -> Refinement {
    let pairs = sub.pairs;
    let mut num = C64::new(0.0, 0.0);
    let mut den = 0.0;
    let mut accumulate = |idx: Option<usize>, partner: C64| {
        if let Some(i) = idx {
            num += sub.values[i] * partner.conj();
            den += partner.norm_sqr();
        }
    };
    for (other, &partner) in g.iter().enumerate().take(pairs.bs_antennas()) {
        if other == m {
            continue;
        }
        accumulate(pairs.index(m, other), partner);
        accumulate(pairs.index(other, m), partner);
    }
    if den > 0.0 {
        Refinement {
            value: num / den,
            degenerate: false,
        }
    } else {
        Refinement {
            value: C64::new(0.0, 0.0),
            degenerate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The objective fell to the threshold.
    Threshold,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    /// `J_n` after initialization (index 0) and after each outer iteration.
    pub objective: Vec<f64>,
    pub termination: Termination,
    pub init_fallback: bool,
    pub degenerate_update: bool,
}

impl ConvergenceTrace {
    pub fn iterations(&self) -> usize {
        self.objective.len() - 1
    }

    /// Objective values `0..=max_iters`; iterations skipped after early
    /// termination hold the final value.
    pub fn padded(&self, max_iters: usize) -> Vec<f64> {
        let last = *self
            .objective
            .last()
            .expect("trace holds the initial objective");
        (0..=max_iters)
            .map(|i| self.objective.get(i).copied().unwrap_or(last))
            .collect()
    }

    /// `f̄^(i) = J^(i) / E{J(0)}`.
    pub fn normalized(&self, max_iters: usize, expected_zero_objective: f64) -> Vec<f64> {
        self.padded(max_iters)
            .into_iter()
            .map(|j| j / expected_zero_objective)
            .collect()
    }
}

/// Runs one column: initialization then outer sweeps over `m = 0..M` until
/// `J ≤ threshold` or `max_iters` sweeps have run.
pub fn solve_column(
    sub: &ColumnSubproblem<'_>,
    max_iters: usize,
    threshold: f64,
) -> Result<(Vec<C64>, ConvergenceTrace)> {
    let init = initialize_column(sub, DEFAULT_TRIPLE)?;
    let init_fallback = init.is_fallback();
    let mut g = init.g;
    let mut objective_trace = vec![objective(sub, &g)];
    let mut degenerate_update = false;
    let mut current = objective_trace[0];
    let mut sweeps = 0;
    while current > threshold && sweeps < max_iters {
        sweeps += 1;
        for m in 0..g.len() {
            let r = refine_coefficient(sub, m, &g);
            degenerate_update |= r.degenerate;
            g[m] = r.value;
        }
        current = objective(sub, &g);
        objective_trace.push(current);
    }
    let termination = if current <= threshold {
        Termination::Threshold
    } else {
        Termination::MaxIterations
    };
    Ok((
        g,
        ConvergenceTrace {
            objective: objective_trace,
            termination,
            init_fallback,
            degenerate_update,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct BsRisEstimate {
    pub g_hat: CMatrix,
    /// One trace per RIS element.
    pub traces: Vec<ConvergenceTrace>,
}

impl BsRisEstimate {
    /// Columns whose initialization fell back or hit a zero-denominator update.
    pub fn flagged_columns(&self) -> Vec<usize> {
        self.traces
            .iter()
            .enumerate()
            .filter(|(_, t)| t.init_fallback || t.degenerate_update)
            .map(|(n, _)| n)
            .collect()
    }
}

pub fn estimate_bs_ris(prod: &ProductEstimates, cfg: &SystemConfig) -> Result<BsRisEstimate> {
    let m = prod.pairs.bs_antennas();
    if m != cfg.bs_antennas {
        return Err(Error::ShapeMismatch {
            what: "product estimates antenna count",
            expected: cfg.bs_antennas.to_string(),
            found: m.to_string(),
        });
    }
    let error_variance = cfg.product_error_variance();
    let threshold = cfg.termination_threshold();
    let columns: Vec<(Vec<C64>, ConvergenceTrace)> = (0..prod.ris_elements())
        .into_par_iter()
        .map(|n| {
            let sub = ColumnSubproblem::from_products(prod, n, error_variance);
            solve_column(&sub, cfg.max_outer_iters, threshold)
        })
        .collect::<Result<_>>()?;

    let mut g_hat = CMatrix::zeros(m, prod.ris_elements());
    let mut traces = Vec::with_capacity(columns.len());
    for (n, (g, trace)) in columns.into_iter().enumerate() {
        for (row, z) in g.into_iter().enumerate() {
            g_hat[(row, n)] = z;
        }
        traces.push(trace);
    }
    Ok(BsRisEstimate { g_hat, traces })
}
