//! Small-timescale uplink phase: orthogonal UE pilots over `tau0` sub-frames
//! with random RIS phases, despreading, and least-squares recovery of
//! `[f_k; h_k]` against an estimate of `G`.

use nalgebra::SVD;

use crate::channel::{cascade_one, ChannelRealization};
use crate::config::SystemConfig;
use crate::dual_link::unitary_dft;
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::{CMatrix, CVector, C64};

/// Largest condition number accepted for the stacked measurement matrix.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub struct UplinkPilotPlan {
    /// K×K; column `k` is the pilot sequence of UE `k`.
    pub pilots: CMatrix,
    /// N×tau0; column `t` is the RIS pattern of sub-frame `t`.
    pub reflections: CMatrix,
    /// `x_kᴴ x_k`, shared by all UEs.
    pub pilot_energy: f64,
}

impl UplinkPilotPlan {
    /// Orthogonal pilots `sqrt(K P_UE)` times the columns of the K-point
    /// unitary DFT, with caller-supplied RIS patterns.
    pub fn with_reflections(users: usize, p_ue: f64, reflections: CMatrix) -> Self {
        let pilot_energy = users as f64 * p_ue;
        Self {
            pilots: unitary_dft(users).scale(pilot_energy.sqrt()),
            reflections,
            pilot_energy,
        }
    }

    pub fn users(&self) -> usize {
        self.pilots.ncols()
    }

    pub fn subframes(&self) -> usize {
        self.reflections.ncols()
    }
}

/// Pilots from the DFT family, RIS phases i.i.d. uniform on `[0, 2π)`.
pub fn generate_pilot_plan(cfg: &SystemConfig, stream: &mut RandomStream) -> UplinkPilotPlan {
    let (n, tau0) = (cfg.ris_elements, cfg.uplink_subframes);
    let mut reflections = CMatrix::zeros(n, tau0);
    for t in 0..tau0 {
        for e in 0..n {
            reflections[(e, t)] = C64::from_polar(1.0, stream.uniform_phase());
        }
    }
    UplinkPilotPlan::with_reflections(cfg.users, cfg.p_ue, reflections)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UplinkObservation {
    /// One M×K block per sub-frame; column `s` is time slot `s`.
    pub y: Vec<CMatrix>,
}

pub fn simulate_uplink_frame(
    real: &ChannelRealization,
    plan: &UplinkPilotPlan,
    cfg: &SystemConfig,
    stream: &mut RandomStream,
) -> Result<UplinkObservation> {
    let (m, n) = real.g.shape();
    let k = real.users();
    if plan.users() != k || plan.reflections.nrows() != n {
        return Err(Error::ShapeMismatch {
            what: "uplink pilot plan",
            expected: format!("{k} UEs, {n} RIS elements"),
            found: format!(
                "{} UEs, {} RIS elements",
                plan.users(),
                plan.reflections.nrows()
            ),
        });
    }
    let pilots_t = plan.pilots.transpose();
    let y = (0..plan.subframes())
        .map(|t| {
            let phi = plan.reflections.column(t);
            let mut effective = CMatrix::zeros(m, k);
            for ue in 0..k {
                let reflected = &real.g * real.f[ue].component_mul(&phi);
                effective.set_column(ue, &(reflected + &real.h[ue]));
            }
            let mut y_t = effective * &pilots_t;
            for row in 0..m {
                for slot in 0..k {
                    y_t[(row, slot)] += stream.complex_gaussian(cfg.sigma2_n);
                }
            }
            y_t
        })
        .collect();
    Ok(UplinkObservation { y })
}

/// Stacked `ỹ_k = [Y_1 x_k* ; … ; Y_tau0 x_k*] / (K P_UE)`.
pub fn despread(obs: &UplinkObservation, plan: &UplinkPilotPlan, ue: usize) -> CVector {
    let x_conj = plan.pilots.column(ue).map(|z| z.conj());
    let m = obs.y.first().map_or(0, |y| y.nrows());
    let mut out = CVector::zeros(m * obs.y.len());
    for (t, y_t) in obs.y.iter().enumerate() {
        let part = (y_t * &x_conj) / C64::new(plan.pilot_energy, 0.0);
        out.rows_mut(t * m, m).copy_from(&part);
    }
    out
}

/// `[Ĝ diag(φ̃_t) | I_M]` stacked over sub-frames; (tau0·M)×(N+M).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    pub a: CMatrix,
    pub bs_antennas: usize,
    pub ris_elements: usize,
}

pub fn assemble_measurement_matrix(
    g_used: &CMatrix,
    plan: &UplinkPilotPlan,
) -> Result<MeasurementMatrix> {
    let (m, n) = g_used.shape();
    if plan.reflections.nrows() != n {
        return Err(Error::ShapeMismatch {
            what: "reflection vector length",
            expected: n.to_string(),
            found: plan.reflections.nrows().to_string(),
        });
    }
    let tau0 = plan.subframes();
    let mut a = CMatrix::zeros(tau0 * m, n + m);
    for t in 0..tau0 {
        let block = cascade_one(g_used, &plan.reflections.column(t).into_owned());
        a.view_mut((t * m, 0), (m, n)).copy_from(&block);
        for row in 0..m {
            a[(t * m + row, n + row)] = C64::new(1.0, 0.0);
        }
    }
    Ok(MeasurementMatrix {
        a,
        bs_antennas: m,
        ris_elements: n,
    })
}

/// SVD-backed least-squares solver for one measurement matrix, reusable
/// across UEs.
pub struct LsSolver {
    svd: SVD<C64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
    ris_elements: usize,
}

impl LsSolver {
    pub fn new(mat: &MeasurementMatrix) -> Result<Self> {
        let (rows, unknowns) = mat.a.shape();
        if rows < unknowns {
            return Err(Error::Underdetermined { rows, unknowns });
        }
        let svd = mat.a.clone().svd(true, true);
        let (mut smax, mut smin) = (0.0f64, f64::INFINITY);
        for &s in svd.singular_values.iter() {
            smax = smax.max(s);
            smin = smin.min(s);
        }
        let condition = if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        };
        if condition.is_nan() || condition > MAX_CONDITION {
            return Err(Error::RankDeficient {
                condition,
                trial: None,
            });
        }
        Ok(Self {
            svd,
            condition,
            ris_elements: mat.ris_elements,
        })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Returns `(f̂, ĥ)`.
    pub fn solve(&self, y: &CVector) -> Result<(CVector, CVector)> {
        let x = self.svd.solve(y, 0.0).map_err(|e| Error::ShapeMismatch {
            what: "least-squares solve",
            expected: "consistent dimensions".into(),
            found: e.to_string(),
        })?;
        let n = self.ris_elements;
        let f = x.rows(0, n).into_owned();
        let h = x.rows(n, x.len() - n).into_owned();
        Ok((f, h))
    }
}

/// `argmin ‖Â [f; h] − ỹ‖₂`.
pub fn ls_estimate(mat: &MeasurementMatrix, y: &CVector) -> Result<(CVector, CVector)> {
    LsSolver::new(mat)?.solve(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobileEstimate {
    pub f_hat: Vec<CVector>,
    pub h_hat: Vec<CVector>,
    /// `Ĝ diag(f̂_k)`.
    pub c_hat: Vec<CMatrix>,
}

/// Despreads every UE and solves against the measurement matrix built from
/// `g_hat`.
pub fn estimate_mobile(
    g_hat: &CMatrix,
    plan: &UplinkPilotPlan,
    obs: &UplinkObservation,
) -> Result<MobileEstimate> {
    let mat = assemble_measurement_matrix(g_hat, plan)?;
    let solver = LsSolver::new(&mat)?;
    estimate_mobile_with(&solver, g_hat, plan, obs)
}

/// As [`estimate_mobile`], with a solver already built for `g_hat` and `plan`.
pub fn estimate_mobile_with(
    solver: &LsSolver,
    g_hat: &CMatrix,
    plan: &UplinkPilotPlan,
    obs: &UplinkObservation,
) -> Result<MobileEstimate> {
    let mut out = MobileEstimate {
        f_hat: Vec::with_capacity(plan.users()),
        h_hat: Vec::with_capacity(plan.users()),
        c_hat: Vec::with_capacity(plan.users()),
    };
    for ue in 0..plan.users() {
        let (f, h) = solver.solve(&despread(obs, plan, ue))?;
        out.c_hat.push(cascade_one(g_hat, &f));
        out.f_hat.push(f);
        out.h_hat.push(h);
    }
    Ok(out)
}
