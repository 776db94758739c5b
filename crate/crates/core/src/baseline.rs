//! Full-pilot cascaded LS reference.
//!
//! Ignores the two-timescale structure and estimates every `C_k` and `h_k`
//! directly from uplink pilots: `N+1` sub-frames of `K` slots, the RIS
//! cycling through the DFT reflection schedule. The augmented patterns
//! `[1; φ̄_t]` form a scaled unitary DFT, so the LS solution is a single
//! correlation with those patterns.

use crate::channel::ChannelRealization;
use crate::config::SystemConfig;
use crate::dual_link::build_reflection_schedule;
use crate::error::Result;
use crate::mobile::{despread, simulate_uplink_frame, UplinkPilotPlan};
use crate::rng::RandomStream;
use crate::{CMatrix, CVector, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct CascadedEstimate {
    pub c_hat: Vec<CMatrix>,
    pub h_hat: Vec<CVector>,
    /// Uplink slots spent, `(N+1) K`.
    pub pilot_slots: usize,
}

/// Pilot cost of the full-pilot baseline.
pub fn baseline_pilot_slots(cfg: &SystemConfig) -> usize {
    (cfg.ris_elements + 1) * cfg.users
}

pub fn estimate_cascaded_ls(
    real: &ChannelRealization,
    cfg: &SystemConfig,
    stream: &mut RandomStream,
) -> Result<CascadedEstimate> {
    let (m, n) = real.g.shape();
    let schedule = build_reflection_schedule(n);
    let plan = UplinkPilotPlan::with_reflections(real.users(), cfg.p_ue, schedule.phi_bar.clone());
    let obs = simulate_uplink_frame(real, &plan, cfg, stream)?;
    let patterns = schedule.stacked();
    let subframes = n + 1;

    let mut c_hat = Vec::with_capacity(real.users());
    let mut h_hat = Vec::with_capacity(real.users());
    for ue in 0..real.users() {
        let y = despread(&obs, &plan, ue);
        // rows: antennas, columns: sub-frames
        let y = CMatrix::from_column_slice(m, subframes, y.as_slice());
        let joint = (y * patterns.adjoint()) / C64::new(subframes as f64, 0.0);
        h_hat.push(joint.column(0).into_owned());
        c_hat.push(joint.columns(1, n).into_owned());
    }
    Ok(CascadedEstimate {
        c_hat,
        h_hat,
        pilot_slots: baseline_pilot_slots(cfg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{cascade, sample_channels};
    use crate::config::derive_link_budget;
    use crate::rng::derive_stream;

    #[test]
    fn noiseless_recovery_is_exact() {
        let cfg = SystemConfig {
            bs_antennas: 5,
            ris_elements: 7,
            users: 3,
            ..Default::default()
        }
        .noiseless();
        let budget = derive_link_budget(&cfg).unwrap();
        let real = sample_channels(&cfg, &budget, &mut derive_stream(1, "ch"));
        let est = estimate_cascaded_ls(&real, &cfg, &mut derive_stream(1, "n")).unwrap();
        let truth = cascade(&real).unwrap();
        for k in 0..3 {
            assert!((&est.c_hat[k] - &truth.c[k]).norm() <= 1e-10 * truth.c[k].norm());
            assert!((&est.h_hat[k] - &real.h[k]).norm() <= 1e-10 * real.h[k].norm());
        }
    }

    #[test]
    fn paper_configuration_slot_count() {
        assert_eq!(baseline_pilot_slots(&SystemConfig::default()), 520);
    }
}
