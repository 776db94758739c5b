//! Full-duplex dual-link pilots.
//!
//! The frame has `N+1` sub-frames of `L` slots. In slot `m1` antenna `m1`
//! transmits `sqrt(P_BS)` while every other antenna `m2` records the echo
//! through the RIS, so each received sample carries the element-wise
//! products `g_{m1,n} g_{m2,n}` weighted by the reflection pattern. With the
//! DFT reflection schedule the `N+1` samples of a pair are a scaled DFT of
//! `[s, g_{m1} ⊙ g_{m2}]`, and one inverse transform separates them.

use std::f64::consts::TAU;

use rustfft::FftPlanner;

use crate::channel::ChannelRealization;
use crate::config::{LinkBudget, SystemConfig};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::{CMatrix, C64};

/// Unitary `n`-point DFT matrix, `F[r, c] = exp(-j2π rc/n) / sqrt(n)`.
pub fn unitary_dft(n: usize) -> CMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |r, c| {
        C64::from_polar(scale, -TAU * ((r * c) % n) as f64 / n as f64)
    })
}

/// RIS reflection vectors for the `N+1` dual-link sub-frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionSchedule {
    /// N×(N+1); column `t` is the pattern of sub-frame `t`.
    pub phi_bar: CMatrix,
}

impl ReflectionSchedule {
    pub fn ris_elements(&self) -> usize {
        self.phi_bar.nrows()
    }

    pub fn subframes(&self) -> usize {
        self.phi_bar.ncols()
    }

    /// The `(N+1)×(N+1)` matrix with an all-ones first row above `phi_bar`.
    pub fn stacked(&self) -> CMatrix {
        let n = self.ris_elements();
        CMatrix::from_fn(n + 1, n + 1, |r, c| {
            if r == 0 {
                C64::new(1.0, 0.0)
            } else {
                self.phi_bar[(r - 1, c)]
            }
        })
    }
}

/// Element `n` (0-based) in sub-frame `t` (0-based) gets
/// `exp(-j2π (n+1) t / (N+1))`.
pub fn build_reflection_schedule(ris_elements: usize) -> ReflectionSchedule {
    let period = ris_elements + 1;
    ReflectionSchedule {
        phi_bar: CMatrix::from_fn(ris_elements, period, |n, t| {
            C64::from_polar(1.0, -TAU * (((n + 1) * t) % period) as f64 / period as f64)
        }),
    }
}

/// The ordered index set `{(m1, m2) : m1 < L, m2 != m1}` (0-based), sorted
/// by `m1` then `m2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    bs_antennas: usize,
    tx_antennas: usize,
    pairs: Vec<(usize, usize)>,
}

impl PairSet {
    pub fn new(bs_antennas: usize, tx_antennas: usize) -> Self {
        let tx_antennas = tx_antennas.min(bs_antennas);
        let pairs = (0..tx_antennas)
            .flat_map(|m1| {
                (0..bs_antennas)
                    .filter(move |&m2| m2 != m1)
                    .map(move |m2| (m1, m2))
            })
            .collect();
        Self {
            bs_antennas,
            tx_antennas,
            pairs,
        }
    }

    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self::new(cfg.bs_antennas, cfg.tx_antennas)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn bs_antennas(&self) -> usize {
        self.bs_antennas
    }

    pub fn tx_antennas(&self) -> usize {
        self.tx_antennas
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Row index of `(m1, m2)`, if the pair was measured.
    pub fn index(&self, m1: usize, m2: usize) -> Option<usize> {
        if m1 >= self.tx_antennas || m2 >= self.bs_antennas || m1 == m2 {
            return None;
        }
        let within = if m2 < m1 { m2 } else { m2 - 1 };
        Some(m1 * (self.bs_antennas - 1) + within)
    }
}

/// Draws that are not part of the signal, kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Nuisance {
    /// Environmental reflection per pair, constant across sub-frames.
    pub s: Vec<C64>,
    /// Residual self-interference, |S|×(N+1).
    pub interference: CMatrix,
    /// Receiver noise, |S|×(N+1).
    pub noise: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualLinkObservation {
    pub pairs: PairSet,
    /// Received samples, one row per pair, one column per sub-frame.
    pub y_bar: CMatrix,
    pub nuisance: Nuisance,
}

/// Decorrelated per-pair estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductEstimates {
    pub pairs: PairSet,
    /// `a[(pair, n)]` estimates `g_{m1,n} g_{m2,n}`; |S|×N.
    pub a: CMatrix,
    /// Environmental reflection estimate per pair.
    pub s_hat: Vec<C64>,
}

impl ProductEstimates {
    pub fn ris_elements(&self) -> usize {
        self.a.ncols()
    }

    /// Product estimates of RIS element `n`, ordered like the pair set.
    pub fn column(&self, n: usize) -> Vec<C64> {
        self.a.column(n).iter().copied().collect()
    }
}

/// Noiseless dual-link sample for pair `(m1, m2)` in sub-frame `t`, before
/// the pilot amplitude: `(g_{m1} ⊙ g_{m2})ᵀ φ̄_t`.
fn reflected(g: &CMatrix, sched: &ReflectionSchedule, m1: usize, m2: usize, t: usize) -> C64 {
    (0..g.ncols())
        .map(|n| g[(m1, n)] * g[(m2, n)] * sched.phi_bar[(n, t)])
        .sum()
}

pub fn simulate_dual_link(
    real: &ChannelRealization,
    sched: &ReflectionSchedule,
    cfg: &SystemConfig,
    budget: &LinkBudget,
    stream: &mut RandomStream,
) -> Result<DualLinkObservation> {
    let (m, n) = real.g.shape();
    if sched.ris_elements() != n || sched.subframes() != n + 1 {
        return Err(Error::ShapeMismatch {
            what: "reflection schedule",
            expected: format!("{n}x{}", n + 1),
            found: format!("{}x{}", sched.ris_elements(), sched.subframes()),
        });
    }
    if cfg.tx_antennas > m {
        return Err(Error::ShapeMismatch {
            what: "transmitting antennas",
            expected: format!("at most {m}"),
            found: cfg.tx_antennas.to_string(),
        });
    }
    let pairs = PairSet::new(m, cfg.tx_antennas);
    let amplitude = cfg.p_bs.sqrt();
    let rho_s = cfg.rho_s_or(budget.rho_g);
    let slots = n + 1;

    let mut y_bar = CMatrix::zeros(pairs.len(), slots);
    let mut interference = CMatrix::zeros(pairs.len(), slots);
    let mut noise = CMatrix::zeros(pairs.len(), slots);
    let mut s = Vec::with_capacity(pairs.len());
    for (row, &(m1, m2)) in pairs.pairs().iter().enumerate() {
        let s_pair = stream.complex_gaussian(rho_s);
        s.push(s_pair);
        for t in 0..slots {
            let i = stream.complex_gaussian(cfg.sigma2_i);
            let w = stream.complex_gaussian(cfg.sigma2_n);
            interference[(row, t)] = i;
            noise[(row, t)] = w;
            y_bar[(row, t)] = (reflected(&real.g, sched, m1, m2, t) + s_pair) * amplitude + i + w;
        }
    }
    Ok(DualLinkObservation {
        pairs,
        y_bar,
        nuisance: Nuisance {
            s,
            interference,
            noise,
        },
    })
}

/// `ŵᵀ = ȳᵀ Fᴴ / sqrt((N+1) P_BS)` per pair, computed with an inverse FFT.
pub fn decorrelate_products(
    obs: &DualLinkObservation,
    cfg: &SystemConfig,
) -> Result<ProductEstimates> {
    let slots = cfg.ris_elements + 1;
    if obs.y_bar.ncols() != slots || obs.y_bar.nrows() != obs.pairs.len() {
        return Err(Error::ShapeMismatch {
            what: "dual-link observation",
            expected: format!("{}x{slots}", obs.pairs.len()),
            found: format!("{}x{}", obs.y_bar.nrows(), obs.y_bar.ncols()),
        });
    }
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(slots);
    let scale = 1.0 / (slots as f64 * cfg.p_bs.sqrt());

    let mut a = CMatrix::zeros(obs.pairs.len(), cfg.ris_elements);
    let mut s_hat = Vec::with_capacity(obs.pairs.len());
    let mut buf = vec![C64::new(0.0, 0.0); slots];
    for row in 0..obs.pairs.len() {
        for (t, b) in buf.iter_mut().enumerate() {
            *b = obs.y_bar[(row, t)];
        }
        fft.process(&mut buf);
        s_hat.push(buf[0] * scale);
        for n in 0..cfg.ris_elements {
            a[(row, n)] = buf[n + 1] * scale;
        }
    }
    Ok(ProductEstimates {
        pairs: obs.pairs.clone(),
        a,
        s_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channels;
    use crate::config::derive_link_budget;
    use crate::rng::derive_stream;

    fn assert_close(a: C64, b: C64, tol: f64) {
        assert!((a - b).norm() <= tol, "{a} vs {b}");
    }

    fn quiet_cfg(m: usize, n: usize) -> SystemConfig {
        SystemConfig {
            bs_antennas: m,
            ris_elements: n,
            users: 1,
            tx_antennas: 2,
            ..Default::default()
        }
        .noiseless()
    }

    #[test]
    fn first_subframe_is_all_ones() {
        let s = build_reflection_schedule(7);
        assert!(s.phi_bar.column(0).iter().all(|z| *z == C64::new(1.0, 0.0)));
    }

    #[test]
    fn two_element_second_subframe() {
        let s = build_reflection_schedule(2);
        assert_close(s.phi_bar[(0, 1)], C64::from_polar(1.0, -TAU / 3.0), 1e-15);
        assert_close(
            s.phi_bar[(1, 1)],
            C64::from_polar(1.0, -2.0 * TAU / 3.0),
            1e-15,
        );
    }

    #[test]
    fn entries_have_unit_modulus() {
        let s = build_reflection_schedule(64);
        assert!(s.phi_bar.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn stacked_schedule_is_scaled_unitary_dft() {
        let n = 64;
        let stacked = build_reflection_schedule(n).stacked();
        let f = unitary_dft(n + 1);
        let diff = &stacked - f.scale((n as f64 + 1.0).sqrt());
        assert!(diff.norm() < 1e-10);
        let gram = f.adjoint() * &f;
        let id = CMatrix::identity(n + 1, n + 1);
        assert!((gram - id).camax() < 1e-12);
    }

    #[test]
    fn pair_set_indexing() {
        let p = PairSet::new(5, 2);
        assert_eq!(p.len(), 8);
        for (i, &(m1, m2)) in p.pairs().iter().enumerate() {
            assert_eq!(p.index(m1, m2), Some(i));
        }
        assert_eq!(p.index(2, 0), None);
        assert_eq!(p.index(1, 1), None);
        assert_eq!(p.index(0, 5), None);
    }

    #[test]
    fn single_element_hand_evaluation() {
        // N = 1: φ̄_1 = 1, φ̄_2 = e^{-jπ}
        let cfg = quiet_cfg(3, 1);
        let budget = derive_link_budget(&cfg).unwrap();
        let g = CMatrix::from_column_slice(
            3,
            1,
            &[
                C64::new(0.5, -1.0),
                C64::new(2.0, 0.25),
                C64::new(-1.5, 0.75),
            ],
        );
        let real = ChannelRealization {
            g: g.clone(),
            f: vec![],
            h: vec![],
        };
        let sched = build_reflection_schedule(1);
        let obs = simulate_dual_link(&real, &sched, &cfg, &budget, &mut derive_stream(1, "hand"))
            .unwrap();
        let amp = cfg.p_bs.sqrt();
        for (row, &(m1, m2)) in obs.pairs.pairs().iter().enumerate() {
            let prod = g[(m1, 0)] * g[(m2, 0)];
            assert_close(obs.y_bar[(row, 0)], prod * amp, 1e-12);
            assert_close(obs.y_bar[(row, 1)], -prod * amp, 1e-12);
        }
    }

    #[test]
    fn zero_channel_and_noise_gives_zero_samples() {
        let cfg = quiet_cfg(4, 3);
        let budget = derive_link_budget(&cfg).unwrap();
        let real = ChannelRealization {
            g: CMatrix::zeros(4, 3),
            f: vec![],
            h: vec![],
        };
        let obs = simulate_dual_link(
            &real,
            &build_reflection_schedule(3),
            &cfg,
            &budget,
            &mut derive_stream(1, "zero"),
        )
        .unwrap();
        assert!(obs.y_bar.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn noise_only_sample_variance() {
        let cfg = SystemConfig {
            bs_antennas: 11,
            ris_elements: 499,
            tx_antennas: 2,
            sigma2_n: 1.0,
            sigma2_i: 2.0,
            rho_s: Some(0.0),
            ..Default::default()
        };
        let budget = derive_link_budget(&cfg).unwrap();
        let real = ChannelRealization {
            g: CMatrix::zeros(11, 499),
            f: vec![],
            h: vec![],
        };
        let obs = simulate_dual_link(
            &real,
            &build_reflection_schedule(499),
            &cfg,
            &budget,
            &mut derive_stream(2, "noise"),
        )
        .unwrap();
        assert!(obs.y_bar.len() >= 10_000);
        let var = obs.y_bar.iter().map(|z| z.norm_sqr()).sum::<f64>() / obs.y_bar.len() as f64;
        let ratio = var / 3.0;
        assert!((0.95..=1.05).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn noiseless_decorrelation_recovers_products() {
        let cfg = quiet_cfg(6, 9);
        let budget = derive_link_budget(&cfg).unwrap();
        let real = sample_channels(&cfg, &budget, &mut derive_stream(3, "ch"));
        let obs = simulate_dual_link(
            &real,
            &build_reflection_schedule(9),
            &cfg,
            &budget,
            &mut derive_stream(3, "dl"),
        )
        .unwrap();
        let prod = decorrelate_products(&obs, &cfg).unwrap();
        let scale = budget.rho_g;
        for (row, &(m1, m2)) in prod.pairs.pairs().iter().enumerate() {
            for n in 0..9 {
                let want = real.g[(m1, n)] * real.g[(m2, n)];
                assert!((prod.a[(row, n)] - want).norm() <= 1e-12 * scale);
            }
            assert!(prod.s_hat[row].norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn constant_reflection_isolated_in_first_bin() {
        let cfg = quiet_cfg(3, 4);
        let pairs = PairSet::from_config(&cfg);
        let amp = cfg.p_bs.sqrt();
        let obs = DualLinkObservation {
            y_bar: CMatrix::from_element(pairs.len(), 5, C64::new(4.0, 0.0) * amp),
            nuisance: Nuisance {
                s: vec![C64::new(4.0, 0.0); pairs.len()],
                interference: CMatrix::zeros(pairs.len(), 5),
                noise: CMatrix::zeros(pairs.len(), 5),
            },
            pairs,
        };
        let prod = decorrelate_products(&obs, &cfg).unwrap();
        for s in &prod.s_hat {
            assert_close(*s, C64::new(4.0, 0.0), 1e-12);
        }
        assert!(prod.a.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn decorrelation_rejects_wrong_subframe_count() {
        let cfg = quiet_cfg(3, 4);
        let pairs = PairSet::from_config(&cfg);
        let obs = DualLinkObservation {
            y_bar: CMatrix::zeros(pairs.len(), 4),
            nuisance: Nuisance {
                s: vec![],
                interference: CMatrix::zeros(0, 0),
                noise: CMatrix::zeros(0, 0),
            },
            pairs,
        };
        assert!(matches!(
            decorrelate_products(&obs, &cfg),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
