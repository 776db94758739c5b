//! Scenario configuration and derived link-budget quantities.
//!
//! Configuration files are TOML with four sections. Keys match the field
//! names used on the command line:
//!
//! ```toml
//! [array]
//! M = 32          # BS antennas
//! N = 64          # RIS elements
//! K = 8           # UEs
//! L = 2           # transmitting BS antennas per dual-link sub-frame
//! tau0 = 3        # uplink sub-frames
//!
//! [power]
//! P_BS = 10.0     # W
//! P_UE = 1.0      # W
//! sigma2_n = 1e-13
//! sigma2_i = 2e-13
//! rho_s = 0.0     # omit to use rho_g
//!
//! [propagation]
//! d_g = 20.0
//! d_h = 30.0
//! d_f = 20.0
//! alpha_g = 2.1
//! alpha_h = 2.2
//! alpha_f = 4.2
//! rho0_dB = -20.0
//! d0 = 1.0
//!
//! [estimation]
//! alpha_timescale = 16.0
//! I_max = 5
//! epsilon_term = 1.0
//! seed = 1
//! ```
//!
//! Every key is optional; missing keys keep their defaults. When `sigma2_n`
//! is given without `sigma2_i`, the self-interference level follows at twice
//! the noise power.

use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Ratio of residual self-interference power to receiver noise power.
pub const DEFAULT_SI_TO_NOISE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// BS antennas (M).
    pub bs_antennas: usize,
    /// RIS elements (N).
    pub ris_elements: usize,
    /// Single-antenna UEs (K).
    pub users: usize,
    /// BS antennas that take turns transmitting in a dual-link sub-frame (L).
    pub tx_antennas: usize,
    /// Uplink sub-frames per small-timescale block (tau0).
    pub uplink_subframes: usize,
    pub p_bs: f64,
    pub p_ue: f64,
    pub sigma2_n: f64,
    pub sigma2_i: f64,
    /// Environmental reflection variance; `None` means "same as rho_g".
    pub rho_s: Option<f64>,
    pub d_g: f64,
    pub d_h: f64,
    pub d_f: f64,
    pub alpha_g: f64,
    pub alpha_h: f64,
    pub alpha_f: f64,
    pub rho0_db: f64,
    pub d0: f64,
    /// T_L / T_S.
    pub alpha_timescale: f64,
    pub max_outer_iters: usize,
    /// Termination threshold as a multiple of the expected residual at the
    /// true channel.
    pub epsilon_term: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            bs_antennas: 32,
            ris_elements: 64,
            users: 8,
            tx_antennas: 2,
            uplink_subframes: 3,
            p_bs: 10.0,
            p_ue: 1.0,
            sigma2_n: 1e-13,
            sigma2_i: DEFAULT_SI_TO_NOISE * 1e-13,
            rho_s: None,
            d_g: 20.0,
            d_h: 30.0,
            d_f: 20.0,
            alpha_g: 2.1,
            alpha_h: 2.2,
            alpha_f: 4.2,
            rho0_db: -20.0,
            d0: 1.0,
            alpha_timescale: 16.0,
            max_outer_iters: 5,
            epsilon_term: 1.0,
            seed: 1,
        }
    }
}

/// A single failed configuration rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub rho_g: f64,
    pub rho_h: f64,
    pub rho_f: f64,
    /// Dual-link SINR (linear).
    pub sinr_l: f64,
    /// Uplink SNR (linear).
    pub snr_s: f64,
}

impl SystemConfig {
    /// Smallest admissible number of uplink sub-frames, `ceil((M+N)/M)`.
    pub fn min_uplink_subframes(&self) -> usize {
        min_uplink_subframes(self.bs_antennas, self.ris_elements)
    }

    /// Number of dual-link antenna pairs `|S| = L(M-1)`.
    pub fn pair_count(&self) -> usize {
        self.tx_antennas * self.bs_antennas.saturating_sub(1)
    }

    /// Variance of each decorrelated product error.
    pub fn product_error_variance(&self) -> f64 {
        (self.sigma2_i + self.sigma2_n) / (self.p_bs * (self.ris_elements + 1) as f64)
    }

    /// Absolute termination threshold for the coordinate-descent loop.
    pub fn termination_threshold(&self) -> f64 {
        self.epsilon_term * self.pair_count() as f64 * self.product_error_variance()
    }

    pub fn rho0(&self) -> f64 {
        10f64.powf(self.rho0_db / 10.0)
    }

    /// Environmental reflection variance after resolving the default.
    pub fn rho_s_or(&self, rho_g: f64) -> f64 {
        self.rho_s.unwrap_or(rho_g)
    }

    /// Sets the receiver noise so that the uplink SNR equals `snr_db`, keeping
    /// the self-interference-to-noise ratio.
    pub fn with_snr_s_db(&self, snr_db: f64) -> Result<Self> {
        let budget = derive_link_budget(self)?;
        let signal = self.p_ue * budget.rho_f * budget.rho_g;
        let ratio = self.si_to_noise();
        let mut out = self.clone();
        out.sigma2_n = signal / db_to_linear(snr_db);
        out.sigma2_i = ratio * out.sigma2_n;
        Ok(out)
    }

    /// Sets noise and self-interference so that the dual-link SINR equals
    /// `sinr_db`, keeping their ratio.
    pub fn with_sinr_l_db(&self, sinr_db: f64) -> Result<Self> {
        let budget = derive_link_budget(self)?;
        let total = self.p_bs * budget.rho_g * budget.rho_g / db_to_linear(sinr_db);
        let ratio = self.si_to_noise();
        let mut out = self.clone();
        out.sigma2_n = total / (1.0 + ratio);
        out.sigma2_i = ratio * out.sigma2_n;
        Ok(out)
    }

    /// Same scenario with every noise source and the environmental
    /// reflection switched off.
    pub fn noiseless(&self) -> Self {
        let mut out = self.clone();
        out.sigma2_n = 0.0;
        out.sigma2_i = 0.0;
        out.rho_s = Some(0.0);
        out
    }

    fn si_to_noise(&self) -> f64 {
        if self.sigma2_n > 0.0 {
            self.sigma2_i / self.sigma2_n
        } else {
            DEFAULT_SI_TO_NOISE
        }
    }

    /// Returns `Ok(())` or every violation at once.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = validate(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }

    pub fn apply(&mut self, o: &ConfigOverrides) {
        macro_rules! set {
            ($($src:ident => $dst:ident),* $(,)?) => {
                $(if let Some(v) = o.$src { self.$dst = v; })*
            };
        }
        set!(
            M => bs_antennas, N => ris_elements, K => users, L => tx_antennas,
            tau0 => uplink_subframes, P_BS => p_bs, P_UE => p_ue,
            sigma2_n => sigma2_n, sigma2_i => sigma2_i,
            d_g => d_g, d_h => d_h, d_f => d_f,
            alpha_g => alpha_g, alpha_h => alpha_h, alpha_f => alpha_f,
            rho0_dB => rho0_db, d0 => d0, alpha_timescale => alpha_timescale,
            I_max => max_outer_iters, epsilon_term => epsilon_term, seed => seed,
        );
        if o.rho_s.is_some() {
            self.rho_s = o.rho_s;
        }
        if o.sigma2_n.is_some() && o.sigma2_i.is_none() {
            self.sigma2_i = DEFAULT_SI_TO_NOISE * self.sigma2_n;
        }
    }

    /// Loads a configuration file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let file: ConfigFile = toml::from_str(&text).map_err(|e| Error::ConfigFile {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let mut cfg = SystemConfig::default();
        cfg.apply(&file.into_overrides());
        Ok(cfg)
    }
}

pub fn min_uplink_subframes(bs_antennas: usize, ris_elements: usize) -> usize {
    (bs_antennas + ris_elements).div_ceil(bs_antennas.max(1))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Checks every invariant; an empty list means the config is usable.
pub fn validate(cfg: &SystemConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut fail = |field: &'static str, rule: String| out.push(Violation { field, rule });

    if cfg.bs_antennas < 2 {
        fail("M", format!("must be at least 2, got {}", cfg.bs_antennas));
    }
    if cfg.ris_elements < 1 {
        fail("N", "must be at least 1".into());
    }
    if cfg.users < 1 {
        fail("K", "must be at least 1".into());
    }
    if cfg.tx_antennas < 2 {
        fail(
            "L",
            format!(
                "must be at least 2 so that |S| >= M, got {}",
                cfg.tx_antennas
            ),
        );
    }
    if cfg.tx_antennas > cfg.bs_antennas {
        fail(
            "L",
            format!(
                "must not exceed M = {}, got {}",
                cfg.bs_antennas, cfg.tx_antennas
            ),
        );
    }
    if cfg.bs_antennas >= 1 {
        let tau_min = cfg.min_uplink_subframes();
        if cfg.uplink_subframes < tau_min {
            fail(
                "tau0",
                format!(
                    "must be at least ceil((M+N)/M) = {tau_min}, got {}",
                    cfg.uplink_subframes
                ),
            );
        }
    }

    let positive = [
        ("P_BS", cfg.p_bs),
        ("P_UE", cfg.p_ue),
        ("sigma2_n", cfg.sigma2_n),
        ("sigma2_i", cfg.sigma2_i),
        ("d_g", cfg.d_g),
        ("d_h", cfg.d_h),
        ("d_f", cfg.d_f),
        ("d0", cfg.d0),
    ];
    for (field, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            fail(
                field,
                format!("must be finite and strictly positive, got {v}"),
            );
        }
    }
    if let Some(rho_s) = cfg.rho_s {
        if !(rho_s.is_finite() && rho_s >= 0.0) {
            fail(
                "rho_s",
                format!("must be finite and non-negative, got {rho_s}"),
            );
        }
    }
    for (field, v) in [
        ("alpha_g", cfg.alpha_g),
        ("alpha_h", cfg.alpha_h),
        ("alpha_f", cfg.alpha_f),
        ("rho0_dB", cfg.rho0_db),
    ] {
        if !v.is_finite() {
            fail(field, format!("must be finite, got {v}"));
        }
    }
    if !(cfg.alpha_timescale.is_finite() && cfg.alpha_timescale >= 1.0) {
        fail(
            "alpha_timescale",
            format!("must be at least 1, got {}", cfg.alpha_timescale),
        );
    }
    if !(cfg.epsilon_term.is_finite() && cfg.epsilon_term >= 0.0) {
        fail(
            "epsilon_term",
            format!("must be finite and non-negative, got {}", cfg.epsilon_term),
        );
    }
    out
}

/// Large-scale fading factors and the two link-quality ratios.
pub fn derive_link_budget(cfg: &SystemConfig) -> Result<LinkBudget> {
    let mut bad = Vec::new();
    for (field, v) in [
        ("d_g", cfg.d_g),
        ("d_h", cfg.d_h),
        ("d_f", cfg.d_f),
        ("d0", cfg.d0),
    ] {
        if !(v.is_finite() && v > 0.0) {
            bad.push(Violation {
                field,
                rule: format!("distance must be strictly positive, got {v}"),
            });
        }
    }
    if !bad.is_empty() {
        return Err(Error::InvalidConfig(bad));
    }
    let rho0 = cfg.rho0();
    let fading = |d: f64, alpha: f64| rho0 * (d / cfg.d0).powf(-alpha);
    let rho_g = fading(cfg.d_g, cfg.alpha_g);
    let rho_h = fading(cfg.d_h, cfg.alpha_h);
    let rho_f = fading(cfg.d_f, cfg.alpha_f);
    Ok(LinkBudget {
        rho_g,
        rho_h,
        rho_f,
        sinr_l: cfg.p_bs * rho_g * rho_g / (cfg.sigma2_i + cfg.sigma2_n),
        snr_s: cfg.p_ue * rho_f * rho_g / cfg.sigma2_n,
    })
}

/// Optional per-field settings, shared by config files and CLI flags.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub M: Option<usize>,
    pub N: Option<usize>,
    pub K: Option<usize>,
    pub L: Option<usize>,
    pub tau0: Option<usize>,
    pub P_BS: Option<f64>,
    pub P_UE: Option<f64>,
    pub sigma2_n: Option<f64>,
    pub sigma2_i: Option<f64>,
    pub rho_s: Option<f64>,
    pub d_g: Option<f64>,
    pub d_h: Option<f64>,
    pub d_f: Option<f64>,
    pub alpha_g: Option<f64>,
    pub alpha_h: Option<f64>,
    pub alpha_f: Option<f64>,
    pub rho0_dB: Option<f64>,
    pub d0: Option<f64>,
    pub alpha_timescale: Option<f64>,
    pub I_max: Option<usize>,
    pub epsilon_term: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    array: ArraySection,
    #[serde(default)]
    power: PowerSection,
    #[serde(default)]
    propagation: PropagationSection,
    #[serde(default)]
    estimation: EstimationSection,
}

#[allow(non_snake_case)]
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArraySection {
    M: Option<usize>,
    N: Option<usize>,
    K: Option<usize>,
    L: Option<usize>,
    tau0: Option<usize>,
}

#[allow(non_snake_case)]
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PowerSection {
    P_BS: Option<f64>,
    P_UE: Option<f64>,
    sigma2_n: Option<f64>,
    sigma2_i: Option<f64>,
    rho_s: Option<f64>,
}

#[allow(non_snake_case)]
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PropagationSection {
    d_g: Option<f64>,
    d_h: Option<f64>,
    d_f: Option<f64>,
    alpha_g: Option<f64>,
    alpha_h: Option<f64>,
    alpha_f: Option<f64>,
    rho0_dB: Option<f64>,
    d0: Option<f64>,
}

#[allow(non_snake_case)]
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimationSection {
    alpha_timescale: Option<f64>,
    I_max: Option<usize>,
    epsilon_term: Option<f64>,
    seed: Option<u64>,
}

impl ConfigFile {
    fn into_overrides(self) -> ConfigOverrides {
        let ConfigFile {
            array,
            power,
            propagation,
            estimation,
        } = self;
        ConfigOverrides {
            M: array.M,
            N: array.N,
            K: array.K,
            L: array.L,
            tau0: array.tau0,
            P_BS: power.P_BS,
            P_UE: power.P_UE,
            sigma2_n: power.sigma2_n,
            sigma2_i: power.sigma2_i,
            rho_s: power.rho_s,
            d_g: propagation.d_g,
            d_h: propagation.d_h,
            d_f: propagation.d_f,
            alpha_g: propagation.alpha_g,
            alpha_h: propagation.alpha_h,
            alpha_f: propagation.alpha_f,
            rho0_dB: propagation.rho0_dB,
            d0: propagation.d0,
            alpha_timescale: estimation.alpha_timescale,
            I_max: estimation.I_max,
            epsilon_term: estimation.epsilon_term,
            seed: estimation.seed,
        }
    }
}
