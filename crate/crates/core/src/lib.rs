//! Two-timescale channel estimation for RIS-aided multi-user MIMO.
//!
//! The quasi-static BS–RIS channel is recovered from full-duplex dual-link
//! pilots (the BS transmits on one antenna and listens on the others while
//! the RIS sweeps a DFT reflection pattern), followed by a per-element
//! coordinate-descent fit. The mobile RIS–UE and BS–UE channels are then
//! recovered from ordinary uplink pilots by least squares against the
//! estimated BS–RIS channel.
//!
//! Module map:
//!
//! * [`config`] – scenario configuration, link budget, config files.
//! * [`rng`] – labelled deterministic random streams.
//! * [`channel`] – Rayleigh channel draws, cascaded channels, gauge transforms.
//! * [`dual_link`] – DFT reflection schedule, dual-link reception, decorrelation.
//! * [`quasi_static`] – coordinate-descent recovery of the BS–RIS channel.
//! * [`mobile`] – uplink pilots and LS recovery of the mobile channels.
//! * [`metrics`] – NMSE, normalized-objective statistics, pilot overhead.
//! * [`baseline`] – full-pilot cascaded LS reference estimator.
//! * [`harness`] – seeded Monte Carlo experiments and CSV tables.
//! * [`cli`] – command-line front end for the harness.

pub mod baseline;
pub mod channel;
pub mod cli;
pub mod config;
pub mod dual_link;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod mobile;
pub mod quasi_static;
pub mod rng;

pub use error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;
