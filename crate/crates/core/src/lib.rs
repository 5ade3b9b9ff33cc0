//! Wideband near-field hybrid beamforming with true-time-delay (TTD) networks.
//!
//! The crate models a uniform linear array fed by `N_RF` RF chains, each
//! driving `Q` TTDs and `N` phase shifters, and compares the parallel,
//! serial (forward/backward), hybrid and hybrid-forward-and-backward (HFB)
//! ways of wiring the TTDs. It provides
//!
//! * the spherical-wave OFDM channel model ([`channel`]),
//! * delay accumulation, TTD phase matrices and power-splitter design with
//!   insertion-loss equalization ([`topology`]),
//! * closed-form single-user designs and the monotonicity-region test
//!   ([`single_user`]),
//! * the penalty-based block-coordinate-descent solver for the multi-user
//!   sum spectral efficiency ([`solver`]) together with a structured
//!   Sylvester solver ([`sylvester`]),
//! * spectral-efficiency accounting and benchmark schemes ([`evaluation`]),
//! * scenario files and Monte-Carlo campaigns ([`scenario`], [`campaign`]).

pub mod beamformer;
pub mod campaign;
pub mod channel;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod scenario;
pub mod single_user;
pub mod solver;
pub mod sylvester;
pub mod topology;

pub use channel::{NearFieldChannel, UserLocation};
pub use config::SystemConfig;
pub use error::{Error, Result};
pub use topology::{TopologyKind, TtdTopology};
