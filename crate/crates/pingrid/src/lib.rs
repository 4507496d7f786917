//! Cyber-physical microgrid simulator and pinning-decision toolkit.
//!
//! The crate models an islanded, inverter-interfaced microgrid as two coupled
//! layers: a physical network (droop-controlled DGs behind LCL filters,
//! R-L lines and loads, a virtual-resistance node algebra) and a cyber layer
//! (an undirected communication graph over the DGs used by the distributed
//! secondary controller). On top of the plant it provides
//!
//! * a modified Newton-Raphson power flow for droop microgrids under
//!   secondary control ([`powerflow`]),
//! * full nonlinear time-domain simulation with a stiff implicit integrator
//!   ([`dynamics`], [`stiff`]),
//! * spectral tooling for the communication graph ([`cybergraph`]),
//! * the pinning consensus controller and its reduced error model
//!   ([`control`]),
//! * minimum-cardinality pinning-set optimization by exhaustive search and
//!   by genetic algorithm ([`pindecide`]),
//! * a learned fast path for pinning decisions with a verified fallback
//!   ([`pinlearn`]),
//! * a scenario-driven front end used by the `pingrid` binary ([`scenario`]).

pub mod control;
pub mod cybergraph;
pub mod dynamics;
pub mod netmodel;
pub mod pindecide;
pub mod pinlearn;
pub mod powerflow;
pub mod scenario;
pub mod seed;
pub mod stiff;

mod error;

pub use error::{Error, Result};
