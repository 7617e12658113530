//! Simulation and security analysis for phase-encoded twin-field QKD with
//! probabilistic Test/Code mode switching and three decoy intensities.
//!
//! Layers, bottom up:
//! - [`fock`]: truncated multimode Fock space (coherent states, beam splitters, loss).
//! - [`states`]: protocol and fictitious-protocol states plus identity checks.
//! - [`bounds`]: entropy, divergence and concentration deviations.
//! - [`channel`]: honest relay physics, gains, error rates, Fock yields, PLOB.
//! - [`decoy`]: intensity bookkeeping and per-Fock count estimation.
//! - [`keyrate`]: asymptotic rate and finite key length.
//! - [`protosim`]: Monte-Carlo protocol runs producing observed counts.
//! - [`cli`]: configs, scans, finite evaluation and the verification suite.

pub mod bounds;
pub mod channel;
#[cfg(feature = "cli")]
pub mod cli;
pub mod decoy;
pub mod error;
pub mod fock;
pub mod keyrate;
pub mod protosim;
pub mod states;

pub use error::{Error, Result};
