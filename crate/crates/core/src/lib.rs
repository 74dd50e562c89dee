//! Discrete-round simulator for the prepare-measure-guess-verify (PMGV)
//! key distribution protocol.
//!
//! The protocol shares one of four single-photon bi-partite correlation
//! functions (C1..C4) between Alice and Bob. Bob picks a correlation at
//! random and measures Alice's phase-locked signal photon (prepare-measure),
//! announces only its group, then Alice guesses within the group and sets a
//! key bit that Bob can decode whether or not the guess was right
//! (guess-verify).
//!
//! Crate layout:
//!
//! * [`optics`]: correlation functions, interference terms, optimal settings.
//! * [`physics`]: photon sources, lossy channel, detectors, CAR.
//! * [`protocol`]: Alice/Bob state machines, classical messages, sifting.
//! * [`adversary`]: photon-number splitting and intercept-resend.
//! * [`analysis`]: key-rate arithmetic and session statistics.
//! * [`netlink`]: line-framed wire format and the two-process runner.
//! * [`config`], [`report`], [`cli`]: scenario files, outputs, entry point.

pub mod adversary;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod netlink;
pub mod optics;
pub mod physics;
pub mod protocol;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
