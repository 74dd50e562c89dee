//! Everything Alice and Bob exchange during a session.
//!
//! [`ClassicalMessage`] is the public channel: group symbols, validity flags
//! and session bookkeeping. It has no variant that can carry a correlation
//! id or a key bit.
//!
//! [`SimulatedArrival`] stands in for the quantum channel. Photon events are
//! simulated on Alice's side and handed to Bob's detectors through this
//! frame; a real deployment replaces it with fiber.

use serde::{Deserialize, Serialize};

use crate::adversary::PhaseConvention;
use crate::optics::{Group, RelativePhase};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionParams {
    pub seed: u64,
    pub n_rounds: u64,
    /// Hex SHA-256 of the resolved configuration.
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassicalMessage {
    SessionStart(SessionParams),
    GroupAnnounce { round_id: u64, group: Group },
    ValidityReport { round_id: u64, valid: bool },
    SessionEnd { digest: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PulseKind {
    /// The prepare-measure pulse.
    Pm,
    /// The guess-verify pulse.
    Gv,
}

impl PulseKind {
    pub fn symbol(self) -> &'static str {
        match self {
            PulseKind::Pm => "PM",
            PulseKind::Gv => "GV",
        }
    }
}

/// Photons reaching Bob's analyzer in one pulse slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedArrival {
    pub round_id: u64,
    pub pulse: PulseKind,
    /// Photons in the protocol state.
    pub n_state: u64,
    /// Unpolarized photons (source noise).
    pub n_noise: u64,
    pub phase: RelativePhase,
    /// Phase convention of a re-prepared state; `None` for Alice's own.
    pub frame: Option<PhaseConvention>,
}

/// One line on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Frame {
    Classical(ClassicalMessage),
    Arrival(SimulatedArrival),
}

impl Frame {
    /// Round the frame belongs to, where it has one.
    pub fn round_id(&self) -> Option<u64> {
        match self {
            Frame::Classical(ClassicalMessage::GroupAnnounce { round_id, .. })
            | Frame::Classical(ClassicalMessage::ValidityReport { round_id, .. }) => Some(*round_id),
            Frame::Arrival(a) => Some(a.round_id),
            Frame::Classical(_) => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Frame::Classical(ClassicalMessage::SessionStart(_)) => "SESSION_START",
            Frame::Classical(ClassicalMessage::GroupAnnounce { .. }) => "GROUP_ANNOUNCE",
            Frame::Classical(ClassicalMessage::ValidityReport { .. }) => "VALIDITY",
            Frame::Classical(ClassicalMessage::SessionEnd { .. }) => "SESSION_END",
            Frame::Arrival(_) => "SIM_ARRIVAL",
        }
    }
}

impl From<ClassicalMessage> for Frame {
    fn from(m: ClassicalMessage) -> Self {
        Frame::Classical(m)
    }
}

impl From<SimulatedArrival> for Frame {
    fn from(a: SimulatedArrival) -> Self {
        Frame::Arrival(a)
    }
}
