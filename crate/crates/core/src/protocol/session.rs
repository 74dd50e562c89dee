//! Session plan, transcripts and the in-process driver.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::alice::{Alice, AliceRound};
use super::bob::{Bob, BobRound};
use super::messages::{Frame, SessionParams};
use super::{gv_guess, sift, BitString, GVRecord, PMRecord, SessionResult};
use crate::adversary::{EveRecord, EveStrategy};
use crate::config::{Script, SessionConfig};
use crate::optics::{Bit, CorrelationId, Group};
use crate::physics::{ChannelModel, DetectorModel, SourceModel};
use crate::rng::{SeedTree, Substream};
use crate::{Error, Result};

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Alice,
    Bob,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Role::Alice => "alice",
            Role::Bob => "bob",
        })
    }
}

/// Everything both parties derive from the configuration before round 0.
#[derive(Debug, Clone)]
pub struct SessionPlan {
    pub n_rounds: u64,
    pub seeds: SeedTree,
    pub source: SourceModel,
    pub channel: ChannelModel,
    pub alice_detector: DetectorModel,
    pub bob_detector: DetectorModel,
    pub adversary: EveStrategy,
    pub script: Script,
    pub params: SessionParams,
}

impl SessionPlan {
    pub fn new(config: &SessionConfig) -> Result<Self> {
        let resolved = config.resolved()?;
        Ok(SessionPlan {
            n_rounds: resolved.n_rounds,
            seeds: SeedTree::new(resolved.seed),
            source: resolved.source.model()?,
            channel: resolved.channel,
            alice_detector: resolved.detectors.alice,
            bob_detector: resolved.detectors.bob,
            adversary: resolved.adversary,
            script: resolved.scripted.clone().unwrap_or_default(),
            params: SessionParams {
                seed: resolved.seed,
                n_rounds: resolved.n_rounds,
                config_hash: resolved.config_hash()?,
            },
        })
    }

    /// Bob's correlation for a round. The simulated quantum channel also
    /// reads this, since an eavesdropper model may key on it.
    pub fn bob_choice(&self, round_id: u64) -> CorrelationId {
        if let Some(c) = self.script.bob_choices.as_ref().and_then(|c| c.get(round_id as usize)) {
            return *c;
        }
        let mut rng = self.seeds.round(Substream::Choices, round_id);
        CorrelationId::ALL[rng.random_range(0..4)]
    }

    pub fn alice_guess(&self, round_id: u64, group: Group) -> Result<CorrelationId> {
        if let Some(g) = self.script.alice_guesses.as_ref().and_then(|g| g.get(round_id as usize)) {
            if g.group() != group {
                return Err(Error::Protocol(format!(
                    "round {round_id}: scripted guess {g} is outside announced group {group}"
                )));
            }
            return Ok(*g);
        }
        Ok(gv_guess(group, &mut self.seeds.round(Substream::Guesses, round_id)))
    }

    pub fn gv_signal_delivered(&self, round_id: u64) -> bool {
        self.script
            .gv_signal_delivered
            .as_ref()
            .and_then(|d| d.get(round_id as usize).copied())
            .unwrap_or(true)
    }
}

/// Running SHA-256 over every frame line a party sends or receives.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    hasher: Sha256,
    frames: u64,
}

impl Transcript {
    pub fn record(&mut self, frame: &Frame) {
        self.hasher.update(crate::netlink::encode(frame).as_bytes());
        self.hasher.update(b"\n");
        self.frames += 1;
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn digest(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }
}

pub(crate) fn check_peer_params(ours: &SessionPlan, theirs: &SessionParams) -> Result<()> {
    if *theirs == ours.params {
        Ok(())
    } else {
        Err(Error::config(
            "config_hash",
            format!(
                "peer session parameters differ: ours seed={} n_rounds={} hash={}, theirs seed={} n_rounds={} hash={}",
                ours.params.seed,
                ours.params.n_rounds,
                ours.params.config_hash,
                theirs.seed,
                theirs.n_rounds,
                theirs.config_hash
            ),
        ))
    }
}

/// A protocol party driven by incoming frames.
///
/// Both parties open with their own `SESSION_START` and check the peer's.
/// After that the exchange alternates strictly, one round at a time.
pub trait Party {
    fn role(&self) -> Role;
    /// Frames to send before reading anything. Call exactly once.
    fn start(&mut self) -> Vec<Frame>;
    /// Handles one frame from the peer and returns the frames to send back.
    fn on_frame(&mut self, frame: Frame) -> Result<Vec<Frame>>;
    fn is_done(&self) -> bool;
    /// What the party knows so far; valid after an abort too.
    fn report(&self) -> PartyReport;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PartyRound {
    Alice(AliceRound),
    Bob(BobRound),
}

impl PartyRound {
    pub fn round_id(&self) -> u64 {
        match self {
            PartyRound::Alice(r) => r.round_id,
            PartyRound::Bob(r) => r.round_id,
        }
    }
}

/// One party's view of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyReport {
    pub role: Role,
    pub params: SessionParams,
    pub completed: bool,
    pub key: BitString,
    pub rounds: Vec<PartyRound>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eve_records: Vec<EveRecord>,
    pub transcript_digest: String,
}

impl PartyReport {
    pub fn alice_rounds(&self) -> impl Iterator<Item = &AliceRound> {
        self.rounds.iter().filter_map(|r| match r {
            PartyRound::Alice(a) => Some(a),
            PartyRound::Bob(_) => None,
        })
    }

    pub fn bob_rounds(&self) -> impl Iterator<Item = &BobRound> {
        self.rounds.iter().filter_map(|r| match r {
            PartyRound::Bob(b) => Some(b),
            PartyRound::Alice(_) => None,
        })
    }
}

impl SessionResult {
    /// Joins the two parties' views into full round records and sifts them.
    pub fn from_parties(alice: &PartyReport, bob: &PartyReport) -> Result<SessionResult> {
        if alice.role != Role::Alice || bob.role != Role::Bob {
            return Err(Error::Protocol("reports passed in the wrong order".into()));
        }
        if alice.transcript_digest != bob.transcript_digest {
            return Err(Error::Protocol("transcript digests differ".into()));
        }
        let a_rounds: Vec<_> = alice.alice_rounds().collect();
        let b_rounds: Vec<_> = bob.bob_rounds().collect();
        if a_rounds.len() != b_rounds.len() {
            return Err(Error::Protocol(format!(
                "Alice reports {} rounds, Bob {}",
                a_rounds.len(),
                b_rounds.len()
            )));
        }
        let rounds = a_rounds
            .into_iter()
            .zip(b_rounds)
            .map(|(a, b)| {
                let pm = PMRecord {
                    round_id: b.round_id,
                    alice_bit: a.herald_valid.then_some(Bit::One),
                    bob_choice: b.choice,
                    bob_bit: b.pm_bit,
                    group_announced: a.group,
                    alice_detection_valid: a.herald_valid,
                    bob_detection_valid: b.pm_valid,
                };
                let gv = GVRecord {
                    round_id: a.round_id,
                    alice_guess: a.guess,
                    alice_key_bit: a.key_bit,
                    alice_detection_valid: a.gv_valid,
                    verdict: b.verdict,
                    bob_inferred_bit: b.inferred_bit,
                    dphi_used: a.dphi,
                };
                (pm, gv)
            })
            .collect();
        let mut result = sift(rounds)?;
        if result.alice_key != alice.key || result.bob_key != bob.key {
            return Err(Error::Protocol(
                "joined sifting disagrees with the parties' own keys".into(),
            ));
        }
        result.eve_records = alice.eve_records.clone();
        result.transcript_digest = Some(alice.transcript_digest.clone());
        Ok(result)
    }
}

/// Runs both parties in this process, passing frames through queues in the
/// order a stream would deliver them.
pub fn run_session_with_parties(plan: &SessionPlan) -> Result<(PartyReport, PartyReport)> {
    let mut alice = Alice::new(plan.clone());
    let mut bob = Bob::new(plan.clone());
    let mut to_bob: VecDeque<Frame> = alice.start().into();
    let mut to_alice: VecDeque<Frame> = bob.start().into();
    while !(alice.is_done() && bob.is_done()) {
        if let Some(frame) = to_bob.pop_front() {
            to_alice.extend(bob.on_frame(frame)?);
        } else if let Some(frame) = to_alice.pop_front() {
            to_bob.extend(alice.on_frame(frame)?);
        } else {
            return Err(Error::Protocol("session stalled with no frames in flight".into()));
        }
    }
    Ok((alice.report(), bob.report()))
}

/// Runs a whole session in-process.
pub fn run_session(config: &SessionConfig) -> Result<SessionResult> {
    let plan = SessionPlan::new(config)?;
    let (alice, bob) = run_session_with_parties(&plan)?;
    SessionResult::from_parties(&alice, &bob)
}
