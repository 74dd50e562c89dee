//! Alice: source, ancilla detectors, and the simulated quantum channel.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::messages::{ClassicalMessage, Frame, PulseKind, SimulatedArrival};
use super::session::{check_peer_params, Party, PartyReport, PartyRound, Role, SessionPlan, Transcript};
use super::{gv_alice_key_bit, BitString, ALICE_THETA};
use crate::adversary::{
    choose_eve_correlation, intercept_resend, pns_intercept, EveRecord, EveStrategy, SignalState,
};
use crate::optics::{
    detection_prob_plus, interference_term, Angle, Bit, CorrelationId, Group, InterferenceSpec,
    RelativePhase,
};
use crate::physics::{
    detect, sample_pulse, transmit, ChannelPlacement, DetectionOutcome, PulseOutcome,
};
use crate::rng::Substream;
use crate::{Error, Result};

/// Alice's record of one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AliceRound {
    pub round_id: u64,
    pub herald_valid: bool,
    pub group: Group,
    pub guess: CorrelationId,
    pub dphi: RelativePhase,
    pub key_bit: Option<Bit>,
    pub gv_valid: bool,
    pub bob_valid: bool,
}

impl AliceRound {
    pub fn kept(&self) -> bool {
        self.herald_valid && self.gv_valid && self.bob_valid
    }
}

struct RoundRngs {
    source: ChaCha8Rng,
    channel: ChaCha8Rng,
    detector: ChaCha8Rng,
    eve: ChaCha8Rng,
}

struct Pending {
    round_id: u64,
    rngs: RoundRngs,
    eve: EveRecord,
    herald_valid: bool,
    gv: Option<(Group, CorrelationId, Option<Bit>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Idle,
    AwaitStart,
    AwaitGroup(u64),
    AwaitValidity(u64),
    Done,
}

pub struct Alice {
    plan: SessionPlan,
    transcript: Transcript,
    state: State,
    rounds: Vec<AliceRound>,
    eve_records: Vec<EveRecord>,
    pending: Option<Pending>,
}

impl Alice {
    pub fn new(plan: SessionPlan) -> Self {
        Alice {
            plan,
            transcript: Transcript::default(),
            state: State::Idle,
            rounds: Vec::new(),
            eve_records: Vec::new(),
            pending: None,
        }
    }

    fn own_start(&self) -> Frame {
        Frame::Classical(ClassicalMessage::SessionStart(self.plan.params.clone()))
    }

    fn send(&mut self, frames: Vec<Frame>) -> Vec<Frame> {
        for f in &frames {
            self.transcript.record(f);
        }
        frames
    }

    fn next_round_or_end(&mut self, next: u64) -> Result<Frame> {
        if next < self.plan.n_rounds {
            self.state = State::AwaitGroup(next);
            Ok(Frame::Arrival(self.begin_round(next)?))
        } else {
            self.state = State::Done;
            Ok(Frame::Classical(ClassicalMessage::SessionEnd {
                digest: self.transcript.digest(),
            }))
        }
    }

    fn ancilla_photons(&self, n: u64, rngs: &mut RoundRngs) -> u64 {
        match self.plan.channel.placement {
            ChannelPlacement::AncillaLocal => n,
            ChannelPlacement::BothArms => transmit(n, &self.plan.channel, &mut rngs.channel),
        }
    }

    fn begin_round(&mut self, round_id: u64) -> Result<SimulatedArrival> {
        let seeds = &self.plan.seeds;
        let mut rngs = RoundRngs {
            source: seeds.round(Substream::Source, round_id),
            channel: seeds.round(Substream::Channel, round_id),
            detector: seeds.round(Substream::AliceDetector, round_id),
            eve: seeds.round(Substream::Eve, round_id),
        };
        let mut eve = EveRecord::new(round_id);
        let pulse = sample_pulse(&self.plan.source, &mut rngs.source);
        let n_ancilla = self.ancilla_photons(pulse.n_ancilla, &mut rngs);
        let herald_term = interference_term(
            InterferenceSpec::alice(),
            Angle::degrees(ALICE_THETA),
            RelativePhase::LOCKED,
        );
        let herald = detect(
            n_ancilla,
            detection_prob_plus(herald_term)?,
            &self.plan.alice_detector,
            &mut rngs.detector,
        );
        let arrival = self.emit_signal(
            &mut rngs,
            &mut eve,
            round_id,
            PulseKind::Pm,
            pulse,
            RelativePhase::LOCKED,
            None,
        )?;
        self.pending = Some(Pending {
            round_id,
            rngs,
            eve,
            herald_valid: herald == DetectionOutcome::ClickPlus,
            gv: None,
        });
        Ok(arrival)
    }

    fn guess_verify(&mut self, round_id: u64, group: Group) -> Result<SimulatedArrival> {
        let guess = self.plan.alice_guess(round_id, group)?;
        let dphi = RelativePhase::for_guess(guess);
        let mut pending = self.pending.take().expect("pending round");
        let pulse = sample_pulse(&self.plan.source, &mut pending.rngs.source);
        let n_ancilla = self.ancilla_photons(pulse.n_ancilla, &mut pending.rngs);
        // Alice mimics Bob's apparatus for her guess on the ancilla.
        let term = interference_term(InterferenceSpec::bob(guess), Angle::degrees(ALICE_THETA), dphi);
        let outcome = detect(
            n_ancilla,
            detection_prob_plus(term)?,
            &self.plan.alice_detector,
            &mut pending.rngs.detector,
        );
        let key_bit = outcome.port().map(|p| p.bit());
        let arrival = self.emit_signal(
            &mut pending.rngs,
            &mut pending.eve,
            round_id,
            PulseKind::Gv,
            pulse,
            dphi,
            Some((group, guess)),
        );
        pending.gv = Some((group, guess, key_bit));
        self.pending = Some(pending);
        arrival
    }

    /// Pushes one pulse's signal arm through the eavesdropper and the
    /// channel. `gv` carries the announced group and Alice's guess on the
    /// guess-verify pulse.
    #[allow(clippy::too_many_arguments)]
    fn emit_signal(
        &self,
        rngs: &mut RoundRngs,
        eve: &mut EveRecord,
        round_id: u64,
        pulse_kind: PulseKind,
        pulse: PulseOutcome,
        phase: RelativePhase,
        gv: Option<(Group, CorrelationId)>,
    ) -> Result<SimulatedArrival> {
        let mut state = SignalState::prepared(phase);
        let (mut n_state, mut n_noise, lossless) = match self.plan.adversary {
            EveStrategy::None => (pulse.n_signal, pulse.n_noise, false),
            EveStrategy::Pns => {
                let split = pns_intercept(round_id, pulse);
                eve.photons_stored += split.record.photons_stored;
                if split.record.photons_stored > 0 {
                    if let Some((_, guess)) = gv {
                        // Worst case: the stored photon plus the public group
                        // gives Eve the key bit.
                        eve.eve_bit_estimate = Some(gv_alice_key_bit(guess));
                    }
                }
                (
                    split.forwarded.n_signal,
                    split.forwarded.n_noise,
                    split.bypasses_channel(),
                )
            }
            EveStrategy::InterceptResend { guess_policy } => {
                if pulse.signal_arm_total() == 0 {
                    (0, 0, false)
                } else {
                    let bob_actual = self.plan.bob_choice(round_id);
                    let incoming = (pulse.n_signal > 0).then_some(state);
                    let announced = gv.map(|(g, _)| g);
                    let choice =
                        choose_eve_correlation(guess_policy, announced, bob_actual, &mut rngs.eve);
                    let resend = intercept_resend(incoming, choice, &mut rngs.eve)?;
                    if incoming.is_some()
                        && resend.state.phase_seen_by(bob_actual) != state.phase_seen_by(bob_actual)
                    {
                        eve.disturbed = true;
                    }
                    if gv.is_some() {
                        eve.eve_bit_estimate = Some(resend.eve_bit);
                    }
                    state = resend.state;
                    (1, 0, true)
                }
            }
        };
        if !lossless {
            n_state = transmit(n_state, &self.plan.channel, &mut rngs.channel);
            n_noise = transmit(n_noise, &self.plan.channel, &mut rngs.channel);
        }
        if pulse_kind == PulseKind::Gv && !self.plan.gv_signal_delivered(round_id) {
            n_state = 0;
            n_noise = 0;
        }
        Ok(SimulatedArrival {
            round_id,
            pulse: pulse_kind,
            n_state,
            n_noise,
            phase: state.phase,
            frame: state.frame,
        })
    }

    fn finish_round(&mut self, round_id: u64, bob_valid: bool) -> Result<bool> {
        let pending = self.pending.take().expect("pending round");
        let (group, guess, key_bit) = pending.gv.expect("guess-verify done");
        debug_assert_eq!(pending.round_id, round_id);
        let round = AliceRound {
            round_id,
            herald_valid: pending.herald_valid,
            group,
            guess,
            dphi: RelativePhase::for_guess(guess),
            key_bit,
            gv_valid: key_bit.is_some(),
            bob_valid,
        };
        self.rounds.push(round);
        if self.plan.adversary.is_active() {
            self.eve_records.push(pending.eve);
        }
        Ok(round.herald_valid && round.gv_valid)
    }

    fn unexpected(&self, frame: &Frame) -> Error {
        Error::Protocol(format!(
            "Alice received {} (round {:?}) while in state {:?}",
            frame.kind(),
            frame.round_id(),
            self.state
        ))
    }
}

impl Party for Alice {
    fn role(&self) -> Role {
        Role::Alice
    }

    fn start(&mut self) -> Vec<Frame> {
        assert_eq!(self.state, State::Idle, "start called twice");
        self.state = State::AwaitStart;
        vec![self.own_start()]
    }

    fn on_frame(&mut self, frame: Frame) -> Result<Vec<Frame>> {
        if let (State::AwaitStart, Frame::Classical(ClassicalMessage::SessionStart(params))) =
            (self.state, &frame)
        {
            check_peer_params(&self.plan, params).inspect_err(|_| self.state = State::Done)?;
            let own = self.own_start();
            self.transcript.record(&own);
            self.transcript.record(&frame);
            let out = vec![self.next_round_or_end(0)?];
            return Ok(self.send(out));
        }
        self.transcript.record(&frame);
        let out = match (self.state, &frame) {
            (
                State::AwaitGroup(r),
                Frame::Classical(ClassicalMessage::GroupAnnounce { round_id, group }),
            ) if *round_id == r => {
                let arrival = self.guess_verify(r, *group)?;
                self.state = State::AwaitValidity(r);
                vec![Frame::Arrival(arrival)]
            }
            (
                State::AwaitValidity(r),
                Frame::Classical(ClassicalMessage::ValidityReport { round_id, valid }),
            ) if *round_id == r => {
                let own = self.finish_round(r, *valid)?;
                let report = Frame::Classical(ClassicalMessage::ValidityReport {
                    round_id: r,
                    valid: own,
                });
                // The digest in SESSION_END must cover our last report.
                self.transcript.record(&report);
                let next = self.next_round_or_end(r + 1)?;
                self.transcript.record(&next);
                return Ok(vec![report, next]);
            }
            _ => return Err(self.unexpected(&frame)),
        };
        Ok(self.send(out))
    }

    fn is_done(&self) -> bool {
        self.state == State::Done
    }

    fn report(&self) -> PartyReport {
        let key: BitString = self
            .rounds
            .iter()
            .filter(|r| r.kept())
            .filter_map(|r| r.key_bit)
            .collect();
        PartyReport {
            role: Role::Alice,
            params: self.plan.params.clone(),
            completed: self.is_done() && self.rounds.len() as u64 == self.plan.n_rounds,
            key,
            rounds: self.rounds.iter().copied().map(PartyRound::Alice).collect(),
            eve_records: self.eve_records.clone(),
            transcript_digest: self.transcript.digest(),
        }
    }
}
