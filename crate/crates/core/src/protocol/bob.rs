//! Bob: random correlation choice, analyzer and detectors.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::messages::{ClassicalMessage, Frame, PulseKind, SimulatedArrival};
use super::session::{check_peer_params, Party, PartyReport, PartyRound, Role, SessionPlan, Transcript};
use super::{decode_verdict, BitString, Verdict};
use crate::adversary::SignalState;
use crate::optics::{
    detection_prob_plus, interference_term, optimal_settings, Bit, CorrelationId,
    InterferenceSpec,
};
use crate::physics::{detect_mixed, Arrival, DetectionOutcome};
use crate::rng::Substream;
use crate::{Error, Result};

/// Bob's record of one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BobRound {
    pub round_id: u64,
    pub choice: CorrelationId,
    pub pm_bit: Option<Bit>,
    pub pm_valid: bool,
    pub verdict: Verdict,
    pub inferred_bit: Option<Bit>,
    pub alice_valid: bool,
}

impl BobRound {
    pub fn kept(&self) -> bool {
        self.pm_valid && self.verdict != Verdict::Invalid && self.alice_valid
    }
}

struct Pending {
    choice: CorrelationId,
    detector: ChaCha8Rng,
    pm_bit: Option<Bit>,
    gv: Option<(Verdict, Option<Bit>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Idle,
    AwaitStart,
    AwaitPm(u64),
    AwaitGv(u64),
    AwaitValidity(u64),
    AwaitEnd,
    Done,
}

pub struct Bob {
    plan: SessionPlan,
    transcript: Transcript,
    state: State,
    rounds: Vec<BobRound>,
    pending: Option<Pending>,
}

impl Bob {
    pub fn new(plan: SessionPlan) -> Self {
        Bob {
            plan,
            transcript: Transcript::default(),
            state: State::Idle,
            rounds: Vec::new(),
            pending: None,
        }
    }

    fn own_start(&self) -> Frame {
        Frame::Classical(ClassicalMessage::SessionStart(self.plan.params.clone()))
    }

    fn after_round(&self, next: u64) -> State {
        if next < self.plan.n_rounds {
            State::AwaitPm(next)
        } else {
            State::AwaitEnd
        }
    }

    fn measure(
        &self,
        arrival: &SimulatedArrival,
        spec: InterferenceSpec,
        choice: CorrelationId,
        rng: &mut ChaCha8Rng,
    ) -> Result<DetectionOutcome> {
        if !arrival.phase.is_protocol_value() {
            return Err(Error::Protocol(format!(
                "round {}: arrival phase {} is not a protocol value",
                arrival.round_id,
                arrival.phase.value()
            )));
        }
        let state = SignalState {
            phase: arrival.phase,
            frame: arrival.frame,
        };
        let theta = optimal_settings(choice).theta2;
        let term = interference_term(spec, theta, state.phase_seen_by(choice));
        let arrivals = [
            Arrival {
                photons: arrival.n_state,
                p_plus: detection_prob_plus(term)?,
            },
            Arrival {
                photons: arrival.n_noise,
                p_plus: 0.5,
            },
        ];
        Ok(detect_mixed(&arrivals, &self.plan.bob_detector, rng))
    }

    fn on_pm(&mut self, arrival: &SimulatedArrival) -> Result<Frame> {
        let r = arrival.round_id;
        let choice = self.plan.bob_choice(r);
        let mut detector = self.plan.seeds.round(Substream::BobDetector, r);
        let outcome = self.measure(arrival, InterferenceSpec::bob(choice), choice, &mut detector)?;
        self.pending = Some(Pending {
            choice,
            detector,
            pm_bit: outcome.port().map(|p| p.bit()),
            gv: None,
        });
        Ok(Frame::Classical(ClassicalMessage::GroupAnnounce {
            round_id: r,
            group: choice.group(),
        }))
    }

    fn on_gv(&mut self, arrival: &SimulatedArrival) -> Result<Frame> {
        let mut pending = self.pending.take().expect("pending round");
        let choice = pending.choice;
        let outcome = self.measure(arrival, InterferenceSpec::bob_verify(), choice, &mut pending.detector)?;
        let verdict = outcome.port().map_or(Verdict::Invalid, Verdict::from_port);
        let inferred = decode_verdict(choice, verdict);
        let valid = pending.pm_bit.is_some() && verdict != Verdict::Invalid;
        pending.gv = Some((verdict, inferred));
        self.pending = Some(pending);
        Ok(Frame::Classical(ClassicalMessage::ValidityReport {
            round_id: arrival.round_id,
            valid,
        }))
    }

    fn finish_round(&mut self, round_id: u64, alice_valid: bool) {
        let pending = self.pending.take().expect("pending round");
        let (verdict, inferred_bit) = pending.gv.expect("guess-verify done");
        self.rounds.push(BobRound {
            round_id,
            choice: pending.choice,
            pm_bit: pending.pm_bit,
            pm_valid: pending.pm_bit.is_some(),
            verdict,
            inferred_bit,
            alice_valid,
        });
    }

    fn unexpected(&self, frame: &Frame) -> Error {
        Error::Protocol(format!(
            "Bob received {} (round {:?}) while in state {:?}",
            frame.kind(),
            frame.round_id(),
            self.state
        ))
    }
}

impl Party for Bob {
    fn role(&self) -> Role {
        Role::Bob
    }

    fn start(&mut self) -> Vec<Frame> {
        assert_eq!(self.state, State::Idle, "start called twice");
        self.state = State::AwaitStart;
        vec![self.own_start()]
    }

    fn on_frame(&mut self, frame: Frame) -> Result<Vec<Frame>> {
        if let (State::AwaitEnd, Frame::Classical(ClassicalMessage::SessionEnd { digest })) =
            (self.state, &frame)
        {
            let ours = self.transcript.digest();
            self.transcript.record(&frame);
            self.state = State::Done;
            if *digest != ours {
                return Err(Error::Protocol(format!(
                    "transcript digest mismatch: ours {ours}, Alice's {digest}"
                )));
            }
            return Ok(Vec::new());
        }
        if let (State::AwaitStart, Frame::Classical(ClassicalMessage::SessionStart(params))) =
            (self.state, &frame)
        {
            check_peer_params(&self.plan, params).inspect_err(|_| self.state = State::Done)?;
            // Handshake frames enter the transcript in a fixed order, Alice's first.
            let own = self.own_start();
            self.transcript.record(&frame);
            self.transcript.record(&own);
            self.state = self.after_round(0);
            return Ok(Vec::new());
        }
        self.transcript.record(&frame);
        let out = match (self.state, &frame) {
            (State::AwaitPm(r), Frame::Arrival(a)) if a.round_id == r && a.pulse == PulseKind::Pm => {
                let reply = self.on_pm(a)?;
                self.state = State::AwaitGv(r);
                vec![reply]
            }
            (State::AwaitGv(r), Frame::Arrival(a)) if a.round_id == r && a.pulse == PulseKind::Gv => {
                let reply = self.on_gv(a)?;
                self.state = State::AwaitValidity(r);
                vec![reply]
            }
            (
                State::AwaitValidity(r),
                Frame::Classical(ClassicalMessage::ValidityReport { round_id, valid }),
            ) if *round_id == r => {
                self.finish_round(r, *valid);
                self.state = self.after_round(r + 1);
                Vec::new()
            }
            _ => return Err(self.unexpected(&frame)),
        };
        for f in &out {
            self.transcript.record(f);
        }
        Ok(out)
    }

    fn is_done(&self) -> bool {
        self.state == State::Done
    }

    fn report(&self) -> PartyReport {
        let key: BitString = self
            .rounds
            .iter()
            .filter(|r| r.kept())
            .filter_map(|r| r.inferred_bit)
            .collect();
        PartyReport {
            role: Role::Bob,
            params: self.plan.params.clone(),
            completed: self.is_done() && self.rounds.len() as u64 == self.plan.n_rounds,
            key,
            rounds: self.rounds.iter().copied().map(PartyRound::Bob).collect(),
            eve_records: Vec::new(),
            transcript_digest: self.transcript.digest(),
        }
    }
}
