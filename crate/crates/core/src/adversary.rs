//! Eavesdropper models acting on the signal arm.
//!
//! Eve sits at Alice's output port and sees everything on the public
//! channel, including group announcements.
//!
//! * [`EveStrategy::Pns`] splits one photon off every pulse with two or
//!   more signal photons, forwards the remainder over a lossless line and
//!   stores her photon until the group is announced. She is credited with
//!   the key bit of every sifted round where she holds a photon from the
//!   guess-verify pulse. The attack is passive: it never changes a photon's state.
//! * [`EveStrategy::InterceptResend`] measures every signal pulse with Bob's
//!   apparatus for a correlation of her choosing and resends one photon in
//!   the state she observed, prepared under her choice's phase convention.
//!   Bob reads a photon prepared under the opposite convention with its
//!   relative phase reversed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::optics::{
    interference_term, optimal_settings, sample_port, Bit, CorrelationId, Group,
    InterferenceSpec, RelativePhase,
};
use crate::physics::PulseOutcome;
use crate::protocol::SessionResult;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessPolicy {
    UniformOverFour,
    /// Uniform within the announced group once it is public. Before the
    /// announcement (prepare-measure pulse) this falls back to all four.
    UniformWithinAnnouncedGroup,
    /// Eve always picks Bob's actual choice. Not a realizable attack; it
    /// pins the zero-disturbance limit.
    MatchBobChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EveStrategy {
    #[default]
    None,
    Pns,
    InterceptResend { guess_policy: GuessPolicy },
}

impl EveStrategy {
    pub fn is_active(&self) -> bool {
        !matches!(self, EveStrategy::None)
    }

    pub fn label(&self) -> &'static str {
        match self {
            EveStrategy::None => "none",
            EveStrategy::Pns => "pns",
            EveStrategy::InterceptResend { .. } => "intercept_resend",
        }
    }
}

/// Eve's bookkeeping for one round (both pulses).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveRecord {
    pub round_id: u64,
    pub photons_stored: u64,
    /// Eve's estimate of Alice's key bit for this round.
    pub eve_bit_estimate: Option<Bit>,
    /// Eve's resend changed what Bob would have measured.
    pub disturbed: bool,
}

impl EveRecord {
    pub fn new(round_id: u64) -> Self {
        EveRecord {
            round_id,
            photons_stored: 0,
            eve_bit_estimate: None,
            disturbed: false,
        }
    }
}

/// The two lock values a protocol photon can be prepared under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PhaseConvention {
    /// C1 and C4: the nominal lock.
    Locked,
    /// C2 and C3: the shifted lock.
    Shifted,
}

impl PhaseConvention {
    pub fn of(corr: CorrelationId) -> Self {
        if RelativePhase::for_guess(corr) == RelativePhase::LOCKED {
            PhaseConvention::Locked
        } else {
            PhaseConvention::Shifted
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            PhaseConvention::Locked => "LOCKED",
            PhaseConvention::Shifted => "SHIFTED",
        }
    }
}

/// The optical state of a signal pulse as far as the model tracks it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalState {
    pub phase: RelativePhase,
    /// Convention the photon was re-prepared under; `None` for Alice's own.
    pub frame: Option<PhaseConvention>,
}

impl SignalState {
    pub fn prepared(phase: RelativePhase) -> Self {
        SignalState { phase, frame: None }
    }

    /// Phase a measurement configured for `corr` responds to.
    pub fn phase_seen_by(&self, corr: CorrelationId) -> RelativePhase {
        match self.frame {
            Some(frame) if frame != PhaseConvention::of(corr) => self.phase.reversed(),
            _ => self.phase,
        }
    }
}

/// Result of splitting a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PnsSplit {
    pub forwarded: PulseOutcome,
    pub record: EveRecord,
}

impl PnsSplit {
    /// The forwarded remainder travels on Eve's lossless line.
    pub fn bypasses_channel(&self) -> bool {
        self.record.photons_stored > 0
    }
}

/// Photon-number splitting on one pulse. Eve only splits pulses with at
/// least two signal-state photons and keeps one of them; uncorrelated noise
/// photons pass untouched.
pub fn pns_intercept(round_id: u64, pulse: PulseOutcome) -> PnsSplit {
    let mut record = EveRecord::new(round_id);
    let mut forwarded = pulse;
    if pulse.n_signal >= 2 {
        forwarded.n_signal -= 1;
        record.photons_stored = 1;
    }
    PnsSplit { forwarded, record }
}

/// Outcome of one intercept-resend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resend {
    pub state: SignalState,
    pub eve_bit: Bit,
}

/// Eve measures one incoming photon with Bob's prepare-measure apparatus for
/// `eve_choice` and resends the protocol state that reproduces her outcome,
/// tagged with her choice's phase convention.
///
/// `incoming` is `None` when the pulse held only noise photons; Eve then
/// reads a random port.
pub fn intercept_resend<R: Rng + ?Sized>(
    incoming: Option<SignalState>,
    eve_choice: CorrelationId,
    rng: &mut R,
) -> Result<Resend> {
    let spec = InterferenceSpec::bob(eve_choice);
    let theta = optimal_settings(eve_choice).theta2;
    let term = match incoming {
        Some(state) => interference_term(spec, theta, state.phase_seen_by(eve_choice)),
        None => 0.0,
    };
    let port = sample_port(term, rng)?;
    let eve_bit = port.bit();
    // Of the two protocol phases, exactly one sends her measurement to `port`.
    let locked = interference_term(spec, theta, RelativePhase::LOCKED);
    let phase = if crate::optics::DetectorPort::from_term(locked) == Some(port) {
        RelativePhase::LOCKED
    } else {
        RelativePhase::SHIFTED
    };
    Ok(Resend {
        state: SignalState {
            phase,
            frame: Some(PhaseConvention::of(eve_choice)),
        },
        eve_bit,
    })
}

/// Draws Eve's correlation for one pulse.
pub fn choose_eve_correlation<R: Rng + ?Sized>(
    policy: GuessPolicy,
    announced: Option<Group>,
    bob_actual: CorrelationId,
    rng: &mut R,
) -> CorrelationId {
    match (policy, announced) {
        (GuessPolicy::MatchBobChoice, _) => bob_actual,
        (GuessPolicy::UniformWithinAnnouncedGroup, Some(group)) => {
            group.members()[rng.random_range(0..2)]
        }
        _ => CorrelationId::ALL[rng.random_range(0..4)],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LeakageSummary {
    pub leaked_bits: u64,
    /// Leaked bits over sifted bits; zero for an empty sifted key.
    pub leaked_fraction: f64,
    /// QBER with Eve minus QBER of the same seed without her.
    pub induced_qber: f64,
}

/// Counts sifted rounds where Eve's bit estimate equals Alice's key bit.
/// `baseline_qber` is the QBER of the same session run without Eve.
pub fn leakage_summary(
    records: &[EveRecord],
    session: &SessionResult,
    baseline_qber: Option<f64>,
) -> LeakageSummary {
    let mut leaked_bits = 0u64;
    let mut sifted = 0u64;
    let mut eve_iter = records.iter().peekable();
    for (pm, gv) in &session.rounds {
        if !SessionResult::round_kept(pm, gv) {
            continue;
        }
        sifted += 1;
        while eve_iter.peek().is_some_and(|r| r.round_id < pm.round_id) {
            eve_iter.next();
        }
        if let Some(rec) = eve_iter.peek().filter(|r| r.round_id == pm.round_id) {
            if rec.eve_bit_estimate.is_some() && rec.eve_bit_estimate == gv.alice_key_bit {
                leaked_bits += 1;
            }
        }
    }
    let leaked_fraction = if sifted == 0 {
        0.0
    } else {
        leaked_bits as f64 / sifted as f64
    };
    let induced_qber = match (session.qber, baseline_qber) {
        (Some(q), Some(b)) => q - b,
        (Some(q), None) => q,
        _ => 0.0,
    };
    LeakageSummary {
        leaked_bits,
        leaked_fraction,
        induced_qber,
    }
}
