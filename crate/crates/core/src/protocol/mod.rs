//! Prepare-measure-guess-verify protocol logic.
//!
//! A round runs in two halves over two pulse slots:
//!
//! 1. **Prepare-measure.** Alice heralds her ancilla in `+` (she only ever
//!    prepares bit 1) and sends the phase-locked signal photon. Bob measures
//!    it with a correlation chosen uniformly from C1..C4 and announces only
//!    the group.
//! 2. **Guess-verify.** Alice guesses a correlation within the group,
//!    measures a fresh ancilla with Bob's apparatus for that guess (her key
//!    bit) and sends a signal photon under the guess's lock (-90 for C1/C4,
//!    +90 for C2/C3). Bob measures it with his kept projection angle: `+`
//!    means the guess was right, `-` wrong, and in both cases he knows
//!    Alice's key bit.
//!
//! Both parties then exchange validity flags and keep rounds where all four
//! detections were valid.

mod alice;
mod bob;
pub mod messages;
mod session;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::EveRecord;
use crate::optics::{
    interference_term, optimal_settings, Angle, Bit, CorrelationId, DetectorPort, Group,
    InterferenceSpec, RelativePhase,
};
use crate::{Error, Result};

pub use alice::{Alice, AliceRound};
pub use bob::{Bob, BobRound};
pub use messages::{ClassicalMessage, Frame, PulseKind, SessionParams, SimulatedArrival};
pub use session::{
    run_session, run_session_with_parties, Party, PartyReport, PartyRound, Role, SessionPlan,
    Transcript,
};

/// Alice's projection angle, kept fixed for the whole session.
pub const ALICE_THETA: f64 = 45.0;

fn deterministic_port(term: f64) -> DetectorPort {
    DetectorPort::from_term(term).expect("optimal settings give a deterministic term")
}

/// Bob's prepare-measure bit for an ideal measurement of Alice's locked photon.
pub fn pm_measure(bob_choice: CorrelationId) -> Bit {
    let theta = optimal_settings(bob_choice).theta2;
    let term = interference_term(InterferenceSpec::bob(bob_choice), theta, RelativePhase::LOCKED);
    deterministic_port(term).bit()
}

/// Alice's uniform guess within the announced group.
pub fn gv_guess<R: Rng + ?Sized>(group: Group, rng: &mut R) -> CorrelationId {
    group.members()[rng.random_range(0..2)]
}

/// Alice's key bit for a guess: Bob's prepare-measure term for the guess,
/// evaluated at Alice's angle under the guess's lock.
pub fn gv_alice_key_bit(guess: CorrelationId) -> Bit {
    let term = interference_term(
        InterferenceSpec::bob(guess),
        Angle::degrees(ALICE_THETA),
        RelativePhase::for_guess(guess),
    );
    deterministic_port(term).bit()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Yes,
    No,
    Invalid,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Verdict::Yes => "Yes",
            Verdict::No => "No",
            Verdict::Invalid => "Invalid",
        })
    }
}

impl Verdict {
    pub fn from_port(port: DetectorPort) -> Self {
        match port {
            DetectorPort::Plus => Verdict::Yes,
            DetectorPort::Minus => Verdict::No,
        }
    }
}

/// Bob's reading of Alice's key bit from his verdict: on `Yes` the guess was
/// his own correlation, on `No` it was the other member of the group.
pub fn decode_verdict(bob_actual: CorrelationId, verdict: Verdict) -> Option<Bit> {
    match verdict {
        Verdict::Yes => Some(gv_alice_key_bit(bob_actual)),
        Verdict::No => Some(gv_alice_key_bit(bob_actual.partner())),
        Verdict::Invalid => None,
    }
}

/// Ideal-device guess-verify step.
pub fn gv_verify(bob_actual: CorrelationId, alice_guess: CorrelationId) -> Result<(Verdict, Bit)> {
    if bob_actual.group() != alice_guess.group() {
        return Err(Error::Protocol(format!(
            "guess {alice_guess} is outside the group of {bob_actual}"
        )));
    }
    let term = interference_term(
        InterferenceSpec::bob_verify(),
        optimal_settings(bob_actual).theta2,
        RelativePhase::for_guess(alice_guess),
    );
    let verdict = Verdict::from_port(deterministic_port(term));
    let bit = decode_verdict(bob_actual, verdict).expect("verdict is Yes or No");
    Ok((verdict, bit))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PMRecord {
    pub round_id: u64,
    /// Alice's heralding bit; 1 whenever the herald is valid.
    pub alice_bit: Option<Bit>,
    pub bob_choice: CorrelationId,
    pub bob_bit: Option<Bit>,
    pub group_announced: Group,
    pub alice_detection_valid: bool,
    pub bob_detection_valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GVRecord {
    pub round_id: u64,
    pub alice_guess: CorrelationId,
    pub alice_key_bit: Option<Bit>,
    pub alice_detection_valid: bool,
    pub verdict: Verdict,
    pub bob_inferred_bit: Option<Bit>,
    pub dphi_used: RelativePhase,
}

/// A sequence of key bits, serialized as a `0`/`1` string.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct BitString(pub Vec<Bit>);

impl BitString {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[Bit] {
        &self.0
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{}", b.as_char())?;
        }
        Ok(())
    }
}

impl From<BitString> for String {
    fn from(bits: BitString) -> String {
        bits.to_string()
    }
}

impl TryFrom<String> for BitString {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(Bit::Zero),
                '1' => Ok(Bit::One),
                other => Err(format!("invalid bit character `{other}`")),
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(BitString)
    }
}

impl FromIterator<Bit> for BitString {
    fn from_iter<I: IntoIterator<Item = Bit>>(iter: I) -> Self {
        BitString(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SessionResult {
    pub alice_key: BitString,
    pub bob_key: BitString,
    pub rounds: Vec<(PMRecord, GVRecord)>,
    /// Mismatch fraction of the sifted keys; `None` when nothing was kept.
    pub qber: Option<f64>,
    pub sifted_count: usize,
    pub raw_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eve_records: Vec<EveRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_digest: Option<String>,
}

impl SessionResult {
    /// Whether sifting keeps a round: all four detections valid.
    pub fn round_kept(pm: &PMRecord, gv: &GVRecord) -> bool {
        pm.alice_detection_valid
            && pm.bob_detection_valid
            && gv.alice_detection_valid
            && gv.verdict != Verdict::Invalid
    }

    pub fn kept_round_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.rounds
            .iter()
            .filter(|(pm, gv)| Self::round_kept(pm, gv))
            .map(|(pm, _)| pm.round_id)
    }

    pub fn sifted_fraction(&self) -> f64 {
        if self.raw_count == 0 {
            0.0
        } else {
            self.sifted_count as f64 / self.raw_count as f64
        }
    }
}

/// Drops every round with an invalid detection and assembles both keys.
pub fn sift(rounds: Vec<(PMRecord, GVRecord)>) -> Result<SessionResult> {
    let mut alice_key = Vec::new();
    let mut bob_key = Vec::new();
    let mut prev: Option<u64> = None;
    for (pm, gv) in &rounds {
        if pm.round_id != gv.round_id {
            return Err(Error::Protocol(format!(
                "prepare-measure round {} paired with guess-verify round {}",
                pm.round_id, gv.round_id
            )));
        }
        if prev.is_some_and(|p| pm.round_id <= p) {
            return Err(Error::Protocol(format!(
                "round ids not strictly increasing at {}",
                pm.round_id
            )));
        }
        prev = Some(pm.round_id);
        if pm.group_announced != pm.bob_choice.group() {
            return Err(Error::Protocol(format!(
                "round {}: announced {} but Bob chose {}",
                pm.round_id, pm.group_announced, pm.bob_choice
            )));
        }
        if gv.alice_guess.group() != pm.group_announced {
            return Err(Error::Protocol(format!(
                "round {}: guess {} outside announced group {}",
                pm.round_id, gv.alice_guess, pm.group_announced
            )));
        }
        if !SessionResult::round_kept(pm, gv) {
            continue;
        }
        match (gv.alice_key_bit, gv.bob_inferred_bit) {
            (Some(a), Some(b)) => {
                alice_key.push(a);
                bob_key.push(b);
            }
            _ => {
                return Err(Error::Protocol(format!(
                    "round {} marked valid without both key bits",
                    pm.round_id
                )))
            }
        }
    }
    let sifted_count = alice_key.len();
    let qber = (sifted_count > 0).then(|| {
        let errors = alice_key.iter().zip(&bob_key).filter(|(a, b)| a != b).count();
        errors as f64 / sifted_count as f64
    });
    Ok(SessionResult {
        alice_key: BitString(alice_key),
        bob_key: BitString(bob_key),
        raw_count: rounds.len(),
        rounds,
        qber,
        sifted_count,
        eve_records: Vec::new(),
        transcript_digest: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use CorrelationId::*;

    fn bits(s: &str) -> Vec<Bit> {
        BitString::try_from(s.to_string()).unwrap().0
    }

    #[test]
    fn pm_table() {
        assert_eq!(pm_measure(C1), Bit::Zero);
        assert_eq!(pm_measure(C2), Bit::One);
        let seq: Vec<Bit> = [C3, C1, C4, C2].into_iter().map(pm_measure).collect();
        assert_eq!(seq, bits("0011"));
    }

    #[test]
    fn alice_key_bits() {
        assert_eq!(gv_alice_key_bit(C1), Bit::Zero);
        assert_eq!(gv_alice_key_bit(C2), Bit::One);
        let seq: Vec<Bit> = [C4, C1, C3, C2].into_iter().map(gv_alice_key_bit).collect();
        assert_eq!(seq, bits("1001"));
    }

    #[test]
    fn guesses_stay_in_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let mut c1 = 0;
        for _ in 0..n {
            let g = gv_guess(Group::Psi, &mut rng);
            assert!(matches!(g, C1 | C2));
            c1 += usize::from(g == C1);
            assert!(matches!(gv_guess(Group::Phi, &mut rng), C3 | C4));
        }
        let f = c1 as f64 / n as f64;
        assert!((f - 0.5).abs() <= 0.02, "{f}");
    }

    #[test]
    fn verify_examples() {
        assert_eq!(gv_verify(C1, C1).unwrap(), (Verdict::Yes, Bit::Zero));
        assert_eq!(gv_verify(C1, C2).unwrap(), (Verdict::No, Bit::One));
        assert!(matches!(gv_verify(C1, C3), Err(Error::Protocol(_))));
    }

    fn pm(id: u64, choice: CorrelationId, a_ok: bool, b_ok: bool) -> PMRecord {
        PMRecord {
            round_id: id,
            alice_bit: a_ok.then_some(Bit::One),
            bob_choice: choice,
            bob_bit: b_ok.then(|| pm_measure(choice)),
            group_announced: choice.group(),
            alice_detection_valid: a_ok,
            bob_detection_valid: b_ok,
        }
    }

    fn gv(id: u64, actual: CorrelationId, guess: CorrelationId, bob_ok: bool) -> GVRecord {
        let (verdict, bit) = gv_verify(actual, guess).unwrap();
        GVRecord {
            round_id: id,
            alice_guess: guess,
            alice_key_bit: Some(gv_alice_key_bit(guess)),
            alice_detection_valid: true,
            verdict: if bob_ok { verdict } else { Verdict::Invalid },
            bob_inferred_bit: bob_ok.then_some(bit),
            dphi_used: RelativePhase::for_guess(guess),
        }
    }

    #[test]
    fn sift_drops_invalid_rounds() {
        let choices = [C3, C1, C4, C2];
        let guesses = [C4, C1, C3, C2];
        let valid = [true, false, true, true];
        let rounds = (0..4)
            .map(|i| {
                (
                    pm(i as u64, choices[i], true, true),
                    gv(i as u64, choices[i], guesses[i], valid[i]),
                )
            })
            .collect();
        let res = sift(rounds).unwrap();
        assert_eq!(res.sifted_count, 3);
        assert_eq!(res.raw_count, 4);
        assert_eq!(res.alice_key.to_string(), "101");
        assert_eq!(res.alice_key, res.bob_key);
        assert_eq!(res.qber, Some(0.0));
    }

    #[test]
    fn sift_empty() {
        let res = sift(Vec::new()).unwrap();
        assert!(res.alice_key.is_empty() && res.bob_key.is_empty());
        assert_eq!(res.qber, None);
        assert_eq!(res.sifted_count, 0);
    }

    #[test]
    fn sift_rejects_mispaired_rounds() {
        let rounds = vec![(pm(0, C1, true, true), gv(1, C1, C1, true))];
        assert!(matches!(sift(rounds), Err(Error::Protocol(_))));
        let rounds = vec![(pm(0, C1, true, true), gv(0, C1, C1, true)), (pm(0, C2, true, true), gv(0, C2, C2, true))];
        assert!(matches!(sift(rounds), Err(Error::Protocol(_))));
    }

    #[test]
    fn sift_rejects_cross_group_guess() {
        let mut g = gv(0, C1, C1, true);
        g.alice_guess = C4;
        assert!(matches!(sift(vec![(pm(0, C1, true, true), g)]), Err(Error::Protocol(_))));
    }

    #[test]
    fn bitstring_serde() {
        let b = BitString(bits("0110"));
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(json, "\"0110\"");
        assert_eq!(serde_json::from_str::<BitString>(&json).unwrap(), b);
        assert!(serde_json::from_str::<BitString>("\"012\"").is_err());
    }

    fn arb_corr() -> impl Strategy<Value = CorrelationId> {
        prop::sample::select(CorrelationId::ALL.to_vec())
    }

    fn arb_round() -> impl Strategy<Value = (CorrelationId, bool, bool, bool, bool)> {
        (arb_corr(), any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>())
    }

    proptest! {
        /// Appending an invalid round never changes the key produced so far.
        #[test]
        fn sifting_is_monotone(rounds in prop::collection::vec(arb_round(), 0..40), invalid_at in 0usize..41, bad in arb_corr()) {
            let build = |spec: &[(CorrelationId, bool, bool, bool, bool)]| -> Vec<(PMRecord, GVRecord)> {
                spec.iter().enumerate().map(|(i, &(c, guess_partner, a, b, v))| {
                    let guess = if guess_partner { c.partner() } else { c };
                    (pm(i as u64, c, a, b), gv(i as u64, c, guess, v))
                }).collect()
            };
            let base = sift(build(&rounds)).unwrap();
            let mut spec = rounds.clone();
            let at = invalid_at.min(spec.len());
            spec.insert(at, (bad, false, false, true, true));
            let extended = sift(build(&spec)).unwrap();
            prop_assert_eq!(base.alice_key, extended.alice_key);
            prop_assert_eq!(base.bob_key, extended.bob_key);
        }
    }
}
