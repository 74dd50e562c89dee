//! Bi-partite correlation functions and the single-shot interference model.
//!
//! Each party sees an interference term of the form
//! `overall_sign * cos(2 theta + phase_sign * dphi)` where `theta` is the
//! half-wave-plate projection angle and `dphi` the locked relative phase
//! between the horizontal and vertical coherent components. A term of `+1`
//! fires the `+` detector, `-1` fires the `-` detector.
//!
//! Away from the optimal settings the outcome of a single shot is not
//! deterministic. We model it as a Bernoulli draw with `P(+) = (1 + term)/2`,
//! the smallest extension that reproduces the deterministic behaviour at
//! the `+-45` degree settings.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance used for trigonometric identities that hold exactly in closed form.
pub const TRIG_TOLERANCE: f64 = 1e-12;

/// An angle in degrees, normalized to `[-180, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct Angle(f64);

impl Angle {
    pub fn degrees(value: f64) -> Self {
        Angle((value + 180.0).rem_euclid(360.0) - 180.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }
}

impl From<f64> for Angle {
    fn from(value: f64) -> Self {
        Angle::degrees(value)
    }
}

impl From<Angle> for f64 {
    fn from(angle: Angle) -> Self {
        angle.0
    }
}

impl std::ops::Add for Angle {
    type Output = Angle;
    fn add(self, rhs: Angle) -> Angle {
        Angle::degrees(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Angle {
    type Output = Angle;
    fn sub(self, rhs: Angle) -> Angle {
        Angle::degrees(self.0 - rhs.0)
    }
}

impl std::ops::Neg for Angle {
    type Output = Angle;
    fn neg(self) -> Angle {
        Angle::degrees(-self.0)
    }
}

/// Relative phase `phi_beta - phi_alpha` in degrees.
///
/// Protocol rounds only ever use [`RelativePhase::LOCKED`] or
/// [`RelativePhase::SHIFTED`]; arbitrary values exist for phase averaging.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelativePhase(f64);

impl RelativePhase {
    /// The phase-locked operating point.
    pub const LOCKED: RelativePhase = RelativePhase(-90.0);
    /// The shifted lock Alice uses when she guesses C2 or C3.
    pub const SHIFTED: RelativePhase = RelativePhase(90.0);

    pub const fn degrees(value: f64) -> Self {
        RelativePhase(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The lock Alice applies when preparing the guess-verify photon.
    pub fn for_guess(guess: CorrelationId) -> Self {
        match guess {
            CorrelationId::C1 | CorrelationId::C4 => Self::LOCKED,
            CorrelationId::C2 | CorrelationId::C3 => Self::SHIFTED,
        }
    }

    pub fn reversed(self) -> Self {
        RelativePhase(-self.0)
    }

    /// True for the two values a protocol round may carry.
    pub fn is_protocol_value(self) -> bool {
        self == Self::LOCKED || self == Self::SHIFTED
    }
}

/// Public partition of the four correlation functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    /// {C1, C2}
    #[serde(rename = "PSI")]
    Psi,
    /// {C3, C4}
    #[serde(rename = "PHI")]
    Phi,
}

impl Group {
    pub fn members(self) -> [CorrelationId; 2] {
        match self {
            Group::Psi => [CorrelationId::C1, CorrelationId::C2],
            Group::Phi => [CorrelationId::C3, CorrelationId::C4],
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Group::Psi => "PSI",
            Group::Phi => "PHI",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.symbol())
    }
}

impl FromStr for Group {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PSI" => Ok(Group::Psi),
            "PHI" => Ok(Group::Phi),
            other => Err(Error::Domain(format!("unknown group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CorrelationId {
    C1,
    C2,
    C3,
    C4,
}

impl CorrelationId {
    pub const ALL: [CorrelationId; 4] = [
        CorrelationId::C1,
        CorrelationId::C2,
        CorrelationId::C3,
        CorrelationId::C4,
    ];

    pub fn group(self) -> Group {
        match self {
            CorrelationId::C1 | CorrelationId::C2 => Group::Psi,
            CorrelationId::C3 | CorrelationId::C4 => Group::Phi,
        }
    }

    /// The other member of this correlation's group.
    pub fn partner(self) -> CorrelationId {
        match self {
            CorrelationId::C1 => CorrelationId::C2,
            CorrelationId::C2 => CorrelationId::C1,
            CorrelationId::C3 => CorrelationId::C4,
            CorrelationId::C4 => CorrelationId::C3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CorrelationId::C1 => "C1",
            CorrelationId::C2 => "C2",
            CorrelationId::C3 => "C3",
            CorrelationId::C4 => "C4",
        }
    }
}

impl fmt::Display for CorrelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for CorrelationId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C1" => Ok(CorrelationId::C1),
            "C2" => Ok(CorrelationId::C2),
            "C3" => Ok(CorrelationId::C3),
            "C4" => Ok(CorrelationId::C4),
            _ => Err(Error::Domain(format!("unknown correlation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Sign conventions of one party's interference term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InterferenceSpec {
    pub party: Party,
    pub overall_sign: Sign,
    pub phase_sign: Sign,
}

impl InterferenceSpec {
    /// Alice's ancilla term, the same for every correlation function.
    pub const fn alice() -> Self {
        InterferenceSpec {
            party: Party::Alice,
            overall_sign: Sign::Plus,
            phase_sign: Sign::Plus,
        }
    }

    /// Bob's prepare-measure term for `corr`.
    pub const fn bob(corr: CorrelationId) -> Self {
        let (overall_sign, phase_sign) = match corr {
            CorrelationId::C1 => (Sign::Minus, Sign::Plus),
            CorrelationId::C2 => (Sign::Plus, Sign::Minus),
            CorrelationId::C3 => (Sign::Minus, Sign::Minus),
            CorrelationId::C4 => (Sign::Plus, Sign::Plus),
        };
        InterferenceSpec {
            party: Party::Bob,
            overall_sign,
            phase_sign,
        }
    }

    /// Bob's guess-verify term. In that part Bob uses the quarter-wave plate
    /// Alice used before, so his term takes Alice's conventions.
    pub const fn bob_verify() -> Self {
        InterferenceSpec {
            party: Party::Bob,
            overall_sign: Sign::Plus,
            phase_sign: Sign::Plus,
        }
    }
}

/// Which output port of a polarizing beam splitter a photon left through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorPort {
    Plus,
    Minus,
}

impl DetectorPort {
    pub fn bit(self) -> Bit {
        match self {
            DetectorPort::Plus => Bit::One,
            DetectorPort::Minus => Bit::Zero,
        }
    }

    /// The port a deterministic term (`+-1`) selects. `None` for anything else.
    pub fn from_term(term: f64) -> Option<DetectorPort> {
        if (term - 1.0).abs() <= TRIG_TOLERANCE {
            Some(DetectorPort::Plus)
        } else if (term + 1.0).abs() <= TRIG_TOLERANCE {
            Some(DetectorPort::Minus)
        } else {
            None
        }
    }
}

/// A classical key bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn as_char(self) -> char {
        match self {
            Bit::Zero => '0',
            Bit::One => '1',
        }
    }
}

impl From<Bit> for u8 {
    fn from(bit: Bit) -> u8 {
        match bit {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }
}

impl TryFrom<u8> for Bit {
    type Error = String;
    fn try_from(value: u8) -> std::result::Result<Self, String> {
        match value {
            0 => Ok(Bit::Zero),
            1 => Ok(Bit::One),
            other => Err(format!("bit must be 0 or 1, got {other}")),
        }
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_char().encode_utf8(&mut [0; 4]))
    }
}

fn cos_deg(deg: f64) -> f64 {
    deg.to_radians().cos()
}

/// `overall_sign * cos(2 theta + phase_sign * dphi)`.
pub fn interference_term(spec: InterferenceSpec, theta: Angle, dphi: RelativePhase) -> f64 {
    let arg = 2.0 * theta.value() + spec.phase_sign.value() * dphi.value();
    spec.overall_sign.value() * cos_deg(arg)
}

/// Probability that the `+` detector receives the photon.
pub fn detection_prob_plus(term: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&term) {
        return Err(Error::Domain(format!(
            "interference term {term} outside [-1, 1]"
        )));
    }
    Ok((1.0 + term) / 2.0)
}

/// Closed form of the correlation function at projection angles
/// `theta1` (Alice) and `theta2` (Bob).
pub fn analytic_correlation(corr: CorrelationId, theta1: Angle, theta2: Angle) -> f64 {
    let (t1, t2) = (theta1.value(), theta2.value());
    match corr {
        CorrelationId::C1 => -cos_deg(2.0 * (t1 - t2)),
        CorrelationId::C2 => cos_deg(2.0 * (t1 + t2)),
        CorrelationId::C3 => -cos_deg(2.0 * (t1 + t2)),
        CorrelationId::C4 => cos_deg(2.0 * (t1 - t2)),
    }
}

/// Projection angles giving maximal (anti-)correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalSettings {
    pub theta1: Angle,
    pub theta2: Angle,
    pub expected: f64,
}

pub fn optimal_settings(corr: CorrelationId) -> OptimalSettings {
    let (theta2, expected) = match corr {
        CorrelationId::C1 => (45.0, -1.0),
        CorrelationId::C2 => (-45.0, 1.0),
        CorrelationId::C3 => (-45.0, -1.0),
        CorrelationId::C4 => (45.0, 1.0),
    };
    OptimalSettings {
        theta1: Angle::degrees(45.0),
        theta2: Angle::degrees(theta2),
        expected,
    }
}

/// Monte-Carlo estimate of the correlation by averaging the product of the
/// two interference terms over a uniformly random common phase.
///
/// Averaging `cos(x + phi) cos(y + phi)` over `phi` gives `cos(x - y) / 2`,
/// so the mean product is doubled to land on the closed form.
pub fn estimate_correlation(
    corr: CorrelationId,
    theta1: Angle,
    theta2: Angle,
    n_samples: u64,
    rng_seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    estimate_correlation_with(corr, theta1, theta2, n_samples, &mut rng)
}

pub fn estimate_correlation_with<R: Rng + ?Sized>(
    corr: CorrelationId,
    theta1: Angle,
    theta2: Angle,
    n_samples: u64,
    rng: &mut R,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be at least 1".into()));
    }
    let alice = InterferenceSpec::alice();
    let bob = InterferenceSpec::bob(corr);
    let mut sum = 0.0;
    for _ in 0..n_samples {
        let phi = RelativePhase::degrees(rng.random::<f64>() * 360.0);
        sum += interference_term(alice, theta1, phi) * interference_term(bob, theta2, phi);
    }
    Ok(2.0 * sum / n_samples as f64)
}

/// Deterministic port at an optimal setting, or a Bernoulli draw otherwise.
pub fn sample_port<R: Rng + ?Sized>(term: f64, rng: &mut R) -> Result<DetectorPort> {
    let p_plus = detection_prob_plus(term)?;
    Ok(if rng.random::<f64>() < p_plus {
        DetectorPort::Plus
    } else {
        DetectorPort::Minus
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn a(d: f64) -> Angle {
        Angle::degrees(d)
    }

    #[test]
    fn angle_normalization() {
        assert_eq!(a(180.0).value(), -180.0);
        assert_eq!(a(-180.0).value(), -180.0);
        assert_eq!(a(225.0).value(), -135.0);
        assert_eq!(a(-45.0).value(), -45.0);
        assert_eq!((a(170.0) + a(20.0)).value(), -170.0);
        assert_eq!((a(-170.0) - a(20.0)).value(), 170.0);
    }

    #[test]
    fn interference_examples() {
        let t = interference_term(InterferenceSpec::alice(), a(45.0), RelativePhase::LOCKED);
        assert!((t - 1.0).abs() < TRIG_TOLERANCE);
        let t = interference_term(
            InterferenceSpec::bob(CorrelationId::C1),
            a(45.0),
            RelativePhase::LOCKED,
        );
        assert!((t + 1.0).abs() < TRIG_TOLERANCE);
        for corr in CorrelationId::ALL {
            for spec in [InterferenceSpec::alice(), InterferenceSpec::bob(corr)] {
                let t = interference_term(spec, a(0.0), RelativePhase::SHIFTED);
                assert!(t.abs() < TRIG_TOLERANCE);
            }
        }
    }

    #[test]
    fn detection_probability() {
        assert_eq!(detection_prob_plus(1.0).unwrap(), 1.0);
        assert_eq!(detection_prob_plus(-1.0).unwrap(), 0.0);
        assert_eq!(detection_prob_plus(0.0).unwrap(), 0.5);
        assert!(matches!(detection_prob_plus(1.0001), Err(Error::Domain(_))));
        assert!(matches!(detection_prob_plus(-2.0), Err(Error::Domain(_))));
        assert!(detection_prob_plus(f64::NAN).is_err());
    }

    #[test]
    fn analytic_examples() {
        let close = |x: f64, y: f64| (x - y).abs() < TRIG_TOLERANCE;
        assert!(close(analytic_correlation(CorrelationId::C1, a(45.0), a(45.0)), -1.0));
        assert!(close(analytic_correlation(CorrelationId::C2, a(45.0), a(-45.0)), 1.0));
        assert!(close(analytic_correlation(CorrelationId::C4, a(0.0), a(0.0)), 1.0));
    }

    #[test]
    fn optimal_settings_table() {
        let s = optimal_settings(CorrelationId::C1);
        assert_eq!((s.theta1.value(), s.theta2.value(), s.expected), (45.0, 45.0, -1.0));
        let s = optimal_settings(CorrelationId::C3);
        assert_eq!((s.theta1.value(), s.theta2.value(), s.expected), (45.0, -45.0, -1.0));
        for corr in CorrelationId::ALL {
            let s = optimal_settings(corr);
            let c = analytic_correlation(corr, s.theta1, s.theta2);
            assert!((c - s.expected).abs() < TRIG_TOLERANCE, "{corr}");
            let alice = interference_term(InterferenceSpec::alice(), s.theta1, RelativePhase::LOCKED);
            assert!((alice - 1.0).abs() < TRIG_TOLERANCE, "{corr}");
            // Product of the two single-shot terms reproduces the correlation sign.
            let bob = interference_term(InterferenceSpec::bob(corr), s.theta2, RelativePhase::LOCKED);
            assert!((alice * bob - s.expected).abs() < TRIG_TOLERANCE, "{corr}");
        }
    }

    #[test]
    fn estimator_examples() {
        let c1 = estimate_correlation(CorrelationId::C1, a(45.0), a(45.0), 100_000, 3).unwrap();
        assert!((c1 + 1.0).abs() <= 0.02, "{c1}");
        let c2 = estimate_correlation(CorrelationId::C2, a(30.0), a(10.0), 100_000, 3).unwrap();
        assert!((c2 - 0.173_648_177_666_930_4).abs() <= 0.02, "{c2}");
        let c4 = estimate_correlation(CorrelationId::C4, a(0.0), a(90.0), 100_000, 3).unwrap();
        assert!((c4 + 1.0).abs() <= 0.02, "{c4}");
        assert!(estimate_correlation(CorrelationId::C4, a(0.0), a(0.0), 0, 3).is_err());
    }

    #[test]
    fn estimator_is_deterministic_per_seed() {
        let x = estimate_correlation(CorrelationId::C3, a(10.0), a(20.0), 1000, 11).unwrap();
        let y = estimate_correlation(CorrelationId::C3, a(10.0), a(20.0), 1000, 11).unwrap();
        assert_eq!(x, y);
    }

    /// Independent check of the factor-two normalization: a uniform
    /// quadrature of cos(x + phi) cos(y + phi) over one period is exact for
    /// trigonometric polynomials of this degree.
    #[test]
    fn phase_average_of_cosine_product_is_half_cos_difference() {
        let n = 64;
        for &(x, y) in &[(0.7, -0.3), (2.0, 2.0), (-1.1, 0.4)] {
            let mean: f64 = (0..n)
                .map(|k| {
                    let phi = 2.0 * PI * k as f64 / n as f64;
                    (x + phi).cos() * (y + phi).cos()
                })
                .sum::<f64>()
                / n as f64;
            assert!((mean - 0.5 * (x - y).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_error_bound_holds_for_most_seeds() {
        // 5/sqrt(N) is far outside the standard error of the estimator
        // (at most sqrt(2)/sqrt(N)), so every seed should pass at N = 1e4.
        let n = 10_000u64;
        let bound = 5.0 / (n as f64).sqrt();
        let mut failures = 0;
        for seed in 0..100 {
            let corr = CorrelationId::ALL[(seed % 4) as usize];
            let (t1, t2) = (a(seed as f64 * 7.3), a(seed as f64 * -3.1));
            let est = estimate_correlation(corr, t1, t2, n, seed).unwrap();
            if (est - analytic_correlation(corr, t1, t2)).abs() > bound {
                failures += 1;
            }
        }
        assert!(failures <= 1, "{failures} of 100 seeds outside bound");
    }

    #[test]
    fn monte_carlo_error_bound_large_n() {
        let n = 1_000_000u64;
        let bound = 5.0 / (n as f64).sqrt();
        for (i, corr) in CorrelationId::ALL.into_iter().enumerate() {
            let (t1, t2) = (a(12.5 * i as f64), a(-33.0 + 9.0 * i as f64));
            let est = estimate_correlation(corr, t1, t2, n, 77 + i as u64).unwrap();
            assert!((est - analytic_correlation(corr, t1, t2)).abs() <= bound, "{corr}");
        }
    }

    proptest! {
        #[test]
        fn correlation_pairs_are_negatives(t1 in -360.0f64..360.0, t2 in -360.0f64..360.0) {
            let (t1, t2) = (a(t1), a(t2));
            let c = |k| analytic_correlation(k, t1, t2);
            prop_assert!((c(CorrelationId::C1) + c(CorrelationId::C4)).abs() < TRIG_TOLERANCE);
            prop_assert!((c(CorrelationId::C3) + c(CorrelationId::C2)).abs() < TRIG_TOLERANCE);
        }

        #[test]
        fn terms_and_probabilities_stay_in_range(theta in -720.0f64..720.0, phase in -720.0f64..720.0) {
            for corr in CorrelationId::ALL {
                for spec in [InterferenceSpec::alice(), InterferenceSpec::bob(corr), InterferenceSpec::bob_verify()] {
                    let t = interference_term(spec, a(theta), RelativePhase::degrees(phase));
                    prop_assert!(t.abs() <= 1.0);
                    let p = detection_prob_plus(t).unwrap();
                    prop_assert!((0.0..=1.0).contains(&p));
                }
            }
        }

        #[test]
        fn quarter_turn_of_both_angles_is_invisible(t1 in -180.0f64..180.0, t2 in -180.0f64..180.0) {
            for corr in CorrelationId::ALL {
                let before = analytic_correlation(corr, a(t1), a(t2));
                let after = analytic_correlation(corr, a(t1) + a(90.0), a(t2) + a(90.0));
                prop_assert!((before - after).abs() < 1e-9);
            }
        }

        #[test]
        fn angles_always_normalized(x in -1.0e6f64..1.0e6) {
            let v = a(x).value();
            prop_assert!((-180.0..180.0).contains(&v));
        }
    }
}
