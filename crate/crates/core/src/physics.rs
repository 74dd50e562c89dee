//! Photon sources, lossy channels and threshold detectors.
//!
//! Pulse slots are discrete. A coincidence means two clicks in the same slot;
//! there is no timing jitter, dead time or afterpulsing.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default fiber attenuation for standard telecom fiber.
pub const DEFAULT_LOSS_DB_PER_KM: f64 = 0.2;

/// Where the photon source sits relative to the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelPlacement {
    /// The ancilla stays with Alice; only the signal crosses the channel.
    #[default]
    AncillaLocal,
    /// Both photons cross an identical channel (source between the parties).
    BothArms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceModel {
    /// Two independently attenuated beams from one phase-locked laser.
    AttenuatedLaser { n_a: f64, n_s: f64 },
    /// Heralded pair source with uncorrelated noise on the signal arm.
    CorrelatedPair { n_pr: f64, noise_per_pulse: f64 },
    /// Two synchronized single-photon sources: one photon per arm per pulse.
    DeterministicPair,
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::config(
                    format!("source.{name}"),
                    format!("must be in (0, 1], got {v}"),
                ))
            }
        };
        match *self {
            SourceModel::AttenuatedLaser { n_a, n_s } => {
                unit("n_a", n_a)?;
                unit("n_s", n_s)
            }
            SourceModel::CorrelatedPair {
                n_pr,
                noise_per_pulse,
            } => {
                unit("n_pr", n_pr)?;
                if noise_per_pulse.is_finite() && noise_per_pulse >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::config(
                        "source.noise_per_pulse",
                        format!("must be finite and >= 0, got {noise_per_pulse}"),
                    ))
                }
            }
            SourceModel::DeterministicPair => Ok(()),
        }
    }
}

/// Photon numbers emitted into the two arms in one pulse slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PulseOutcome {
    pub n_ancilla: u64,
    /// Photons carrying the phase-locked signal state.
    pub n_signal: u64,
    /// Uncorrelated photons on the signal arm.
    pub n_noise: u64,
    /// A correlated pair (or a phase-locked laser pulse) produced this slot.
    pub correlated: bool,
}

impl PulseOutcome {
    pub fn signal_arm_total(&self) -> u64 {
        self.n_signal + self.n_noise
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // Means are validated to be small and finite, so construction cannot fail.
    let dist = Poisson::new(mean).expect("finite positive Poisson mean");
    dist.sample(rng) as u64
}

pub fn sample_pulse<R: Rng + ?Sized>(source: &SourceModel, rng: &mut R) -> PulseOutcome {
    match *source {
        SourceModel::AttenuatedLaser { n_a, n_s } => {
            let n_ancilla = poisson(n_a, rng);
            let n_signal = poisson(n_s, rng);
            PulseOutcome {
                n_ancilla,
                n_signal,
                n_noise: 0,
                correlated: n_ancilla > 0 && n_signal > 0,
            }
        }
        SourceModel::CorrelatedPair {
            n_pr,
            noise_per_pulse,
        } => {
            let pair = rng.random::<f64>() < n_pr;
            let n_noise = poisson(noise_per_pulse, rng);
            PulseOutcome {
                n_ancilla: u64::from(pair),
                n_signal: u64::from(pair),
                n_noise,
                correlated: pair,
            }
        }
        SourceModel::DeterministicPair => PulseOutcome {
            n_ancilla: 1,
            n_signal: 1,
            n_noise: 0,
            correlated: true,
        },
    }
}

/// Ideal-device coincidence probability per pulse as used in rate estimates:
/// `n_a * n_s`, `n_pr`, or 1.
pub fn success_probability(source: &SourceModel) -> f64 {
    match *source {
        SourceModel::AttenuatedLaser { n_a, n_s } => n_a * n_s,
        SourceModel::CorrelatedPair { n_pr, .. } => n_pr,
        SourceModel::DeterministicPair => 1.0,
    }
}

/// Exact probability that both arms carry at least one photon.
///
/// For the attenuated laser this is `(1 - e^-n_a)(1 - e^-n_s)`, which
/// [`success_probability`] approximates to first order. Noise photons are
/// not counted.
pub fn coincidence_probability(source: &SourceModel) -> f64 {
    match *source {
        SourceModel::AttenuatedLaser { n_a, n_s } => (-(-n_a).exp_m1()) * (-(-n_s).exp_m1()),
        SourceModel::CorrelatedPair { n_pr, .. } => n_pr,
        SourceModel::DeterministicPair => 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    pub length_km: f64,
    #[serde(default = "default_loss_db_per_km")]
    pub loss_db_per_km: f64,
    #[serde(default)]
    pub extra_loss_db: f64,
    #[serde(default)]
    pub placement: ChannelPlacement,
}

fn default_loss_db_per_km() -> f64 {
    DEFAULT_LOSS_DB_PER_KM
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            length_km: 0.0,
            loss_db_per_km: DEFAULT_LOSS_DB_PER_KM,
            extra_loss_db: 0.0,
            placement: ChannelPlacement::AncillaLocal,
        }
    }
}

impl ChannelModel {
    pub fn lossless() -> Self {
        ChannelModel::default()
    }

    pub fn with_loss_db(total_db: f64) -> Self {
        ChannelModel {
            extra_loss_db: total_db,
            ..ChannelModel::default()
        }
    }

    pub fn total_loss_db(&self) -> f64 {
        self.length_km * self.loss_db_per_km + self.extra_loss_db
    }

    pub fn transmittance(&self) -> f64 {
        10f64.powf(-self.total_loss_db() / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length_km", self.length_km),
            ("loss_db_per_km", self.loss_db_per_km),
            ("extra_loss_db", self.extra_loss_db),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    format!("channel.{name}"),
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

/// Binomial thinning of `n_photons` by the channel transmittance.
pub fn transmit<R: Rng + ?Sized>(n_photons: u64, channel: &ChannelModel, rng: &mut R) -> u64 {
    thin(n_photons, channel.transmittance(), rng)
}

fn thin<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p in (0, 1)").sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub efficiency: f64,
    #[serde(default)]
    pub dark_count_prob: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel::ideal()
    }
}

impl DetectorModel {
    pub const fn ideal() -> Self {
        DetectorModel {
            efficiency: 1.0,
            dark_count_prob: 0.0,
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::config(
                format!("{path}.efficiency"),
                format!("must be in (0, 1], got {}", self.efficiency),
            ));
        }
        if !(self.dark_count_prob >= 0.0 && self.dark_count_prob < 1.0) {
            return Err(Error::config(
                format!("{path}.dark_count_prob"),
                format!("must be in [0, 1), got {}", self.dark_count_prob),
            ));
        }
        Ok(())
    }
}

/// Click pattern of a `+`/`-` detector pair in one gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionOutcome {
    ClickPlus,
    ClickMinus,
    NoClick,
    DoubleClick,
}

impl DetectionOutcome {
    fn from_clicks(plus: bool, minus: bool) -> Self {
        match (plus, minus) {
            (true, false) => DetectionOutcome::ClickPlus,
            (false, true) => DetectionOutcome::ClickMinus,
            (false, false) => DetectionOutcome::NoClick,
            (true, true) => DetectionOutcome::DoubleClick,
        }
    }

    pub fn any_click(self) -> bool {
        self != DetectionOutcome::NoClick
    }

    /// The single firing port, if exactly one detector clicked.
    pub fn port(self) -> Option<crate::optics::DetectorPort> {
        match self {
            DetectionOutcome::ClickPlus => Some(crate::optics::DetectorPort::Plus),
            DetectionOutcome::ClickMinus => Some(crate::optics::DetectorPort::Minus),
            _ => None,
        }
    }
}

/// Photons arriving at a detector pair that share one `+` routing probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub photons: u64,
    pub p_plus: f64,
}

pub fn detect<R: Rng + ?Sized>(
    n_photons: u64,
    intended_port_prob: f64,
    det: &DetectorModel,
    rng: &mut R,
) -> DetectionOutcome {
    detect_mixed(
        &[Arrival {
            photons: n_photons,
            p_plus: intended_port_prob,
        }],
        det,
        rng,
    )
}

/// Routes each photon by its arrival's `p_plus`, then applies efficiency
/// and an independent dark count on each port.
pub fn detect_mixed<R: Rng + ?Sized>(
    arrivals: &[Arrival],
    det: &DetectorModel,
    rng: &mut R,
) -> DetectionOutcome {
    let mut plus = false;
    let mut minus = false;
    for arrival in arrivals {
        for _ in 0..arrival.photons {
            let to_plus = rng.random::<f64>() < arrival.p_plus;
            let detected = rng.random::<f64>() < det.efficiency;
            if detected {
                if to_plus {
                    plus = true;
                } else {
                    minus = true;
                }
            }
        }
    }
    if det.dark_count_prob > 0.0 {
        plus |= rng.random::<f64>() < det.dark_count_prob;
        minus |= rng.random::<f64>() < det.dark_count_prob;
    }
    DetectionOutcome::from_clicks(plus, minus)
}

/// Coincidence-to-accidental ratio. A zero accidental rate gives
/// `f64::INFINITY`.
pub fn compute_car(true_coinc_rate: f64, accidental_rate: f64) -> f64 {
    if accidental_rate == 0.0 {
        f64::INFINITY
    } else {
        true_coinc_rate / accidental_rate
    }
}

/// Closed-form CAR of a [`SourceModel::CorrelatedPair`] measured directly at
/// the source with dark-count-free detectors of the given efficiencies.
/// Accidentals are ancilla/signal coincidences between adjacent slots.
pub fn car_analytic(n_pr: f64, noise_per_pulse: f64, eta_ancilla: f64, eta_signal: f64) -> f64 {
    let noise_silent = (-noise_per_pulse * eta_signal).exp();
    let signal_given_pair = 1.0 - (1.0 - eta_signal) * noise_silent;
    let signal_any = 1.0 - noise_silent * (1.0 - n_pr * eta_signal);
    // The ancilla efficiency scales coincidences and accidentals alike.
    let _ = eta_ancilla;
    compute_car(signal_given_pair, signal_any)
}

/// Noise level that gives `target_car` for an ideal-detector measurement.
///
/// The ratio can never exceed `1 / n_pr`; asking for more is an error.
pub fn calibrate_noise(n_pr: f64, target_car: f64) -> Result<f64> {
    if !(n_pr > 0.0 && n_pr <= 1.0) {
        return Err(Error::Domain(format!("n_pr must be in (0, 1], got {n_pr}")));
    }
    let ceiling = 1.0 / n_pr;
    if !(target_car > 1.0 && target_car <= ceiling * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!(
            "target CAR {target_car} unreachable; must be in (1, {ceiling}] for n_pr = {n_pr}"
        )));
    }
    let ratio = (1.0 - 1.0 / target_car) / (1.0 - n_pr);
    Ok((-ratio.ln()).max(0.0))
}

/// Counts from a source-level CAR measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CarCounts {
    pub pulses: u64,
    /// Same-slot coincidences whose slot carried a correlated pair.
    pub true_coincidences: u64,
    /// Same-slot coincidences without a pair (noise or dark counts only).
    pub uncorrelated_coincidences: u64,
    /// Ancilla click in slot `i`, signal click in slot `i + 1`.
    pub accidentals: u64,
}

impl CarCounts {
    pub fn car(&self) -> f64 {
        compute_car(
            (self.true_coincidences + self.uncorrelated_coincidences) as f64,
            self.accidentals as f64,
        )
    }
}

/// Monte-Carlo CAR measurement with both arms sent straight to detectors.
pub fn simulate_car<R: Rng + ?Sized>(
    source: &SourceModel,
    ancilla_det: &DetectorModel,
    signal_det: &DetectorModel,
    n_pulses: u64,
    rng: &mut R,
) -> CarCounts {
    let mut counts = CarCounts {
        pulses: n_pulses,
        ..CarCounts::default()
    };
    let mut prev_ancilla_click = false;
    for _ in 0..n_pulses {
        let pulse = sample_pulse(source, rng);
        let a = detect(pulse.n_ancilla, 0.5, ancilla_det, rng).any_click();
        let s = detect(pulse.signal_arm_total(), 0.5, signal_det, rng).any_click();
        if a && s {
            if pulse.correlated {
                counts.true_coincidences += 1;
            } else {
                counts.uncorrelated_coincidences += 1;
            }
        }
        if prev_ancilla_click && s {
            counts.accidentals += 1;
        }
        prev_ancilla_click = a;
    }
    counts
}
