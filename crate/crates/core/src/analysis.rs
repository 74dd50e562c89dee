//! Key-rate arithmetic and session statistics.
//!
//! Rates scale with `pulse_rate_hz`, read as the protocol round clock. The
//! post-processing factor is a fixed ratio standing in for error correction
//! and privacy amplification, not a QBER-dependent bound.

use serde::{Deserialize, Serialize};

use crate::adversary::LeakageSummary;
use crate::physics::{ChannelModel, ChannelPlacement, DetectorModel, SourceModel};
use crate::protocol::SessionResult;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateInputs {
    pub pulse_rate_hz: f64,
    pub success_prob: f64,
    pub total_detection_efficiency: f64,
    pub post_processing_factor: f64,
}

impl Default for RateInputs {
    fn default() -> Self {
        RateInputs {
            pulse_rate_hz: 1e9,
            success_prob: 0.01,
            total_detection_efficiency: 0.01,
            post_processing_factor: 0.25,
        }
    }
}

impl RateInputs {
    pub fn validate(&self, path: &str) -> Result<()> {
        let field = |name: &str| {
            if path.is_empty() {
                name.to_string()
            } else {
                format!("{path}.{name}")
            }
        };
        if !(self.pulse_rate_hz.is_finite() && self.pulse_rate_hz > 0.0) {
            return Err(Error::config(
                field("pulse_rate_hz"),
                format!("must be finite and > 0, got {}", self.pulse_rate_hz),
            ));
        }
        for (name, v) in [
            ("success_prob", self.success_prob),
            ("total_detection_efficiency", self.total_detection_efficiency),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(field(name), format!("must be in [0, 1], got {v}")));
            }
        }
        if !(self.post_processing_factor > 0.0 && self.post_processing_factor <= 1.0) {
            return Err(Error::config(
                field("post_processing_factor"),
                format!("must be in (0, 1], got {}", self.post_processing_factor),
            ));
        }
        Ok(())
    }
}

/// `success_prob * pulse_rate_hz * total_detection_efficiency`.
pub fn raw_key_rate(inputs: &RateInputs) -> f64 {
    inputs.success_prob * inputs.pulse_rate_hz * inputs.total_detection_efficiency
}

pub fn secret_key_rate(raw: f64, factor: f64) -> Result<f64> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::Domain(format!(
            "post-processing factor must be in (0, 1], got {factor}"
        )));
    }
    Ok(raw * factor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub raw_bits_per_s: f64,
    pub secret_bits_per_s: f64,
    pub sifted_fraction: f64,
    pub qber: Option<f64>,
    pub leakage_fraction: f64,
}

/// Formula-only report from rate inputs.
pub fn rate_report(inputs: &RateInputs) -> Result<RateReport> {
    inputs.validate("")?;
    let raw = raw_key_rate(inputs);
    Ok(RateReport {
        raw_bits_per_s: raw,
        secret_bits_per_s: secret_key_rate(raw, inputs.post_processing_factor)?,
        sifted_fraction: inputs.success_prob * inputs.total_detection_efficiency,
        qber: None,
        leakage_fraction: 0.0,
    })
}

/// Empirical rates of a finished session, one round per clock tick.
pub fn session_statistics(
    result: &SessionResult,
    leakage: &LeakageSummary,
    inputs: &RateInputs,
) -> RateReport {
    let sifted_fraction = result.sifted_fraction();
    let raw = sifted_fraction * inputs.pulse_rate_hz;
    RateReport {
        raw_bits_per_s: raw,
        secret_bits_per_s: raw * inputs.post_processing_factor,
        sifted_fraction,
        qber: result.qber,
        leakage_fraction: leakage.leaked_fraction,
    }
}

/// Probability that one pulse slot gives a valid herald on Alice's side and
/// a single click on Bob's, for noise-free sources and dark-count-free
/// detectors (`None` otherwise). At the optimal settings every detected
/// photon lands in the same port, so a slot is valid exactly when each side
/// detects at least one photon.
pub fn pulse_validity_probability(
    source: &SourceModel,
    channel: &ChannelModel,
    alice: &DetectorModel,
    bob: &DetectorModel,
) -> Option<f64> {
    if alice.dark_count_prob > 0.0 || bob.dark_count_prob > 0.0 {
        return None;
    }
    let t = channel.transmittance();
    let eta_a = alice.efficiency
        * match channel.placement {
            ChannelPlacement::AncillaLocal => 1.0,
            ChannelPlacement::BothArms => t,
        };
    let eta_b = bob.efficiency * t;
    match *source {
        SourceModel::AttenuatedLaser { n_a, n_s } => {
            Some(-(-n_a * eta_a).exp_m1() * -(-n_s * eta_b).exp_m1())
        }
        SourceModel::CorrelatedPair {
            n_pr,
            noise_per_pulse,
        } => (noise_per_pulse == 0.0).then_some(n_pr * eta_a * eta_b),
        SourceModel::DeterministicPair => Some(eta_a * eta_b),
    }
}

/// A round needs two valid pulse slots.
pub fn expected_sifted_fraction(
    source: &SourceModel,
    channel: &ChannelModel,
    alice: &DetectorModel,
    bob: &DetectorModel,
) -> Option<f64> {
    pulse_validity_probability(source, channel, alice, bob).map(|p| p * p)
}
