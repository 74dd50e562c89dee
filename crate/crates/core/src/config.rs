//! Session configuration files.
//!
//! A configuration is a JSON object; unknown fields are rejected and every
//! error names the offending field path, for example `source.n_a`.
//!
//! ```json
//! {
//!   "n_rounds": 1000,
//!   "seed": 7,
//!   "source": { "kind": "attenuated_laser", "n_a": 0.1, "n_s": 0.1 },
//!   "channel": { "length_km": 10.0 },
//!   "detectors": { "alice": { "efficiency": 1.0 }, "bob": { "efficiency": 0.9, "dark_count_prob": 1e-6 } },
//!   "adversary": { "kind": "intercept_resend", "guess_policy": "uniform_over_four" }
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::EveStrategy;
use crate::analysis::RateInputs;
use crate::optics::CorrelationId;
use crate::physics::{calibrate_noise, ChannelModel, DetectorModel, SourceModel};
use crate::{Error, Result};

/// CAR a correlated-pair source is calibrated to when neither the noise
/// level nor a target is given.
pub const DEFAULT_TARGET_CAR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    AttenuatedLaser {
        n_a: f64,
        n_s: f64,
    },
    /// Noise is either given directly or calibrated from `target_car`.
    CorrelatedPair {
        n_pr: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise_per_pulse: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_car: Option<f64>,
    },
    #[default]
    DeterministicPair,
}

impl SourceSpec {
    pub fn model(&self) -> Result<SourceModel> {
        let model = match *self {
            SourceSpec::AttenuatedLaser { n_a, n_s } => SourceModel::AttenuatedLaser { n_a, n_s },
            SourceSpec::DeterministicPair => SourceModel::DeterministicPair,
            SourceSpec::CorrelatedPair {
                n_pr,
                noise_per_pulse,
                target_car,
            } => {
                SourceModel::CorrelatedPair {
                    n_pr,
                    noise_per_pulse: 0.0,
                }
                .validate()?;
                let noise = match (noise_per_pulse, target_car) {
                    (Some(_), Some(_)) => {
                        return Err(Error::config(
                            "source",
                            "give either noise_per_pulse or target_car, not both",
                        ))
                    }
                    (Some(noise), None) => noise,
                    (None, target) => {
                        calibrate_noise(n_pr, target.unwrap_or(DEFAULT_TARGET_CAR))
                            .map_err(|e| Error::config("source.target_car", e.to_string()))?
                    }
                };
                SourceModel::CorrelatedPair {
                    n_pr,
                    noise_per_pulse: noise,
                }
            }
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Detectors {
    #[serde(default)]
    pub alice: DetectorModel,
    #[serde(default)]
    pub bob: DetectorModel,
}

/// Forced sequences for reproducing a fixed transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bob_choices: Option<Vec<CorrelationId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alice_guesses: Option<Vec<CorrelationId>>,
    /// `false` drops the guess-verify signal photon of that round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gv_signal_delivered: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub n_rounds: u64,
    pub seed: u64,
    #[serde(default)]
    pub source: SourceSpec,
    #[serde(default)]
    pub channel: ChannelModel,
    #[serde(default)]
    pub detectors: Detectors,
    #[serde(default)]
    pub adversary: EveStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scripted: Option<Script>,
    #[serde(default)]
    pub rate_inputs: RateInputs,
}

impl SessionConfig {
    /// Ideal devices, deterministic pair source, no eavesdropper.
    pub fn ideal(n_rounds: u64, seed: u64) -> Self {
        SessionConfig {
            n_rounds,
            seed,
            source: SourceSpec::DeterministicPair,
            channel: ChannelModel::lossless(),
            detectors: Detectors::default(),
            adversary: EveStrategy::None,
            scripted: None,
            rate_inputs: RateInputs::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: SessionConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { String::new() } else { path }, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(String::new(), format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.source.model()?;
        self.channel.validate()?;
        self.detectors.alice.validate("detectors.alice")?;
        self.detectors.bob.validate("detectors.bob")?;
        self.rate_inputs.validate("rate_inputs")?;
        if let Some(script) = &self.scripted {
            self.validate_script(script)?;
        }
        Ok(())
    }

    fn validate_script(&self, script: &Script) -> Result<()> {
        let n = self.n_rounds as usize;
        let check_len = |name: &str, len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(Error::config(
                    format!("scripted.{name}"),
                    format!("has {len} entries but n_rounds is {n}"),
                ))
            }
        };
        if let Some(c) = &script.bob_choices {
            check_len("bob_choices", c.len())?;
        }
        if let Some(d) = &script.gv_signal_delivered {
            check_len("gv_signal_delivered", d.len())?;
        }
        if let Some(guesses) = &script.alice_guesses {
            check_len("alice_guesses", guesses.len())?;
            let Some(choices) = &script.bob_choices else {
                return Err(Error::config(
                    "scripted.alice_guesses",
                    "requires scripted.bob_choices",
                ));
            };
            for (i, (g, c)) in guesses.iter().zip(choices).enumerate() {
                if g.group() != c.group() {
                    return Err(Error::config(
                        format!("scripted.alice_guesses[{i}]"),
                        format!("{g} is outside the group of Bob's choice {c}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The configuration with every derived value written out explicitly.
    pub fn resolved(&self) -> Result<Self> {
        self.validate()?;
        let mut out = self.clone();
        if let SourceModel::CorrelatedPair {
            n_pr,
            noise_per_pulse,
        } = self.source.model()?
        {
            out.source = SourceSpec::CorrelatedPair {
                n_pr,
                noise_per_pulse: Some(noise_per_pulse),
                target_car: None,
            };
        }
        Ok(out)
    }

    /// Hex SHA-256 of the resolved configuration's canonical JSON.
    pub fn config_hash(&self) -> Result<String> {
        let json = serde_json::to_string(&self.resolved()?)
            .map_err(|e| Error::config(String::new(), e.to_string()))?;
        Ok(hex::encode(Sha256::digest(json.as_bytes())))
    }
}
