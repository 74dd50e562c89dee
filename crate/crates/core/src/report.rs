//! Session outputs: per-round audit log, JSON report and a CSV summary row.
//!
//! `audit.jsonl` holds one object per round, fields in this order:
//!
//! | field | meaning |
//! |---|---|
//! | `round` | round id |
//! | `bob_choice`, `group` | Bob's correlation and the announced group |
//! | `alice_herald_valid` | Alice's prepare-measure herald clicked `+` |
//! | `bob_pm_bit`, `bob_pm_valid` | Bob's prepare-measure detection |
//! | `alice_guess`, `dphi` | Alice's guess and the lock she applied |
//! | `alice_key_bit`, `alice_gv_valid` | Alice's guess-verify detection |
//! | `verdict`, `bob_inferred_bit` | Bob's guess-verify detection |
//! | `kept` | the round survived sifting |
//! | `eve_*` | only with an active eavesdropper |
//!
//! `report.json` embeds the resolved configuration, so running it again
//! reproduces every output byte for byte.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::adversary::{leakage_summary, EveRecord, EveStrategy, LeakageSummary};
use crate::analysis::{session_statistics, RateReport};
use crate::config::SessionConfig;
use crate::optics::{Bit, CorrelationId, Group};
use crate::protocol::{run_session, PartyReport, SessionResult, Verdict};
use crate::{Error, Result};

pub const REPORT_FORMAT: &str = "pmgv-report/1";

pub const CSV_COLUMNS: [&str; 14] = [
    "seed",
    "n_rounds",
    "source",
    "adversary",
    "raw_count",
    "sifted_count",
    "sifted_fraction",
    "qber",
    "leaked_bits",
    "leaked_fraction",
    "induced_qber",
    "raw_bits_per_s",
    "secret_bits_per_s",
    "config_hash",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditLine {
    pub round: u64,
    pub bob_choice: CorrelationId,
    pub group: Group,
    pub alice_herald_valid: bool,
    pub bob_pm_bit: Option<Bit>,
    pub bob_pm_valid: bool,
    pub alice_guess: CorrelationId,
    pub dphi: f64,
    pub alice_key_bit: Option<Bit>,
    pub alice_gv_valid: bool,
    pub verdict: Verdict,
    pub bob_inferred_bit: Option<Bit>,
    pub kept: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eve_photons_stored: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eve_bit_estimate: Option<Option<Bit>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eve_disturbed: Option<bool>,
}

pub fn audit_lines(result: &SessionResult) -> Vec<AuditLine> {
    let mut eve = result.eve_records.iter().peekable();
    result
        .rounds
        .iter()
        .map(|(pm, gv)| {
            let record: Option<&EveRecord> = eve.next_if(|r| r.round_id == pm.round_id);
            AuditLine {
                round: pm.round_id,
                bob_choice: pm.bob_choice,
                group: pm.group_announced,
                alice_herald_valid: pm.alice_detection_valid,
                bob_pm_bit: pm.bob_bit,
                bob_pm_valid: pm.bob_detection_valid,
                alice_guess: gv.alice_guess,
                dphi: gv.dphi_used.value(),
                alice_key_bit: gv.alice_key_bit,
                alice_gv_valid: gv.alice_detection_valid,
                verdict: gv.verdict,
                bob_inferred_bit: gv.bob_inferred_bit,
                kept: SessionResult::round_kept(pm, gv),
                eve_photons_stored: record.map(|r| r.photons_stored),
                eve_bit_estimate: record.map(|r| r.eve_bit_estimate),
                eve_disturbed: record.map(|r| r.disturbed),
            }
        })
        .collect()
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report types always serialize")
}

pub fn audit_jsonl(result: &SessionResult) -> String {
    audit_lines(result)
        .iter()
        .map(|l| to_json(l) + "\n")
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub raw_count: usize,
    pub sifted_count: usize,
    pub alice_key: String,
    pub bob_key: String,
    pub qber: Option<f64>,
    pub transcript_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionReport {
    pub format: &'static str,
    pub config: SessionConfig,
    pub config_hash: String,
    pub summary: Summary,
    /// Present when an eavesdropper was configured.
    pub leakage: Option<LeakageSummary>,
    pub rates: RateReport,
}

impl SessionReport {
    /// Runs the configured session and, with an eavesdropper, the same seed
    /// without one as the QBER baseline.
    pub fn run(config: &SessionConfig) -> Result<(SessionResult, SessionReport)> {
        let resolved = config.resolved()?;
        let result = run_session(&resolved)?;
        let leakage = if resolved.adversary.is_active() {
            let baseline = run_session(&SessionConfig {
                adversary: EveStrategy::None,
                ..resolved.clone()
            })?;
            Some(leakage_summary(&result.eve_records, &result, baseline.qber))
        } else {
            None
        };
        let report = SessionReport::new(&resolved, &result, leakage)?;
        Ok((result, report))
    }

    pub fn new(
        resolved: &SessionConfig,
        result: &SessionResult,
        leakage: Option<LeakageSummary>,
    ) -> Result<Self> {
        let rates = session_statistics(result, &leakage.unwrap_or_default(), &resolved.rate_inputs);
        Ok(SessionReport {
            format: REPORT_FORMAT,
            config: resolved.clone(),
            config_hash: resolved.config_hash()?,
            summary: Summary {
                raw_count: result.raw_count,
                sifted_count: result.sifted_count,
                alice_key: result.alice_key.to_string(),
                bob_key: result.bob_key.to_string(),
                qber: result.qber,
                transcript_digest: result.transcript_digest.clone(),
            },
            leakage,
            rates,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report types always serialize") + "\n"
    }

    pub fn csv_fields(&self) -> [String; 14] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let leak = self.leakage.unwrap_or_default();
        let source = match serde_json::to_value(self.config.source) {
            Ok(serde_json::Value::Object(m)) => m
                .get("kind")
                .and_then(|k| k.as_str())
                .unwrap_or_default()
                .to_string(),
            _ => String::new(),
        };
        [
            self.config.seed.to_string(),
            self.config.n_rounds.to_string(),
            source,
            self.config.adversary.label().to_string(),
            self.summary.raw_count.to_string(),
            self.summary.sifted_count.to_string(),
            self.rates.sifted_fraction.to_string(),
            opt(self.summary.qber),
            leak.leaked_bits.to_string(),
            leak.leaked_fraction.to_string(),
            leak.induced_qber.to_string(),
            self.rates.raw_bits_per_s.to_string(),
            self.rates.secret_bits_per_s.to_string(),
            self.config_hash.clone(),
        ]
    }

    /// Header plus one data row.
    pub fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        w.write_record(self.csv_fields()).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are UTF-8")
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents).map_err(Error::from)
}

/// Writes `audit.jsonl`, `report.json` and `report.csv` into `dir`.
pub fn write_session_outputs(dir: &Path, result: &SessionResult, report: &SessionReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    write(dir, "audit.jsonl", &audit_jsonl(result))?;
    write(dir, "report.json", &report.to_json())?;
    write(dir, "report.csv", &report.csv())
}

/// Writes one networked party's `<role>_audit.jsonl` and `<role>_report.json`.
/// Also used after an abort, with whatever rounds completed.
pub fn write_party_outputs(dir: &Path, report: &PartyReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let audit: String = report.rounds.iter().map(|r| to_json(r) + "\n").collect();
    write(dir, &format!("{}_audit.jsonl", report.role), &audit)?;
    let json = serde_json::to_string_pretty(report).expect("report types always serialize") + "\n";
    write(dir, &format!("{}_report.json", report.role), &json)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scripted() -> SessionConfig {
        SessionConfig::from_json(
            r#"{"n_rounds":4,"seed":5,"scripted":{"bob_choices":["C3","C1","C4","C2"],"alice_guesses":["C4","C1","C3","C2"]}}"#,
        )
        .unwrap()
    }

    #[test]
    fn audit_snapshot() {
        let (result, _) = SessionReport::run(&scripted()).unwrap();
        let audit = audit_jsonl(&result);
        let first = audit.lines().next().unwrap();
        assert_eq!(
            first,
            r#"{"round":0,"bob_choice":"C3","group":"PHI","alice_herald_valid":true,"bob_pm_bit":0,"bob_pm_valid":true,"alice_guess":"C4","dphi":-90.0,"alice_key_bit":1,"alice_gv_valid":true,"verdict":"No","bob_inferred_bit":1,"kept":true}"#
        );
        assert_eq!(audit.lines().count(), 4);
    }

    #[test]
    fn csv_snapshot() {
        let (_, report) = SessionReport::run(&scripted()).unwrap();
        let csv = report.csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        let row = lines.next().unwrap();
        assert_eq!(
            row,
            format!("5,4,deterministic_pair,none,4,4,1,0,0,0,0,1000000000,250000000,{}", report.config_hash)
        );
        assert_eq!(CSV_COLUMNS.len(), row.split(',').count());
    }

    #[test]
    fn report_json_shape() {
        let (_, report) = SessionReport::run(&scripted()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        let mut expected = vec!["format", "config", "config_hash", "summary", "leakage", "rates"];
        expected.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, expected);
        assert_eq!(v["summary"]["alice_key"], "1001");
        assert_eq!(v["summary"]["qber"], 0.0);
        assert!(v["leakage"].is_null());
        // The embedded config reproduces the run.
        let again = SessionConfig::from_json(&v["config"].to_string()).unwrap();
        let (_, rerun) = SessionReport::run(&again).unwrap();
        assert_eq!(rerun.to_json(), report.to_json());
    }

    #[test]
    fn eve_fields_only_with_eve() {
        let mut config = SessionConfig::ideal(3, 1);
        config.adversary = EveStrategy::Pns;
        let (result, report) = SessionReport::run(&config).unwrap();
        assert!(audit_jsonl(&result).lines().all(|l| l.contains("\"eve_photons_stored\":0")));
        assert_eq!(report.leakage, Some(LeakageSummary::default()));
    }
}
