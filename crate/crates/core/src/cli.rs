//! Command line front end.
//!
//! ```text
//! pmgv simulate --config scripted.config --out out/
//! pmgv correlate C2 30 10 --samples 1e5 --seed 1
//! pmgv rates --pulse-rate 1e9 --success 0.01 --efficiency 0.01 --factor 0.25
//! pmgv netrun --role bob --listen 127.0.0.1:7000 --config run.config --out bob/
//! pmgv netrun --role alice --connect 127.0.0.1:7000 --config run.config --out alice/
//! ```
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 protocol
//! violation, 4 network failure, 1 other I/O failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{rate_report, RateInputs, RateReport};
use crate::config::SessionConfig;
use crate::netlink::{self, NetOutcome};
use crate::optics::{analytic_correlation, estimate_correlation, Angle, CorrelationId};
use crate::protocol::{Role, SessionPlan};
use crate::report::{write_party_outputs, write_session_outputs, SessionReport};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "pmgv", version, about = "Prepare-measure-guess-verify key distribution simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a session in-process and write audit, report and CSV files.
    Simulate(SimulateArgs),
    /// Estimate a correlation function by phase averaging.
    Correlate(CorrelateArgs),
    /// Key-rate arithmetic.
    Rates(RatesArgs),
    /// Run one party of a session over TCP.
    Netrun(NetrunArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "pmgv-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct CorrelateArgs {
    /// C1, C2, C3 or C4.
    #[arg(value_parser = parse_corr)]
    pub corr: CorrelationId,
    /// Alice's projection angle in degrees.
    pub theta1: f64,
    /// Bob's projection angle in degrees.
    pub theta2: f64,
    #[arg(long, default_value = "1e5", value_parser = parse_count)]
    pub samples: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    /// Read rate inputs from a session config; flags override.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub pulse_rate: Option<f64>,
    #[arg(long)]
    pub success: Option<f64>,
    #[arg(long)]
    pub efficiency: Option<f64>,
    #[arg(long)]
    pub factor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Alice,
    Bob,
}

#[derive(Debug, Args)]
pub struct NetrunArgs {
    #[arg(long, value_enum)]
    pub role: RoleArg,
    /// Address Bob listens on.
    #[arg(long, conflicts_with = "connect")]
    pub listen: Option<String>,
    /// Address Alice connects to.
    #[arg(long)]
    pub connect: Option<String>,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "pmgv-out")]
    pub out: PathBuf,
    /// Seconds to wait for the peer.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
}

fn parse_corr(s: &str) -> std::result::Result<CorrelationId, String> {
    s.parse().map_err(|_| format!("expected C1, C2, C3 or C4, got `{s}`"))
}

/// Accepts plain integers and float notation such as `1e5`.
fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("not a number: `{s}`"))?;
    if x.fract() == 0.0 && x >= 0.0 && x <= u64::MAX as f64 {
        Ok(x as u64)
    } else {
        Err(format!("expected a whole number, got `{s}`"))
    }
}

/// Prints a float with at most 12 significant digits, dropping float noise.
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    rounded.to_string()
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<SessionConfig> {
    let mut config = SessionConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

pub fn run<W: Write>(cli: Cli, out: &mut W) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(args, out),
        Command::Correlate(args) => correlate(args, out),
        Command::Rates(args) => rates(args, out),
        Command::Netrun(args) => netrun(args, out),
    }
}

fn simulate<W: Write>(args: SimulateArgs, out: &mut W) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let (result, report) = SessionReport::run(&config)?;
    write_session_outputs(&args.out, &result, &report)?;
    writeln!(out, "round choice group pm_bit guess key_bit verdict kept")?;
    for line in crate::report::audit_lines(&result).iter().take(20) {
        let bit = |b: Option<crate::optics::Bit>| b.map_or("-".to_string(), |b| b.to_string());
        writeln!(
            out,
            "{:>5} {:>6} {:>5} {:>6} {:>5} {:>7} {:>7} {:>4}",
            line.round,
            line.bob_choice,
            line.group,
            bit(line.bob_pm_bit),
            line.alice_guess,
            bit(line.alice_key_bit),
            line.verdict,
            if line.kept { "yes" } else { "no" }
        )?;
    }
    if result.rounds.len() > 20 {
        writeln!(out, "... {} more rounds in audit.jsonl", result.rounds.len() - 20)?;
    }
    writeln!(out, "raw_count: {}", result.raw_count)?;
    writeln!(out, "sifted_count: {}", result.sifted_count)?;
    writeln!(out, "alice_key: {}", short_key(&result.alice_key.to_string()))?;
    writeln!(out, "bob_key: {}", short_key(&result.bob_key.to_string()))?;
    match result.qber {
        Some(q) => writeln!(out, "qber: {}", format_number(q))?,
        None => writeln!(out, "qber: n/a")?,
    }
    if let Some(leak) = report.leakage {
        writeln!(out, "leaked_bits: {}", leak.leaked_bits)?;
        writeln!(out, "leaked_fraction: {}", format_number(leak.leaked_fraction))?;
        writeln!(out, "induced_qber: {}", format_number(leak.induced_qber))?;
    }
    writeln!(out, "outputs: {}", args.out.display())?;
    Ok(())
}

fn short_key(key: &str) -> String {
    if key.len() <= 64 {
        key.to_string()
    } else {
        format!("{}... ({} bits)", &key[..64], key.len())
    }
}

fn correlate<W: Write>(args: CorrelateArgs, out: &mut W) -> Result<()> {
    let (t1, t2) = (Angle::degrees(args.theta1), Angle::degrees(args.theta2));
    let estimate = estimate_correlation(args.corr, t1, t2, args.samples, args.seed)?;
    let analytic = analytic_correlation(args.corr, t1, t2);
    writeln!(out, "correlation: {}", args.corr)?;
    writeln!(out, "samples: {}", args.samples)?;
    writeln!(out, "estimate: {estimate:.6}")?;
    writeln!(out, "analytic: {}", format_number(analytic))?;
    writeln!(out, "difference: {:.6}", estimate - analytic)?;
    Ok(())
}

fn print_rates<W: Write>(out: &mut W, report: &RateReport) -> Result<()> {
    writeln!(out, "raw_bits_per_s: {}", format_number(report.raw_bits_per_s))?;
    writeln!(out, "secret_bits_per_s: {}", format_number(report.secret_bits_per_s))?;
    Ok(())
}

fn rates<W: Write>(args: RatesArgs, out: &mut W) -> Result<()> {
    let mut inputs = match &args.config {
        Some(path) => SessionConfig::load(path)?.rate_inputs,
        None => RateInputs::default(),
    };
    if let Some(v) = args.pulse_rate {
        inputs.pulse_rate_hz = v;
    }
    if let Some(v) = args.success {
        inputs.success_prob = v;
    }
    if let Some(v) = args.efficiency {
        inputs.total_detection_efficiency = v;
    }
    if let Some(v) = args.factor {
        inputs.post_processing_factor = v;
    }
    let report = rate_report(&inputs)?;
    writeln!(out, "pulse_rate_hz: {}", format_number(inputs.pulse_rate_hz))?;
    writeln!(out, "success_prob: {}", format_number(inputs.success_prob))?;
    writeln!(
        out,
        "total_detection_efficiency: {}",
        format_number(inputs.total_detection_efficiency)
    )?;
    writeln!(
        out,
        "post_processing_factor: {}",
        format_number(inputs.post_processing_factor)
    )?;
    print_rates(out, &report)
}

fn netrun<W: Write>(args: NetrunArgs, out: &mut W) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let plan = SessionPlan::new(&config)?;
    if !(args.timeout.is_finite() && args.timeout > 0.0) {
        return Err(Error::config("--timeout", "must be a positive number of seconds"));
    }
    let timeout = Duration::from_secs_f64(args.timeout);
    let outcome: NetOutcome = match args.role {
        RoleArg::Bob => {
            let endpoint = args
                .listen
                .ok_or_else(|| Error::config("--listen", "Bob needs an address to listen on"))?;
            let listener = netlink::bind(&endpoint)?;
            let addr = listener
                .local_addr()
                .map_err(|e| Error::Network(e.to_string()))?;
            // Tests and scripts read this line to find an ephemeral port.
            eprintln!("listening on {addr}");
            netlink::serve_bob(&listener, plan, timeout)
        }
        RoleArg::Alice => {
            let endpoint = args
                .connect
                .ok_or_else(|| Error::config("--connect", "Alice needs an address to connect to"))?;
            netlink::serve_alice(&endpoint, plan, timeout)
        }
    };
    write_party_outputs(&args.out, &outcome.report)?;
    let report = outcome.into_result()?;
    let role = match args.role {
        RoleArg::Alice => Role::Alice,
        RoleArg::Bob => Role::Bob,
    };
    writeln!(out, "role: {role}")?;
    writeln!(out, "rounds: {}", report.rounds.len())?;
    writeln!(out, "key_length: {}", report.key.len())?;
    writeln!(out, "key: {}", short_key(&report.key.to_string()))?;
    writeln!(out, "transcript_digest: {}", report.transcript_digest)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> Result<String> {
        let cli = Cli::try_parse_from(std::iter::once("pmgv").chain(args.iter().copied()))
            .map_err(|e| Error::config("args", e.to_string()))?;
        let mut buf = Vec::new();
        run(cli, &mut buf)?;
        Ok(String::from_utf8(buf).unwrap())
    }

    #[test]
    fn counts_accept_float_notation() {
        assert_eq!(parse_count("1e5"), Ok(100_000));
        assert_eq!(parse_count("10"), Ok(10));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-1").is_err());
    }

    #[test]
    fn numbers_print_without_float_noise() {
        assert_eq!(format_number(0.01 * 1e9 * 0.01), "100000");
        assert_eq!(format_number(25_000.000_000_000_004), "25000");
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(-1.0), "-1");
    }

    #[test]
    fn rates_defaults() {
        let out = run_args(&["rates"]).unwrap();
        assert!(out.contains("raw_bits_per_s: 100000\n"), "{out}");
        assert!(out.contains("secret_bits_per_s: 25000\n"), "{out}");
        let out = run_args(&["rates", "--success", "1", "--efficiency", "1"]).unwrap();
        assert!(out.contains("raw_bits_per_s: 1000000000\n"), "{out}");
        let out = run_args(&["rates", "--factor", "1"]).unwrap();
        assert!(out.contains("secret_bits_per_s: 100000\n"), "{out}");
        assert_eq!(run_args(&["rates", "--factor", "0"]).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn correlate_output() {
        let out = run_args(&["correlate", "C4", "0", "0", "--samples", "10"]).unwrap();
        assert!(out.contains("analytic: 1\n"), "{out}");
        assert!(out.contains("estimate: "));
        let out = run_args(&["correlate", "C2", "45", "-45", "--samples", "1e5"]).unwrap();
        let est: f64 = out
            .lines()
            .find_map(|l| l.strip_prefix("estimate: "))
            .unwrap()
            .parse()
            .unwrap();
        assert!((est - 1.0).abs() <= 0.02);
        assert!(run_args(&["correlate", "C5", "0", "0"]).is_err());
    }
}
