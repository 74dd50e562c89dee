//! Line-framed wire format and the two-process session runner.
//!
//! Every frame is one JSON object on one line. Fields always appear in the
//! order shown, `type` first and `round` second (`null` for session-level
//! frames):
//!
//! ```text
//! {"type":"SESSION_START","round":null,"seed":7,"n_rounds":100,"config_hash":"<64 hex>"}
//! {"type":"GROUP_ANNOUNCE","round":7,"group":"PSI"}
//! {"type":"VALIDITY","round":7,"valid":true}
//! {"type":"SESSION_END","round":null,"digest":"<64 hex>"}
//! {"type":"SIM_ARRIVAL","round":7,"pulse":"GV","n_state":1,"n_noise":0,"dphi":90,"frame":null}
//! ```
//!
//! `SIM_ARRIVAL` is simulation transport for the quantum channel, not
//! classical protocol traffic. `frame` is `null`, `"LOCKED"` or `"SHIFTED"`.
//!
//! Bob listens and Alice connects. Both open with `SESSION_START` and abort
//! if the peer's parameters differ. The classical channel is neither
//! authenticated nor encrypted.

use std::io::{BufRead, BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use serde_json::{Map, Value};
use thiserror::Error;

use crate::adversary::PhaseConvention;
use crate::optics::{Group, RelativePhase};
use crate::protocol::{
    Alice, Bob, ClassicalMessage, Frame, Party, PartyReport, PulseKind, Role, SessionParams,
    SessionPlan, SimulatedArrival,
};
use crate::{Error, Result};

/// Longest line accepted from a peer.
pub const MAX_LINE_BYTES: usize = 4096;

/// Default time to wait for a peer frame or connection.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("empty frame")]
    Empty,
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("trailing data after frame")]
    TrailingGarbage,
    #[error("unknown frame type `{0}`")]
    UnknownType(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("unexpected field `{0}`")]
    UnknownField(String),
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn round_json(round: Option<u64>) -> String {
    round.map_or_else(|| "null".to_string(), |r| r.to_string())
}

/// Serializes a frame as one line, without the trailing newline.
pub fn encode(frame: &Frame) -> String {
    let head = format!(
        r#"{{"type":"{}","round":{}"#,
        frame.kind(),
        round_json(frame.round_id())
    );
    let body = match frame {
        Frame::Classical(ClassicalMessage::SessionStart(p)) => format!(
            r#","seed":{},"n_rounds":{},"config_hash":{}"#,
            p.seed,
            p.n_rounds,
            json_str(&p.config_hash)
        ),
        Frame::Classical(ClassicalMessage::GroupAnnounce { group, .. }) => {
            format!(r#","group":"{}""#, group.symbol())
        }
        Frame::Classical(ClassicalMessage::ValidityReport { valid, .. }) => {
            format!(r#","valid":{valid}"#)
        }
        Frame::Classical(ClassicalMessage::SessionEnd { digest }) => {
            format!(r#","digest":{}"#, json_str(digest))
        }
        Frame::Arrival(a) => format!(
            r#","pulse":"{}","n_state":{},"n_noise":{},"dphi":{},"frame":{}"#,
            a.pulse.symbol(),
            a.n_state,
            a.n_noise,
            a.phase.value(),
            a.frame.map_or_else(|| "null".to_string(), |f| format!("\"{}\"", f.symbol()))
        ),
    };
    format!("{head}{body}}}")
}

struct Fields {
    map: Map<String, Value>,
}

impl Fields {
    fn take(&mut self, field: &'static str) -> std::result::Result<Value, FrameError> {
        self.map.remove(field).ok_or(FrameError::MissingField(field))
    }

    fn u64(&mut self, field: &'static str) -> std::result::Result<u64, FrameError> {
        self.take(field)?.as_u64().ok_or(FrameError::InvalidField {
            field,
            reason: "expected a non-negative integer".into(),
        })
    }

    fn string(&mut self, field: &'static str) -> std::result::Result<String, FrameError> {
        match self.take(field)? {
            Value::String(s) => Ok(s),
            _ => Err(FrameError::InvalidField {
                field,
                reason: "expected a string".into(),
            }),
        }
    }

    fn bool(&mut self, field: &'static str) -> std::result::Result<bool, FrameError> {
        self.take(field)?.as_bool().ok_or(FrameError::InvalidField {
            field,
            reason: "expected true or false".into(),
        })
    }

    fn hex64(&mut self, field: &'static str) -> std::result::Result<String, FrameError> {
        let s = self.string(field)?;
        if s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            Ok(s)
        } else {
            Err(FrameError::InvalidField {
                field,
                reason: "expected 64 lowercase hex digits".into(),
            })
        }
    }

    fn finish(self) -> std::result::Result<(), FrameError> {
        match self.map.into_iter().next() {
            Some((k, _)) => Err(FrameError::UnknownField(k)),
            None => Ok(()),
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> FrameError {
    FrameError::InvalidField {
        field,
        reason: reason.into(),
    }
}

/// Parses one line (with or without its trailing newline).
pub fn parse(line: &str) -> std::result::Result<Frame, FrameError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.trim().is_empty() {
        return Err(FrameError::Empty);
    }
    if line.contains('\n') {
        return Err(FrameError::Malformed("embedded newline".into()));
    }
    let mut de = serde_json::Deserializer::from_str(line);
    let value: Value = serde::Deserialize::deserialize(&mut de)
        .map_err(|e| FrameError::Malformed(e.to_string()))?;
    de.end().map_err(|_| FrameError::TrailingGarbage)?;
    let Value::Object(map) = value else {
        return Err(FrameError::Malformed("frame is not an object".into()));
    };
    let mut f = Fields { map };
    let kind = f.string("type")?;
    let round = match f.take("round")? {
        Value::Null => None,
        v => Some(v.as_u64().ok_or_else(|| invalid("round", "expected a non-negative integer or null"))?),
    };
    let need_round = || round.ok_or_else(|| invalid("round", "required for this frame type"));
    let no_round = || match round {
        None => Ok(()),
        Some(_) => Err(invalid("round", "must be null for this frame type")),
    };
    let frame = match kind.as_str() {
        "SESSION_START" => {
            no_round()?;
            Frame::Classical(ClassicalMessage::SessionStart(SessionParams {
                seed: f.u64("seed")?,
                n_rounds: f.u64("n_rounds")?,
                config_hash: f.hex64("config_hash")?,
            }))
        }
        "GROUP_ANNOUNCE" => {
            let round_id = need_round()?;
            let group: Group = f
                .string("group")?
                .parse()
                .map_err(|_| invalid("group", "expected PSI or PHI"))?;
            Frame::Classical(ClassicalMessage::GroupAnnounce { round_id, group })
        }
        "VALIDITY" => Frame::Classical(ClassicalMessage::ValidityReport {
            round_id: need_round()?,
            valid: f.bool("valid")?,
        }),
        "SESSION_END" => {
            no_round()?;
            Frame::Classical(ClassicalMessage::SessionEnd {
                digest: f.hex64("digest")?,
            })
        }
        "SIM_ARRIVAL" => {
            let round_id = need_round()?;
            let pulse = match f.string("pulse")?.as_str() {
                "PM" => PulseKind::Pm,
                "GV" => PulseKind::Gv,
                _ => return Err(invalid("pulse", "expected PM or GV")),
            };
            let n_state = f.u64("n_state")?;
            let n_noise = f.u64("n_noise")?;
            let phase = f
                .take("dphi")?
                .as_f64()
                .map(RelativePhase::degrees)
                .filter(|p| p.is_protocol_value())
                .ok_or_else(|| invalid("dphi", "expected -90 or 90"))?;
            let frame = match f.take("frame")? {
                Value::Null => None,
                Value::String(s) if s == "LOCKED" => Some(PhaseConvention::Locked),
                Value::String(s) if s == "SHIFTED" => Some(PhaseConvention::Shifted),
                _ => return Err(invalid("frame", "expected null, LOCKED or SHIFTED")),
            };
            Frame::Arrival(SimulatedArrival {
                round_id,
                pulse,
                n_state,
                n_noise,
                phase,
                frame,
            })
        }
        _ => return Err(FrameError::UnknownType(kind)),
    };
    f.finish()?;
    Ok(frame)
}

/// A finished or aborted networked session. `report` is always present so
/// the partial audit can be written after a failure.
#[derive(Debug)]
pub struct NetOutcome {
    pub report: PartyReport,
    pub error: Option<Error>,
}

impl NetOutcome {
    pub fn into_result(self) -> Result<PartyReport> {
        match self.error {
            None => Ok(self.report),
            Some(e) => Err(e),
        }
    }
}

fn net_err(context: &str, e: std::io::Error) -> Error {
    Error::Network(format!("{context}: {e}"))
}

fn write_frames<W: Write>(w: &mut W, frames: &[Frame]) -> Result<()> {
    for f in frames {
        writeln!(w, "{}", encode(f)).map_err(|e| net_err("write", e))?;
    }
    w.flush().map_err(|e| net_err("write", e))
}

fn read_frame<R: BufRead>(r: &mut R) -> Result<Frame> {
    let mut buf = Vec::new();
    let n = r
        .take(MAX_LINE_BYTES as u64 + 1)
        .read_until(b'\n', &mut buf)
        .map_err(|e| match e.kind() {
            ErrorKind::WouldBlock | ErrorKind::TimedOut => {
                Error::Network("timed out waiting for peer".into())
            }
            _ => net_err("read", e),
        })?;
    if n == 0 {
        return Err(Error::Network("peer closed the connection".into()));
    }
    if buf.last() != Some(&b'\n') {
        if buf.len() > MAX_LINE_BYTES {
            return Err(FrameError::Malformed("line too long".into()).into());
        }
        return Err(Error::Network("peer closed the connection mid-frame".into()));
    }
    let line = std::str::from_utf8(&buf).map_err(|_| FrameError::Malformed("not UTF-8".into()))?;
    Ok(parse(line)?)
}

/// Runs `party` to completion over `stream`.
pub fn drive<P: Party>(party: &mut P, stream: TcpStream, timeout: Duration) -> Result<()> {
    stream
        .set_read_timeout(Some(timeout))
        .map_err(|e| net_err("configure socket", e))?;
    stream.set_nodelay(true).map_err(|e| net_err("configure socket", e))?;
    let mut reader = BufReader::new(stream.try_clone().map_err(|e| net_err("clone socket", e))?);
    let mut writer = BufWriter::new(stream);
    let opening = party.start();
    write_frames(&mut writer, &opening)?;
    while !party.is_done() {
        let frame = read_frame(&mut reader)?;
        let out = party.on_frame(frame)?;
        write_frames(&mut writer, &out)?;
    }
    Ok(())
}

fn finish<P: Party>(party: P, result: Result<()>) -> NetOutcome {
    NetOutcome {
        report: party.report(),
        error: result.err(),
    }
}

/// Binds Bob's listening socket. Port 0 picks a free port.
pub fn bind(endpoint: &str) -> Result<TcpListener> {
    TcpListener::bind(endpoint).map_err(|e| net_err(&format!("bind {endpoint}"), e))
}

/// Accepts one connection and runs Bob's side of the session on it.
pub fn serve_bob(listener: &TcpListener, plan: SessionPlan, timeout: Duration) -> NetOutcome {
    let mut bob = Bob::new(plan);
    let result = accept_with_deadline(listener, timeout).and_then(|s| drive(&mut bob, s, timeout));
    finish(bob, result)
}

fn accept_with_deadline(listener: &TcpListener, timeout: Duration) -> Result<TcpStream> {
    listener
        .set_nonblocking(true)
        .map_err(|e| net_err("configure listener", e))?;
    let deadline = Instant::now() + timeout;
    loop {
        match listener.accept() {
            Ok((stream, _)) => {
                stream
                    .set_nonblocking(false)
                    .map_err(|e| net_err("configure socket", e))?;
                return Ok(stream);
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock && Instant::now() < deadline => {
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                return Err(Error::Network("no peer connected before the timeout".into()))
            }
            Err(e) => return Err(net_err("accept", e)),
        }
    }
}

/// Connects to Bob, retrying until `timeout` so either side may start first.
pub fn serve_alice(endpoint: &str, plan: SessionPlan, timeout: Duration) -> NetOutcome {
    let mut alice = Alice::new(plan);
    let result = connect_with_retry(endpoint, timeout).and_then(|s| drive(&mut alice, s, timeout));
    finish(alice, result)
}

fn connect_with_retry(endpoint: &str, timeout: Duration) -> Result<TcpStream> {
    let deadline = Instant::now() + timeout;
    loop {
        let addrs = endpoint
            .to_socket_addrs()
            .map_err(|e| net_err(&format!("resolve {endpoint}"), e))?;
        let mut last = None;
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, Duration::from_secs(1)) {
                Ok(s) => return Ok(s),
                Err(e) => last = Some(e),
            }
        }
        if Instant::now() >= deadline {
            return Err(match last {
                Some(e) => net_err(&format!("connect {endpoint}"), e),
                None => Error::Network(format!("{endpoint} resolved to no address")),
            });
        }
        std::thread::sleep(Duration::from_millis(50));
    }
}

/// Runs one role of a session over TCP.
pub fn serve(role: Role, endpoint: &str, plan: SessionPlan, timeout: Duration) -> NetOutcome {
    match role {
        Role::Alice => serve_alice(endpoint, plan, timeout),
        Role::Bob => match bind(endpoint) {
            Ok(listener) => serve_bob(&listener, plan, timeout),
            Err(e) => NetOutcome {
                report: Bob::new(plan).report(),
                error: Some(e),
            },
        },
    }
}
