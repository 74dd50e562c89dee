//! C ABI for the pmgv simulator.
//!
//! Every fallible function returns a [`PmgvStatus`]. On failure the message
//! is kept per thread and can be read with [`pmgv_last_error`]. Strings are
//! copied into caller buffers: the functions write at most `len` bytes
//! including the terminating NUL and always report the full size needed
//! (NUL included) through `needed`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;

use pmgv::analysis::{raw_key_rate, secret_key_rate, RateInputs};
use pmgv::config::SessionConfig;
use pmgv::netlink;
use pmgv::optics::{analytic_correlation, estimate_correlation, Angle, CorrelationId};
use pmgv::protocol::SessionResult;
use pmgv::report::{audit_jsonl, SessionReport};
use pmgv::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmgvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Domain = 4,
    Protocol = 5,
    Frame = 6,
    Network = 7,
    Io = 8,
    /// The output buffer was too small; `needed` holds the required size.
    BufferTooSmall = 9,
    /// The session has not been run yet, or has no sifted bits.
    NoData = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmgvCorrelation {
    C1 = 1,
    C2 = 2,
    C3 = 3,
    C4 = 4,
}

impl From<PmgvCorrelation> for CorrelationId {
    fn from(c: PmgvCorrelation) -> Self {
        match c {
            PmgvCorrelation::C1 => CorrelationId::C1,
            PmgvCorrelation::C2 => CorrelationId::C2,
            PmgvCorrelation::C3 => CorrelationId::C3,
            PmgvCorrelation::C4 => CorrelationId::C4,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmgvRole {
    Alice = 0,
    Bob = 1,
}

/// Opaque session handle.
pub struct PmgvSession {
    config: SessionConfig,
    run: Option<(SessionResult, SessionReport)>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(message));
}

fn fail(status: PmgvStatus, message: impl Into<String>) -> PmgvStatus {
    set_last_error(message.into());
    status
}

fn status_of(err: &Error) -> PmgvStatus {
    match err {
        Error::Config { .. } => PmgvStatus::Config,
        Error::Domain(_) => PmgvStatus::Domain,
        Error::Protocol(_) => PmgvStatus::Protocol,
        Error::Frame(_) => PmgvStatus::Frame,
        Error::Network(_) => PmgvStatus::Network,
        Error::Io(_) => PmgvStatus::Io,
    }
}

fn from_error(err: Error) -> PmgvStatus {
    let status = status_of(&err);
    fail(status, err.to_string())
}

/// Runs `body`, turning a panic into [`PmgvStatus::Panic`].
fn guard(body: impl FnOnce() -> PmgvStatus) -> PmgvStatus {
    panic::catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|payload| {
        let message = payload
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        fail(PmgvStatus::Panic, message)
    })
}

/// # Safety
/// `ptr` must be null or point to a NUL-terminated string.
unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, PmgvStatus> {
    if ptr.is_null() {
        return Err(fail(PmgvStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| fail(PmgvStatus::InvalidUtf8, e.to_string()))
}

/// # Safety
/// `buf` must be null or valid for `len` bytes; `needed` must be null or
/// valid for one write.
unsafe fn write_str(text: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> PmgvStatus {
    let size = text.len() + 1;
    if !needed.is_null() {
        *needed = size;
    }
    if buf.is_null() || len < size {
        return fail(
            PmgvStatus::BufferTooSmall,
            format!("buffer of {len} bytes, need {size}"),
        );
    }
    ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
    *buf.add(text.len()) = 0;
    PmgvStatus::Ok
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

fn out_ptr<T>(ptr: *mut T) -> Result<*mut T, PmgvStatus> {
    if ptr.is_null() {
        Err(fail(PmgvStatus::NullPointer, "null output pointer"))
    } else {
        Ok(ptr)
    }
}

/// # Safety
/// `session` must be null or a live handle from [`pmgv_session_new`].
unsafe fn session_ref<'a>(session: *const PmgvSession) -> Result<&'a PmgvSession, PmgvStatus> {
    session
        .as_ref()
        .ok_or_else(|| fail(PmgvStatus::NullPointer, "null session handle"))
}

/// # Safety
/// As [`session_ref`].
unsafe fn session_run<'a>(
    session: *const PmgvSession,
) -> Result<&'a (SessionResult, SessionReport), PmgvStatus> {
    session_ref(session)?
        .run
        .as_ref()
        .ok_or_else(|| fail(PmgvStatus::NoData, "session has not been run"))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pmgv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pmgv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a JSON session config. On success `*out` owns a new
/// handle that must be released with [`pmgv_session_free`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be valid for
/// one write.
#[no_mangle]
pub unsafe extern "C" fn pmgv_session_new(
    config_json: *const c_char,
    out: *mut *mut PmgvSession,
) -> PmgvStatus {
    guard(|| {
        let out = try_ffi!(out_ptr(out));
        *out = ptr::null_mut();
        let text = try_ffi!(read_str(config_json));
        let config = match SessionConfig::from_json(text).and_then(|c| c.resolved()) {
            Ok(c) => c,
            Err(e) => return from_error(e),
        };
        *out = Box::into_raw(Box::new(PmgvSession { config, run: None }));
        PmgvStatus::Ok
    })
}

/// # Safety
/// `session` must be null or a handle from [`pmgv_session_new`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn pmgv_session_free(session: *mut PmgvSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Runs the configured session. Running again replaces the previous result
/// with an identical one.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pmgv_session_run(session: *mut PmgvSession) -> PmgvStatus {
    guard(|| {
        let Some(session) = session.as_mut() else {
            return fail(PmgvStatus::NullPointer, "null session handle");
        };
        match SessionReport::run(&session.config) {
            Ok(run) => {
                session.run = Some(run);
                PmgvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Raw round count and sifted key length of a finished run.
///
/// # Safety
/// `session` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pmgv_session_counts(
    session: *const PmgvSession,
    raw_count: *mut u64,
    sifted_count: *mut u64,
) -> PmgvStatus {
    guard(|| {
        let raw_count = try_ffi!(out_ptr(raw_count));
        let sifted_count = try_ffi!(out_ptr(sifted_count));
        let (result, _) = try_ffi!(session_run(session));
        *raw_count = result.raw_count as u64;
        *sifted_count = result.sifted_count as u64;
        PmgvStatus::Ok
    })
}

/// QBER of a finished run; [`PmgvStatus::NoData`] for an empty sifted key.
///
/// # Safety
/// `session` must be a live handle; `qber` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pmgv_session_qber(session: *const PmgvSession, qber: *mut f64) -> PmgvStatus {
    guard(|| {
        let qber = try_ffi!(out_ptr(qber));
        let (result, _) = try_ffi!(session_run(session));
        match result.qber {
            Some(q) => {
                *qber = q;
                PmgvStatus::Ok
            }
            None => fail(PmgvStatus::NoData, "empty sifted key"),
        }
    })
}

/// Copies one party's sifted key as a `0`/`1` string.
///
/// # Safety
/// `session` must be a live handle; `buf` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pmgv_session_key(
    session: *const PmgvSession,
    role: PmgvRole,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> PmgvStatus {
    guard(|| {
        let (result, _) = try_ffi!(session_run(session));
        let key = match role {
            PmgvRole::Alice => &result.alice_key,
            PmgvRole::Bob => &result.bob_key,
        };
        write_str(&key.to_string(), buf, len, needed)
    })
}

/// Copies the JSON session report.
///
/// # Safety
/// `session` must be a live handle; `buf` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pmgv_session_report_json(
    session: *const PmgvSession,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> PmgvStatus {
    guard(|| {
        let (_, report) = try_ffi!(session_run(session));
        write_str(&report.to_json(), buf, len, needed)
    })
}

/// Copies the per-round audit log, one JSON object per line.
///
/// # Safety
/// `session` must be a live handle; `buf` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pmgv_session_audit_jsonl(
    session: *const PmgvSession,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> PmgvStatus {
    guard(|| {
        let (result, _) = try_ffi!(session_run(session));
        write_str(&audit_jsonl(result), buf, len, needed)
    })
}

/// Closed-form correlation at the given angles (degrees).
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pmgv_analytic_correlation(
    corr: PmgvCorrelation,
    theta1_deg: f64,
    theta2_deg: f64,
    out: *mut f64,
) -> PmgvStatus {
    guard(|| {
        let out = try_ffi!(out_ptr(out));
        if !(theta1_deg.is_finite() && theta2_deg.is_finite()) {
            return fail(PmgvStatus::Domain, "angles must be finite");
        }
        *out = analytic_correlation(
            corr.into(),
            Angle::degrees(theta1_deg),
            Angle::degrees(theta2_deg),
        );
        PmgvStatus::Ok
    })
}

/// Monte-Carlo correlation estimate over `n_samples` random phases.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pmgv_estimate_correlation(
    corr: PmgvCorrelation,
    theta1_deg: f64,
    theta2_deg: f64,
    n_samples: u64,
    seed: u64,
    out: *mut f64,
) -> PmgvStatus {
    guard(|| {
        let out = try_ffi!(out_ptr(out));
        match estimate_correlation(
            corr.into(),
            Angle::degrees(theta1_deg),
            Angle::degrees(theta2_deg),
            n_samples,
            seed,
        ) {
            Ok(v) => {
                *out = v;
                PmgvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Raw key bits per second.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pmgv_raw_key_rate(
    pulse_rate_hz: f64,
    success_prob: f64,
    total_detection_efficiency: f64,
    out: *mut f64,
) -> PmgvStatus {
    guard(|| {
        let out = try_ffi!(out_ptr(out));
        let inputs = RateInputs {
            pulse_rate_hz,
            success_prob,
            total_detection_efficiency,
            ..RateInputs::default()
        };
        if let Err(e) = inputs.validate("") {
            return from_error(e);
        }
        *out = raw_key_rate(&inputs);
        PmgvStatus::Ok
    })
}

/// Secret key bits per second for a post-processing factor in (0, 1].
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pmgv_secret_key_rate(raw_rate: f64, factor: f64, out: *mut f64) -> PmgvStatus {
    guard(|| {
        let out = try_ffi!(out_ptr(out));
        match secret_key_rate(raw_rate, factor) {
            Ok(v) => {
                *out = v;
                PmgvStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Parses one wire line (without the newline) and copies its canonical
/// encoding. [`PmgvStatus::Frame`] with a typed message on rejection.
///
/// # Safety
/// `line` must be a NUL-terminated string; `buf` must be valid for `len`
/// bytes.
#[no_mangle]
pub unsafe extern "C" fn pmgv_frame_canonicalize(
    line: *const c_char,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> PmgvStatus {
    guard(|| {
        let line = try_ffi!(read_str(line));
        match netlink::parse(line) {
            Ok(frame) => write_str(&netlink::encode(&frame), buf, len, needed),
            Err(e) => from_error(e.into()),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        unsafe { CStr::from_ptr(pmgv_last_error()) }
            .to_str()
            .unwrap()
            .to_string()
    }

    fn new_session(json: &str) -> (*mut PmgvSession, PmgvStatus) {
        let json = CString::new(json).unwrap();
        let mut handle = ptr::null_mut();
        let status = unsafe { pmgv_session_new(json.as_ptr(), &mut handle) };
        (handle, status)
    }

    fn read_string(
        f: impl Fn(*mut c_char, usize, *mut usize) -> PmgvStatus,
    ) -> Result<String, PmgvStatus> {
        let mut needed = 0usize;
        let status = f(ptr::null_mut(), 0, &mut needed);
        assert_eq!(status, PmgvStatus::BufferTooSmall);
        let mut buf = vec![0u8; needed];
        match f(buf.as_mut_ptr().cast(), buf.len(), &mut needed) {
            PmgvStatus::Ok => Ok(CStr::from_bytes_with_nul(&buf).unwrap().to_str().unwrap().to_string()),
            other => Err(other),
        }
    }

    #[test]
    fn scripted_session_round_trip() {
        let (handle, status) = new_session(
            r#"{"n_rounds":4,"seed":5,"scripted":{"bob_choices":["C3","C1","C4","C2"],"alice_guesses":["C4","C1","C3","C2"]}}"#,
        );
        assert_eq!(status, PmgvStatus::Ok);
        let mut qber = -1.0;
        assert_eq!(unsafe { pmgv_session_qber(handle, &mut qber) }, PmgvStatus::NoData);
        assert_eq!(unsafe { pmgv_session_run(handle) }, PmgvStatus::Ok);

        let (mut raw, mut sifted) = (0u64, 0u64);
        assert_eq!(unsafe { pmgv_session_counts(handle, &mut raw, &mut sifted) }, PmgvStatus::Ok);
        assert_eq!((raw, sifted), (4, 4));
        assert_eq!(unsafe { pmgv_session_qber(handle, &mut qber) }, PmgvStatus::Ok);
        assert_eq!(qber, 0.0);
        for role in [PmgvRole::Alice, PmgvRole::Bob] {
            let key = read_string(|b, l, n| unsafe { pmgv_session_key(handle, role, b, l, n) }).unwrap();
            assert_eq!(key, "1001");
        }
        let report =
            read_string(|b, l, n| unsafe { pmgv_session_report_json(handle, b, l, n) }).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report).unwrap();
        assert_eq!(v["summary"]["sifted_count"], 4);
        let audit = read_string(|b, l, n| unsafe { pmgv_session_audit_jsonl(handle, b, l, n) }).unwrap();
        assert_eq!(audit.lines().count(), 4);
        unsafe { pmgv_session_free(handle) };
    }

    #[test]
    fn config_errors_carry_the_field_path() {
        let (handle, status) = new_session(r#"{"n_rounds":1,"seed":1,"channel":{"length_km":-1}}"#);
        assert_eq!(status, PmgvStatus::Config);
        assert!(handle.is_null());
        assert!(last_error().contains("channel.length_km"), "{}", last_error());

        let bad = [0xffu8, 0];
        let mut handle = ptr::null_mut();
        let status = unsafe { pmgv_session_new(bad.as_ptr().cast(), &mut handle) };
        assert_eq!(status, PmgvStatus::InvalidUtf8);
    }

    #[test]
    fn null_arguments_are_rejected() {
        assert_eq!(
            unsafe { pmgv_session_new(ptr::null(), &mut ptr::null_mut()) },
            PmgvStatus::NullPointer
        );
        assert_eq!(unsafe { pmgv_session_run(ptr::null_mut()) }, PmgvStatus::NullPointer);
        let mut x = 0.0;
        assert_eq!(unsafe { pmgv_session_qber(ptr::null(), &mut x) }, PmgvStatus::NullPointer);
        assert_eq!(
            unsafe { pmgv_analytic_correlation(PmgvCorrelation::C1, 0.0, 0.0, ptr::null_mut()) },
            PmgvStatus::NullPointer
        );
        unsafe { pmgv_session_free(ptr::null_mut()) };
    }

    #[test]
    fn small_buffer_reports_needed_size() {
        let (handle, _) = new_session(r#"{"n_rounds":3,"seed":1}"#);
        unsafe { pmgv_session_run(handle) };
        let mut buf = [0 as c_char; 3];
        let mut needed = 0;
        let status = unsafe { pmgv_session_key(handle, PmgvRole::Alice, buf.as_mut_ptr(), buf.len(), &mut needed) };
        assert_eq!(status, PmgvStatus::BufferTooSmall);
        assert_eq!(needed, 4);
        unsafe { pmgv_session_free(handle) };
    }

    #[test]
    fn correlation_and_rates() {
        let mut v = 0.0;
        unsafe {
            assert_eq!(pmgv_analytic_correlation(PmgvCorrelation::C1, 45.0, 45.0, &mut v), PmgvStatus::Ok);
            assert_eq!(v, -1.0);
            assert_eq!(
                pmgv_estimate_correlation(PmgvCorrelation::C4, 45.0, 45.0, 10_000, 3, &mut v),
                PmgvStatus::Ok
            );
            assert!((v - 1.0).abs() < 0.05);
            assert_eq!(
                pmgv_estimate_correlation(PmgvCorrelation::C4, 45.0, 45.0, 0, 3, &mut v),
                PmgvStatus::Domain
            );
            assert_eq!(pmgv_raw_key_rate(1e9, 0.01, 0.01, &mut v), PmgvStatus::Ok);
            assert!((v - 1e5).abs() < 1e-6);
            assert_eq!(pmgv_secret_key_rate(v, 0.25, &mut v), PmgvStatus::Ok);
            assert!((v - 25_000.0).abs() < 1e-6);
            assert_eq!(pmgv_secret_key_rate(1e5, 0.0, &mut v), PmgvStatus::Domain);
            assert_eq!(pmgv_raw_key_rate(1e9, 1.5, 0.01, &mut v), PmgvStatus::Config);
        }
    }

    #[test]
    fn frames_are_canonicalized_or_rejected() {
        let line = CString::new(r#"{"round":2,"type":"GROUP_ANNOUNCE","group":"PHI"}"#).unwrap();
        let canon = read_string(|b, l, n| unsafe { pmgv_frame_canonicalize(line.as_ptr(), b, l, n) });
        assert_eq!(canon.unwrap(), r#"{"type":"GROUP_ANNOUNCE","round":2,"group":"PHI"}"#);

        let junk = CString::new("{not json").unwrap();
        let mut needed = 0;
        let status = unsafe { pmgv_frame_canonicalize(junk.as_ptr(), ptr::null_mut(), 0, &mut needed) };
        assert_eq!(status, PmgvStatus::Frame);
        assert!(!last_error().is_empty());
    }

    #[test]
    fn version_is_a_c_string() {
        let v = unsafe { CStr::from_ptr(pmgv_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
