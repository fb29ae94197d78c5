//! C ABI over the evaluation engine and metrics.
//!
//! Conventions:
//! * Every fallible function returns an [`FdStatus`]; on failure a message is
//!   available from [`fd_last_error`] on the same thread.
//! * Labels cross the boundary as wire bytes: 1 = faithful, 0 = unfaithful.
//! * Strings returned through `out` parameters are owned by the caller and must
//!   be released with [`fd_string_free`]; engines with [`fd_engine_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use faithdebate::ambiguity::AmbiguityTaxonomy;
use faithdebate::data::runlog::RunLog;
use faithdebate::debate::{DebateEngine, DebateError, EngineOptions};
use faithdebate::domain::{wire_to_label, DebateConfig, EvaluationRecord, FaithfulnessLabel};
use faithdebate::gateway::{
    Gateway, GatewayError, HttpBackend, HttpBackendConfig, RetryPolicy, ScriptedBackend, ScriptedBackendSpec,
};
use faithdebate::guidelines::default_guidelines;
use faithdebate::metrics::{self, MetricsError};
use faithdebate::prompting::parse_argument;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidLabel = 4,
    InvalidConfig = 5,
    LengthMismatch = 6,
    UndefinedRate = 7,
    DegenerateData = 8,
    ParseFailure = 9,
    AuthError = 10,
    BackendUnavailable = 11,
    EvaluationFailed = 12,
    Panic = 13,
}

/// Confusion counts with positive = unfaithful.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FdConfusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

/// Debate engine bound to a backend. Safe to use from several threads.
pub struct FdEngine {
    engine: DebateEngine,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(FdStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> FdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            FdStatus::Panic
        }
    }
}

fn metrics_failure(e: MetricsError) -> Failure {
    let status = match e {
        MetricsError::LengthMismatch { .. } | MetricsError::TooFew { .. } => FdStatus::LengthMismatch,
        MetricsError::UndefinedRate(_) => FdStatus::UndefinedRate,
        MetricsError::DegenerateData => FdStatus::DegenerateData,
        _ => FdStatus::InvalidLabel,
    };
    Failure(status, e.to_string())
}

fn gateway_failure(e: GatewayError) -> Failure {
    let status = match e {
        GatewayError::AuthError(_) => FdStatus::AuthError,
        GatewayError::Config(_) | GatewayError::InvalidRequest { .. } => FdStatus::InvalidConfig,
        _ => FdStatus::BackendUnavailable,
    };
    Failure(status, e.to_string())
}

fn debate_failure(e: DebateError) -> Failure {
    match e {
        DebateError::Gateway(g) => gateway_failure(g),
        DebateError::InvalidConfig(_) | DebateError::InvalidSplit { .. } => {
            Failure(FdStatus::InvalidConfig, e.to_string())
        }
        other => Failure(FdStatus::EvaluationFailed, other.to_string()),
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure(FdStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(FdStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` is null (only when `len` is 0) or points to `len` readable bytes.
unsafe fn read_labels(p: *const u8, len: usize, what: &str) -> FfiResult<Vec<FaithfulnessLabel>> {
    if len == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(Failure(FdStatus::NullArgument, format!("{what} is null")));
    }
    std::slice::from_raw_parts(p, len)
        .iter()
        .map(|&b| wire_to_label(b as i64).map_err(|e| Failure(FdStatus::InvalidLabel, format!("{what}: {e}"))))
        .collect()
}

/// # Safety
/// `out` is null or valid for a write.
unsafe fn write_out<T>(out: *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure(FdStatus::NullArgument, "output pointer is null".into()));
    }
    out.write(value);
    Ok(())
}

/// # Safety
/// `out` is null or valid for a write.
unsafe fn write_string(out: *mut *mut c_char, s: String) -> FfiResult<()> {
    let c = CString::new(s).map_err(|_| Failure(FdStatus::InvalidUtf8, "output contains NUL".into()))?;
    if out.is_null() {
        return Err(Failure(FdStatus::NullArgument, "output pointer is null".into()));
    }
    out.write(c.into_raw());
    Ok(())
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> FfiResult<T> {
    serde_json::from_str(text).map_err(|e| Failure(FdStatus::InvalidJson, format!("{what}: {e}")))
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn fd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn fd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` is null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `preds` and `golds` point to `len` readable bytes; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn fd_confusion(
    preds: *const u8,
    golds: *const u8,
    len: usize,
    out: *mut FdConfusion,
) -> FdStatus {
    guard(|| {
        let c = metrics::confusion(&read_labels(preds, len, "preds")?, &read_labels(golds, len, "golds")?)
            .map_err(metrics_failure)?;
        write_out(out, FdConfusion { tp: c.tp, fp: c.fp, tn: c.tn, fn_: c.fn_ })
    })
}

/// Balanced accuracy in `[0, 1]`.
///
/// # Safety
/// As for [`fd_confusion`].
#[no_mangle]
pub unsafe extern "C" fn fd_balanced_accuracy(
    preds: *const u8,
    golds: *const u8,
    len: usize,
    out: *mut f64,
) -> FdStatus {
    guard(|| {
        let c = metrics::confusion(&read_labels(preds, len, "preds")?, &read_labels(golds, len, "golds")?)
            .map_err(metrics_failure)?;
        write_out(out, metrics::balanced_accuracy(&c).map_err(metrics_failure)?)
    })
}

/// Nominal two-rater Krippendorff's alpha.
///
/// # Safety
/// `a` and `b` point to `len` readable bytes; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn fd_krippendorff_alpha(a: *const u8, b: *const u8, len: usize, out: *mut f64) -> FdStatus {
    guard(|| {
        let alpha = metrics::krippendorff_alpha(&read_labels(a, len, "a")?, &read_labels(b, len, "b")?)
            .map_err(metrics_failure)?;
        write_out(out, alpha)
    })
}

/// Parses an agent response into an argument, returned as JSON.
///
/// # Safety
/// `text` is a NUL-terminated string; `out_json` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn fd_parse_argument(
    text: *const c_char,
    agent_id: u32,
    round: u32,
    out_json: *mut *mut c_char,
) -> FdStatus {
    guard(|| {
        let arg = parse_argument(read_str(text, "text")?, agent_id, round)
            .map_err(|e| Failure(FdStatus::ParseFailure, e.to_string()))?;
        write_string(out_json, serde_json::to_string(&arg).expect("json"))
    })
}

/// The ambiguity taxonomy as JSON.
///
/// # Safety
/// `out_json` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn fd_taxonomy_json(out_json: *mut *mut c_char) -> FdStatus {
    guard(|| write_string(out_json, AmbiguityTaxonomy::builtin().to_json()))
}

/// The curated guideline set as JSON.
///
/// # Safety
/// `out_json` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn fd_default_guidelines_json(out_json: *mut *mut c_char) -> FdStatus {
    guard(|| write_string(out_json, default_guidelines().to_json()))
}

/// # Safety
/// `config_json` is null or a NUL-terminated string.
unsafe fn engine_config(config_json: *const c_char) -> FfiResult<DebateConfig> {
    if config_json.is_null() {
        return Ok(DebateConfig::default());
    }
    parse_json(read_str(config_json, "config_json")?, "debate config")
}

fn into_handle(gateway: Gateway, config: DebateConfig, out: *mut *mut FdEngine) -> FfiResult<()> {
    let engine =
        DebateEngine::new(gateway, default_guidelines(), config, EngineOptions::default()).map_err(debate_failure)?;
    // SAFETY: callers pass `out` straight from the C caller, who guarantees validity.
    unsafe { write_out(out, Box::into_raw(Box::new(FdEngine { engine }))) }
}

/// Engine over a scripted backend. `spec_json` uses the scripted spec format;
/// `config_json` is a debate config or null for the defaults.
///
/// # Safety
/// String arguments are NUL-terminated or null where allowed; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn fd_engine_new_scripted(
    spec_json: *const c_char,
    config_json: *const c_char,
    out: *mut *mut FdEngine,
) -> FdStatus {
    guard(|| {
        let spec = ScriptedBackendSpec::from_json(read_str(spec_json, "spec_json")?)
            .map_err(|e| Failure(FdStatus::InvalidJson, format!("scripted spec: {e}")))?;
        let gateway = Gateway::new(Arc::new(ScriptedBackend::new(spec)), Arc::new(RunLog::in_memory("ffi")))
            .with_retry(RetryPolicy::no_delay(0));
        into_handle(gateway, engine_config(config_json)?, out)
    })
}

/// Engine over an HTTP chat-completions backend. `http_json` holds
/// `base_url`, `model` and optionally `timeout_s`. A null `api_key` reads the
/// key from the environment; a missing key fails with `AuthError`.
///
/// # Safety
/// String arguments are NUL-terminated or null where allowed; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn fd_engine_new_http(
    http_json: *const c_char,
    api_key: *const c_char,
    config_json: *const c_char,
    out: *mut *mut FdEngine,
) -> FdStatus {
    guard(|| {
        let http: HttpBackendConfig = parse_json(read_str(http_json, "http_json")?, "http config")?;
        let backend = if api_key.is_null() {
            HttpBackend::from_env(http)
        } else {
            HttpBackend::new(http, read_str(api_key, "api_key")?.to_string())
        }
        .map_err(gateway_failure)?;
        let gateway = Gateway::new(Arc::new(backend), Arc::new(RunLog::in_memory("ffi")));
        into_handle(gateway, engine_config(config_json)?, out)
    })
}

/// Runs all sessions for one record (JSON in the canonical record format) and
/// returns `{"outcome": ..., "transcripts": [...]}` as JSON.
///
/// # Safety
/// `engine` is a live handle; `record_json` is NUL-terminated; `out_json` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn fd_engine_evaluate(
    engine: *const FdEngine,
    record_json: *const c_char,
    out_json: *mut *mut c_char,
) -> FdStatus {
    guard(|| {
        let engine = engine.as_ref().ok_or_else(|| Failure(FdStatus::NullArgument, "engine is null".into()))?;
        let record: EvaluationRecord = parse_json(read_str(record_json, "record_json")?, "record")?;
        record.validate().map_err(|e| Failure(FdStatus::InvalidJson, e.to_string()))?;
        let run = engine.engine.run_simultaneous(&record).map_err(debate_failure)?;
        write_string(out_json, serde_json::to_string(&run).expect("json"))
    })
}

/// # Safety
/// `engine` is null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn fd_engine_free(engine: *mut FdEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}
