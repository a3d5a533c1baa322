//! C ABI over `searchrag-core`.
//!
//! Every fallible function returns an [`SrStatus`]. On failure a description
//! is stored per thread and can be fetched with [`sr_last_error_message`].
//! Strings handed out by this library must be released with
//! [`sr_string_free`]; pipelines with [`sr_pipeline_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use searchrag_core::harness::{parse_dataset, BackendSpec};
use searchrag_core::pipeline::{run_dataset, run_question, Backends};
use searchrag_core::prompts::PromptSet;
use searchrag_core::types::{RunConfig, TokenDistribution};
use searchrag_core::uncertainty::entropy_bits;
use searchrag_core::Error;
use serde::Deserialize;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration JSON or a run parameter was rejected.
    InvalidConfig = 3,
    /// The question or dataset input could not be parsed.
    InvalidInput = 4,
    /// The LLM or search backend failed in a way that aborted the call.
    Backend = 5,
    /// The search provider refused further queries; the run was aborted.
    QuotaAbort = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

/// Opaque pipeline handle.
pub struct SrPipeline {
    config: RunConfig,
    backends: Backends,
    prompts: PromptSet,
    label: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineConfig {
    backends: BackendSpec,
    /// Partial run configuration; missing keys take their defaults.
    #[serde(default)]
    run: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    parallelism: Option<usize>,
    #[serde(default)]
    prompt_dir: Option<PathBuf>,
    #[serde(default)]
    label: Option<String>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', "\\0")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(SrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::QuotaAbort(_) => SrStatus::QuotaAbort,
            Error::Config(_) | Error::Type(_) | Error::Prompt(_) => SrStatus::InvalidConfig,
            Error::Dataset(_) | Error::Json(_) => SrStatus::InvalidInput,
            _ => SrStatus::Backend,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SrStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal error: {msg}"));
            SrStatus::Internal
        }
    }
}

unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure(SrStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| Failure(SrStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn check_out<T>(out: *mut T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure(SrStatus::NullArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(SrStatus::Internal, "output contains a NUL byte".into()))
}

fn build_pipeline(json: &str) -> Result<SrPipeline, Failure> {
    let invalid = |e: String| Failure(SrStatus::InvalidConfig, e);
    let cfg: PipelineConfig = serde_json::from_str(json).map_err(|e| invalid(e.to_string()))?;
    let mut merged =
        serde_json::to_value(RunConfig::default()).map_err(|e| invalid(e.to_string()))?;
    merged
        .as_object_mut()
        .expect("RunConfig serializes to an object")
        .extend(cfg.run);
    let mut config: RunConfig =
        serde_json::from_value(merged).map_err(|e| invalid(format!("run: {e}")))?;
    if let Some(p) = cfg.parallelism {
        config.parallelism = p;
    }
    config.validate().map_err(|e| invalid(e.to_string()))?;
    let prompts = match &cfg.prompt_dir {
        Some(dir) => PromptSet::from_dir(dir).map_err(|e| invalid(e.to_string()))?,
        None => PromptSet::builtin(),
    };
    let backends = cfg.backends.build()?;
    let label = cfg
        .label
        .unwrap_or_else(|| config.mode.as_str().to_string());
    Ok(SrPipeline {
        config,
        backends,
        prompts,
        label,
    })
}

/// Creates a pipeline from a JSON configuration.
///
/// The object has a required `backends` member (`llm`, `search`,
/// `cache_dir`, `corpus`, `corpus_top_n`) and optional `run`,
/// `parallelism`, `prompt_dir` and `label` members.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sr_pipeline_new(
    config_json: *const c_char,
    out: *mut *mut SrPipeline,
) -> SrStatus {
    guard(|| {
        check_out(out, "out")?;
        *out = std::ptr::null_mut();
        let json = read_str(config_json, "config_json")?;
        let pipeline = build_pipeline(json)?;
        *out = Box::into_raw(Box::new(pipeline));
        Ok(())
    })
}

/// Releases a pipeline. Null is ignored.
///
/// # Safety
/// `pipeline` must come from [`sr_pipeline_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sr_pipeline_free(pipeline: *mut SrPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Runs one question given as a single dataset line and writes the full
/// trace as JSON to `out_json`.
///
/// # Safety
/// All pointers must be valid; `out_json` receives a string to be released
/// with [`sr_string_free`].
#[no_mangle]
pub unsafe extern "C" fn sr_pipeline_run_question(
    pipeline: *const SrPipeline,
    question_json: *const c_char,
    out_json: *mut *mut c_char,
) -> SrStatus {
    guard(|| {
        check_out(out_json, "out_json")?;
        *out_json = std::ptr::null_mut();
        let p = pipeline
            .as_ref()
            .ok_or_else(|| Failure(SrStatus::NullArgument, "pipeline is null".into()))?;
        let line = read_str(question_json, "question_json")?;
        let mut qs = parse_dataset(line).map_err(Error::from)?;
        if qs.len() != 1 {
            return Err(Failure(
                SrStatus::InvalidInput,
                format!("expected one question, got {}", qs.len()),
            ));
        }
        let trace = run_question(&qs.remove(0), &p.config, &p.backends, &p.prompts)?;
        *out_json = to_c_string(serde_json::to_string(&trace).map_err(Error::from)?)?;
        Ok(())
    })
}

/// Runs a JSONL dataset and writes the run report as JSON to `out_json`.
///
/// # Safety
/// All pointers must be valid; `out_json` receives a string to be released
/// with [`sr_string_free`].
#[no_mangle]
pub unsafe extern "C" fn sr_pipeline_run_dataset(
    pipeline: *const SrPipeline,
    dataset_jsonl: *const c_char,
    out_json: *mut *mut c_char,
) -> SrStatus {
    guard(|| {
        check_out(out_json, "out_json")?;
        *out_json = std::ptr::null_mut();
        let p = pipeline
            .as_ref()
            .ok_or_else(|| Failure(SrStatus::NullArgument, "pipeline is null".into()))?;
        let text = read_str(dataset_jsonl, "dataset_jsonl")?;
        let questions = parse_dataset(text).map_err(Error::from)?;
        let mut outcome = run_dataset(&questions, &p.config, &p.backends, &p.prompts)?;
        outcome.report.label = p.label.clone();
        *out_json =
            to_c_string(serde_json::to_string_pretty(&outcome.report).map_err(Error::from)?)?;
        Ok(())
    })
}

/// Entropy in bits of `len` probabilities plus a residual bucket.
///
/// # Safety
/// `probs` must point to `len` readable doubles (may be null when `len` is 0)
/// and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sr_entropy_bits(
    probs: *const f64,
    len: usize,
    residual: f64,
    out: *mut f64,
) -> SrStatus {
    guard(|| {
        check_out(out, "out")?;
        let slice = match (probs.is_null(), len) {
            (_, 0) => &[][..],
            (true, _) => return Err(Failure(SrStatus::NullArgument, "probs is null".into())),
            (false, n) => std::slice::from_raw_parts(probs, n),
        };
        let entries = slice
            .iter()
            .enumerate()
            .map(|(i, p)| (format!("b{i}"), *p))
            .collect();
        let dist = TokenDistribution::new(entries, residual)
            .map_err(|e| Failure(SrStatus::InvalidInput, e.to_string()))?;
        *out = entropy_bits(&dist);
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The last error recorded on the calling thread, or null if the most recent
/// call succeeded. Valid until the next call into this library on the thread.
#[no_mangle]
pub extern "C" fn sr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
