//! C ABI over `shortcut-core`.
//!
//! Conventions:
//! - Every fallible function returns an [`ScStatus`]; on failure the message is
//!   available from [`sc_last_error`] on the same thread.
//! - Objects are opaque handles created by `sc_*_load`/`sc_*_new` and released
//!   with the matching `sc_*_free`. Freeing NULL is a no-op.
//! - Structured results are returned as UTF-8 JSON strings owned by the caller
//!   and released with [`sc_string_free`].
//! - Handles are immutable after creation and may be shared across threads.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use shortcut_core::adapter::{self, ModelAdapter, ToyLexiconModel, ToyModelSpec};
use shortcut_core::corpus::{load_corpus, tokenize_corpus, Corpus, LabeledExample, SplitTag};
use shortcut_core::error::Error;
use shortcut_core::identify::Thresholds;
use shortcut_core::matchindex::{build_index, contains, MatchMode, TriggerIndex};
use shortcut_core::metrics::macro_f1;
use shortcut_core::pipeline::{self, RunConfig, StatsFile};
use shortcut_core::reduction::reduce;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    Io = 4,
    Load = 5,
    Config = 6,
    Contract = 7,
    Transport = 8,
    Protocol = 9,
    Panic = 10,
}

/// Toy lexicon classifier.
pub struct ScModel {
    inner: ToyLexiconModel,
}

/// Tokenized corpus with its trigger index.
pub struct ScCorpus {
    corpus: Corpus,
    index: TriggerIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(ScStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => ScStatus::Io,
            Error::Load(_) => ScStatus::Load,
            Error::Config(_) => ScStatus::Config,
            Error::Contract(_) => ScStatus::Contract,
            Error::Transport(_) => ScStatus::Transport,
            Error::Protocol(_) => ScStatus::Protocol,
            Error::Json(_) => ScStatus::InvalidJson,
        };
        Fail(status, e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(ScStatus::InvalidJson, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ScStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ScStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(ScStatus::NullArgument, format!("{what} is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(ScStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn json_out(value: &impl serde::Serialize, out: &mut *mut c_char) -> Result<(), Fail> {
    let s = serde_json::to_string(value)?;
    *out = CString::new(s).expect("JSON has no nul bytes").into_raw();
    Ok(())
}

fn mode(contiguous: bool) -> MatchMode {
    if contiguous {
        MatchMode::Contiguous
    } else {
        MatchMode::Subsequence
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string returned by this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn sc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a toy model from a JSON weights file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_model_load(path: *const c_char, out: *mut *mut ScModel) -> ScStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = ToyLexiconModel::load(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(ScModel { inner }));
        Ok(())
    })
}

/// Builds a toy model from the JSON text of a weights file.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_model_from_json(
    json: *const c_char,
    out: *mut *mut ScModel,
) -> ScStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let spec: ToyModelSpec = serde_json::from_str(str_arg(json, "json")?)?;
        let inner = ToyLexiconModel::from_spec(spec)?;
        *out = Box::into_raw(Box::new(ScModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a live handle from `sc_model_*`.
#[no_mangle]
pub unsafe extern "C" fn sc_model_free(model: *mut ScModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of labels, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_model_label_count(model: *const ScModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.label_count())
}

/// Predicts `text`. Writes the label and, if `out_json` is non-NULL, a
/// `{"label": .., "probabilities": [..]}` object.
///
/// # Safety
/// Pointers must be valid; `out_json` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn sc_model_predict(
    model: *const ScModel,
    text: *const c_char,
    out_label: *mut usize,
    out_json: *mut *mut c_char,
) -> ScStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let label = out_arg(out_label, "out_label")?;
        let tokens = m.inner.tokenize(str_arg(text, "text")?);
        let p = adapter::predict(&m.inner, &tokens)?;
        *label = p.label;
        if let Some(out) = out_json.as_mut() {
            json_out(&p, out)?;
        }
        Ok(())
    })
}

/// Runs input reduction on `text` with gold label `gold`, returning the
/// extraction result as JSON.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sc_model_reduce(
    model: *const ScModel,
    text: *const c_char,
    gold: usize,
    out_json: *mut *mut c_char,
) -> ScStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let out = out_arg(out_json, "out_json")?;
        let text = str_arg(text, "text")?;
        let example = LabeledExample {
            id: "0".into(),
            text: text.into(),
            tokens: m.inner.tokenize(text),
            gold_label: gold,
        };
        json_out(&reduce(&example, &m.inner)?, out)
    })
}

/// Loads a JSON-lines corpus, tokenizes it with `model` and indexes it.
/// `labels_json` is a JSON array of label names; `ood` selects the split tag.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sc_corpus_load(
    path: *const c_char,
    labels_json: *const c_char,
    ood: bool,
    model: *const ScModel,
    out: *mut *mut ScCorpus,
) -> ScStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m = ref_arg(model, "model")?;
        let labels: Vec<String> = serde_json::from_str(str_arg(labels_json, "labels_json")?)?;
        let tag = if ood { SplitTag::Ood } else { SplitTag::Iid };
        let raw = load_corpus(Path::new(str_arg(path, "path")?), &labels, tag)?;
        let (corpus, _) = tokenize_corpus(&raw, &m.inner)?;
        let index = build_index(&corpus)?;
        *out = Box::into_raw(Box::new(ScCorpus { corpus, index }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be NULL or a live handle from `sc_corpus_load`.
#[no_mangle]
pub unsafe extern "C" fn sc_corpus_free(corpus: *mut ScCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Number of examples, or 0 for NULL.
///
/// # Safety
/// `corpus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_corpus_len(corpus: *const ScCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.corpus.len())
}

/// Finds all examples containing the trigger (a JSON array of tokens).
/// Returns the match set as JSON.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sc_corpus_find(
    corpus: *const ScCorpus,
    trigger_json: *const c_char,
    contiguous: bool,
    out_json: *mut *mut c_char,
) -> ScStatus {
    guard(|| {
        let c = ref_arg(corpus, "corpus")?;
        let out = out_arg(out_json, "out_json")?;
        let trigger: Vec<String> = serde_json::from_str(str_arg(trigger_json, "trigger_json")?)?;
        json_out(&c.index.find_matches(&trigger, mode(contiguous))?, out)
    })
}

/// Containment test on JSON token arrays.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sc_contains(
    tokens_json: *const c_char,
    trigger_json: *const c_char,
    contiguous: bool,
    out: *mut bool,
) -> ScStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let tokens: Vec<String> = serde_json::from_str(str_arg(tokens_json, "tokens_json")?)?;
        let trigger: Vec<String> = serde_json::from_str(str_arg(trigger_json, "trigger_json")?)?;
        *out = contains(&tokens, &trigger, mode(contiguous));
        Ok(())
    })
}

/// Macro-F1 in percentage points over `n` prediction/gold pairs.
///
/// # Safety
/// `predictions` and `golds` must point to `n` readable values.
#[no_mangle]
pub unsafe extern "C" fn sc_macro_f1(
    predictions: *const usize,
    golds: *const usize,
    n: usize,
    label_count: usize,
    out: *mut f64,
) -> ScStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if n > 0 && (predictions.is_null() || golds.is_null()) {
            return Err(null("predictions or golds"));
        }
        let (p, g): (&[usize], &[usize]) = if n == 0 {
            (&[], &[])
        } else {
            (
                std::slice::from_raw_parts(predictions, n),
                std::slice::from_raw_parts(golds, n),
            )
        };
        *out = macro_f1(p, g, label_count)?;
        Ok(())
    })
}

/// Applies thresholds (JSON object; NULL for defaults) to the text of a
/// `stats.json` file and returns the report as JSON.
///
/// # Safety
/// `stats_json` must be valid; `thresholds_json` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn sc_identify(
    stats_json: *const c_char,
    thresholds_json: *const c_char,
    out_json: *mut *mut c_char,
) -> ScStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let stats: StatsFile = serde_json::from_str(str_arg(stats_json, "stats_json")?)?;
        let thresholds: Thresholds = if thresholds_json.is_null() {
            Thresholds::default()
        } else {
            serde_json::from_str(str_arg(thresholds_json, "thresholds_json")?)?
        };
        json_out(&pipeline::identify_stats(&stats, &thresholds)?, out)
    })
}

/// Runs mine, score and identify for a run config file, writing outputs to
/// its output directory, and returns the report as JSON.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sc_run_pipeline(
    config_path: *const c_char,
    out_json: *mut *mut c_char,
) -> ScStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let config = RunConfig::load(str_arg(config_path, "config_path")?)?;
        let session = pipeline::open_adapter(&config)?;
        json_out(&pipeline::run_all(&config, &session)?, out)
    })
}
