//! C ABI over the core toolkit: opaque handles for token datasets and trained
//! models, integer status codes, and a thread-local last-error message.
//!
//! Every fallible call returns a [`rugwarn_status`]; on any status other than
//! OK a human-readable message is available from [`rugwarn_last_error`] on
//! the same thread. Handles are created and released exclusively through this
//! interface and must not be shared across threads without external locking.

#![allow(non_camel_case_types)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rugwarn::features::{compute_features, FEATURE_COUNT};
use rugwarn::ingest::{
    cap_window, group_by_token, merge_and_dedup, parse_csv, CsvSchema, IngestError, Label,
    QuantityMode, TokenDataset, DEFAULT_CAP,
};
use rugwarn::models::{ModelError, TrainedModel};
use rugwarn::patterns::{score_patterns, PatternParams};

/// Result of a fallible call; anything other than OK leaves a message in
/// `rugwarn_last_error`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum rugwarn_status {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The file could not be read or written.
    Io = 3,
    /// The file exists but its contents are malformed.
    Parse = 4,
    /// The computation rejected the inputs.
    Compute = 5,
}

/// Opaque handle to one token's ordered transfer records.
pub struct rugwarn_dataset {
    inner: TokenDataset,
}

/// Opaque handle to a trained classifier artifact.
pub struct rugwarn_model {
    inner: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: rugwarn_status, message: impl Into<String>) -> rugwarn_status {
    let message = message.into().replace('\0', " ");
    let cstring = CString::new(message).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = cstring);
    status
}

fn guarded(f: impl FnOnce() -> rugwarn_status) -> rugwarn_status {
    catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|_| fail(rugwarn_status::Compute, "internal panic"))
}

unsafe fn cstr_path<'a>(raw: *const c_char) -> Result<&'a Path, rugwarn_status> {
    if raw.is_null() {
        return Err(fail(rugwarn_status::NullArgument, "path is null"));
    }
    match CStr::from_ptr(raw).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => Err(fail(rugwarn_status::InvalidUtf8, "path is not valid UTF-8")),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rugwarn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on the calling thread; empty when none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rugwarn_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Opens one token's transfer CSV (canonical `token_address,tx_hash,from,to,
/// quantity,timestamp` header) and merges, dedups, orders, and caps its
/// records. `cap` 0 selects the default per-token cap. On success `*out` owns
/// the handle; release it with `rugwarn_dataset_free`.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to writable storage
/// for one pointer.
#[no_mangle]
pub unsafe extern "C" fn rugwarn_dataset_open(
    path: *const c_char,
    cap: usize,
    out: *mut *mut rugwarn_dataset,
) -> rugwarn_status {
    guarded(|| {
        if out.is_null() {
            return fail(rugwarn_status::NullArgument, "out is null");
        }
        let path = match cstr_path(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        let parsed = match parse_csv(path, &CsvSchema::default(), QuantityMode::Float) {
            Ok(parsed) => parsed,
            Err(e @ IngestError::Io { .. }) => return fail(rugwarn_status::Io, e.to_string()),
            Err(e) => return fail(rugwarn_status::Parse, e.to_string()),
        };
        let mut groups = group_by_token(parsed.records);
        if groups.len() != 1 {
            return fail(
                rugwarn_status::Parse,
                format!("expected one token per file, found {}", groups.len()),
            );
        }
        let (token_address, records) = groups.pop_first().expect("one group");
        let cap = if cap == 0 { DEFAULT_CAP } else { cap };
        let records = cap_window(merge_and_dedup(vec![records]), cap);
        let handle = rugwarn_dataset {
            inner: TokenDataset { token_address, records, label: Label::Unknown, cap },
        };
        *out = Box::into_raw(Box::new(handle));
        rugwarn_status::Ok
    })
}

/// Record count of the dataset; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle from `rugwarn_dataset_open`.
#[no_mangle]
pub unsafe extern "C" fn rugwarn_dataset_len(dataset: *const rugwarn_dataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.records.len())
}

/// Computes the base risk features in canonical order into `out[0..len)`;
/// `len` must equal the base feature count (12).
///
/// # Safety
/// `dataset` must be a live handle and `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rugwarn_dataset_features(
    dataset: *const rugwarn_dataset,
    out: *mut f64,
    len: usize,
) -> rugwarn_status {
    guarded(|| {
        let Some(ds) = dataset.as_ref() else {
            return fail(rugwarn_status::NullArgument, "dataset is null");
        };
        if out.is_null() {
            return fail(rugwarn_status::NullArgument, "out is null");
        }
        if len != FEATURE_COUNT {
            return fail(
                rugwarn_status::Compute,
                format!("feature buffer must hold {FEATURE_COUNT} values, got {len}"),
            );
        }
        match compute_features(&ds.inner.records) {
            Ok(vector) => {
                let values = vector.values();
                std::ptr::copy_nonoverlapping(values.as_ptr(), out, FEATURE_COUNT);
                rugwarn_status::Ok
            }
            Err(e) => fail(rugwarn_status::Compute, e.to_string()),
        }
    })
}

/// Scores the three wash-trading patterns of the dataset: self trades,
/// matched back-and-forth trades within the minute window, and bounded
/// simple-cycle trades.
///
/// # Safety
/// `dataset` must be a live handle; the three out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn rugwarn_dataset_pattern_scores(
    dataset: *const rugwarn_dataset,
    window_minutes: u32,
    max_cycle_len: usize,
    out_self: *mut f64,
    out_matched: *mut f64,
    out_circular: *mut f64,
) -> rugwarn_status {
    guarded(|| {
        let Some(ds) = dataset.as_ref() else {
            return fail(rugwarn_status::NullArgument, "dataset is null");
        };
        if out_self.is_null() || out_matched.is_null() || out_circular.is_null() {
            return fail(rugwarn_status::NullArgument, "score out pointer is null");
        }
        let params = PatternParams { window_minutes, max_cycle_len };
        match score_patterns(&ds.inner.records, &params) {
            Ok(scores) => {
                *out_self = scores.self_score;
                *out_matched = scores.matched_score;
                *out_circular = scores.circular_score;
                rugwarn_status::Ok
            }
            Err(e) => fail(rugwarn_status::Compute, e.to_string()),
        }
    })
}

/// Releases a dataset handle; a null pointer is ignored.
///
/// # Safety
/// `dataset` must be null or a live handle, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rugwarn_dataset_free(dataset: *mut rugwarn_dataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Loads a trained model artifact (JSON). On success `*out` owns the handle;
/// release it with `rugwarn_model_free`.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to writable storage
/// for one pointer.
#[no_mangle]
pub unsafe extern "C" fn rugwarn_model_load(
    path: *const c_char,
    out: *mut *mut rugwarn_model,
) -> rugwarn_status {
    guarded(|| {
        if out.is_null() {
            return fail(rugwarn_status::NullArgument, "out is null");
        }
        let path = match cstr_path(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match TrainedModel::load(path) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(rugwarn_model { inner }));
                rugwarn_status::Ok
            }
            Err(e @ ModelError::Io { .. }) => fail(rugwarn_status::Io, e.to_string()),
            Err(e) => fail(rugwarn_status::Parse, e.to_string()),
        }
    })
}

/// Number of feature values the model expects per row; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle from `rugwarn_model_load`.
#[no_mangle]
pub unsafe extern "C" fn rugwarn_model_feature_count(model: *const rugwarn_model) -> usize {
    model.as_ref().map_or(0, |m| m.inner.feature_columns.len())
}

/// Scores one feature row (in the model's column order) and writes the
/// positive-class probability to `out_score`.
///
/// # Safety
/// `model` must be a live handle, `features` readable for `len` doubles, and
/// `out_score` writable.
#[no_mangle]
pub unsafe extern "C" fn rugwarn_model_score(
    model: *const rugwarn_model,
    features: *const f64,
    len: usize,
    out_score: *mut f64,
) -> rugwarn_status {
    guarded(|| {
        let Some(m) = model.as_ref() else {
            return fail(rugwarn_status::NullArgument, "model is null");
        };
        if features.is_null() || out_score.is_null() {
            return fail(rugwarn_status::NullArgument, "features or out_score is null");
        }
        let expected = m.inner.feature_columns.len();
        if len != expected {
            return fail(
                rugwarn_status::Compute,
                format!("model expects {expected} features, got {len}"),
            );
        }
        let row = std::slice::from_raw_parts(features, len);
        if row.iter().any(|v| !v.is_finite()) {
            return fail(rugwarn_status::Compute, "feature values must be finite");
        }
        *out_score = m.inner.predict_row(row);
        rugwarn_status::Ok
    })
}

/// Extracts the dataset's features and scores them with the model in one
/// call. Fails when the model needs a column the base extractor does not
/// produce.
///
/// # Safety
/// `model` and `dataset` must be live handles and `out_score` writable.
#[no_mangle]
pub unsafe extern "C" fn rugwarn_model_score_dataset(
    model: *const rugwarn_model,
    dataset: *const rugwarn_dataset,
    out_score: *mut f64,
) -> rugwarn_status {
    guarded(|| {
        let Some(m) = model.as_ref() else {
            return fail(rugwarn_status::NullArgument, "model is null");
        };
        let Some(ds) = dataset.as_ref() else {
            return fail(rugwarn_status::NullArgument, "dataset is null");
        };
        if out_score.is_null() {
            return fail(rugwarn_status::NullArgument, "out_score is null");
        }
        let vector = match compute_features(&ds.inner.records) {
            Ok(v) => v,
            Err(e) => return fail(rugwarn_status::Compute, e.to_string()),
        };
        let mut row = Vec::with_capacity(m.inner.feature_columns.len());
        for column in &m.inner.feature_columns {
            match vector.value(column) {
                Some(v) => row.push(v),
                None => {
                    return fail(
                        rugwarn_status::Compute,
                        format!("model needs column {column:?} which this dataset does not provide"),
                    )
                }
            }
        }
        *out_score = m.inner.predict_row(&row);
        rugwarn_status::Ok
    })
}

/// Warning decision at the model's own threshold: 1 when `score` is strictly
/// above it, 0 otherwise, -1 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle from `rugwarn_model_load`.
#[no_mangle]
pub unsafe extern "C" fn rugwarn_model_warn(model: *const rugwarn_model, score: f64) -> i32 {
    match model.as_ref() {
        Some(m) => i32::from(m.inner.warn(score)),
        None => -1,
    }
}

/// Releases a model handle; a null pointer is ignored.
///
/// # Safety
/// `model` must be null or a live handle, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rugwarn_model_free(model: *mut rugwarn_model) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
