//! C ABI over the choicectx engine.
//!
//! Matrices are opaque `CcMatrix` handles. Every function returns a
//! `CcStatus`; on failure `cc_last_error_message` describes the error for the
//! calling thread. Strings returned through out-pointers are owned by the
//! caller and must be released with `cc_string_free`. Item lists are passed
//! as comma-separated ids.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, size_t};

use choicectx::learner::{fit_log, ChoiceLog};
use choicectx::reversal::{analyze, classify_outcome, OutcomeClass};
use choicectx::{parse_ids, Catalog, ChoiceSpace, Error, ItemId, UtilityMatrix};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    UnknownItem = 4,
    InvalidArgument = 5,
    DomainError = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcOutcome {
    Unchanged = 0,
    ReversalToPriorItem = 1,
    NewItemChosen = 2,
    OtherReversal = 3,
}

/// Opaque utility matrix.
pub struct CcMatrix {
    inner: UtilityMatrix,
}

struct Failure {
    status: CcStatus,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::UnknownItem(_) => CcStatus::UnknownItem,
            Error::Json(_) | Error::LogLine { .. } => CcStatus::ParseError,
            Error::Solver(_) | Error::Io(_) => CcStatus::DomainError,
            Error::SpacesNotNested | Error::PoolTooLarge { .. } => CcStatus::DomainError,
            _ => CcStatus::InvalidArgument,
        };
        Failure {
            status,
            message: e.to_string(),
        }
    }
}

impl Failure {
    fn null(what: &str) -> Self {
        Failure {
            status: CcStatus::NullPointer,
            message: format!("{what} is null"),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            CcStatus::Ok
        }
        Ok(Err(failure)) => {
            set_error(&failure.message);
            failure.status
        }
        Err(_) => {
            set_error("internal panic");
            CcStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure {
        status: CcStatus::InvalidUtf8,
        message: format!("{what} is not valid UTF-8"),
    })
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn optional_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

/// # Safety
/// `m` must be null or a handle from `cc_matrix_from_json`.
unsafe fn matrix<'a>(m: *const CcMatrix) -> Result<&'a UtilityMatrix, Failure> {
    m.as_ref()
        .map(|m| &m.inner)
        .ok_or_else(|| Failure::null("matrix"))
}

/// # Safety
/// `out` must be null or valid for writes.
unsafe fn emit_string(out: *mut *mut c_char, value: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("out"));
    }
    let c = CString::new(value).map_err(|_| Failure {
        status: CcStatus::DomainError,
        message: "output contains a NUL byte".into(),
    })?;
    *out = c.into_raw();
    Ok(())
}

fn space(csv: &str) -> Result<ChoiceSpace, Failure> {
    Ok(ChoiceSpace::parse(csv)?)
}

fn item(id: &str) -> Result<ItemId, Failure> {
    Ok(ItemId::new(id.trim())?)
}

/// Parses a matrix document `{"catalog": [...], "entries": [[...]]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cc_matrix_from_json(
    json: *const c_char,
    out: *mut *mut CcMatrix,
) -> CcStatus {
    guard(|| {
        let json = text(json, "json")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let inner = UtilityMatrix::from_json(json)?;
        *out = Box::into_raw(Box::new(CcMatrix { inner }));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cc_matrix_free(m: *mut CcMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cc_matrix_dimension(m: *const CcMatrix, out: *mut size_t) -> CcStatus {
    guard(|| {
        let m = matrix(m)?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        *out = m.dim();
        Ok(())
    })
}

/// Utility of `item` within the comma-separated `space`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cc_contextual_utility(
    m: *const CcMatrix,
    item_id: *const c_char,
    space_csv: *const c_char,
    out: *mut f64,
) -> CcStatus {
    guard(|| {
        let m = matrix(m)?;
        let id = item(text(item_id, "item")?)?;
        let s = space(text(space_csv, "space")?)?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        *out = m.contextual_utility(&id, &s)?;
        Ok(())
    })
}

/// Winning item id; free with `cc_string_free`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cc_best_choice(
    m: *const CcMatrix,
    space_csv: *const c_char,
    out: *mut *mut c_char,
) -> CcStatus {
    guard(|| {
        let m = matrix(m)?;
        let s = space(text(space_csv, "space")?)?;
        emit_string(out, m.best_choice(&s)?.to_string())
    })
}

/// `{"item": utility, ...}` in catalog order; free with `cc_string_free`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cc_utility_table_json(
    m: *const CcMatrix,
    space_csv: *const c_char,
    out: *mut *mut c_char,
) -> CcStatus {
    guard(|| {
        let m = matrix(m)?;
        let s = space(text(space_csv, "space")?)?;
        let table = m.utility_table(&s)?;
        emit_string(out, serde_json::to_string(&table).map_err(Error::from)?)
    })
}

/// Reversal analysis report as JSON. A null `base_csv` means
/// `{current, target}`; an empty `pool_csv` means no candidates.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cc_tipping_report_json(
    m: *const CcMatrix,
    current: *const c_char,
    target: *const c_char,
    base_csv: *const c_char,
    pool_csv: *const c_char,
    validate_full: bool,
    out: *mut *mut c_char,
) -> CcStatus {
    guard(|| {
        let m = matrix(m)?;
        let current = item(text(current, "current")?)?;
        let target = item(text(target, "target")?)?;
        let base = match optional_text(base_csv, "base")? {
            Some(csv) => space(csv)?,
            None => ChoiceSpace::new([current.clone(), target.clone()])?,
        };
        let pool = parse_ids(text(pool_csv, "pool")?)?;
        let report = analyze(m, &current, &target, &base, &pool, validate_full)?;
        emit_string(out, serde_json::to_string(&report).map_err(Error::from)?)
    })
}

/// Outcome class of moving between two nested spaces. `target` may be null.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cc_classify_outcome(
    m: *const CcMatrix,
    old_csv: *const c_char,
    new_csv: *const c_char,
    target: *const c_char,
    out: *mut CcOutcome,
) -> CcStatus {
    guard(|| {
        let m = matrix(m)?;
        let old = space(text(old_csv, "old space")?)?;
        let new = space(text(new_csv, "new space")?)?;
        let target = optional_text(target, "target")?.map(item).transpose()?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        *out = match classify_outcome(m, &old, &new, target.as_ref())? {
            OutcomeClass::Unchanged => CcOutcome::Unchanged,
            OutcomeClass::ReversalToPriorItem => CcOutcome::ReversalToPriorItem,
            OutcomeClass::NewItemChosen => CcOutcome::NewItemChosen,
            OutcomeClass::OtherReversal => CcOutcome::OtherReversal,
        };
        Ok(())
    })
}

/// Fits an estimate to a JSONL choice log with default learner settings and
/// writes the estimate JSON. `catalog_csv` may be null to infer the catalog.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cc_estimate_from_log(
    log_jsonl: *const c_char,
    catalog_csv: *const c_char,
    out: *mut *mut c_char,
) -> CcStatus {
    guard(|| {
        let log = ChoiceLog::read_jsonl("ffi", text(log_jsonl, "log")?.as_bytes())?;
        let catalog = match optional_text(catalog_csv, "catalog")? {
            Some(csv) => Catalog::new(parse_ids(csv)?)?,
            None => log.infer_catalog()?,
        };
        let estimate = fit_log(&log, &catalog, &Default::default())?;
        emit_string(out, estimate.to_json())
    })
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version; static storage.
#[no_mangle]
pub extern "C" fn cc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
