//! C ABI over the `aitwin` runtime.
//!
//! Handles are opaque and owned by the caller, who frees them with the
//! matching `*_free` function. Every fallible call returns an
//! [`AitwinStatus`]; on failure, [`aitwin_last_error`] describes the error
//! for the calling thread. Missing vector entries are passed as NaN in both
//! directions.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use aitwin::causality::CausalityError;
use aitwin::data_model::{DataError, Sample, SignalVector};
use aitwin::prediction::{FailureAssignment, PredictionError, PredictionResult, Session};
use aitwin::simulator::{Scenario, ScenarioError};
use aitwin::{Twin, TwinError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AitwinStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    NotFitted = 4,
    OutOfRange = 5,
    SchemaMismatch = 6,
    UnknownName = 7,
    NotComputable = 8,
    BufferTooSmall = 9,
    Io = 10,
    Panic = 99,
}

/// A plant twin: data store, components, fitted model and causal model.
pub struct AitwinTwin(Twin);

/// A prediction session with its own failure assignment.
pub struct AitwinSession(Session);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(AitwinStatus, String);

type Outcome<T = ()> = Result<T, Failure>;

fn fail<T>(status: AitwinStatus, message: impl Into<String>) -> Outcome<T> {
    Err(Failure(status, message.into()))
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        let status = match e {
            DataError::IndexOutOfRange { .. } | DataError::TimeOutOfRange { .. } | DataError::EmptyStore => {
                AitwinStatus::OutOfRange
            }
            DataError::SchemaMismatch(_) => AitwinStatus::SchemaMismatch,
            DataError::Csv { .. } => AitwinStatus::Parse,
            DataError::Io(_) => AitwinStatus::Io,
            _ => AitwinStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<PredictionError> for Failure {
    fn from(e: PredictionError) -> Self {
        let status = match e {
            PredictionError::NotFitted => AitwinStatus::NotFitted,
            PredictionError::SchemaMismatch(_) => AitwinStatus::SchemaMismatch,
            PredictionError::UnknownComponent(_)
            | PredictionError::UnknownMode { .. }
            | PredictionError::UnknownBackend(_) => AitwinStatus::UnknownName,
            PredictionError::NotComputable => AitwinStatus::NotComputable,
            _ => AitwinStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<CausalityError> for Failure {
    fn from(e: CausalityError) -> Self {
        let status = match e {
            CausalityError::Parse { .. } => AitwinStatus::Parse,
            CausalityError::DimensionMismatch { .. } => AitwinStatus::SchemaMismatch,
            CausalityError::DanglingReference(_)
            | CausalityError::UnknownConcept(_)
            | CausalityError::UnknownProduct(_) => AitwinStatus::UnknownName,
            _ => AitwinStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let status = match e {
            ScenarioError::Parse { .. } => AitwinStatus::Parse,
            ScenarioError::Invalid(_) => AitwinStatus::InvalidArgument,
            ScenarioError::Io(_) => AitwinStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

impl From<TwinError> for Failure {
    fn from(e: TwinError) -> Self {
        match e {
            TwinError::Data(e) => e.into(),
            TwinError::Prediction(e) => e.into(),
            TwinError::Causality(e) => e.into(),
            TwinError::Scenario(e) => e.into(),
            TwinError::Diagnosis(e) => Failure(AitwinStatus::InvalidArgument, e.to_string()),
        }
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Outcome) -> AitwinStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AitwinStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            AitwinStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Outcome<&'a T> {
    match p.as_ref() {
        Some(r) => Ok(r),
        None => fail(AitwinStatus::NullPointer, format!("{what} is null")),
    }
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Outcome<&'a mut T> {
    match p.as_mut() {
        Some(r) => Ok(r),
        None => fail(AitwinStatus::NullPointer, format!("{what} is null")),
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Outcome<&'a str> {
    if p.is_null() {
        return fail(AitwinStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p).to_str().or_else(|_| fail(AitwinStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Outcome<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(AitwinStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Outcome<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(AitwinStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Outcome {
    if out.is_null() {
        return fail(AitwinStatus::NullPointer, format!("{what} is null"));
    }
    out.write(value);
    Ok(())
}

fn nan_to_missing(x: &[f64]) -> SignalVector {
    SignalVector(x.iter().map(|v| (!v.is_nan()).then_some(*v)).collect())
}

fn expect_len(got: usize, n: usize, what: &str) -> Outcome {
    if got != n {
        return fail(AitwinStatus::SchemaMismatch, format!("{what} has {got} entries, the twin has {n} signals"));
    }
    Ok(())
}

/// Row-major `rows × cols` values with one timestamp per row.
unsafe fn window(times: *const f64, values: *const f64, rows: usize, cols: usize) -> Outcome<Vec<Sample>> {
    let times = slice(times, rows, "times")?;
    let values = slice(values, rows * cols, "values")?;
    times
        .iter()
        .zip(values.chunks(cols.max(1)))
        .map(|(&t, row)| Sample::new(t, row.to_vec()).map_err(Failure::from))
        .collect()
}

unsafe fn write_prediction(r: &PredictionResult, out_x: *mut f64, out_p: *mut f64, len: usize) -> Outcome {
    expect_len(len, r.x.len(), "output buffer")?;
    let xs = slice_mut(out_x, len, "out_x")?;
    for (o, v) in xs.iter_mut().zip(&r.x.0) {
        *o = v.unwrap_or(f64::NAN);
    }
    if !out_p.is_null() {
        for (o, p) in std::slice::from_raw_parts_mut(out_p, len).iter_mut().zip(&r.p) {
            *o = p.unwrap_or(f64::NAN);
        }
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn aitwin_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aitwin_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Simulates the scenario in TOML `scenario` and wraps its plant and data in a twin.
///
/// # Safety
/// `scenario` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aitwin_twin_from_scenario(scenario: *const c_char, out: *mut *mut AitwinTwin) -> AitwinStatus {
    guard(|| {
        let sc = Scenario::parse(text(scenario, "scenario")?)?;
        let twin = Twin::from_scenario(&sc)?;
        write(out, Box::into_raw(Box::new(AitwinTwin(twin))), "out")
    })
}

/// Like [`aitwin_twin_from_scenario`], reading the scenario from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aitwin_twin_from_scenario_file(
    path: *const c_char,
    out: *mut *mut AitwinTwin,
) -> AitwinStatus {
    guard(|| {
        let sc = Scenario::load(text(path, "path")?)?;
        let twin = Twin::from_scenario(&sc)?;
        write(out, Box::into_raw(Box::new(AitwinTwin(twin))), "out")
    })
}

/// # Safety
/// `twin` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn aitwin_twin_free(twin: *mut AitwinTwin) {
    if !twin.is_null() {
        drop(Box::from_raw(twin));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn aitwin_twin_signal_count(twin: *const AitwinTwin, out: *mut usize) -> AitwinStatus {
    guard(|| write(out, deref(twin, "twin")?.0.schema().len(), "out"))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn aitwin_twin_component_count(twin: *const AitwinTwin, out: *mut usize) -> AitwinStatus {
    guard(|| write(out, deref(twin, "twin")?.0.get_comps().len(), "out"))
}

/// First and last stored timestamps.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn aitwin_twin_time_range(
    twin: *const AitwinTwin,
    first: *mut f64,
    last: *mut f64,
) -> AitwinStatus {
    guard(|| {
        let (a, b) = deref(twin, "twin")?.0.time_range()?;
        write(first, a.secs(), "first")?;
        write(last, b.secs(), "last")
    })
}

/// Signal `index` at time `t`, interpolated between stored samples.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn aitwin_twin_get_data(
    twin: *const AitwinTwin,
    index: usize,
    t: f64,
    out: *mut f64,
) -> AitwinStatus {
    guard(|| write(out, deref(twin, "twin")?.0.get_data(index, t)?, "out"))
}

/// All signals at time `t` into `out[0..len]`; `len` must equal the signal count.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aitwin_twin_get_data_all(
    twin: *const AitwinTwin,
    t: f64,
    out: *mut f64,
    len: usize,
) -> AitwinStatus {
    guard(|| {
        let v = deref(twin, "twin")?.0.get_data_all(t)?;
        expect_len(len, v.len(), "out")?;
        for (o, x) in slice_mut(out, len, "out")?.iter_mut().zip(&v.0) {
            *o = x.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Appends a sample; `t` must be after the last stored timestamp.
///
/// # Safety
/// `values` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aitwin_twin_ingest(
    twin: *const AitwinTwin,
    t: f64,
    values: *const f64,
    len: usize,
) -> AitwinStatus {
    guard(|| {
        let twin = deref(twin, "twin")?;
        let x = slice(values, len, "values")?.to_vec();
        Ok(twin.0.ingest(Sample::new(t, x)?)?)
    })
}

/// Fits `backend` ("knn-kde" or "physics") on the stored samples before `until`.
/// Sessions created afterwards use the new model.
///
/// # Safety
/// `backend` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn aitwin_twin_fit(twin: *mut AitwinTwin, backend: *const c_char, until: f64) -> AitwinStatus {
    guard(|| {
        let twin = deref_mut(twin, "twin")?;
        let history = twin.0.store().slice(f64::NEG_INFINITY, until).to_vec();
        Ok(twin.0.fit_named(text(backend, "backend")?, &history)?)
    })
}

/// Defines an event from text such as `"t0_level > 0.9"` and returns its id.
///
/// # Safety
/// Strings must be NUL-terminated; `id` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aitwin_twin_define_event(
    twin: *mut AitwinTwin,
    halfspace: *const c_char,
    name: *const c_char,
    id: *mut u32,
) -> AitwinStatus {
    guard(|| {
        let twin = deref_mut(twin, "twin")?;
        let e = twin.0.causal_mut().define_event_str(text(halfspace, "halfspace")?, text(name, "name")?)?;
        write(id, e.0, "id")
    })
}

/// Defines a concept from `&`-separated inequalities and returns its id.
///
/// # Safety
/// Strings must be NUL-terminated; `id` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aitwin_twin_define_concept(
    twin: *mut AitwinTwin,
    region: *const c_char,
    name: *const c_char,
    id: *mut u32,
) -> AitwinStatus {
    guard(|| {
        let twin = deref_mut(twin, "twin")?;
        let c = twin.0.causal_mut().define_concept_str(text(region, "region")?, text(name, "name")?)?;
        write(id, c.0, "id")
    })
}

unsafe fn write_ids(ids: impl ExactSizeIterator<Item = u32>, out: *mut u32, cap: usize, count: *mut usize) -> Outcome {
    let n = ids.len();
    write(count, n, "count")?;
    if n > cap {
        return fail(AitwinStatus::BufferTooSmall, format!("{n} ids do not fit in {cap}"));
    }
    for (o, id) in slice_mut(out, n, "out")?.iter_mut().zip(ids) {
        *o = id;
    }
    Ok(())
}

/// Events whose boundary lies between `x` and `x2`. `*count` is always set;
/// the ids are written when they fit in `cap`.
///
/// # Safety
/// `x` and `x2` must hold `len` doubles, `out` `cap` ids.
#[no_mangle]
pub unsafe extern "C" fn aitwin_twin_get_event(
    twin: *const AitwinTwin,
    x: *const f64,
    x2: *const f64,
    len: usize,
    out: *mut u32,
    cap: usize,
    count: *mut usize,
) -> AitwinStatus {
    guard(|| {
        let twin = deref(twin, "twin")?;
        let a = nan_to_missing(slice(x, len, "x")?);
        let b = nan_to_missing(slice(x2, len, "x2")?);
        let ids = twin.0.get_event(&a, &b)?;
        write_ids(ids.into_iter().map(|e| e.0), out, cap, count)
    })
}

/// Concepts containing `x`, with the same buffer protocol as [`aitwin_twin_get_event`].
///
/// # Safety
/// `x` must hold `len` doubles, `out` `cap` ids.
#[no_mangle]
pub unsafe extern "C" fn aitwin_twin_get_concepts(
    twin: *const AitwinTwin,
    x: *const f64,
    len: usize,
    out: *mut u32,
    cap: usize,
    count: *mut usize,
) -> AitwinStatus {
    guard(|| {
        let twin = deref(twin, "twin")?;
        let ids = twin.0.get_concepts(&nan_to_missing(slice(x, len, "x")?))?;
        write_ids(ids.into_iter().map(|c| c.0), out, cap, count)
    })
}

/// A session over the twin's current model, with no failures assigned.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn aitwin_session_new(twin: *const AitwinTwin, out: *mut *mut AitwinSession) -> AitwinStatus {
    guard(|| {
        let session = deref(twin, "twin")?.0.session();
        write(out, Box::into_raw(Box::new(AitwinSession(session))), "out")
    })
}

/// # Safety
/// `session` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn aitwin_session_free(session: *mut AitwinSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Adds `component` in failure mode `mode` to the session's assignment.
///
/// # Safety
/// Strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn aitwin_session_set_failed(
    session: *mut AitwinSession,
    component: *const c_char,
    mode: *const c_char,
) -> AitwinStatus {
    guard(|| {
        let s = deref_mut(session, "session")?;
        let mut fa = FailureAssignment::new();
        for (c, m) in s.0.failures().iter() {
            fa = fa.with(c, m);
        }
        fa = fa.with(text(component, "component")?, text(mode, "mode")?);
        Ok(s.0.set_failed_comps(fa)?)
    })
}

/// Restores the all-OK assignment.
///
/// # Safety
/// `session` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aitwin_session_clear_failed(session: *mut AitwinSession) -> AitwinStatus {
    guard(|| Ok(deref_mut(session, "session")?.0.set_failed_comps(FailureAssignment::new())?))
}

/// Completes `partial` (NaN = missing) into `out_x`; `out_p` may be null.
///
/// # Safety
/// `partial`, `out_x` and a non-null `out_p` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aitwin_session_extrapolate_static(
    session: *const AitwinSession,
    partial: *const f64,
    len: usize,
    out_x: *mut f64,
    out_p: *mut f64,
) -> AitwinStatus {
    guard(|| {
        let s = deref(session, "session")?;
        let r = s.0.extrapolate_static(&nan_to_missing(slice(partial, len, "partial")?))?;
        write_prediction(&r, out_x, out_p, len)
    })
}

/// Predicts the sample `horizon` seconds after the last row of the window.
/// `values` is row-major, `rows × len`.
///
/// # Safety
/// `times` must hold `rows` doubles, `values` `rows × len`, outputs `len`.
#[no_mangle]
pub unsafe extern "C" fn aitwin_session_extrapolate_dynamic(
    session: *const AitwinSession,
    times: *const f64,
    values: *const f64,
    rows: usize,
    len: usize,
    horizon: f64,
    out_x: *mut f64,
    out_p: *mut f64,
) -> AitwinStatus {
    guard(|| {
        let s = deref(session, "session")?;
        let r = s.0.extrapolate_dynamic(&window(times, values, rows, len)?, horizon)?;
        write_prediction(&r, out_x, out_p, len)
    })
}

/// Static anomaly score in `[0, 1]` of a complete vector; low means anomalous.
///
/// # Safety
/// `x` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aitwin_session_anomaly_score_static(
    session: *const AitwinSession,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> AitwinStatus {
    guard(|| {
        let s = deref(session, "session")?;
        write(out, s.0.anomaly_score_static(slice(x, len, "x")?)?, "out")
    })
}

/// Dynamic anomaly score of the window's last row given the rows before it.
///
/// # Safety
/// `times` must hold `rows` doubles and `values` `rows × len`.
#[no_mangle]
pub unsafe extern "C" fn aitwin_session_anomaly_score_dynamic(
    session: *const AitwinSession,
    times: *const f64,
    values: *const f64,
    rows: usize,
    len: usize,
    out: *mut f64,
) -> AitwinStatus {
    guard(|| {
        let s = deref(session, "session")?;
        write(out, s.0.anomaly_score_dynamic(&window(times, values, rows, len)?)?, "out")
    })
}

/// ROC AUC of `scores` against `anomalous` (nonzero = anomalous, low score =
/// anomalous). Fails with `InvalidArgument` unless both classes occur.
///
/// # Safety
/// Both arrays must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn aitwin_auc(
    scores: *const f64,
    anomalous: *const u8,
    len: usize,
    out: *mut f64,
) -> AitwinStatus {
    guard(|| {
        let scored: Vec<(f64, bool)> = slice(scores, len, "scores")?
            .iter()
            .zip(slice(anomalous, len, "anomalous")?)
            .map(|(&s, &a)| (s, a != 0))
            .collect();
        match aitwin::harness::auc(&scored) {
            Some(a) => write(out, a, "out"),
            None => fail(AitwinStatus::InvalidArgument, "AUC needs both anomalous and normal points"),
        }
    })
}
