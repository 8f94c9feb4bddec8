//! C ABI over `netrecon`.
//!
//! Handles are opaque pointers created by `nr_*_new`/`nr_*_parse`/`nr_sample` and released by
//! the matching `nr_*_free`. Every fallible call returns an [`NrStatus`]; on failure the message
//! is available from [`nr_last_error_message`] on the same thread until the next failing call.
//! Output arrays are caller-allocated, with their length passed alongside.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use netrecon::data::{parse_observations, DataFormat, ObservationMatrix, Pair};
use netrecon::error::Error;
use netrecon::gof::ppc_pvalue;
use netrecon::models::{Model, ModelSpec};
use netrecon::network::{edge_posterior, marginal_edge_probabilities};
use netrecon::sampler::{log_marginal_posterior, sample_parameters, PosteriorDraws, SamplerSettings};

/// Result of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrStatus {
    Ok = 0,
    Parse = 1,
    Domain = 2,
    Shape = 3,
    Unsupported = 4,
    Model = 5,
    Config = 6,
    DegenerateLikelihood = 7,
    Sampler = 8,
    Io = 9,
    NullPointer = 10,
    InvalidArgument = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

impl From<&Error> for NrStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => NrStatus::Parse,
            Error::Domain(_) => NrStatus::Domain,
            Error::Shape(_) => NrStatus::Shape,
            Error::Unsupported(_) => NrStatus::Unsupported,
            Error::Model(_) => NrStatus::Model,
            Error::Config(_) => NrStatus::Config,
            Error::DegenerateLikelihood(..) => NrStatus::DegenerateLikelihood,
            Error::Sampler(_) => NrStatus::Sampler,
            Error::Io { .. } => NrStatus::Io,
        }
    }
}

/// Parsed pair measurements.
pub struct NrData {
    obs: ObservationMatrix,
}

/// A model bound to the node set of an `NrData`.
pub struct NrModel {
    model: Model,
    names: Vec<CString>,
}

/// Posterior parameter draws.
pub struct NrDraws {
    draws: PosteriorDraws,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Fail(NrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(NrStatus::from(&e), e.to_string())
    }
}

type FfiResult<T = ()> = Result<T, Fail>;

fn guard(f: impl FnOnce() -> FfiResult) -> NrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NrStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NrStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(NrStatus::NullPointer, format!("{what} is null"))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(NrStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, needed: usize, what: &str) -> FfiResult<&'a mut [f64]> {
    if len < needed {
        return Err(Fail(
            NrStatus::BufferTooSmall,
            format!("{what} holds {len} values, {needed} needed"),
        ));
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> FfiResult {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the most recent failure on this thread; empty if none. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn nr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses `label_i,label_j,count[,reverse][,trials]` text (comma or whitespace delimited).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nr_data_parse(text: *const c_char, directed: bool, trials: bool, out: *mut *mut NrData) -> NrStatus {
    guard(|| {
        let format = DataFormat {
            directed,
            trials,
            ..Default::default()
        };
        let obs = parse_observations(c_str(text, "text")?, format)?;
        store(out, NrData { obs })
    })
}

/// # Safety
/// `data` must be null or a handle from [`nr_data_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nr_data_free(data: *mut NrData) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Number of nodes; 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nr_data_node_count(data: *const NrData) -> usize {
    data.as_ref().map_or(0, |d| d.obs.n())
}

/// Builds a model from a JSON specification, e.g. `{"data":"poisson","edge_types":3}`.
///
/// # Safety
/// `spec_json` must be NUL-terminated; `data` a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nr_model_new(spec_json: *const c_char, data: *const NrData, out: *mut *mut NrModel) -> NrStatus {
    guard(|| {
        let spec: ModelSpec = serde_json::from_str(c_str(spec_json, "spec_json")?)
            .map_err(|e| Fail(NrStatus::Config, format!("model spec: {e}")))?;
        let data = handle(data, "data")?;
        let model = Model::new(spec, data.obs.nodes())?;
        let names = model
            .layout()
            .names()
            .into_iter()
            .map(|n| CString::new(n).unwrap_or_default())
            .collect();
        store(out, NrModel { model, names })
    })
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nr_model_free(model: *mut NrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Length of the flat parameter vector; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nr_model_param_count(model: *const NrModel) -> usize {
    model.as_ref().map_or(0, |m| m.names.len())
}

/// Name of parameter `index`, owned by the model; null when out of range.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nr_model_param_name(model: *const NrModel, index: usize) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.names.get(index))
        .map_or(ptr::null(), |n| n.as_ptr())
}

fn theta(m: &NrModel, values: &[f64]) -> FfiResult<netrecon::models::ParameterVector> {
    Ok(m.model.parameters(values.to_vec())?)
}

/// `log P(theta) + Σ_pairs log Σ_k mu nu`; `-inf` outside the domain.
///
/// # Safety
/// Handles must be live; `theta` must point to `len` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nr_log_marginal_posterior(
    model: *const NrModel,
    data: *const NrData,
    theta: *const f64,
    len: usize,
    out: *mut f64,
) -> NrStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let d = handle(data, "data")?;
        let values = input(theta, len, "theta")?;
        let t = netrecon::models::ParameterVector::new_unchecked(m.model.layout().clone(), values.to_vec())?;
        let v = log_marginal_posterior(&m.model, &d.obs, &t)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = v;
        Ok(())
    })
}

/// `Q_ij(k | theta)` for `k = 0..K-1` into `out` (length >= K).
///
/// # Safety
/// Handles must be live; `theta` must point to `len` values; `out` to `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn nr_edge_posterior(
    model: *const NrModel,
    data: *const NrData,
    theta_values: *const f64,
    len: usize,
    i: usize,
    j: usize,
    out: *mut f64,
    out_len: usize,
) -> NrStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let d = handle(data, "data")?;
        if i == j || i.max(j) >= d.obs.n() {
            return Err(Fail(NrStatus::InvalidArgument, format!("invalid pair ({i}, {j})")));
        }
        let t = theta(m, input(theta_values, len, "theta")?)?;
        let q = edge_posterior(&m.model, &t, &d.obs, Pair::new(i, j))?;
        output(out, out_len, q.len(), "out")?.copy_from_slice(&q);
        Ok(())
    })
}

/// Samples parameters. `settings_json` may be null for defaults, e.g. `{"chains":2,"seed":7}`.
///
/// # Safety
/// Handles must be live; `settings_json` null or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nr_sample(
    model: *const NrModel,
    data: *const NrData,
    settings_json: *const c_char,
    out: *mut *mut NrDraws,
) -> NrStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let d = handle(data, "data")?;
        let settings: SamplerSettings = if settings_json.is_null() {
            SamplerSettings::default()
        } else {
            serde_json::from_str(c_str(settings_json, "settings_json")?)
                .map_err(|e| Fail(NrStatus::Config, format!("sampler settings: {e}")))?
        };
        let draws = sample_parameters(&m.model, &d.obs, &settings)?;
        store(out, NrDraws { draws })
    })
}

/// # Safety
/// `draws` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nr_draws_free(draws: *mut NrDraws) {
    if !draws.is_null() {
        drop(Box::from_raw(draws));
    }
}

/// Number of retained draws over all chains; 0 for a null handle.
///
/// # Safety
/// `draws` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nr_draws_len(draws: *const NrDraws) -> usize {
    draws.as_ref().map_or(0, |d| d.draws.len())
}

/// Parameter values of draw `index` (chain-major order).
///
/// # Safety
/// `draws` must be live; `out` must point to `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn nr_draws_values(draws: *const NrDraws, index: usize, out: *mut f64, out_len: usize) -> NrStatus {
    guard(|| {
        let d = handle(draws, "draws")?;
        let draw = d
            .draws
            .draws()
            .get(index)
            .ok_or_else(|| Fail(NrStatus::InvalidArgument, format!("draw {index} out of range")))?;
        output(out, out_len, draw.values.len(), "out")?.copy_from_slice(&draw.values);
        Ok(())
    })
}

/// Posterior mean of every parameter.
///
/// # Safety
/// `draws` must be live; `out` must point to `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn nr_draws_mean(draws: *const NrDraws, out: *mut f64, out_len: usize) -> NrStatus {
    guard(|| {
        let d = handle(draws, "draws")?;
        let mean = d.draws.mean();
        output(out, out_len, mean.len(), "out")?.copy_from_slice(&mean);
        Ok(())
    })
}

/// Posterior edge-type probabilities: `n(n-1)/2 * K` values, pairs in row-major order.
///
/// # Safety
/// Handles must be live; `out` must point to `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn nr_edge_probabilities(
    model: *const NrModel,
    data: *const NrData,
    draws: *const NrDraws,
    out: *mut f64,
    out_len: usize,
) -> NrStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let d = handle(data, "data")?;
        let dr = handle(draws, "draws")?;
        let table = marginal_edge_probabilities(&m.model, &dr.draws, &d.obs)?;
        let k = table.edge_types();
        let needed = netrecon::data::pair_count(d.obs.n()) * k;
        let out = output(out, out_len, needed, "out")?;
        for ((_, row), slot) in table.rows().zip(out.chunks_mut(k)) {
            slot.copy_from_slice(row);
        }
        Ok(())
    })
}

/// Posterior-predictive p-value and R². `r_squared` is NaN for constant data.
///
/// # Safety
/// Handles must be live; `p_value` and `r_squared` writable.
#[no_mangle]
pub unsafe extern "C" fn nr_ppc(
    model: *const NrModel,
    data: *const NrData,
    draws: *const NrDraws,
    seed: u64,
    p_value: *mut f64,
    r_squared: *mut f64,
) -> NrStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let d = handle(data, "data")?;
        let dr = handle(draws, "draws")?;
        if p_value.is_null() || r_squared.is_null() {
            return Err(null("output"));
        }
        let report = ppc_pvalue(&m.model, &d.obs, &dr.draws, seed)?;
        *p_value = report.p_value;
        *r_squared = report.r_squared.unwrap_or(f64::NAN);
        Ok(())
    })
}
