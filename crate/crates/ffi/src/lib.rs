//! C ABI over the `fedrob` crate.
//!
//! Conventions:
//! - every fallible function returns a [`FedrobStatus`] and writes results
//!   through out-pointers;
//! - on failure, [`fedrob_last_error`] returns a message for the calling
//!   thread, valid until the next failing call on that thread;
//! - client panels are passed as row-major `n * k` arrays of doubles;
//! - datasets and models are opaque handles released with their `_free`
//!   function.
//!
//! Panics never cross the boundary; they are reported as
//! [`FedrobStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fedrob::aggregators::{self, AggregatorKind};
use fedrob::harness::{self, SyntheticSpec};
use fedrob::nn::{checkpoint, DeepSetModel, Pooling};
use fedrob::simplex::{self, Margin, ProbitPanel, SystemParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FedrobStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Runtime = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Static aggregation rules exposed over the ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FedrobRule {
    Mean = 0,
    Cwtm = 1,
    Cwmed = 2,
    Gm = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FedrobCertificate {
    /// Gap between the two largest coordinates of the mean probit.
    /// Undefined when `margin_infinite` is set.
    pub margin: f64,
    /// All coordinates of the mean probit are equal.
    pub margin_infinite: bool,
    pub sigma_x: f64,
    pub kappa: f64,
    pub bound: f64,
    pub certified: bool,
    pub degenerate: bool,
}

/// Opaque dataset handle.
pub struct FedrobDataset {
    inner: harness::Dataset,
}

/// Opaque DeepSet model handle.
pub struct FedrobModel {
    inner: DeepSetModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(FedrobStatus, String);

impl From<fedrob::Error> for Failure {
    fn from(e: fedrob::Error) -> Self {
        let status = match &e {
            fedrob::Error::Io(_) => FedrobStatus::Io,
            e if e.is_validation() => FedrobStatus::InvalidArgument,
            _ => FedrobStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: FedrobStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> FedrobStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FedrobStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            FedrobStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(FedrobStatus::NullPointer, format!("{what} is null")))
}

unsafe fn in_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(FedrobStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Err(fail(FedrobStatus::InvalidArgument, format!("{what} is empty")));
    }
    if p.is_null() {
        return Err(fail(FedrobStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn read_rows(p: *const f64, n: usize, k: usize) -> Result<Vec<Vec<f64>>, Failure> {
    let len = n
        .checked_mul(k)
        .ok_or_else(|| fail(FedrobStatus::InvalidArgument, "n * k overflows"))?;
    let flat = slice(p, len, "rows")?;
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(fedrob::Error::NonFinite("rows").into());
    }
    let rows: Vec<Vec<f64>> = flat.chunks(k).map(<[f64]>::to_vec).collect();
    simplex::validate_rows(&rows)?;
    Ok(rows)
}

unsafe fn read_path(p: *const c_char) -> Result<PathBuf, Failure> {
    let s = in_ref(p, "path").map(|_| CStr::from_ptr(p))?;
    let s = s
        .to_str()
        .map_err(|_| fail(FedrobStatus::InvalidArgument, "path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn write_out(src: &[f64], out: *mut f64, out_len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(FedrobStatus::NullPointer, "out is null"));
    }
    if out_len < src.len() {
        return Err(fail(
            FedrobStatus::BufferTooSmall,
            format!("output buffer holds {out_len} values, {} needed", src.len()),
        ));
    }
    // SAFETY: caller guarantees `out` points to `out_len` writable doubles.
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), out, src.len()) };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fedrob_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn fedrob_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Gap between the two largest coordinates of a probit vector of length `k`.
///
/// # Safety
/// `v` must point to `k` readable doubles; `out` and `infinite` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fedrob_margin(
    v: *const f64,
    k: usize,
    out: *mut f64,
    infinite: *mut bool,
) -> FedrobStatus {
    guard(|| {
        let v = slice(v, k, "v")?;
        let (out, infinite) = (out_ref(out, "out")?, out_ref(infinite, "infinite")?);
        match simplex::margin(v)? {
            Margin::Finite(m) => {
                *out = m;
                *infinite = false;
            }
            Margin::Infinite => {
                *out = f64::INFINITY;
                *infinite = true;
            }
        }
        Ok(())
    })
}

/// Model dissimilarity of an `n x k` panel.
///
/// # Safety
/// `rows` must point to `n * k` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fedrob_dissimilarity(
    rows: *const f64,
    n: usize,
    k: usize,
    out: *mut f64,
) -> FedrobStatus {
    guard(|| {
        let panel = ProbitPanel::new("ffi", 0, read_rows(rows, n, k)?)?;
        *out_ref(out, "out")? = simplex::model_dissimilarity(&panel);
        Ok(())
    })
}

/// Robustness coefficient of the coordinate-wise trimmed mean.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fedrob_kappa(n: usize, f: usize, out: *mut f64) -> FedrobStatus {
    guard(|| {
        *out_ref(out, "out")? = aggregators::kappa_cwtm(n, f)?;
        Ok(())
    })
}

/// Applies a static rule to an `n x k` panel and writes `k` values to `out`.
/// `f` is the trimming parameter and is ignored by the other rules.
///
/// # Safety
/// `rows` must point to `n * k` readable doubles; `out` to `out_len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fedrob_aggregate(
    rule: FedrobRule,
    rows: *const f64,
    n: usize,
    k: usize,
    f: usize,
    out: *mut f64,
    out_len: usize,
) -> FedrobStatus {
    guard(|| {
        let rows = read_rows(rows, n, k)?;
        let kind = match rule {
            FedrobRule::Mean => AggregatorKind::Mean,
            FedrobRule::Cwtm => AggregatorKind::Cwtm,
            FedrobRule::Cwmed => AggregatorKind::CwMed,
            FedrobRule::Gm => AggregatorKind::Gm,
        };
        write_out(&aggregators::static_output(&kind, &rows, f)?, out, out_len)
    })
}

/// Margin certificate of an `n x k` panel against `f` adversarial clients.
///
/// # Safety
/// `rows` must point to `n * k` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fedrob_certify(
    rows: *const f64,
    n: usize,
    k: usize,
    f: usize,
    out: *mut FedrobCertificate,
) -> FedrobStatus {
    guard(|| {
        let panel = ProbitPanel::new("ffi", 0, read_rows(rows, n, k)?)?;
        let out = out_ref(out, "out")?;
        let c = aggregators::certify(&panel, &SystemParams::new(n, f, k)?)?;
        *out = FedrobCertificate {
            margin: c.margin.value(),
            margin_infinite: c.margin.is_infinite(),
            sigma_x: c.sigma_x,
            kappa: c.kappa,
            bound: c.bound,
            certified: c.certified,
            degenerate: c.degenerate,
        };
        Ok(())
    })
}

/// Generates a synthetic dataset; the other generator settings keep their
/// defaults.
///
/// # Safety
/// `out` must be writable. The handle must be released with
/// [`fedrob_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn fedrob_dataset_generate(
    n: usize,
    classes: usize,
    alpha: f64,
    samples: usize,
    seed: u64,
    out: *mut *mut FedrobDataset,
) -> FedrobStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let data = harness::generate_synthetic(&SyntheticSpec {
            n,
            classes,
            alpha,
            samples,
            seed,
            ..Default::default()
        })?;
        *out = Box::into_raw(Box::new(FedrobDataset { inner: data.dataset }));
        Ok(())
    })
}

/// Reads a dataset file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fedrob_dataset_load(
    path: *const c_char,
    out: *mut *mut FedrobDataset,
) -> FedrobStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let ingested = harness::ingest_panels(&read_path(path)?)?;
        *out = Box::into_raw(Box::new(FedrobDataset { inner: ingested.dataset }));
        Ok(())
    })
}

/// Writes a dataset file.
///
/// # Safety
/// `dataset` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fedrob_dataset_save(
    dataset: *const FedrobDataset,
    path: *const c_char,
) -> FedrobStatus {
    guard(|| {
        let ds = in_ref(dataset, "dataset")?;
        harness::write_dataset(&ds.inner, &read_path(path)?)?;
        Ok(())
    })
}

/// Number of panels, clients per panel and classes.
///
/// # Safety
/// `dataset` must be a live handle; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn fedrob_dataset_shape(
    dataset: *const FedrobDataset,
    panels: *mut usize,
    n: *mut usize,
    classes: *mut usize,
) -> FedrobStatus {
    guard(|| {
        let ds = &in_ref(dataset, "dataset")?.inner;
        *out_ref(panels, "panels")? = ds.panels.len();
        *out_ref(n, "n")? = ds.n;
        *out_ref(classes, "classes")? = ds.classes;
        Ok(())
    })
}

/// Copies panel `index` into `rows` (row-major, `n * classes` values) and
/// its label into `label`.
///
/// # Safety
/// `dataset` must be a live handle; `rows` must point to `rows_len`
/// writable doubles; `label` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fedrob_dataset_panel(
    dataset: *const FedrobDataset,
    index: usize,
    rows: *mut f64,
    rows_len: usize,
    label: *mut usize,
) -> FedrobStatus {
    guard(|| {
        let ds = &in_ref(dataset, "dataset")?.inner;
        let panel = ds.panels.get(index).ok_or_else(|| {
            fail(
                FedrobStatus::InvalidArgument,
                format!("panel {index} out of range ({} panels)", ds.panels.len()),
            )
        })?;
        let label = out_ref(label, "label")?;
        let flat: Vec<f64> = panel.rows().concat();
        write_out(&flat, rows, rows_len)?;
        *label = panel.label;
        Ok(())
    })
}

/// Releases a dataset handle. Null is ignored.
///
/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fedrob_dataset_free(dataset: *mut FedrobDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Reads a DeepSet checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable. The
/// handle must be released with [`fedrob_model_free`].
#[no_mangle]
pub unsafe extern "C" fn fedrob_model_load(
    path: *const c_char,
    out: *mut *mut FedrobModel,
) -> FedrobStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let model = checkpoint::load(&read_path(path)?)?;
        *out = Box::into_raw(Box::new(FedrobModel { inner: model }));
        Ok(())
    })
}

/// Number of classes the model was built for.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fedrob_model_classes(
    model: *const FedrobModel,
    out: *mut usize,
) -> FedrobStatus {
    guard(|| {
        *out_ref(out, "out")? = in_ref(model, "model")?.inner.architecture().classes;
        Ok(())
    })
}

/// Classifies an `n x k` panel with the DeepSet model. With `trimmed` set,
/// pooling trims `f` values per side (DeepSet-TM); otherwise it averages.
/// `probs` may be null; otherwise it receives the `k` output probabilities.
///
/// # Safety
/// `model` must be a live handle; `rows` must point to `n * k` readable
/// doubles; `class_out` must be writable; `probs`, if non-null, must point to
/// `probs_len` writable doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn fedrob_model_classify(
    model: *const FedrobModel,
    rows: *const f64,
    n: usize,
    k: usize,
    f: usize,
    trimmed: bool,
    class_out: *mut usize,
    probs: *mut f64,
    probs_len: usize,
) -> FedrobStatus {
    guard(|| {
        let model = &in_ref(model, "model")?.inner;
        let rows = read_rows(rows, n, k)?;
        let class_out = out_ref(class_out, "class_out")?;
        let pooling = if trimmed { Pooling::TrimmedMean(f) } else { Pooling::Mean };
        let p = model.forward(&rows, pooling)?.probs;
        if !probs.is_null() {
            write_out(&p, probs, probs_len)?;
        }
        *class_out = simplex::argmax(&p);
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fedrob_model_free(model: *mut FedrobModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
