//! C ABI over `mrpred-core`.
//!
//! Every fallible function returns an [`MrpredStatus`] and writes results
//! through out-pointers. On failure a message is stored for the calling
//! thread and can be fetched with [`mrpred_last_error_message`].
//!
//! Objects are opaque handles created by `*_parse`, `*_fit` or `*_load`
//! and released with the matching `*_free`. Strings returned to the caller
//! are released with [`mrpred_string_free`].
//!
//! Matrices are passed row-major as `rows * cols` doubles. Labels are
//! bytes holding 0 or 1.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mrpred_core::cfg::{self, ControlFlowGraph, LabelMap};
use mrpred_core::corpus::{self, Dataset, Mr};
use mrpred_core::error::Error;
use mrpred_core::eval::{self, EvalConfig};
use mrpred_core::featurize;
use mrpred_core::labelprop::{self, LabelPropModel, LabelPropParams};
use mrpred_core::numerics::{self, DenseMatrix};
use mrpred_core::svm::{self, SvmModel, SvmParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrpredStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    DataError = 4,
    IoError = 5,
    Panic = 6,
}

/// Parsed and validated control-flow graph.
pub struct MrpredGraph {
    graph: ControlFlowGraph,
}

pub struct MrpredSvm {
    model: SvmModel,
}

pub struct MrpredLabelProp {
    model: LabelPropModel,
}

/// Loaded corpus: feature matrix plus the six label columns.
pub struct MrpredDataset {
    dataset: Dataset,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrpredTTest {
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    /// Zero spread with a nonzero mean difference; t is infinite.
    pub degenerate: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(MrpredStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Parse { .. } | Error::EmptyGraph | Error::InvalidGraph(_) => MrpredStatus::ParseError,
            Error::InvalidParameter(_) | Error::DimensionMismatch { .. } | Error::InvalidLabel { .. } => {
                MrpredStatus::InvalidArgument
            }
            Error::Io { .. } => MrpredStatus::IoError,
            _ => MrpredStatus::DataError,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MrpredStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(MrpredStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MrpredStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MrpredStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MrpredStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn matrix_arg(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<DenseMatrix, Failure> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| invalid(format!("{what}: {rows} x {cols} overflows")))?;
    Ok(DenseMatrix::from_flat(rows, cols, slice_arg(p, len, what)?.to_vec())?)
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(MrpredStatus::DataError, "output contains a NUL byte".into()))
}

/// Library version as a static NUL-terminated string. Do not free.
#[no_mangle]
pub extern "C" fn mrpred_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the calling thread's last error message, or NULL if there is
/// none. Free with `mrpred_string_free`.
#[no_mangle]
pub extern "C" fn mrpred_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |m| m.clone().into_raw()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mrpred_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Graphs

/// Parses and validates a DOT digraph. Graphs with validation errors are
/// rejected with `MRPRED_STATUS_PARSE_ERROR`.
///
/// # Safety
/// `dot` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mrpred_graph_parse(dot: *const c_char, out: *mut *mut MrpredGraph) -> MrpredStatus {
    guard(|| {
        let text = str_arg(dot, "dot")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (graph, _) = cfg::load_graph(text, &LabelMap::default())?;
        write_out(out, Box::into_raw(Box::new(MrpredGraph { graph })), "out")
    })
}

/// # Safety
/// `graph` must be NULL or a handle from `mrpred_graph_parse`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mrpred_graph_free(graph: *mut MrpredGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mrpred_graph_node_count(graph: *const MrpredGraph, out: *mut usize) -> MrpredStatus {
    guard(|| {
        let g = graph.as_ref().ok_or_else(|| null("graph"))?;
        write_out(out, g.graph.node_count(), "out")
    })
}

/// Node and path features as `feature<TAB>count` lines in feature order.
/// Free the result with `mrpred_string_free`.
///
/// # Safety
/// `graph` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mrpred_graph_features(graph: *const MrpredGraph, out: *mut *mut c_char) -> MrpredStatus {
    guard(|| {
        let g = graph.as_ref().ok_or_else(|| null("graph"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut text = String::new();
        for (feature, count) in featurize::extract(&g.graph).iter() {
            let _ = writeln!(text, "{feature}\t{count}");
        }
        write_out(out, into_c_string(text)?, "out")
    })
}

// ---------------------------------------------------------------------------
// Transformations

/// Applies the named relation's input transformation (`"addition"`,
/// `"multiplication"`, `"permutation"`, `"inclusion"`, `"exclusion"`,
/// `"inversion"`). `c` is ignored where the relation has no constant.
/// `out` must hold `len + 1` values; the written length goes to `out_len`.
///
/// # Safety
/// `input` must point to `len` doubles, `out` to `out_capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn mrpred_transform(
    mr: *const c_char,
    input: *const f64,
    len: usize,
    c: f64,
    out: *mut f64,
    out_capacity: usize,
    out_len: *mut usize,
) -> MrpredStatus {
    guard(|| {
        let mr: Mr = str_arg(mr, "mr")?.parse()?;
        let values = slice_arg(input, len, "input")?;
        let result = corpus::apply_mr_transform(mr, values, c)?;
        if result.len() > out_capacity {
            return Err(invalid(format!("output needs {} values, capacity is {out_capacity}", result.len())));
        }
        if !result.is_empty() {
            if out.is_null() {
                return Err(null("out"));
            }
            ptr::copy_nonoverlapping(result.as_ptr(), out, result.len());
        }
        write_out(out_len, result.len(), "out_len")
    })
}

// ---------------------------------------------------------------------------
// SVM

/// Fits a linear SVM (1000 epochs at most, tolerance 1e-4).
///
/// # Safety
/// `x` must point to `rows * cols` doubles, `y` to `rows` bytes.
#[no_mangle]
pub unsafe extern "C" fn mrpred_svm_fit(
    x: *const f64,
    rows: usize,
    cols: usize,
    y: *const u8,
    c: f64,
    seed: u64,
    out: *mut *mut MrpredSvm,
) -> MrpredStatus {
    guard(|| {
        let x = matrix_arg(x, rows, cols, "x")?;
        let y = slice_arg(y, rows, "y")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let params = SvmParams {
            c,
            seed,
            ..SvmParams::default()
        };
        let model = svm::fit(&x, y, &params)?;
        write_out(out, Box::into_raw(Box::new(MrpredSvm { model })), "out")
    })
}

/// Writes one label per row of `x` into `out`.
///
/// # Safety
/// `model` must be a live handle, `x` must point to `rows * cols` doubles
/// and `out` to `rows` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mrpred_svm_predict(
    model: *const MrpredSvm,
    x: *const f64,
    rows: usize,
    cols: usize,
    out: *mut u8,
) -> MrpredStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let labels = m.model.predict(&matrix_arg(x, rows, cols, "x")?)?;
        copy_labels(&labels, out)
    })
}

/// # Safety
/// `model` must be NULL or a handle from `mrpred_svm_fit`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mrpred_svm_free(model: *mut MrpredSvm) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn copy_labels(labels: &[u8], out: *mut u8) -> Result<(), Failure> {
    if labels.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("out"));
    }
    ptr::copy_nonoverlapping(labels.as_ptr(), out, labels.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// Label propagation

/// Fits label propagation with a kNN kernel. `x_unlabeled` may be NULL when
/// `unlabeled_rows` is 0.
///
/// # Safety
/// `x_labeled` must point to `labeled_rows * cols` doubles, `y_labeled` to
/// `labeled_rows` bytes, `x_unlabeled` to `unlabeled_rows * cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn mrpred_labelprop_fit(
    x_labeled: *const f64,
    labeled_rows: usize,
    y_labeled: *const u8,
    x_unlabeled: *const f64,
    unlabeled_rows: usize,
    cols: usize,
    n_neighbors: usize,
    max_iter: usize,
    tol: f64,
    out: *mut *mut MrpredLabelProp,
) -> MrpredStatus {
    guard(|| {
        let xl = matrix_arg(x_labeled, labeled_rows, cols, "x_labeled")?;
        let yl = slice_arg(y_labeled, labeled_rows, "y_labeled")?;
        let xu = matrix_arg(x_unlabeled, unlabeled_rows, cols, "x_unlabeled")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let model = labelprop::fit(&xl, yl, &xu, &LabelPropParams::knn(n_neighbors, max_iter, tol))?;
        write_out(out, Box::into_raw(Box::new(MrpredLabelProp { model })), "out")
    })
}

/// # Safety
/// Same contract as `mrpred_svm_predict`.
#[no_mangle]
pub unsafe extern "C" fn mrpred_labelprop_predict(
    model: *const MrpredLabelProp,
    x: *const f64,
    rows: usize,
    cols: usize,
    out: *mut u8,
) -> MrpredStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let labels = m.model.predict(&matrix_arg(x, rows, cols, "x")?)?;
        copy_labels(&labels, out)
    })
}

/// # Safety
/// `model` must be NULL or a handle from `mrpred_labelprop_fit`, not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn mrpred_labelprop_free(model: *mut MrpredLabelProp) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ---------------------------------------------------------------------------
// Statistics

/// Two-tailed paired t-test on `a - b`.
///
/// # Safety
/// `a` and `b` must each point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mrpred_paired_t_test(
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut MrpredTTest,
) -> MrpredStatus {
    guard(|| {
        let r = numerics::paired_t_test(slice_arg(a, len, "a")?, slice_arg(b, len, "b")?)?;
        write_out(
            out,
            MrpredTTest {
                t_statistic: r.t_statistic,
                degrees_of_freedom: r.degrees_of_freedom,
                p_value: r.p_value,
                degenerate: r.degenerate,
            },
            "out",
        )
    })
}

// ---------------------------------------------------------------------------
// Corpora

/// Loads `<dot_dir>/<method_id>.dot` for every row of `labels_csv`.
///
/// # Safety
/// Both paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mrpred_corpus_load(
    dot_dir: *const c_char,
    labels_csv: *const c_char,
    out: *mut *mut MrpredDataset,
) -> MrpredStatus {
    guard(|| {
        let dir = str_arg(dot_dir, "dot_dir")?;
        let labels = str_arg(labels_csv, "labels_csv")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (dataset, _) = corpus::load_corpus(Path::new(dir), Path::new(labels), &LabelMap::default())?;
        write_out(out, Box::into_raw(Box::new(MrpredDataset { dataset })), "out")
    })
}

/// # Safety
/// `dataset` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mrpred_dataset_len(dataset: *const MrpredDataset, out: *mut usize) -> MrpredStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        write_out(out, d.dataset.len(), "out")
    })
}

/// # Safety
/// `dataset` must be NULL or a handle from `mrpred_corpus_load`, not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn mrpred_dataset_free(dataset: *mut MrpredDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Runs the SVM versus label propagation comparison on all six relations
/// with default settings and writes the JSON report to `out`. Free it with
/// `mrpred_string_free`.
///
/// # Safety
/// `dataset` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mrpred_compare(
    dataset: *const MrpredDataset,
    seed: u64,
    repeats: usize,
    out: *mut *mut c_char,
) -> MrpredStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if repeats == 0 {
            return Err(invalid("repeats must be positive"));
        }
        let cfg = EvalConfig {
            seed,
            repeats,
            ..EvalConfig::default()
        };
        let json = eval::compare_all(&d.dataset, &cfg)?.to_json()?;
        write_out(out, into_c_string(json)?, "out")
    })
}
