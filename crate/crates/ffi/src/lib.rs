//! C ABI over the `listcombine` library.
//!
//! Conventions:
//!
//! * Every fallible function returns an [`LcStatus`] and writes results
//!   through out-pointers, which are left untouched on failure.
//! * On failure a message is stored per thread and can be read with
//!   [`lc_last_error_message`] until the next failing call on that thread.
//! * Datasets are opaque [`LcDataset`] handles created by the `lc_dataset_*`
//!   constructors and released with [`lc_dataset_free`].
//! * Panics never cross the boundary; they surface as
//!   `LC_STATUS_INTERNAL_ERROR`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use listcombine::data::{summarize_cells, validate, CellSummary, Dataset, ListDesign, RawRecord};
use listcombine::estimators::{
    combined_estimate_with, direct_estimate, standard_list_estimate, variance_reduction, Diagnostic,
    EstimateReport, VarianceForm,
};
use listcombine::io::{group_records, infer_j_items, load_csv, ColumnMapping};
use listcombine::numeric::{two_prop_power_with, PowerOptions, Probability};
use listcombine::placebo::{fisher_combine, placebo_test_one, placebo_test_two, PlaceboReport};
use listcombine::simulation::{
    generate_dataset, identification_oracle, power_test_one_grid, DgpParams, GridAxis, GridSpec, SamplingMode,
    Violation,
};
use listcombine::Error;

/// Sentinel for a missing value in the integer input arrays.
pub const LC_MISSING: i32 = i32::MIN;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument is outside its documented domain.
    InvalidArgument = 2,
    /// The data cannot support the requested computation (empty or
    /// degenerate cells, every record excluded, ...).
    DataError = 3,
    /// A file could not be read or parsed.
    IoError = 4,
    /// A bug in the library; the message carries the panic payload.
    InternalError = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcMethod {
    Direct = 0,
    StandardList = 1,
    CombinedList = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcViolation {
    FalseConfessor = 0,
    Liar = 1,
    DesignAffected = 2,
}

/// Bits of [`LcEstimate::diagnostics`] and [`LcPlacebo::diagnostics`].
pub const LC_DIAG_ESTIMATE_OUTSIDE_UNIT_INTERVAL: u32 = 1 << 0;
pub const LC_DIAG_CI_OUTSIDE_UNIT_INTERVAL: u32 = 1 << 1;
pub const LC_DIAG_DEGENERATE_CELL: u32 = 1 << 2;
pub const LC_DIAG_DIRECT_AT_BOUNDARY: u32 = 1 << 3;
pub const LC_DIAG_P_VALUE_FLOORED: u32 = 1 << 4;
pub const LC_DIAG_SMALL_SAMPLE: u32 = 1 << 5;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_used: usize,
    pub diagnostics: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcPlacebo {
    /// beta for Test I, delta for Test II.
    pub statistic: f64,
    pub std_error: f64,
    pub p_value: f64,
    pub null_value: f64,
    pub n_used: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub diagnostics: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcFisher {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
}

/// Data-generating process parameters. Shares are fractions of the
/// "Yes"-answering stratum. `yes_count < 0` draws every respondent
/// independently; otherwise exactly `yes_count` respondents answer "Yes".
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcSimParams {
    pub mu: f64,
    pub p_truthful: f64,
    pub gamma: f64,
    pub j_items: u32,
    pub w_success: f64,
    pub share_false_confessors: f64,
    pub share_liars: f64,
    pub share_design_affected: f64,
    pub n: usize,
    pub yes_count: i64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcPowerCell {
    pub n_yes: usize,
    pub share_or_wsuccess: f64,
    pub replicates: u32,
    pub power: f64,
    pub seed: u64,
}

/// A validated dataset with its cell summary.
pub struct LcDataset {
    dataset: Dataset,
    cells: CellSummary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(LcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io(_) | Error::MissingColumn(_) | Error::UnparseableCell { .. } | Error::EmptyFile => {
                LcStatus::IoError
            }
            Error::InvalidProbability(_)
            | Error::OutOfDomain(_)
            | Error::InvalidParams(_)
            | Error::InvalidGrid(_)
            | Error::DesignInvalid(_)
            | Error::MethodMismatch(_)
            | Error::ZeroPValue(_) => LcStatus::InvalidArgument,
            _ => LcStatus::DataError,
        };
        Fail(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(LcStatus::InvalidArgument, msg.into())
}

fn null(name: &str) -> Fail {
    Fail(LcStatus::NullPointer, format!("`{name}` is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LcStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            LcStatus::InternalError
        }
    }
}

fn probability(name: &str, v: f64) -> Result<Probability, Fail> {
    Probability::new(v).map_err(|_| invalid(format!("{name} must lie in [0, 1], got {v}")))
}

fn alpha(v: f64) -> Result<Probability, Fail> {
    let a = probability("alpha", v)?;
    if a.is_interior() {
        Ok(a)
    } else {
        Err(invalid(format!("alpha must lie strictly between 0 and 1, got {v}")))
    }
}

/// Writes `value` through `out`, which must be non-null.
unsafe fn write_out<T>(out: *mut T, name: &str, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn dataset_ref<'a>(ds: *const LcDataset) -> Result<&'a LcDataset, Fail> {
    ds.as_ref().ok_or_else(|| null("dataset"))
}

fn into_handle(dataset: Dataset) -> *mut LcDataset {
    let cells = summarize_cells(&dataset);
    Box::into_raw(Box::new(LcDataset { dataset, cells }))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a dataset from parallel arrays of direct answers, treatment
/// indicators and item counts. [`LC_MISSING`] marks a missing value; invalid
/// rows are excluded as by the CLI.
///
/// # Safety
/// `y`, `z` and `v` must each point to `len` readable values; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn lc_dataset_from_arrays(
    y: *const i32,
    z: *const i32,
    v: *const i32,
    len: usize,
    j_items: u32,
    out: *mut *mut LcDataset,
) -> LcStatus {
    guard(|| {
        if y.is_null() || z.is_null() || v.is_null() {
            return Err(null("y, z or v"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if j_items == 0 {
            return Err(invalid("j_items must be positive"));
        }
        let (y, z, v) = (
            std::slice::from_raw_parts(y, len),
            std::slice::from_raw_parts(z, len),
            std::slice::from_raw_parts(v, len),
        );
        let value = |x: i32| (x != LC_MISSING).then_some(i64::from(x));
        let records: Vec<RawRecord> = (0..len)
            .map(|i| RawRecord {
                y_direct: value(y[i]),
                z_treat: value(z[i]),
                v_count: value(v[i]),
                ..RawRecord::default()
            })
            .collect();
        let dataset = validate(&records, &ListDesign::with_items(j_items)?)?;
        out.write(into_handle(dataset));
        Ok(())
    })
}

/// Loads one question from a long-format CSV file. `question` may be null
/// when the file holds a single question (and study). `j_items = 0` infers
/// the list length from the counts.
///
/// # Safety
/// `path` and a non-null `question` must be NUL-terminated strings; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_dataset_from_csv(
    path: *const c_char,
    question: *const c_char,
    j_items: u32,
    out: *mut *mut LcDataset,
) -> LcStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
        let question = if question.is_null() {
            None
        } else {
            Some(CStr::from_ptr(question).to_str().map_err(|_| invalid("question is not UTF-8"))?)
        };
        let records = load_csv(path, &ColumnMapping::default())?;
        let groups = group_records(&records);
        let group = match question {
            Some(q) => {
                let mut matching = groups.into_iter().filter(|g| g.question == q);
                let first = matching.next().ok_or_else(|| invalid(format!("question {q:?} not found")))?;
                if matching.next().is_some() {
                    return Err(invalid(format!("question {q:?} appears in several studies")));
                }
                first
            }
            None if groups.len() == 1 => groups.into_iter().next().expect("one group"),
            None => return Err(invalid("file holds several questions or studies; pass `question`")),
        };
        let j = match j_items {
            0 => infer_j_items(&group.records).ok_or_else(|| Fail(LcStatus::DataError, "no usable counts".into()))?,
            j => j,
        };
        let dataset = validate(&group.records, &ListDesign::with_items(j)?)?;
        out.write(into_handle(dataset));
        Ok(())
    })
}

fn sim_params(p: &LcSimParams) -> Result<DgpParams, Fail> {
    let mut params = DgpParams::new(p.mu, p.p_truthful, p.n)?
        .with_gamma(p.gamma)?
        .with_list(p.j_items, p.w_success)?;
    if p.yes_count >= 0 {
        params = params.with_sampling(SamplingMode::FixedYesCount(p.yes_count as usize))?;
    }
    Ok(params
        .with_violation(Violation::FalseConfessor, p.share_false_confessors)?
        .with_violation(Violation::Liar, p.share_liars)?
        .with_violation(Violation::DesignAffected, p.share_design_affected)?)
}

/// Default parameters: compliant population, `gamma = 0.5`, `J = 4`,
/// `w_success = 0.4`, unconditional sampling.
#[no_mangle]
pub extern "C" fn lc_sim_params_default(mu: f64, p_truthful: f64, n: usize) -> LcSimParams {
    LcSimParams {
        mu,
        p_truthful,
        gamma: 0.5,
        j_items: 4,
        w_success: 0.4,
        share_false_confessors: 0.0,
        share_liars: 0.0,
        share_design_affected: 0.0,
        n,
        yes_count: -1,
    }
}

/// Generates a synthetic dataset; identical parameters and seed give an
/// identical dataset.
///
/// # Safety
/// `params` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_dataset_simulate(params: *const LcSimParams, seed: u64, out: *mut *mut LcDataset) -> LcStatus {
    guard(|| {
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let dataset = generate_dataset(&sim_params(p)?, seed)?;
        out.write(into_handle(dataset));
        Ok(())
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `ds` must come from an `lc_dataset_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn lc_dataset_free(ds: *mut LcDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of retained and excluded records.
///
/// # Safety
/// `ds` must be a live handle; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_dataset_counts(ds: *const LcDataset, retained: *mut usize, excluded: *mut usize) -> LcStatus {
    guard(|| {
        let ds = dataset_ref(ds)?;
        let x = ds.dataset.exclusions();
        write_out(retained, "retained", x.retained)?;
        write_out(excluded, "excluded", x.excluded_total())
    })
}

fn diag_bits(ds: &[Diagnostic]) -> u32 {
    ds.iter()
        .map(|d| match d {
            Diagnostic::EstimateOutsideUnitInterval => LC_DIAG_ESTIMATE_OUTSIDE_UNIT_INTERVAL,
            Diagnostic::CiOutsideUnitInterval => LC_DIAG_CI_OUTSIDE_UNIT_INTERVAL,
            Diagnostic::DegenerateCell => LC_DIAG_DEGENERATE_CELL,
            Diagnostic::DirectAtBoundary => LC_DIAG_DIRECT_AT_BOUNDARY,
            Diagnostic::PValueFloored => LC_DIAG_P_VALUE_FLOORED,
            Diagnostic::SmallSample => LC_DIAG_SMALL_SAMPLE,
        })
        .fold(0, |a, b| a | b)
}

fn to_estimate(r: &EstimateReport) -> LcEstimate {
    LcEstimate {
        estimate: r.estimate,
        std_error: r.std_error,
        ci_low: r.ci_low,
        ci_high: r.ci_high,
        n_used: r.n_used,
        diagnostics: diag_bits(&r.diagnostics),
    }
}

fn to_placebo(r: &PlaceboReport) -> LcPlacebo {
    LcPlacebo {
        statistic: r.statistic,
        std_error: r.std_error,
        p_value: r.p_value.get(),
        null_value: r.null_value,
        n_used: r.n_used,
        n_treated: r.group_sizes[0],
        n_control: r.group_sizes[1],
        diagnostics: diag_bits(&r.diagnostics),
    }
}

fn run_estimate(cells: &CellSummary, method: LcMethod, a: Probability, form: VarianceForm) -> Result<EstimateReport, Error> {
    match method {
        LcMethod::Direct => direct_estimate(cells, a),
        LcMethod::StandardList => standard_list_estimate(cells, a),
        LcMethod::CombinedList => combined_estimate_with(cells, a, form),
    }
}

/// Point estimate, standard error and Wald interval at level `alpha`. The
/// combined estimator uses the default variance form.
///
/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_estimate(ds: *const LcDataset, method: LcMethod, alpha_level: f64, out: *mut LcEstimate) -> LcStatus {
    guard(|| {
        let ds = dataset_ref(ds)?;
        let r = run_estimate(&ds.cells, method, alpha(alpha_level)?, VarianceForm::GammaHat)?;
        write_out(out, "out", to_estimate(&r))
    })
}

/// Share of the standard list estimator's sampling variance removed by the
/// combined estimator.
///
/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_variance_reduction(ds: *const LcDataset, out: *mut f64) -> LcStatus {
    guard(|| {
        let ds = dataset_ref(ds)?;
        let a = Probability::new(0.05)?;
        let s = standard_list_estimate(&ds.cells, a)?;
        let c = combined_estimate_with(&ds.cells, a, VarianceForm::GammaHat)?;
        write_out(out, "out", variance_reduction(s.std_error, c.std_error)?)
    })
}

/// Placebo Test I: list difference among "Yes" respondents tested against 1.
///
/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_placebo_test_one(ds: *const LcDataset, out: *mut LcPlacebo) -> LcStatus {
    guard(|| {
        let ds = dataset_ref(ds)?;
        write_out(out, "out", to_placebo(&placebo_test_one(&ds.cells)?))
    })
}

/// Placebo Test II: effect of the list treatment on direct answers.
///
/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_placebo_test_two(ds: *const LcDataset, out: *mut LcPlacebo) -> LcStatus {
    guard(|| {
        let ds = dataset_ref(ds)?;
        write_out(out, "out", to_placebo(&placebo_test_two(&ds.cells)?))
    })
}

/// Fisher's combination of `len` independent p-values.
///
/// # Safety
/// `p_values` must point to `len` readable doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_fisher_combine(p_values: *const f64, len: usize, out: *mut LcFisher) -> LcStatus {
    guard(|| {
        if p_values.is_null() {
            return Err(null("p_values"));
        }
        let r = fisher_combine(std::slice::from_raw_parts(p_values, len))?;
        write_out(
            out,
            "out",
            LcFisher {
                statistic: r.statistic,
                df: r.df,
                p_value: r.p_value.get(),
            },
        )
    })
}

/// Normal-approximation power of a two-sided two-sample proportion test.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_two_prop_power(
    p1: f64,
    p0: f64,
    n1: u64,
    n0: u64,
    alpha_level: f64,
    continuity_correction: bool,
    out: *mut f64,
) -> LcStatus {
    guard(|| {
        let power = two_prop_power_with(
            probability("p1", p1)?,
            probability("p0", p0)?,
            n1,
            n0,
            alpha(alpha_level)?,
            PowerOptions { continuity_correction },
        )?;
        write_out(out, "out", power.get())
    })
}

/// Simulated power of Placebo Test I for one grid cell: `n_yes` confessors
/// of which `share` commit `violation`, with control items drawn from
/// Binomial(4, `w_success`).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_power_test_one_cell(
    n_yes: usize,
    violation: LcViolation,
    share: f64,
    w_success: f64,
    replicates: u32,
    alpha_level: f64,
    seed: u64,
    out: *mut LcPowerCell,
) -> LcStatus {
    guard(|| {
        if replicates == 0 {
            return Err(invalid("replicates must be positive"));
        }
        let kind = match violation {
            LcViolation::FalseConfessor => Violation::FalseConfessor,
            LcViolation::Liar => Violation::Liar,
            LcViolation::DesignAffected => Violation::DesignAffected,
        };
        let grid = GridSpec::single(
            n_yes,
            GridAxis::ViolationShare {
                kind,
                shares: vec![share],
                w_success,
            },
        );
        let cell = power_test_one_grid(&grid, replicates, alpha(alpha_level)?, seed)?
            .into_iter()
            .next()
            .ok_or_else(|| Fail(LcStatus::InternalError, "empty power grid".into()))?;
        write_out(
            out,
            "out",
            LcPowerCell {
                n_yes: cell.n_yes,
                share_or_wsuccess: cell.share_or_wsuccess,
                replicates: cell.replicates,
                power: cell.power.get(),
                seed: cell.seed,
            },
        )
    })
}

/// Population value of the combined estimator's target: the prevalence when
/// no violations are active.
///
/// # Safety
/// `params` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_identification_oracle(params: *const LcSimParams, out: *mut f64) -> LcStatus {
    guard(|| {
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        write_out(out, "out", identification_oracle(&sim_params(p)?)?)
    })
}
