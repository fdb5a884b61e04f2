//! C ABI for the markov-structures library.
//!
//! Every fallible function returns an [`MsStatus`]. On failure the message
//! is kept per thread and can be read with [`ms_last_error_message`] until the
//! next failing call on that thread. Handles returned through out-pointers are
//! owned by the caller and released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use markov_structures::chain::PiecewiseConstantFn;
use markov_structures::cli::config::ScenarioConfig;
use markov_structures::consistency::Consistency;
use markov_structures::measures::{measure_series, time_grid, InstabilityLabel, MeasureSeries, Mode};
use markov_structures::semigroup::transition_matrix;
use markov_structures::structures::{example_family, strong_common_jump, Family, FamilyParams, MarkovStructureSpec};
use markov_structures::Error;

/// Outcome of a call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Domain = 4,
    InvalidGenerator = 5,
    InvalidDistribution = 6,
    UndefinedTheta = 7,
    AbsoluteContinuity = 8,
    BaselineMismatch = 9,
    Infeasible = 10,
    Config = 11,
    Io = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsConsistency {
    Strong = 0,
    WeakOnly = 1,
    Weak = 2,
    NotWeak = 3,
    Undetermined = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MsInstability {
    SystemicRisk = 0,
    #[default]
    SystemicIndifference = 1,
    SystemicBenefit = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsModeKind {
    /// Horizon fixed at `horizon`; `t` runs over `[0, horizon]`.
    FixedT = 0,
    /// Horizon `t + window`; `t` runs over `[0, until]`.
    Rolling = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MsMode {
    pub kind: MsModeKind,
    pub horizon: f64,
    pub window: f64,
    pub until: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MsMeasurePoint {
    pub t: f64,
    pub nu_dep: f64,
    pub nu_ind: f64,
    pub rho: f64,
    pub kl: f64,
    pub kappa: f64,
    pub classification: MsInstability,
}

/// A named piecewise-constant parameter. `breakpoints` may be null when
/// `len` is 1, which gives a constant schedule.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MsSchedule {
    pub name: *const c_char,
    pub breakpoints: *const f64,
    pub values: *const f64,
    pub len: usize,
}

/// A parsed scenario file.
pub struct MsScenario(ScenarioConfig);

/// A Markov structure: joint generator, initial law and prescribed marginals.
pub struct MsStructure(MarkovStructureSpec);

/// A measure series.
pub struct MsSeries(MeasureSeries);

enum Failure {
    Lib(Error),
    Null(&'static str),
    Arg(String),
    BufferTooSmall(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> MsStatus {
    match e {
        Error::Domain(_) => MsStatus::Domain,
        Error::InvalidGenerator(_) => MsStatus::InvalidGenerator,
        Error::InvalidDistribution(_) => MsStatus::InvalidDistribution,
        Error::UndefinedTheta { .. } => MsStatus::UndefinedTheta,
        Error::AbsoluteContinuity { .. } => MsStatus::AbsoluteContinuity,
        Error::BaselineMismatch(_) => MsStatus::BaselineMismatch,
        Error::Infeasible { .. } => MsStatus::Infeasible,
        Error::Config { .. } => MsStatus::Config,
        Error::Io(_) => MsStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MsStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return MsStatus::Ok,
        Ok(Err(Failure::Lib(e))) => (status_of(&e), e.to_string()),
        Ok(Err(Failure::Null(what))) => (MsStatus::NullPointer, format!("{what} is null")),
        Ok(Err(Failure::Arg(msg))) => (MsStatus::InvalidArgument, msg),
        Ok(Err(Failure::BufferTooSmall(needed))) => {
            (MsStatus::BufferTooSmall, format!("buffer too small, {needed} bytes needed"))
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            (MsStatus::Panic, format!("internal panic: {msg}"))
        }
    };
    set_last_error(msg);
    status
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ms_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null if none failed.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ms_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |m| m.as_ptr()))
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_scenario_parse(toml: *const c_char, out: *mut *mut MsScenario) -> MsStatus {
    guard(|| {
        let cfg = ScenarioConfig::parse(str_arg(toml, "toml")?)?;
        write_out(out, boxed(MsScenario(cfg)), "out")
    })
}

/// Loads a scenario from a file path or the name of a bundled scenario.
///
/// # Safety
/// `name_or_path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_scenario_load(name_or_path: *const c_char, out: *mut *mut MsScenario) -> MsStatus {
    guard(|| {
        let cfg = markov_structures::cli::load(str_arg(name_or_path, "name_or_path")?)?;
        write_out(out, boxed(MsScenario(cfg)), "out")
    })
}

/// # Safety
/// `scenario` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_scenario_free(scenario: *mut MsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of structures a scenario defines.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_scenario_structure_count(scenario: *const MsScenario, out: *mut usize) -> MsStatus {
    guard(|| {
        let s = borrow(scenario, "scenario")?;
        write_out(out, s.0.structures.len(), "out")
    })
}

/// Builds the structure at `index` of a scenario.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_scenario_build(
    scenario: *const MsScenario,
    index: usize,
    out: *mut *mut MsStructure,
) -> MsStatus {
    guard(|| {
        let s = borrow(scenario, "scenario")?;
        let n = s.0.structures.len();
        if index >= n {
            return Err(Failure::Arg(format!("structure index {index} out of range ({n} structures)")));
        }
        let spec = s.0.build()?.swap_remove(index);
        write_out(out, boxed(MsStructure(spec)), "out")
    })
}

/// Builds one of the two-name families (`common_jumps`,
/// `extreme_contagion`, `extreme_anti_contagion`, `systemic_importance`,
/// `symmetric_common_jumps`) from its parameter schedules.
///
/// # Safety
/// `family` must be a NUL-terminated string, `params` must point to
/// `n_params` schedules whose arrays hold `len` values, and `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_family_new(
    family: *const c_char,
    params: *const MsSchedule,
    n_params: usize,
    out: *mut *mut MsStructure,
) -> MsStatus {
    guard(|| {
        let family: Family = str_arg(family, "family")?.parse()?;
        let mut schedules = FamilyParams::new();
        for p in slice_arg(params, n_params, "params")? {
            let name = str_arg(p.name, "parameter name")?;
            let values = slice_arg(p.values, p.len, "values")?.to_vec();
            let f = if p.breakpoints.is_null() {
                match values.as_slice() {
                    [v] => PiecewiseConstantFn::constant(*v),
                    _ => {
                        return Err(Failure::Arg(format!(
                            "parameter '{name}' has {} values but no breakpoints",
                            values.len()
                        )))
                    }
                }
            } else {
                PiecewiseConstantFn::new(slice_arg(p.breakpoints, p.len, "breakpoints")?.to_vec(), values)?
            };
            schedules.insert(name.to_string(), f);
        }
        let spec = example_family(family, &schedules)?;
        write_out(out, boxed(MsStructure(spec)), "out")
    })
}

/// Strong structure with simultaneous defaults at rate `eta * min(λ¹, λ²)`
/// over the prescribed marginals of `base`.
///
/// # Safety
/// `base` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_strong_common_jump(
    base: *const MsStructure,
    eta: f64,
    out: *mut *mut MsStructure,
) -> MsStatus {
    guard(|| {
        let base = borrow(base, "base")?;
        let spec = strong_common_jump(&base.0.prescribed_marginals, eta)?;
        write_out(out, boxed(MsStructure(spec)), "out")
    })
}

/// # Safety
/// `structure` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_structure_free(structure: *mut MsStructure) {
    if !structure.is_null() {
        drop(Box::from_raw(structure));
    }
}

/// Copies the label, NUL-terminated, into `buf`. `needed` receives the size
/// including the terminator; pass a null `buf` to query it.
///
/// # Safety
/// `structure` must be a live handle, `buf` null or valid for `cap` bytes,
/// and `needed` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_structure_label(
    structure: *const MsStructure,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> MsStatus {
    guard(|| {
        let s = borrow(structure, "structure")?;
        let bytes = s.0.label.as_bytes();
        write_out(needed, bytes.len() + 1, "needed")?;
        if buf.is_null() {
            return Ok(());
        }
        if cap < bytes.len() + 1 {
            return Err(Failure::BufferTooSmall(bytes.len() + 1));
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, bytes.len());
        buf.add(bytes.len()).write(0);
        Ok(())
    })
}

/// Number of components and number of joint states.
///
/// # Safety
/// `structure` must be a live handle and both out-pointers valid.
#[no_mangle]
pub unsafe extern "C" fn ms_structure_dimensions(
    structure: *const MsStructure,
    components: *mut usize,
    states: *mut usize,
) -> MsStatus {
    guard(|| {
        let s = borrow(structure, "structure")?;
        write_out(components, s.0.space().components(), "components")?;
        write_out(states, s.0.space().len(), "states")
    })
}

/// Writes the transition matrix `P(t, s)` row-major into `out`, which must
/// hold `states * states` values.
///
/// # Safety
/// `structure` must be a live handle and `out` valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn ms_structure_transition(
    structure: *const MsStructure,
    t: f64,
    s: f64,
    out: *mut f64,
    len: usize,
) -> MsStatus {
    guard(|| {
        let spec = borrow(structure, "structure")?;
        let n = spec.0.space().len();
        if len != n * n {
            return Err(Failure::Arg(format!("output holds {len} values, {} needed", n * n)));
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let p = transition_matrix(&spec.0.generator, t, s)?;
        let dst = std::slice::from_raw_parts_mut(out, len);
        for r in 0..n {
            for c in 0..n {
                dst[r * n + c] = p.get(r, c);
            }
        }
        Ok(())
    })
}

/// Classifies the structure on the grid `0, step, …, end`.
///
/// # Safety
/// `structure` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_structure_classify(
    structure: *const MsStructure,
    end: f64,
    step: f64,
    out: *mut MsConsistency,
) -> MsStatus {
    guard(|| {
        let s = borrow(structure, "structure")?;
        let grid = time_grid(end, step)?;
        let class = s.0.clone().classify(&grid)?.classification.expect("just classified").overall();
        let class = match class {
            Consistency::Strong => MsConsistency::Strong,
            Consistency::WeakOnly => MsConsistency::WeakOnly,
            Consistency::Weak => MsConsistency::Weak,
            Consistency::NotWeak => MsConsistency::NotWeak,
            Consistency::Undetermined => MsConsistency::Undetermined,
        };
        write_out(out, class, "out")
    })
}

/// Largest gap between the marginal rates the structure induces and its
/// prescribed marginal rates, over the grid `0, step, …, end`.
///
/// # Safety
/// `structure` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_structure_law_matching_error(
    structure: *const MsStructure,
    end: f64,
    step: f64,
    out: *mut f64,
) -> MsStatus {
    guard(|| {
        let s = borrow(structure, "structure")?;
        let err = s.0.law_matching_error(&time_grid(end, step)?)?;
        write_out(out, err, "out")
    })
}

/// Measure series of the structure against the independence structure of
/// its prescribed marginals. `z` and `x` hold one value per component.
///
/// # Safety
/// `structure` must be a live handle, `z` and `x` valid for one value per
/// component, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_measure_series(
    structure: *const MsStructure,
    mode: MsMode,
    grid_step: f64,
    z: *const usize,
    h: usize,
    x: *const usize,
    out: *mut *mut MsSeries,
) -> MsStatus {
    guard(|| {
        let s = borrow(structure, "structure")?;
        let m = s.0.space().components();
        let z = slice_arg(z, m, "z")?;
        let x = slice_arg(x, m, "x")?;
        let mode = match mode.kind {
            MsModeKind::FixedT => Mode::FixedT { horizon: mode.horizon },
            MsModeKind::Rolling => Mode::Rolling {
                window: mode.window,
                until: mode.until,
            },
        };
        let series = measure_series(&s.0, mode, grid_step, z, h, x)?;
        write_out(out, boxed(MsSeries(series)), "out")
    })
}

/// # Safety
/// `series` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_series_len(series: *const MsSeries, out: *mut usize) -> MsStatus {
    guard(|| {
        let s = borrow(series, "series")?;
        write_out(out, s.0.points.len(), "out")
    })
}

/// # Safety
/// `series` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_series_point(
    series: *const MsSeries,
    index: usize,
    out: *mut MsMeasurePoint,
) -> MsStatus {
    guard(|| {
        let s = borrow(series, "series")?;
        let p = s.0.points.get(index).ok_or_else(|| {
            Failure::Arg(format!("point {index} out of range ({} points)", s.0.points.len()))
        })?;
        let classification = match p.classification {
            InstabilityLabel::SystemicRisk => MsInstability::SystemicRisk,
            InstabilityLabel::SystemicIndifference => MsInstability::SystemicIndifference,
            InstabilityLabel::SystemicBenefit => MsInstability::SystemicBenefit,
        };
        write_out(
            out,
            MsMeasurePoint {
                t: p.t,
                nu_dep: p.nu_dep,
                nu_ind: p.nu_ind,
                rho: p.rho,
                kl: p.kl,
                kappa: p.kappa,
                classification,
            },
            "out",
        )
    })
}

/// # Safety
/// `series` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_series_free(series: *mut MsSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}
