//! C interface to the roundabout decision stack.
//!
//! Scenarios and finished runs are opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns
//! an `RG_*` status code; on failure the message is available from
//! [`rg_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use roundabout_core::scenario::{bundled, load_scenario, ScenarioConfig, SolverKind};
use roundabout_core::simulation::{
    export, metrics, run, MetricsReport, SimulationLog, Termination,
};
use roundabout_core::Error;

pub const RG_OK: i32 = 0;
pub const RG_ERR_NULL: i32 = 1;
pub const RG_ERR_UTF8: i32 = 2;
pub const RG_ERR_CONFIG: i32 = 3;
pub const RG_ERR_INVALID: i32 = 4;
pub const RG_ERR_LOCALIZATION: i32 = 5;
pub const RG_ERR_IO: i32 = 6;
pub const RG_ERR_RANGE: i32 = 7;
pub const RG_ERR_PANIC: i32 = 8;

pub const RG_SOLVER_STACKELBERG: i32 = 0;
pub const RG_SOLVER_GRAND_COALITION: i32 = 1;

pub const RG_TERM_COMPLETED: i32 = 0;
pub const RG_TERM_DURATION: i32 = 1;
pub const RG_TERM_COLLISION: i32 = 2;
pub const RG_TERM_LOCALIZATION: i32 = 3;

/// Parsed scenario configuration.
pub struct RgScenario(ScenarioConfig);

/// Completed simulation with its metrics.
pub struct RgRun {
    log: SimulationLog,
    report: MetricsReport,
}

/// Run-level results. Missing values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RgSummary {
    pub termination: i32,
    /// Time at which the run ended (s).
    pub end_time: f64,
    pub system_velocity_rms: f64,
    pub min_gap: f64,
    pub mean_solve_time: f64,
    pub steps: usize,
    pub agents: usize,
    pub fallback_used: bool,
}

/// Per-agent results. Missing values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RgAgentSummary {
    pub samples: usize,
    pub velocity_rms: f64,
    pub max_velocity: f64,
    pub min_gap: f64,
    pub finished_at: f64,
    pub fallback_steps: usize,
}

/// Recorded state of one agent at one step.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RgSample {
    pub t: f64,
    pub vx: f64,
    pub phi: f64,
    pub x: f64,
    pub y: f64,
    pub ax: f64,
    pub delta_f: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Parse(_) => RG_ERR_CONFIG,
            Error::Localization(_) | Error::Projection { .. } => RG_ERR_LOCALIZATION,
            Error::Io { .. } => RG_ERR_IO,
            Error::InvalidInput(_) | Error::SteeringDomain(_) => RG_ERR_INVALID,
        };
        Failure(code, e.to_string())
    }
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure(code, message.into())
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    let (code, message) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (RG_OK, String::new()),
        Ok(Err(Failure(code, message))) => (code, message),
        Err(_) => (RG_ERR_PANIC, "internal panic".to_string()),
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
    code
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(fail(RG_ERR_NULL, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(RG_ERR_UTF8, format!("{what} is not valid UTF-8")))
}

unsafe fn reference<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(RG_ERR_NULL, format!("{what} is null")))
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(RG_ERR_NULL, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

fn nan_or(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length, excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn rg_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads one of the bundled scenarios by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn rg_scenario_bundled(
    name: *const c_char,
    out: *mut *mut RgScenario,
) -> i32 {
    guard(|| {
        let name = text(name, "name")?;
        let toml = bundled(name)
            .ok_or_else(|| fail(RG_ERR_RANGE, format!("no bundled scenario `{name}`")))?;
        let cfg = load_scenario(toml)?;
        write(out, Box::into_raw(Box::new(RgScenario(cfg))))
    })
}

/// Parses and validates a scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn rg_scenario_parse(toml: *const c_char, out: *mut *mut RgScenario) -> i32 {
    guard(|| {
        let cfg = load_scenario(text(toml, "toml")?)?;
        write(out, Box::into_raw(Box::new(RgScenario(cfg))))
    })
}

/// Number of agents in the scenario.
///
/// # Safety
/// `scenario` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn rg_scenario_agent_count(
    scenario: *const RgScenario,
    out: *mut usize,
) -> i32 {
    guard(|| write(out, reference(scenario, "scenario")?.0.agents.len()))
}

/// Overrides the simulated duration (s).
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_scenario_set_duration(scenario: *mut RgScenario, duration: f64) -> i32 {
    guard(|| {
        let s = scenario
            .as_mut()
            .ok_or_else(|| fail(RG_ERR_NULL, "scenario is null"))?;
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(fail(RG_ERR_CONFIG, "duration must be positive and finite"));
        }
        s.0.duration = duration;
        Ok(())
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `scenario` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rg_scenario_free(scenario: *mut RgScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Simulates the scenario with `RG_SOLVER_STACKELBERG` or
/// `RG_SOLVER_GRAND_COALITION`.
///
/// # Safety
/// `scenario` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn rg_run(
    scenario: *const RgScenario,
    solver: i32,
    out: *mut *mut RgRun,
) -> i32 {
    guard(|| {
        let cfg = &reference(scenario, "scenario")?.0;
        let solver = match solver {
            RG_SOLVER_STACKELBERG => SolverKind::Stackelberg,
            RG_SOLVER_GRAND_COALITION => SolverKind::GrandCoalition,
            other => return Err(fail(RG_ERR_RANGE, format!("unknown solver {other}"))),
        };
        if out.is_null() {
            return Err(fail(RG_ERR_NULL, "output pointer is null"));
        }
        let log = run(cfg, solver)?;
        let report = metrics(&log)?;
        write(out, Box::into_raw(Box::new(RgRun { log, report })))
    })
}

/// Releases a run. Null is ignored.
///
/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rg_run_free(run: *mut RgRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Run-level summary.
///
/// # Safety
/// `run` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn rg_run_summary(run: *const RgRun, out: *mut RgSummary) -> i32 {
    guard(|| {
        let r = reference(run, "run")?;
        let (termination, end_time) = match r.log.termination {
            Termination::Completed { t } => (RG_TERM_COMPLETED, t),
            Termination::Duration { t } => (RG_TERM_DURATION, t),
            Termination::Collision { t, .. } => (RG_TERM_COLLISION, t),
            Termination::Localization { t, .. } => (RG_TERM_LOCALIZATION, t),
        };
        write(
            out,
            RgSummary {
                termination,
                end_time,
                system_velocity_rms: r.report.system_velocity_rms,
                min_gap: nan_or(r.report.min_gap),
                mean_solve_time: r.report.mean_solve_time,
                steps: r.log.steps(),
                agents: r.log.agents.len(),
                fallback_used: r.log.fallback_used(),
            },
        )
    })
}

/// Copies agent `index`'s identifier into `buf` like [`rg_last_error`] and
/// stores the full length in `len_out` when it is not null.
///
/// # Safety
/// `run` must be a live handle, `buf` null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn rg_run_agent_id(
    run: *const RgRun,
    index: usize,
    buf: *mut c_char,
    len: usize,
    len_out: *mut usize,
) -> i32 {
    guard(|| {
        let r = reference(run, "run")?;
        let id = &r
            .log
            .agents
            .get(index)
            .ok_or_else(|| fail(RG_ERR_RANGE, format!("agent {index} out of range")))?
            .id;
        if !buf.is_null() && len > 0 {
            let n = id.len().min(len - 1);
            ptr::copy_nonoverlapping(id.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        if !len_out.is_null() {
            len_out.write(id.len());
        }
        Ok(())
    })
}

/// Metrics of agent `index`, in scenario order.
///
/// # Safety
/// `run` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn rg_run_agent_summary(
    run: *const RgRun,
    index: usize,
    out: *mut RgAgentSummary,
) -> i32 {
    guard(|| {
        let r = reference(run, "run")?;
        let m = r
            .report
            .agents
            .get(index)
            .ok_or_else(|| fail(RG_ERR_RANGE, format!("agent {index} out of range")))?;
        write(
            out,
            RgAgentSummary {
                samples: m.samples,
                velocity_rms: m.velocity_rms,
                max_velocity: m.max_velocity,
                min_gap: nan_or(m.min_gap),
                finished_at: nan_or(m.finished_at),
                fallback_steps: m.fallback_steps,
            },
        )
    })
}

/// Recorded sample `sample` of agent `index`; agents stop recording once
/// their route is complete.
///
/// # Safety
/// `run` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn rg_run_sample(
    run: *const RgRun,
    index: usize,
    sample: usize,
    out: *mut RgSample,
) -> i32 {
    guard(|| {
        let r = reference(run, "run")?;
        let rec = r
            .log
            .agents
            .get(index)
            .and_then(|a| a.records.get(sample))
            .ok_or_else(|| {
                fail(
                    RG_ERR_RANGE,
                    format!("sample {sample} of agent {index} out of range"),
                )
            })?;
        write(
            out,
            RgSample {
                t: rec.t,
                vx: rec.state.vx,
                phi: rec.state.phi,
                x: rec.state.x,
                y: rec.state.y,
                ax: rec.control.ax,
                delta_f: rec.control.delta_f,
            },
        )
    })
}

/// Writes the trajectory, metrics and summary files into `dir`.
///
/// # Safety
/// `run` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rg_run_export(run: *const RgRun, dir: *const c_char) -> i32 {
    guard(|| {
        let r = reference(run, "run")?;
        let dir = text(dir, "dir")?;
        export(&r.log, &r.report, Path::new(dir))?;
        Ok(())
    })
}
