//! C interface to the simulator.
//!
//! Scenarios and executions are opaque handles owned by the caller and
//! released with their `_free` function. Fallible calls return a
//! [`RatdupStatus`]; the message of the most recent failure on the calling
//! thread is available from [`ratdup_last_error`]. Strings handed out by the
//! library are released with [`ratdup_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use num_bigint::BigInt;
use num_rational::BigRational;
use ratdup::bounds::{classify_bound_by_name, ks_incentive, KnowledgeBound};
use ratdup::engine::export::to_jsonl_string;
use ratdup::engine::{Output, Randomness, RandomnessSource, TraceLevel, Verdict};
use ratdup::rationality::{check_equilibrium, DeviationStrategy, Game, Outcome};
use ratdup::scenario::Scenario;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatdupStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidScenario = 3,
    Execution = 4,
    Domain = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatdupVerdict {
    Legal = 0,
    Erroneous = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatdupOutputKind {
    Value = 0,
    Agent = 1,
    Edges = 2,
    Bottom = 3,
}

/// A validated scenario.
pub struct RatdupScenario {
    scenario: Scenario,
    game: Game,
}

/// One finished execution.
pub struct RatdupTrace {
    outcome: Outcome,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (RatdupStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RatdupStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RatdupStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            RatdupStatus::Panic
        }
    }
}

fn fail<T>(status: RatdupStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err((status, msg.into()))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    match p.as_ref() {
        Some(r) => Ok(r),
        None => fail(RatdupStatus::NullArgument, format!("{what} is null")),
    }
}

unsafe fn write<T>(out: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return fail(RatdupStatus::NullArgument, format!("{what} is null"));
    }
    out.write(v);
    Ok(())
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return fail(RatdupStatus::NullArgument, format!("{what} is null"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| (RatdupStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("no interior nul")
        .into_raw()
}

fn scenario_handle(scenario: Scenario) -> Result<*mut RatdupScenario, Failure> {
    let game = scenario
        .game()
        .map_err(|e| (RatdupStatus::InvalidScenario, e.to_string()))?;
    Ok(Box::into_raw(Box::new(RatdupScenario { scenario, game })))
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn ratdup_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ratdup_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` is null or was returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ratdup_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `toml` is a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ratdup_scenario_parse(
    toml: *const c_char,
    out: *mut *mut RatdupScenario,
) -> RatdupStatus {
    guard(|| {
        let src = text(toml, "toml")?;
        let scn = Scenario::from_toml_str(src)
            .map_err(|e| (RatdupStatus::InvalidScenario, e.to_string()))?;
        write(out, scenario_handle(scn)?, "out")
    })
}

/// Loads a scenario file.
///
/// # Safety
/// `path` is a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ratdup_scenario_load(
    path: *const c_char,
    out: *mut *mut RatdupScenario,
) -> RatdupStatus {
    guard(|| {
        let p = text(path, "path")?;
        let scn = Scenario::load(Path::new(p))
            .map_err(|e| (RatdupStatus::InvalidScenario, format!("{e:#}")))?;
        write(out, scenario_handle(scn)?, "out")
    })
}

/// # Safety
/// `s` is null or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn ratdup_scenario_free(s: *mut RatdupScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of agents in the scenario's topology.
///
/// # Safety
/// `s` is a live scenario handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ratdup_scenario_node_count(
    s: *const RatdupScenario,
    out: *mut usize,
) -> RatdupStatus {
    guard(|| {
        let s = deref(s, "scenario")?;
        write(out, s.game.topology.node_count(), "out")
    })
}

/// Runs the scenario once with `seed`, playing its cheater if it has one.
///
/// # Safety
/// `s` is a live scenario handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ratdup_run(
    s: *const RatdupScenario,
    seed: u64,
    out: *mut *mut RatdupTrace,
) -> RatdupStatus {
    guard(|| {
        let s = deref(s, "scenario")?;
        let scn = &s.scenario;
        let strategy = match scn.strategy() {
            Ok(Some(st)) => st,
            Ok(None) => {
                DeviationStrategy::honest(s.game.topology.nodes().next().expect("non-empty"))
            }
            Err(e) => return fail(RatdupStatus::InvalidScenario, e.to_string()),
        };
        let run = || -> Result<Outcome, ratdup::rationality::RationalityError> {
            let p = s.game.prepare(&strategy)?;
            let src = s
                .game
                .randomness(&p, &RandomnessSource::seeded(seed), scn.cheater_class());
            s.game
                .run(&p, &mut Randomness::new(&src), TraceLevel::Messages)
        };
        let outcome = run().map_err(|e| (RatdupStatus::Execution, e.to_string()))?;
        write(out, Box::into_raw(Box::new(RatdupTrace { outcome })), "out")
    })
}

/// # Safety
/// `t` is null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn ratdup_trace_free(t: *mut RatdupTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `t` is a live trace handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ratdup_trace_verdict(
    t: *const RatdupTrace,
    out: *mut RatdupVerdict,
) -> RatdupStatus {
    guard(|| {
        let v = match deref(t, "trace")?.outcome.verdict {
            Verdict::Legal => RatdupVerdict::Legal,
            Verdict::Erroneous => RatdupVerdict::Erroneous,
        };
        write(out, v, "out")
    })
}

/// Whether some agent aborted.
///
/// # Safety
/// `t` is a live trace handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ratdup_trace_aborted(
    t: *const RatdupTrace,
    out: *mut bool,
) -> RatdupStatus {
    guard(|| {
        write(
            out,
            deref(t, "trace")?.outcome.trace.aborted.is_some(),
            "out",
        )
    })
}

/// The cheater's utility (0 or 1); for honest runs, that of the first agent.
///
/// # Safety
/// `t` is a live trace handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ratdup_trace_utility(t: *const RatdupTrace, out: *mut u8) -> RatdupStatus {
    guard(|| write(out, deref(t, "trace")?.outcome.utility, "out"))
}

/// Number of original agents with an output.
///
/// # Safety
/// `t` is a live trace handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ratdup_trace_output_count(
    t: *const RatdupTrace,
    out: *mut usize,
) -> RatdupStatus {
    guard(|| write(out, deref(t, "trace")?.outcome.outputs.len(), "out"))
}

/// Output `index` in agent-id order. `value` receives the output value, the
/// chosen agent id, or the number of oriented edges, depending on `kind`;
/// 0 for bottom.
///
/// # Safety
/// `t` is a live trace handle; the three out pointers are writable.
#[no_mangle]
pub unsafe extern "C" fn ratdup_trace_output(
    t: *const RatdupTrace,
    index: usize,
    agent: *mut u64,
    kind: *mut RatdupOutputKind,
    value: *mut u64,
) -> RatdupStatus {
    guard(|| {
        let outputs = &deref(t, "trace")?.outcome.outputs;
        let Some((a, o)) = outputs.iter().nth(index) else {
            return fail(
                RatdupStatus::OutOfRange,
                format!("output {index} of {}", outputs.len()),
            );
        };
        let (k, v) = match o {
            Output::Value(v) => (RatdupOutputKind::Value, *v),
            Output::Agent(x) => (RatdupOutputKind::Agent, x.0),
            Output::Edges(l) => (RatdupOutputKind::Edges, l.len() as u64),
            Output::Bottom => (RatdupOutputKind::Bottom, 0),
        };
        write(agent, a.0, "agent")?;
        write(kind, k, "kind")?;
        write(value, v, "value")
    })
}

/// The execution as JSON lines. Free the result with `ratdup_string_free`.
///
/// # Safety
/// `t` is a live trace handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ratdup_trace_to_jsonl(
    t: *const RatdupTrace,
    out: *mut *mut c_char,
) -> RatdupStatus {
    guard(|| {
        let s = to_jsonl_string(&deref(t, "trace")?.outcome.trace);
        write(out, owned_string(s), "out")
    })
}

/// Runs the scenario's deviation catalog. `report_json` may be null;
/// otherwise it receives the full report, to be freed with
/// `ratdup_string_free`.
///
/// # Safety
/// `s` is a live scenario handle; `deviation_found` is writable.
#[no_mangle]
pub unsafe extern "C" fn ratdup_check_equilibrium(
    s: *const RatdupScenario,
    deviation_found: *mut bool,
    report_json: *mut *mut c_char,
) -> RatdupStatus {
    guard(|| {
        let s = deref(s, "scenario")?;
        if deviation_found.is_null() {
            return fail(RatdupStatus::NullArgument, "deviation_found is null");
        }
        let spec = s
            .scenario
            .catalog_spec()
            .map_err(|e| (RatdupStatus::InvalidScenario, e.to_string()))?;
        let report = check_equilibrium(
            &s.game,
            &spec,
            s.scenario.estimation_mode(),
            &s.scenario.name,
        )
        .map_err(|e| (RatdupStatus::Execution, e.to_string()))?;
        write(deviation_found, report.deviation_found(), "deviation_found")?;
        if !report_json.is_null() {
            let json = serde_json::to_string(&report)
                .map_err(|e| (RatdupStatus::Execution, e.to_string()))?;
            report_json.write(owned_string(json));
        }
        Ok(())
    })
}

/// Whether some duplication beats honest sharing with `k` outputs when sizes
/// lie in `[alpha, beta]` and a successful duplication pays `x_num/x_den`.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ratdup_ks_incentive(
    alpha: usize,
    beta: usize,
    k: u64,
    x_num: i64,
    x_den: i64,
    out: *mut bool,
) -> RatdupStatus {
    guard(|| {
        if x_den == 0 {
            return fail(RatdupStatus::Domain, "zero denominator");
        }
        let x = BigRational::new(BigInt::from(x_num), BigInt::from(x_den));
        let v = ks_incentive(KnowledgeBound { alpha, beta }, k, &x)
            .map_err(|e| (RatdupStatus::Domain, e.to_string()))?;
        write(out, v, "out")
    })
}

/// Bound class of a problem by name, e.g. "α+1" or "unbounded". Free the
/// result with `ratdup_string_free`.
///
/// # Safety
/// `problem` is a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ratdup_classify_bound(
    problem: *const c_char,
    out: *mut *mut c_char,
) -> RatdupStatus {
    guard(|| {
        let name = text(problem, "problem")?;
        let class =
            classify_bound_by_name(name).map_err(|e| (RatdupStatus::Domain, e.to_string()))?;
        write(out, owned_string(class.to_string()), "out")
    })
}
