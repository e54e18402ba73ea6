use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use ratdup_ffi::*;

const PARTITION: &str = r#"
name = "partition-ffi"
[topology]
kind = "ring"
n = 6
[protocol]
name = "partition"
"#;

const LEADER: &str = r#"
name = "leader-ffi"
[topology]
kind = "ring"
n = 4
[protocol]
name = "leader"
"#;

fn last_error() -> String {
    let p = ratdup_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn parse(toml: &str) -> *mut RatdupScenario {
    let src = CString::new(toml).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { ratdup_scenario_parse(src.as_ptr(), &mut s) },
        RatdupStatus::Ok
    );
    assert!(!s.is_null());
    s
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { ratdup_string_free(p) };
    s
}

#[test]
fn run_and_read_outputs() {
    let s = parse(PARTITION);
    let mut n = 0usize;
    assert_eq!(
        unsafe { ratdup_scenario_node_count(s, &mut n) },
        RatdupStatus::Ok
    );
    assert_eq!(n, 6);

    let mut t = ptr::null_mut();
    assert_eq!(unsafe { ratdup_run(s, 11, &mut t) }, RatdupStatus::Ok);
    let mut verdict = RatdupVerdict::Erroneous;
    let mut aborted = true;
    assert_eq!(
        unsafe { ratdup_trace_verdict(t, &mut verdict) },
        RatdupStatus::Ok
    );
    assert_eq!(
        unsafe { ratdup_trace_aborted(t, &mut aborted) },
        RatdupStatus::Ok
    );
    assert_eq!(verdict, RatdupVerdict::Legal);
    assert!(!aborted);

    let mut count = 0usize;
    assert_eq!(
        unsafe { ratdup_trace_output_count(t, &mut count) },
        RatdupStatus::Ok
    );
    assert_eq!(count, 6);
    let mut ones = 0;
    let mut last_agent = 0;
    for i in 0..count {
        let (mut agent, mut kind, mut value) = (0u64, RatdupOutputKind::Bottom, 0u64);
        assert_eq!(
            unsafe { ratdup_trace_output(t, i, &mut agent, &mut kind, &mut value) },
            RatdupStatus::Ok
        );
        assert_eq!(kind, RatdupOutputKind::Value);
        assert!(agent > last_agent);
        last_agent = agent;
        ones += value;
    }
    assert_eq!(ones, 3);

    let (mut agent, mut kind, mut value) = (0u64, RatdupOutputKind::Bottom, 0u64);
    assert_eq!(
        unsafe { ratdup_trace_output(t, count, &mut agent, &mut kind, &mut value) },
        RatdupStatus::OutOfRange
    );
    assert!(last_error().contains("output 6"));

    let mut jsonl = ptr::null_mut();
    assert_eq!(
        unsafe { ratdup_trace_to_jsonl(t, &mut jsonl) },
        RatdupStatus::Ok
    );
    let text = take_string(jsonl);
    assert!(text.lines().count() > 2);
    for line in text.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }

    unsafe {
        ratdup_trace_free(t);
        ratdup_scenario_free(s);
    }
}

#[test]
fn runs_are_reproducible() {
    let s = parse(LEADER);
    let dump = |seed| {
        let mut t = ptr::null_mut();
        assert_eq!(unsafe { ratdup_run(s, seed, &mut t) }, RatdupStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(
            unsafe { ratdup_trace_to_jsonl(t, &mut out) },
            RatdupStatus::Ok
        );
        unsafe { ratdup_trace_free(t) };
        take_string(out)
    };
    assert_eq!(dump(3), dump(3));
    unsafe { ratdup_scenario_free(s) };
}

#[test]
fn errors_are_reported() {
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { ratdup_scenario_parse(ptr::null(), &mut s) },
        RatdupStatus::NullArgument
    );
    assert!(last_error().contains("toml"));

    let bad = CString::new(
        "name = \"x\"\n[topology]\nkind = \"ring\"\nn = 5\n[protocol]\nname = \"sorting\"\n",
    )
    .unwrap();
    assert_eq!(
        unsafe { ratdup_scenario_parse(bad.as_ptr(), &mut s) },
        RatdupStatus::InvalidScenario
    );
    assert!(s.is_null());
    assert!(!last_error().is_empty());

    let missing = CString::new("/nonexistent/scenario.toml").unwrap();
    assert_eq!(
        unsafe { ratdup_scenario_load(missing.as_ptr(), &mut s) },
        RatdupStatus::InvalidScenario
    );
    assert!(last_error().contains("cannot read"));

    let mut v = false;
    assert_eq!(
        unsafe { ratdup_trace_aborted(ptr::null(), &mut v) },
        RatdupStatus::NullArgument
    );
    assert_eq!(
        unsafe { ratdup_ks_incentive(3, 8, 4, 1, 0, &mut v) },
        RatdupStatus::Domain
    );
    assert_eq!(
        unsafe { ratdup_ks_incentive(2, 8, 4, 1, 1, &mut v) },
        RatdupStatus::Domain
    );

    unsafe {
        ratdup_scenario_free(ptr::null_mut());
        ratdup_trace_free(ptr::null_mut());
        ratdup_string_free(ptr::null_mut());
    }
}

#[test]
fn bounds_queries() {
    let mut v = true;
    assert_eq!(
        unsafe { ratdup_ks_incentive(4, 7, 10, 1, 1, &mut v) },
        RatdupStatus::Ok
    );
    assert!(!v);
    assert_eq!(
        unsafe { ratdup_ks_incentive(4, 8, 10, 1, 1, &mut v) },
        RatdupStatus::Ok
    );
    assert!(v);

    for (problem, class) in [
        ("leader election", "α+1"),
        ("orientation", "unbounded"),
        ("coloring", "∞"),
    ] {
        let name = CString::new(problem).unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(
            unsafe { ratdup_classify_bound(name.as_ptr(), &mut out) },
            RatdupStatus::Ok
        );
        assert_eq!(take_string(out), class);
    }
    let name = CString::new("sorting").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { ratdup_classify_bound(name.as_ptr(), &mut out) },
        RatdupStatus::Domain
    );
}

#[test]
fn equilibrium_report() {
    let s = parse(
        r#"
name = "orientation-ffi"
[topology]
kind = "ring"
n = 4
[protocol]
name = "orientation"
[catalog]
max_d = 2
families = ["duplication", "biased-draw"]
"#,
    );
    let mut found = true;
    let mut json = ptr::null_mut();
    assert_eq!(
        unsafe { ratdup_check_equilibrium(s, &mut found, &mut json) },
        RatdupStatus::Ok
    );
    assert!(!found);
    let report: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
    assert_eq!(report["verdict"]["verdict"], "no_profitable_deviation");
    unsafe { ratdup_scenario_free(s) };
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(ratdup_version()) }
        .to_str()
        .unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ratdup.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "ratdup_run",
        "ratdup_last_error",
        "ratdup_trace_free",
        "RATDUP_STATUS_OK",
    ] {
        assert!(text.contains(f), "{f} missing from the header");
    }
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("use.c");
    std::fs::write(
        &c,
        "#include \"ratdup.h\"\nint main(void) { RatdupScenario *s = 0; return ratdup_scenario_parse(\"\", &s) == RATDUP_STATUS_OK; }\n",
    )
    .unwrap();
    let Ok(status) = Command::new("cc")
        .arg("-std=c99")
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&c)
        .status()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(status.success());
}
