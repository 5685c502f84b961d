use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use roundabout_core::scenario::{bundled, load_scenario, SolverKind};
use roundabout_core::simulation::{metrics, run};
use roundabout_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    let n = unsafe { rg_last_error(buf.as_mut_ptr(), buf.len()) };
    let s = unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_str()
        .unwrap()
        .to_owned();
    assert_eq!(s.len(), n.min(255));
    s
}

fn scenario(name: &str) -> *mut RgScenario {
    let name = CString::new(name).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { rg_scenario_bundled(name.as_ptr(), &mut s) }, RG_OK);
    assert!(!s.is_null());
    s
}

fn simulate(s: *const RgScenario, solver: i32) -> *mut RgRun {
    let mut r = ptr::null_mut();
    assert_eq!(
        unsafe { rg_run(s, solver, &mut r) },
        RG_OK,
        "{}",
        last_error()
    );
    r
}

#[test]
fn run_matches_the_library() {
    let s = scenario("case2_A");
    let mut n = 0;
    assert_eq!(unsafe { rg_scenario_agent_count(s, &mut n) }, RG_OK);
    let r = simulate(s, RG_SOLVER_GRAND_COALITION);

    let log = run(
        &load_scenario(bundled("case2_A").unwrap()).unwrap(),
        SolverKind::GrandCoalition,
    )
    .unwrap();
    let report = metrics(&log).unwrap();

    let mut sum = unsafe { std::mem::zeroed::<RgSummary>() };
    assert_eq!(unsafe { rg_run_summary(r, &mut sum) }, RG_OK);
    assert_eq!(sum.termination, RG_TERM_COMPLETED);
    assert_eq!(sum.agents, n);
    assert_eq!(sum.steps, log.steps());
    assert_eq!(sum.system_velocity_rms, report.system_velocity_rms);
    assert_eq!(sum.min_gap, report.min_gap.unwrap());
    assert!(!sum.fallback_used);

    for (i, track) in log.agents.iter().enumerate() {
        let mut buf = [0 as c_char; 8];
        let mut len = 0;
        assert_eq!(
            unsafe { rg_run_agent_id(r, i, buf.as_mut_ptr(), buf.len(), &mut len) },
            RG_OK
        );
        assert_eq!(len, track.id.len());
        assert_eq!(
            unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(),
            track.id
        );

        let mut a = unsafe { std::mem::zeroed::<RgAgentSummary>() };
        assert_eq!(unsafe { rg_run_agent_summary(r, i, &mut a) }, RG_OK);
        let m = report.agent(&track.id).unwrap();
        assert_eq!(a.samples, track.records.len());
        assert_eq!(a.velocity_rms, m.velocity_rms);
        assert_eq!(a.finished_at, track.finished_at.unwrap());

        let last = track.records.len() - 1;
        let mut p = unsafe { std::mem::zeroed::<RgSample>() };
        assert_eq!(unsafe { rg_run_sample(r, i, last, &mut p) }, RG_OK);
        let rec = &track.records[last];
        assert_eq!(
            (p.t, p.vx, p.x, p.y, p.ax),
            (
                rec.t,
                rec.state.vx,
                rec.state.x,
                rec.state.y,
                rec.control.ax
            )
        );
        assert_eq!(
            unsafe { rg_run_sample(r, i, last + 1, &mut p) },
            RG_ERR_RANGE
        );
    }

    unsafe {
        rg_run_free(r);
        rg_scenario_free(s);
    }
}

#[test]
fn errors_map_to_codes_and_messages() {
    let mut s = ptr::null_mut();
    let unknown = CString::new("case9").unwrap();
    assert_eq!(
        unsafe { rg_scenario_bundled(unknown.as_ptr(), &mut s) },
        RG_ERR_RANGE
    );
    assert!(last_error().contains("case9"));
    assert!(s.is_null());

    assert_eq!(
        unsafe { rg_scenario_bundled(ptr::null(), &mut s) },
        RG_ERR_NULL
    );
    let broken = CString::new("name = [").unwrap();
    assert_eq!(
        unsafe { rg_scenario_parse(broken.as_ptr(), &mut s) },
        RG_ERR_CONFIG
    );
    assert!(!last_error().is_empty());
    let bad_utf8 = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { rg_scenario_parse(bad_utf8.as_ptr().cast(), &mut s) },
        RG_ERR_UTF8
    );

    let valid = scenario("case1_A");
    assert_eq!(
        unsafe { rg_scenario_set_duration(valid, -1.0) },
        RG_ERR_CONFIG
    );
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { rg_run(valid, 7, &mut r) }, RG_ERR_RANGE);
    assert_eq!(
        unsafe { rg_run(ptr::null(), RG_SOLVER_STACKELBERG, &mut r) },
        RG_ERR_NULL
    );
    assert_eq!(
        unsafe { rg_run(valid, RG_SOLVER_STACKELBERG, ptr::null_mut()) },
        RG_ERR_NULL
    );
    assert_eq!(
        unsafe { rg_run_summary(ptr::null(), ptr::null_mut()) },
        RG_ERR_NULL
    );

    // success clears the message
    let mut n = 0;
    assert_eq!(unsafe { rg_scenario_agent_count(valid, &mut n) }, RG_OK);
    assert_eq!(unsafe { rg_last_error(ptr::null_mut(), 0) }, 0);

    unsafe {
        rg_scenario_free(valid);
        rg_scenario_free(ptr::null_mut());
        rg_run_free(ptr::null_mut());
    }
}

#[test]
fn parsed_scenarios_run_and_export() {
    let toml = CString::new(bundled("case2_B").unwrap()).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { rg_scenario_parse(toml.as_ptr(), &mut s) }, RG_OK);
    assert_eq!(unsafe { rg_scenario_set_duration(s, 1.0) }, RG_OK);
    let r = simulate(s, RG_SOLVER_STACKELBERG);
    let mut sum = unsafe { std::mem::zeroed::<RgSummary>() };
    assert_eq!(unsafe { rg_run_summary(r, &mut sum) }, RG_OK);
    assert_eq!(sum.termination, RG_TERM_DURATION);
    assert!((sum.end_time - 1.0).abs() < 1e-9);
    let mut a = unsafe { std::mem::zeroed::<RgAgentSummary>() };
    assert_eq!(unsafe { rg_run_agent_summary(r, 0, &mut a) }, RG_OK);
    assert!(a.finished_at.is_nan());
    assert_eq!(
        unsafe { rg_run_agent_summary(r, sum.agents, &mut a) },
        RG_ERR_RANGE
    );

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { rg_run_export(r, path.as_ptr()) }, RG_OK);
    assert!(dir.path().join("case2_B_sg_summary.json").exists());

    let file = dir.path().join("occupied");
    std::fs::write(&file, "").unwrap();
    let path = CString::new(file.join("sub").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { rg_run_export(r, path.as_ptr()) }, RG_ERR_IO);

    unsafe {
        rg_run_free(r);
        rg_scenario_free(s);
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(rg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/roundabout.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "rg_run",
        "rg_run_summary",
        "rg_last_error",
        "RG_ERR_PANIC",
        "RgSample",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"roundabout.h\"\nint main(void) { RgScenario *s = 0; RgSummary m; (void)m; \
         return rg_scenario_bundled(\"case1_A\", &s); }\n",
    )
    .unwrap();
    let include = header.parent().unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let status = match Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(include)
            .arg(&src)
            .status()
        {
            Ok(s) => s,
            Err(_) => {
                eprintln!("{compiler} not found, skipping");
                continue;
            }
        };
        assert!(status.success(), "{compiler} rejected the header");
    }
}
