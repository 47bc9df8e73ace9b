use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use bohmflow_ffi::*;

fn scenario(text: &str) -> *mut BfScenario {
    let cfg = CString::new(text).unwrap();
    let mut s = ptr::null_mut();
    let st = unsafe { bf_scenario_from_config(cfg.as_ptr(), &mut s) };
    assert_eq!(st, BfStatus::Ok, "{}", last_error());
    assert!(!s.is_null());
    s
}

fn last_error() -> String {
    let p = bf_last_error();
    if p.is_null() {
        String::new()
    } else {
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }
}

#[test]
fn detector_probabilities_through_the_abi() {
    for (kind, want) in [("no_device", (0.0, 1.0)), ("cavity", (0.5, 0.5))] {
        let s = scenario(&format!("scenario.kind = \"{kind}\""));
        let (mut a, mut b) = (f64::NAN, f64::NAN);
        assert_eq!(unsafe { bf_detector_probabilities(s, &mut a, &mut b) }, BfStatus::Ok);
        assert!((a - want.0).abs() < 1e-12 && (b - want.1).abs() < 1e-12, "{kind}: {a} {b}");
        unsafe { bf_scenario_free(s) };
    }
}

#[test]
fn fields_match_the_rust_library() {
    let s = scenario("scenario.kind = \"cavity\"");
    let mut dim = 0usize;
    let mut w = BfWindow::default();
    unsafe {
        assert_eq!(bf_scenario_dim(s, &mut dim), BfStatus::Ok);
        assert_eq!(bf_scenario_window(s, &mut w), BfStatus::Ok);
    }
    assert_eq!(dim, 3);
    assert!(w.t_in < w.t_cross && w.t_cross < w.t_out && w.t_out < w.t_readout);

    let inner = bohmflow::scenarios::build_cavity(
        &bohmflow::scenarios::Geometry::default(),
        &bohmflow::scenarios::CavitySpec::default(),
    )
    .unwrap();
    let state = inner.pure_state().unwrap();
    let c = state.branches()[0].atom.center(w.t_cross);
    let q = [c[0] + 1.0, c[1] - 2.0, 1.0];
    let point = bohmflow::wavepacket::ConfigPoint::from_slice(&q).unwrap();

    let mut p = 0.0;
    let mut v = [0.0; 3];
    let mut qp = 0.0;
    unsafe {
        assert_eq!(bf_density(s, q.as_ptr(), 3, w.t_cross, &mut p), BfStatus::Ok);
        assert_eq!(bf_velocity(s, 0, q.as_ptr(), 3, w.t_cross, v.as_mut_ptr()), BfStatus::Ok);
        assert_eq!(bf_quantum_potential(s, 0, q.as_ptr(), 3, w.t_cross, &mut qp), BfStatus::Ok);
    }
    assert_eq!(p, bohmflow::fields::density(state, &point, w.t_cross).unwrap());
    let vr = bohmflow::fields::velocity_all(state, &point, w.t_cross).unwrap();
    assert_eq!(&v[..], &vr[..3]);
    assert_eq!(qp, bohmflow::fields::quantum_potential_total(state, &point, w.t_cross).unwrap());

    let mut flux = f64::NAN;
    assert_eq!(unsafe { bf_plane_flux(s, w.t_cross, &mut flux) }, BfStatus::Ok);
    assert!(flux.abs() < 1e-10);
    unsafe { bf_scenario_free(s) };
}

#[test]
fn errors_carry_status_and_message() {
    let bad = CString::new("scenario.kind = \"cavity\"\ndevice.bogus = 1").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { bf_scenario_from_config(bad.as_ptr(), &mut s) }, BfStatus::Config);
    assert!(s.is_null());
    assert!(last_error().contains("device.bogus"), "{}", last_error());

    let s = scenario("scenario.kind = \"no_device\"");
    let q = [0.0, 0.0, 0.0];
    let mut p = 0.0;
    assert_eq!(unsafe { bf_density(s, q.as_ptr(), 3, 1.0, &mut p) }, BfStatus::InvalidArgument);
    assert_eq!(unsafe { bf_density(ptr::null(), q.as_ptr(), 2, 1.0, &mut p) }, BfStatus::InvalidArgument);
    // Far outside both packets the density underflows and the velocity is undefined.
    let far = [-1e6, 5e5];
    let mut v = [0.0; 2];
    assert_eq!(
        unsafe { bf_velocity(s, 0, far.as_ptr(), 2, 1.0, v.as_mut_ptr()) },
        BfStatus::Degenerate
    );
    assert_eq!(unsafe { bf_velocity(s, 3, far.as_ptr(), 2, 1.0, v.as_mut_ptr()) }, BfStatus::InvalidArgument);
    unsafe { bf_scenario_free(s) };
}

#[test]
fn ensemble_handle_reports_endpoints() {
    let s = scenario("scenario.kind = \"no_device\"");
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { bf_ensemble_run(s, 8, 42, 0.0, 2.0, 0.01, &mut e) }, BfStatus::Ok);
    let mut n = 0;
    assert_eq!(unsafe { bf_ensemble_len(e, &mut n) }, BfStatus::Ok);
    assert_eq!(n, 8);
    for i in 0..n {
        let mut q = [0.0; 2];
        let (mut comp, mut term) = (9usize, 9u32);
        assert_eq!(
            unsafe { bf_ensemble_endpoint(e, i, q.as_mut_ptr(), 2, &mut comp, &mut term) },
            BfStatus::Ok
        );
        assert_eq!((comp, term), (0, 0));
        assert!(q[0] > 0.0);
    }
    let mut q = [0.0; 2];
    let (mut comp, mut term) = (0usize, 0u32);
    assert_eq!(
        unsafe { bf_ensemble_endpoint(e, n, q.as_mut_ptr(), 2, &mut comp, &mut term) },
        BfStatus::InvalidArgument
    );
    unsafe {
        bf_ensemble_free(e);
        bf_scenario_free(s);
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(bf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/bohmflow.h");
    let text = std::fs::read_to_string(&header).expect("build script writes the header");
    for name in ["bf_scenario_from_config", "bf_ensemble_run", "BF_STATUS_DEGENERATE", "typedef struct BfScenario"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() else {
        eprintln!("no C compiler found; syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
