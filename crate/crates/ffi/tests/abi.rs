use std::ffi::{c_void, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use boasbuck_ffi::*;

fn builtin(name: &str) -> *mut BbSystem {
    let name = CString::new(name).unwrap();
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { bb_system_builtin(name.as_ptr(), &mut sys) }, BbStatus::Ok);
    assert!(!sys.is_null());
    sys
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(bb_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

unsafe extern "C" fn scaled_square(s: f64, ctx: *mut c_void) -> f64 {
    let k = *(ctx as *const f64);
    k * s * s
}

#[test]
fn callback_matches_closed_form() {
    let sys = builtin("exp1");
    let mut op = ptr::null_mut();
    unsafe {
        assert_eq!(
            bb_operator_new(sys, BbOperatorKind::Durrmeyer, 41, &mut op),
            BbStatus::Ok
        );
        let mut k = 2.0_f64;
        let mut v = BbValue::default();
        let st = bb_operator_apply(
            op,
            Some(scaled_square),
            &mut k as *mut f64 as *mut c_void,
            ptr::null(),
            0,
            1.0,
            &mut v,
        );
        assert_eq!(st, BbStatus::Ok, "{}", last_error());
        // B(s^2; 1) = 1 + mu2 with mu2 = (1 + 3) / 40
        assert!((v.value - 2.0 * 1.1).abs() < 1e-8, "{}", v.value);
        assert!(v.j_cut > 0);
        let mut m = BbMoments::default();
        assert_eq!(bb_moments(sys, 41, 1.0, &mut m), BbStatus::Ok);
        assert!((m.mu2 - 0.1).abs() < 1e-12);
        assert!((m.durrmeyer[2] - 1.1).abs() < 1e-12);
        bb_operator_free(op);
        bb_system_free(sys);
    }
}

#[test]
fn builtin_function_and_kernel_cdf() {
    let sys = builtin("exp2");
    let mut op = ptr::null_mut();
    unsafe {
        assert_eq!(
            bb_operator_new(sys, BbOperatorKind::Durrmeyer, 40, &mut op),
            BbStatus::Ok
        );
        bb_system_free(sys);
        let id = CString::new("one").unwrap();
        let mut v = BbValue::default();
        assert_eq!(bb_operator_apply_builtin(op, id.as_ptr(), 2.0, &mut v), BbStatus::Ok);
        assert!((v.value - 1.0).abs() < 1e-8);
        let mut c0 = 0.0;
        let mut c1 = 0.0;
        assert_eq!(bb_operator_kernel_cdf(op, 2.0, 0.5, &mut c0), BbStatus::Ok);
        assert_eq!(bb_operator_kernel_cdf(op, 2.0, 1.5, &mut c1), BbStatus::Ok);
        assert!(0.0 <= c0 && c0 <= c1 && c1 <= 1.0);
        bb_operator_free(op);
    }
}

#[test]
fn theta_and_p() {
    let sys = builtin("exp1");
    unsafe {
        let mut p = 0.0;
        assert_eq!(bb_p_of_x(sys, 10, 0.5, &mut p), BbStatus::Ok);
        assert!((p - 2.5).abs() < 1e-12);
        let mut buf = [0.0; 5];
        assert_eq!(bb_theta_values(sys, 1.0, 4, buf.as_mut_ptr(), buf.len()), BbStatus::Ok);
        assert_eq!(buf, [1.0, 0.0, 0.5, 0.0, 0.125]);
        assert_eq!(
            bb_theta_values(sys, 1.0, 5, buf.as_mut_ptr(), buf.len()),
            BbStatus::BufferTooSmall
        );
        let mut ok = false;
        assert_eq!(bb_system_validate(sys, &mut ok), BbStatus::Ok);
        assert!(ok);
        bb_system_free(sys);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut sys = ptr::null_mut();
        let name = CString::new("nope").unwrap();
        assert_eq!(bb_system_builtin(name.as_ptr(), &mut sys), BbStatus::InvalidArgument);
        assert!(last_error().contains("nope"));
        assert_eq!(bb_system_builtin(ptr::null(), &mut sys), BbStatus::NullPointer);
        let bad = CString::new("{not json").unwrap();
        assert_eq!(bb_system_from_json(bad.as_ptr(), &mut sys), BbStatus::Parse);
        let path = CString::new("/nonexistent/system.json").unwrap();
        assert_eq!(bb_system_load(path.as_ptr(), &mut sys), BbStatus::Io);
        let invalid = [0xffu8, 0];
        assert_eq!(
            bb_system_builtin(invalid.as_ptr().cast(), &mut sys),
            BbStatus::InvalidUtf8
        );

        let good = builtin("exp1");
        let mut op = ptr::null_mut();
        assert_eq!(
            bb_operator_new(good, BbOperatorKind::Durrmeyer, 1, &mut op),
            BbStatus::InvalidArgument
        );
        assert_eq!(
            bb_operator_new(good, BbOperatorKind::Discrete, 10, &mut op),
            BbStatus::Ok
        );
        assert!(last_error().is_empty());
        assert_eq!(bb_operator_set_trunc_eps(op, 0.5), BbStatus::InvalidArgument);
        assert_eq!(bb_operator_set_drop_j0(op, true), BbStatus::Ok);
        let mut c = 0.0;
        assert_eq!(bb_operator_kernel_cdf(op, 1.0, 0.5, &mut c), BbStatus::InvalidArgument);
        let mut v = BbValue::default();
        assert_eq!(
            bb_operator_apply(op, None, ptr::null_mut(), ptr::null(), 0, 1.0, &mut v),
            BbStatus::NullPointer
        );
        bb_operator_free(op);
        bb_system_free(good);
        bb_system_free(ptr::null_mut());
        let name = CStr::from_ptr(bb_status_name(BbStatus::Evaluation));
        assert_eq!(name.to_str().unwrap(), "evaluation error");
    }
}

#[test]
fn header_declares_entry_points() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/boasbuck.h")).unwrap();
    for sym in [
        "bb_system_builtin",
        "bb_system_from_json",
        "bb_system_load",
        "bb_system_free",
        "bb_operator_new",
        "bb_operator_apply",
        "bb_operator_apply_builtin",
        "bb_operator_kernel_cdf",
        "bb_moments",
        "bb_last_error_message",
        "typedef struct BbSystem BbSystem",
        "BB_STATUS_EVALUATION = 7",
    ] {
        assert!(header.contains(sym), "missing {sym}");
    }
}

#[test]
fn c_program_links_against_shared_library() {
    let target = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = target.join("libboasbuck_ffi.so");
    if !cfg!(target_os = "linux") {
        return;
    }
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::temp_dir().join(format!("boasbuck_smoke_{}", std::process::id()));
    let status = Command::new("cc")
        .arg(dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg("-L")
        .arg(&target)
        .arg(format!("-Wl,-rpath,{}", target.display()))
        .args(["-lboasbuck_ffi", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    let _ = std::fs::remove_file(&exe);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1.100000");
}
