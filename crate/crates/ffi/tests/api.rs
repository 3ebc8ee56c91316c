use std::ffi::{CStr, CString};
use std::ptr;

use uav_coop_ffi::*;

fn last_error() -> String {
    let p = uav_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn scenario(seed: u64) -> *mut UavScenario {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { uav_scenario_generate(0, 0, 0.0, seed, &mut s) }, UavStatus::Ok);
    assert!(!s.is_null());
    s
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(uav_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn scenario_text_round_trip_and_file_load() {
    let s = scenario(3);
    let mut text = ptr::null_mut();
    unsafe {
        assert_eq!(uav_scenario_to_string(s, &mut text), UavStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(uav_scenario_parse(text, &mut back), UavStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(uav_scenario_to_string(back, &mut again), UavStatus::Ok);
        assert_eq!(CStr::from_ptr(text), CStr::from_ptr(again));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.toml");
        std::fs::write(&path, CStr::from_ptr(text).to_bytes()).unwrap();
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        let mut loaded = ptr::null_mut();
        assert_eq!(uav_scenario_load(cpath.as_ptr(), &mut loaded), UavStatus::Ok);
        let (mut l, mut k, mut t) = (0, 0, 0);
        assert_eq!(uav_scenario_dims(loaded, &mut l, &mut k, &mut t), UavStatus::Ok);
        assert_eq!((l, k, t), (3, 2, 4));

        uav_string_free(text);
        uav_string_free(again);
        uav_scenario_free(back);
        uav_scenario_free(loaded);
        uav_scenario_free(s);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(uav_scenario_generate(0, 0, 0.0, 1, ptr::null_mut()), UavStatus::NullPointer);
        assert!(last_error().contains("null"));

        let missing = CString::new("/nonexistent/scenario.toml").unwrap();
        assert_eq!(uav_scenario_load(missing.as_ptr(), &mut s), UavStatus::Io);
        assert!(s.is_null());

        let junk = CString::new("this is = = not a scenario").unwrap();
        assert_eq!(uav_scenario_parse(junk.as_ptr(), &mut s), UavStatus::Parse);

        // more users than UAV antennas can serve
        assert_eq!(uav_scenario_generate(1, 9, 0.0, 1, &mut s), UavStatus::InvalidArgument);
        assert!(!last_error().is_empty());

        let sc = scenario(1);
        let mut r = ptr::null_mut();
        let bad = CString::new("baseline9").unwrap();
        assert_eq!(uav_plan_block(sc, 0, bad.as_ptr(), ptr::null(), &mut r), UavStatus::InvalidArgument);
        assert!(last_error().contains("baseline9"));
        let ok = CString::new("proposed").unwrap();
        assert_eq!(uav_plan_block(sc, 99, ok.as_ptr(), ptr::null(), &mut r), UavStatus::InvalidArgument);
        let mut cfg = uav_ccp_settings_default();
        cfg.epsilon = -1.0;
        assert_eq!(uav_plan_block(sc, 0, ok.as_ptr(), &cfg, &mut r), UavStatus::InvalidArgument);
        assert!(r.is_null());
        uav_scenario_free(sc);

        // a successful call clears the message
        let sc = scenario(2);
        assert!(uav_last_error_message().is_null());
        uav_scenario_free(sc);
        uav_scenario_free(ptr::null_mut());
        uav_result_free(ptr::null_mut());
        uav_string_free(ptr::null_mut());
    }
}

#[test]
fn plan_block_exposes_result() {
    unsafe {
        let s = scenario(0);
        let scheme = CString::new("proposed").unwrap();
        let mut r = ptr::null_mut();
        assert_eq!(uav_plan_block(s, 0, scheme.as_ptr(), ptr::null(), &mut r), UavStatus::Ok, "{}", {
            let p = uav_last_error_message();
            if p.is_null() { String::new() } else { CStr::from_ptr(p).to_string_lossy().into_owned() }
        });

        let mut sum = UavPowerSummary::default();
        assert_eq!(uav_result_summary(r, &mut sum), UavStatus::Ok);
        assert!(sum.weighted_total > 0.0 && sum.bs_total > 0.0);
        assert!(sum.iterations >= 1);

        let mut n = 0;
        assert_eq!(uav_result_trajectory(r, ptr::null_mut(), 0, &mut n), UavStatus::Ok);
        assert_eq!(n, 3 * 5 * 3);
        let mut small = vec![0.0; n - 1];
        assert_eq!(
            uav_result_trajectory(r, small.as_mut_ptr(), small.len(), ptr::null_mut()),
            UavStatus::BufferTooSmall
        );
        let mut traj = vec![f64::NAN; n];
        assert_eq!(uav_result_trajectory(r, traj.as_mut_ptr(), n, ptr::null_mut()), UavStatus::Ok);
        assert!(traj.iter().all(|v| v.is_finite()));

        let mut coop = vec![9u8; 6];
        assert_eq!(uav_result_coop(r, coop.as_mut_ptr(), 6, &mut n), UavStatus::Ok);
        assert_eq!(n, 6);
        assert!(coop.iter().all(|&q| q <= 1));
        // every user is served by some UAV
        for k in 0..2 {
            assert!((0..3).any(|l| coop[l * 2 + k] == 1));
        }

        let mut csv = ptr::null_mut();
        assert_eq!(uav_result_trace_csv(r, &mut csv), UavStatus::Ok);
        let text = CStr::from_ptr(csv).to_str().unwrap().to_owned();
        assert!(text.lines().count() >= 2, "{text}");
        uav_string_free(csv);

        uav_result_free(r);
        uav_scenario_free(s);
    }
}
