use std::ffi::{CStr, CString};
use std::ptr;

use beamscope_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(bs_last_error()) }.to_string_lossy().into_owned()
}

fn sensing(n: usize, m: usize, seed: u64) -> *mut BsSensing {
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { bs_sensing_new(n, m, seed, &mut sys) }, BsStatus::Ok);
    assert!(!sys.is_null());
    sys
}

#[test]
fn status_codes_are_stable() {
    assert_eq!(BsStatus::Ok as i32, 0);
    assert_eq!(BsStatus::InvalidArgument as i32, 1);
    assert_eq!(BsStatus::NullPointer as i32, 2);
    assert_eq!(BsStatus::Io as i32, 3);
    assert_eq!(BsStatus::Parse as i32, 4);
    assert_eq!(BsStatus::Internal as i32, 5);
}

#[test]
fn sensing_lifecycle_and_errors() {
    let sys = sensing(16, 8, 1);
    let (mut n, mut m) = (0usize, 0usize);
    assert_eq!(unsafe { bs_sensing_dims(sys, &mut n, &mut m) }, BsStatus::Ok);
    assert_eq!((n, m), (16, 8));
    assert_eq!(last_error(), "");
    unsafe { bs_sensing_free(sys) };
    unsafe { bs_sensing_free(ptr::null_mut()) };

    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { bs_sensing_new(4, 8, 0, &mut bad) }, BsStatus::InvalidArgument);
    assert!(bad.is_null());
    assert!(last_error().contains("m <= n"), "{}", last_error());
    assert_eq!(unsafe { bs_sensing_new(8, 4, 0, ptr::null_mut()) }, BsStatus::NullPointer);
    assert_eq!(
        unsafe { bs_sensing_dims(ptr::null(), &mut n, &mut m) },
        BsStatus::NullPointer
    );
}

#[test]
fn estimators_recover_a_one_sparse_channel() {
    let (n, m) = (32, 16);
    let sys = sensing(n, m, 5);
    let mut h = vec![0.0; 2 * n];
    h[2 * 7] = 3.0;
    h[2 * 7 + 1] = -1.0;
    let mut y = vec![0.0; 2 * m];
    assert_eq!(unsafe { bs_measure(sys, h.as_ptr(), f64::INFINITY, 0, y.as_mut_ptr()) }, BsStatus::Ok);

    let mut est = vec![0.0; 2 * n];
    assert_eq!(unsafe { bs_omp_estimate(sys, y.as_ptr(), 1, est.as_mut_ptr()) }, BsStatus::Ok);
    for (a, b) in est.iter().zip(&h) {
        assert!((a - b).abs() < 1e-10);
    }
    let mut nmse = 0.0;
    assert_eq!(unsafe { bs_nmse_db(est.as_ptr(), h.as_ptr(), n, 1, &mut nmse) }, BsStatus::Ok);
    assert!(nmse < -150.0 + 1e-9);

    let mut amp = vec![0.0; 2 * n];
    assert_eq!(unsafe { bs_amp_estimate(sys, y.as_ptr(), 10, 1.1402, amp.as_mut_ptr()) }, BsStatus::Ok);

    let mut net = ptr::null_mut();
    assert_eq!(unsafe { bs_network_lamp_from_amp(sys, 10, 1.1402, &mut net) }, BsStatus::Ok);
    assert_eq!(unsafe { bs_network_depth(net) }, 10);
    let mut lamp = vec![0.0; 2 * n];
    assert_eq!(unsafe { bs_network_estimate(net, sys, y.as_ptr(), lamp.as_mut_ptr()) }, BsStatus::Ok);
    for (a, b) in amp.iter().zip(&lamp) {
        assert!((a - b).abs() < 1e-10);
    }
    assert_eq!(unsafe { bs_omp_estimate(sys, y.as_ptr(), 0, est.as_mut_ptr()) }, BsStatus::InvalidArgument);
    assert_eq!(unsafe { bs_amp_estimate(sys, ptr::null(), 1, 1.0, est.as_mut_ptr()) }, BsStatus::NullPointer);
    unsafe {
        bs_network_free(net);
        bs_sensing_free(sys);
    }
}

#[test]
fn checkpoint_round_trip_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let sys = sensing(16, 8, 2);
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { bs_network_lamp_from_amp(sys, 3, 0.7, &mut net) }, BsStatus::Ok);
    let path = CString::new(dir.path().join("n.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { bs_network_save(net, path.as_ptr()) }, BsStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { bs_network_load(path.as_ptr(), &mut back) }, BsStatus::Ok);
    assert_eq!(unsafe { bs_network_depth(back) }, 3);

    let missing = CString::new(dir.path().join("nope.ckpt").to_str().unwrap()).unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { bs_network_load(missing.as_ptr(), &mut none) }, BsStatus::Io);
    assert!(last_error().contains("nope.ckpt"));

    let garbage = dir.path().join("garbage.ckpt");
    std::fs::write(&garbage, b"not a checkpoint").unwrap();
    let garbage = CString::new(garbage.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { bs_network_load(garbage.as_ptr(), &mut none) }, BsStatus::Parse);
    assert_eq!(unsafe { bs_network_load(ptr::null(), &mut none) }, BsStatus::NullPointer);
    unsafe {
        bs_network_free(net);
        bs_network_free(back);
        bs_sensing_free(sys);
    }
}

#[test]
fn multiply_counts_match_core() {
    assert_eq!(
        bs_count_multiplies(BsEstimator::Amp, 256, 128, 10, 0),
        beamscope::estimators::count_multiplies(beamscope::estimators::EstimatorKind::Amp, 256, 128, 10)
    );
    let gm = bs_count_multiplies(BsEstimator::GmLamp, 256, 128, 8, 4);
    assert!((gm as f64 / 6.1e5 - 1.0).abs() < 0.1);
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/beamscope.h")).unwrap();
    for sym in [
        "typedef struct BsSensing BsSensing",
        "typedef struct BsNetwork BsNetwork",
        "BS_STATUS_NULL_POINTER = 2",
        "bs_last_error(void)",
        "bs_network_estimate(",
        "bs_sensing_free(",
        "bs_nmse_db(",
    ] {
        assert!(header.contains(sym), "missing {sym}");
    }
}
