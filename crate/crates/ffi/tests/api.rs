use std::ffi::{CStr, CString};
use std::ptr;

use wavephase_ffi::*;

fn last_error() -> String {
    let p = wp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn bank_frame_bounds_and_channels() {
    unsafe {
        let mut bank = ptr::null_mut();
        assert_eq!(wp_bank_bump(32, 3, 4, &mut bank), WpStatus::Ok);
        assert_eq!(wp_bank_num_channels(bank), 3 * 4 + 1);
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(wp_bank_frame_bounds(bank, &mut a, &mut b), WpStatus::Ok);
        assert!(0.0 < a && a <= b, "{a} {b}");
        wp_bank_free(bank);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut bank = ptr::null_mut();
        assert_eq!(wp_bank_bump(32, 0, 4, &mut bank), WpStatus::Config);
        assert!(bank.is_null());
        assert!(!last_error().is_empty());
        let v = [0.0; 10];
        let mut f = ptr::null_mut();
        assert_eq!(wp_field_from_real(4, v.as_ptr(), v.len(), &mut f), WpStatus::Shape);
        assert!(last_error().contains("10"));
        assert_eq!(wp_bank_frame_bounds(ptr::null(), ptr::null_mut(), ptr::null_mut()), WpStatus::NullPointer);
        let missing = CString::new("/nonexistent/x.phkf").unwrap();
        assert_eq!(wp_field_load(missing.as_ptr(), &mut f), WpStatus::Io);
        assert_eq!(wp_field_side(ptr::null()), 0);
        wp_field_free(ptr::null_mut());
    }
}

#[test]
fn field_round_trip_through_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("x.phkf").to_str().unwrap()).unwrap();
    unsafe {
        let mut x = ptr::null_mut();
        assert_eq!(wp_field_white_noise(16, 2.0, 7, &mut x), WpStatus::Ok);
        assert_eq!(wp_field_side(x), 16);
        assert_eq!(wp_field_save(x, path.as_ptr()), WpStatus::Ok);
        let mut y = ptr::null_mut();
        assert_eq!(wp_field_load(path.as_ptr(), &mut y), WpStatus::Ok);
        let (mut a, mut b) = (vec![0.0; 256], vec![0.0; 256]);
        assert_eq!(wp_field_real(x, a.as_mut_ptr(), 256), WpStatus::Ok);
        assert_eq!(wp_field_real(y, b.as_mut_ptr(), 256), WpStatus::Ok);
        assert_eq!(a, b);
        assert_eq!(wp_field_real(y, b.as_mut_ptr(), 255), WpStatus::Shape);
        wp_field_free(x);
        wp_field_free(y);
    }
}

#[test]
fn estimate_fit_sample_and_synthesize() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut bank = ptr::null_mut();
        assert_eq!(wp_bank_bump(16, 2, 4, &mut bank), WpStatus::Ok);
        let mut x = ptr::null_mut();
        assert_eq!(wp_field_white_noise(16, 1.0, 3, &mut x), WpStatus::Ok);
        let mut table = ptr::null_mut();
        assert_eq!(wp_table_estimate(x, bank, WpModel::A, &mut table), WpStatus::Ok);
        assert!(wp_table_num_edges(table) > 0);
        let tp = CString::new(dir.path().join("t.phkt").to_str().unwrap()).unwrap();
        assert_eq!(wp_table_save(table, tp.as_ptr()), WpStatus::Ok);
        let mut model = ptr::null_mut();
        assert_eq!(wp_gaussian_fit(table, bank, 1e-6, &mut model), WpStatus::Ok, "{}", last_error());
        assert!(wp_gaussian_max_rel_error(model) < 1e-3);
        let (mut s1, mut s2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(wp_gaussian_sample(model, 5, &mut s1), WpStatus::Ok);
        assert_eq!(wp_gaussian_sample(model, 5, &mut s2), WpStatus::Ok);
        let (mut a, mut b) = (vec![0.0; 256], vec![0.0; 256]);
        wp_field_real(s1, a.as_mut_ptr(), 256);
        wp_field_real(s2, b.as_mut_ptr(), 256);
        assert_eq!(a, b);

        let mut best = ptr::null_mut();
        let mut rel = f64::NAN;
        assert_eq!(wp_synthesize(x, bank, WpModel::B, 1, 30, 11, &mut best, &mut rel), WpStatus::Ok, "{}", last_error());
        assert!(rel < 1.0, "{rel}");
        assert_eq!(wp_field_side(best), 16);

        for f in [x, s1, s2, best] {
            wp_field_free(f);
        }
        wp_gaussian_free(model);
        wp_table_free(table);
        wp_bank_free(bank);
    }
}

#[test]
fn version_is_nonempty() {
    let v = unsafe { CStr::from_ptr(wp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
