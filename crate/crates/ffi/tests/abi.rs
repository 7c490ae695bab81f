use std::ffi::{CStr, CString};
use std::ptr;

use lcscale::data::{synth_generate, SynthConfig};
use lcscale_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        lcs_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn fit_and_predict_round_trip() {
    let ds = synth_generate(&SynthConfig {
        tasks: 2,
        withins: 2,
        points_per_curve: 4,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let json = CString::new(ds.to_json_string().unwrap()).unwrap();
    unsafe {
        let mut handle = ptr::null_mut();
        assert_eq!(lcs_dataset_from_json(json.as_ptr(), &mut handle), LcsStatus::Ok);
        assert_eq!(lcs_dataset_len(handle), 4);
        let mut model = ptr::null_mut();
        assert_eq!(
            lcs_model_fit(handle, LcsModelKind::Dhgp, 0, 30, &mut model),
            LcsStatus::Ok
        );
        let c = &ds.curves[0];
        let (task, within) = (
            CString::new(c.key.task.clone()).unwrap(),
            CString::new(c.key.within.clone()).unwrap(),
        );
        let mut mean = vec![0.0; c.len()];
        let mut var = vec![0.0; c.len()];
        let s = lcs_model_predict(
            model,
            task.as_ptr(),
            within.as_ptr(),
            c.x.as_ptr(),
            c.len(),
            mean.as_mut_ptr(),
            var.as_mut_ptr(),
        );
        assert_eq!(s, LcsStatus::Ok);
        assert!(var.iter().all(|v| *v > 0.0));
        assert!(mean.iter().all(|m| m.is_finite()));
        lcs_model_free(model);
        lcs_dataset_free(handle);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut handle = ptr::null_mut();
        let bad = CString::new("{not json").unwrap();
        assert_eq!(lcs_dataset_from_json(bad.as_ptr(), &mut handle), LcsStatus::Data);
        assert!(handle.is_null());
        assert!(!last_error().is_empty());

        let missing = CString::new("/nonexistent/lcscale.json").unwrap();
        assert_eq!(lcs_dataset_load(missing.as_ptr(), &mut handle), LcsStatus::Data);
        assert_eq!(lcs_dataset_load(ptr::null(), &mut handle), LcsStatus::NullPointer);
        assert_eq!(lcs_dataset_len(ptr::null()), 0);
        lcs_dataset_free(ptr::null_mut());
    }
}

#[test]
fn scaling_helpers() {
    unsafe {
        let mut abc = 0.0;
        assert_eq!(
            lcs_abc_lines(2.957, -0.043, 3.51, -0.056, 13.0, 23.0, &mut abc),
            LcsStatus::Ok
        );
        assert!((abc - 3.19).abs() < 0.01);
        let compute = [1e18, 1e19, 1e20];
        let loss: Vec<f64> = compute
            .iter()
            .map(|c: &f64| 10f64.powf(0.5 - 0.05 * c.log10()))
            .collect();
        let (mut b0, mut b1) = (0.0, 0.0);
        assert_eq!(
            lcs_fit_loglog(compute.as_ptr(), loss.as_ptr(), 3, &mut b0, &mut b1),
            LcsStatus::Ok
        );
        assert!((b0 - 0.5).abs() < 1e-10 && (b1 + 0.05).abs() < 1e-12);
        assert_eq!(
            lcs_fit_loglog(compute.as_ptr(), loss.as_ptr(), 1, &mut b0, &mut b1),
            LcsStatus::Data
        );
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/lcscale.h")).unwrap();
    for name in [
        "lcs_dataset_load",
        "lcs_model_fit",
        "lcs_model_predict",
        "lcs_abc_lines",
        "lcs_last_error",
        "LCS_STATUS_OK",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
