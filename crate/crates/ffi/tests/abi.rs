use std::ffi::{CStr, CString};
use std::ptr;

use weavestat_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ws_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn volume_lifecycle_and_fractions() {
    let labels: Vec<u16> = (0..64)
        .map(|i| (i % 4 == 0) as u16 + (i % 8 == 0) as u16)
        .collect();
    let mut vol = ptr::null_mut();
    unsafe {
        assert_eq!(
            ws_label_volume_new(labels.as_ptr(), 4, 4, 4, 0.5, &mut vol),
            WsStatus::Ok
        );
        let mut shape = [0usize; 3];
        assert_eq!(ws_label_volume_shape(vol, shape.as_mut_ptr()), WsStatus::Ok);
        assert_eq!(shape, [4, 4, 4]);
        let mut c = 0;
        assert_eq!(ws_label_volume_num_classes(vol, &mut c), WsStatus::Ok);
        assert_eq!(c, 3);
        let mut phi = [0.0; 3];
        assert_eq!(ws_volume_fractions(vol, phi.as_mut_ptr(), 3), WsStatus::Ok);
        assert_eq!(phi, [48.0 / 64.0, 8.0 / 64.0, 8.0 / 64.0]);
        assert_eq!(
            ws_volume_fractions(vol, phi.as_mut_ptr(), 2),
            WsStatus::BufferTooSmall
        );

        let mut corr = ptr::null_mut();
        assert_eq!(ws_s2(vol, 1, true, &mut corr), WsStatus::Ok);
        let mut zero = 0.0;
        assert_eq!(ws_correlation_zero_lag(corr, &mut zero), WsStatus::Ok);
        assert!((zero - phi[1]).abs() < 1e-12);
        let mut cshape = [0usize; 3];
        ws_correlation_shape(corr, cshape.as_mut_ptr());
        assert_eq!(cshape, [4, 4, 4]);
        let mut values = vec![0.0; 64];
        assert_eq!(
            ws_correlation_values(corr, values.as_mut_ptr(), 64),
            WsStatus::Ok
        );
        assert!((values[2 * 16 + 2 * 4 + 2] - zero).abs() < 1e-15);
        let mut z = [0.0; 4];
        assert_eq!(
            ws_correlation_z_spectrum(corr, z.as_mut_ptr(), 4),
            WsStatus::Ok
        );
        assert_eq!(z[2], zero);
        ws_correlation_free(corr);

        let mut aperiodic = ptr::null_mut();
        assert_eq!(ws_s2(vol, 1, false, &mut aperiodic), WsStatus::Ok);
        ws_correlation_shape(aperiodic, cshape.as_mut_ptr());
        assert_eq!(cshape, [7, 7, 7]);
        ws_correlation_free(aperiodic);
        ws_label_volume_free(vol);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut vol = ptr::null_mut();
    let labels = [0u16; 8];
    unsafe {
        assert_eq!(
            ws_label_volume_new(ptr::null(), 2, 2, 2, 1.0, &mut vol),
            WsStatus::NullPointer
        );
        assert!(last_error().contains("labels"));
        assert_eq!(
            ws_label_volume_new(labels.as_ptr(), 2, 2, 2, -1.0, &mut vol),
            WsStatus::InvalidInput
        );
        assert!(!last_error().is_empty());
        assert_eq!(
            ws_label_volume_new(labels.as_ptr(), 2, 2, 2, 1.0, &mut vol),
            WsStatus::Ok
        );
        let mut corr = ptr::null_mut();
        assert_eq!(ws_s2(vol, 9, true, &mut corr), WsStatus::InvalidInput);
        assert!(corr.is_null());
        ws_label_volume_free(vol);
        ws_label_volume_free(ptr::null_mut());
        ws_correlation_free(ptr::null_mut());

        let missing = CString::new("/nonexistent/file.h5").unwrap();
        assert_eq!(
            ws_label_volume_read_h5(missing.as_ptr(), 0.02, &mut vol),
            WsStatus::Io
        );

        let mut delta = 0.0;
        assert_eq!(
            ws_laminate_thickness(10, 285.0, 1.77, 0.0, &mut delta),
            WsStatus::Domain
        );
    }
}

#[test]
fn nesting_arithmetic() {
    let mut delta = 0.0;
    let mut r = WsNestingResult::default();
    unsafe {
        assert_eq!(
            ws_laminate_thickness(10, 285.0, 1.77, 0.6, &mut delta),
            WsStatus::Ok
        );
        assert!((delta - 2.850 / (1.77 * 0.6)).abs() < 1e-12);
        assert_eq!(
            ws_nesting_factor(0.3092, 0.0119, 10, 2.70, &mut r),
            WsStatus::Ok
        );
    }
    assert!((r.nesting_factor - 2.70 / 3.092).abs() < 1e-12);
    assert!((r.nesting_sigma - r.nesting_factor * 0.0119 / 0.3092).abs() < 1e-12);
}

#[test]
fn patch_count() {
    let (v, p, s) = ([500usize, 256, 256], [128usize; 3], [48usize; 3]);
    let mut n = 0;
    unsafe {
        assert_eq!(
            ws_patch_grid_count(v.as_ptr(), p.as_ptr(), s.as_ptr(), &mut n),
            WsStatus::Ok
        );
    }
    assert_eq!(n, 144);
}

#[test]
fn synthetic_stack_through_the_abi() {
    let pitch = 0.04;
    let mut vol = ptr::null_mut();
    let mut r = WsNestingResult::default();
    unsafe {
        assert_eq!(
            ws_synth_plain_weave(5, pitch, 0.0, 0, 64, 72, 72, &mut vol),
            WsStatus::Ok
        );
        assert_eq!(
            ws_nesting_from_labels(vol, 1, true, 32, 5, 1.9, &mut r),
            WsStatus::Ok
        );
        ws_label_volume_free(vol);
    }
    assert!((r.peak_voxels - 0.38 / pitch).abs() < 0.5, "{r:?}");
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/weavestat.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in [
        "ws_label_volume_new",
        "ws_s2",
        "ws_last_error",
        "WS_STATUS_OK",
        "WsNestingResult",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .output()
    else {
        eprintln!("no C compiler; skipped syntax check");
        return;
    };
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
