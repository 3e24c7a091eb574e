use std::ffi::{CStr, CString};
use std::ptr;

use modelmap_ffi::*;

fn last_error() -> String {
    let p = mm_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

// Three models, four texts; rows differ by known offsets.
const VALUES: [f64; 12] = [
    -10.0, -20.0, -30.0, -40.0, //
    -11.0, -19.0, -30.0, -40.0, //
    -10.0, -20.0, -33.0, -37.0,
];
const BYTES: [u64; 4] = [10, 20, 30, 40];

fn matrix() -> *mut MmMatrix {
    let mut m = ptr::null_mut();
    let st = unsafe { mm_matrix_from_values(VALUES.as_ptr(), 3, 4, BYTES.as_ptr(), &mut m) };
    assert_eq!(st, MmStatus::Ok);
    m
}

// Centered difference of rows i and j, squared and halved, averaged.
fn oracle(i: usize, j: usize) -> f64 {
    let d: Vec<f64> = (0..4).map(|x| VALUES[i * 4 + x] - VALUES[j * 4 + x]).collect();
    let mean = d.iter().sum::<f64>() / 4.0;
    d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0
}

#[test]
fn kl_through_handles() {
    let m = matrix();
    let (mut k, mut n) = (0usize, 0usize);
    unsafe {
        assert_eq!(mm_matrix_dims(m, &mut k, &mut n), MmStatus::Ok);
        assert_eq!((k, n), (3, 4));

        let mut c = ptr::null_mut();
        assert_eq!(mm_matrix_double_center(m, &mut c), MmStatus::Ok);
        let (mut v, mut se) = (0.0, -1.0);
        assert_eq!(mm_kl_pair(c, 0, 2, &mut v, &mut se), MmStatus::Ok);
        assert!((v - oracle(0, 2)).abs() < 1e-12);
        assert!(se >= 0.0);

        let mut all = [0.0; 9];
        assert_eq!(mm_kl_matrix(c, all.as_mut_ptr(), ptr::null_mut(), 9), MmStatus::Ok);
        assert!((all[1] - oracle(0, 1)).abs() < 1e-12);
        assert_eq!(all[4], 0.0);

        let mut bpb = ptr::null_mut();
        assert_eq!(mm_centered_rescale_bits_per_byte(c, &mut bpb), MmStatus::Ok);
        assert_eq!(mm_kl_pair(bpb, 0, 2, &mut v, ptr::null_mut()), MmStatus::Ok);
        assert!((v - oracle(0, 2) / (25.0 * std::f64::consts::LN_2)).abs() < 1e-12);

        // Rescaling twice is refused.
        let mut again = ptr::null_mut();
        assert_eq!(mm_centered_rescale_bits_per_byte(bpb, &mut again), MmStatus::Analysis);
        assert!(again.is_null());
        assert!(last_error().contains("bits/byte"));

        let mut coords = [0.0; 12];
        assert_eq!(mm_centered_coords(c, coords.as_mut_ptr(), 12), MmStatus::Ok);
        assert!(coords.iter().sum::<f64>().abs() < 1e-9);

        mm_centered_free(bpb);
        mm_centered_free(c);
        mm_matrix_free(m);
    }
}

#[test]
fn clip_and_entropy() {
    let m = matrix();
    unsafe {
        let mut clipped = ptr::null_mut();
        assert_eq!(mm_matrix_clip(m, 0.25, &mut clipped), MmStatus::Ok);
        let mut vals = [0.0; 12];
        assert_eq!(mm_matrix_values(clipped, vals.as_mut_ptr(), 12), MmStatus::Ok);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min > -40.0);

        let (mut bits, mut idx) = (0.0, 99usize);
        assert_eq!(mm_entropy_upper_bound(m, &mut bits, &mut idx), MmStatus::Ok);
        let want = 100.0 / (25.0 * std::f64::consts::LN_2 * 4.0);
        assert!((bits - want).abs() < 1e-12);
        assert!(idx < 3);

        mm_matrix_free(clipped);
        mm_matrix_free(m);
    }
}

#[test]
fn null_and_argument_errors() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(mm_matrix_from_values(ptr::null(), 2, 2, ptr::null(), &mut out), MmStatus::NullPointer);
        assert!(last_error().contains("values"));

        let m = matrix();
        let mut v = 0.0;
        assert_eq!(mm_kl_pair(ptr::null(), 0, 1, &mut v, ptr::null_mut()), MmStatus::NullPointer);

        let mut c = ptr::null_mut();
        assert_eq!(mm_matrix_double_center(m, &mut c), MmStatus::Ok);
        assert_eq!(mm_kl_pair(c, 0, 7, &mut v, ptr::null_mut()), MmStatus::InvalidArgument);
        assert!(last_error().contains('7'));
        let mut short = [0.0; 4];
        assert_eq!(mm_kl_matrix(c, short.as_mut_ptr(), ptr::null_mut(), 4), MmStatus::InvalidArgument);

        // Success clears the message.
        assert_eq!(mm_kl_pair(c, 0, 1, &mut v, ptr::null_mut()), MmStatus::Ok);
        assert!(mm_last_error().is_null());

        let nan = [f64::NAN, -1.0];
        assert_eq!(mm_matrix_from_values(nan.as_ptr(), 1, 2, ptr::null(), &mut out), MmStatus::Data);
        assert!(out.is_null());

        mm_centered_free(c);
        mm_matrix_free(m);
        mm_matrix_free(ptr::null_mut());
    }
}

#[test]
fn load_from_disk() {
    let dir = std::env::temp_dir().join(format!("modelmap-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("m.csv");
    std::fs::write(&csv, "model_id,a,b,c\nm0,-1,-2,-3\nm1,-1.5,-2,-2.5\n").unwrap();
    let path = CString::new(csv.to_str().unwrap()).unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(mm_matrix_load(path.as_ptr(), MmFormat::Auto as u32, &mut m), MmStatus::Ok);
        let (mut k, mut n) = (0, 0);
        mm_matrix_dims(m, &mut k, &mut n);
        assert_eq!((k, n), (2, 3));
        mm_matrix_free(m);

        let missing = CString::new(dir.join("nope.bin").to_str().unwrap()).unwrap();
        assert_eq!(mm_matrix_load(missing.as_ptr(), 1, &mut m), MmStatus::Io);
        assert!(m.is_null());
        assert_eq!(mm_matrix_load(path.as_ptr(), 9, &mut m), MmStatus::InvalidArgument);
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn scaling_and_synthesis() {
    let lags: Vec<f64> = (1..=20).map(f64::from).collect();
    let disps: Vec<f64> = lags.iter().map(|l| 2.0 * l.powf(0.4)).collect();
    let mut fit = MmScalingFit::default();
    unsafe {
        assert_eq!(mm_fit_exponent(lags.as_ptr(), disps.as_ptr(), 20, &mut fit), MmStatus::Ok);
        assert!((fit.c - 0.4).abs() < 1e-12);
        assert!((fit.log_intercept - 2.0f64.ln()).abs() < 1e-12);
        assert_eq!(fit.n_points, 20);

        let mut d = 0.0;
        assert_eq!(mm_fractal_dimension(0.2, &mut d), MmStatus::Ok);
        assert!((d - 10.0).abs() < 1e-12);
        assert_eq!(mm_fractal_dimension(-1.0, &mut d), MmStatus::InvalidArgument);
        let mut a = 0.0;
        assert_eq!(mm_holder_exponent(1.1, 0.15, &mut a), MmStatus::Ok);
        assert_eq!((a * 100.0).round() / 100.0, 0.14);

        let mut path = vec![0.0; 64 * 2];
        assert_eq!(mm_fbm_generate(0.3, 64, 2, 9, path.as_mut_ptr(), 128), MmStatus::Ok);
        let mut again = vec![0.0; 128];
        mm_fbm_generate(0.3, 64, 2, 9, again.as_mut_ptr(), 128);
        assert_eq!(path, again);
        assert!(path.iter().any(|v| *v != 0.0));
        assert_eq!(mm_fbm_generate(1.2, 64, 2, 9, path.as_mut_ptr(), 128), MmStatus::InvalidArgument);
    }
    assert_eq!(mm_sawtooth(-1.3), 0.30000000000000004);
    assert_eq!(mm_sawtooth(0.75), 0.25);
    let v = unsafe { CStr::from_ptr(mm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/modelmap.h")).unwrap();
    for name in [
        "typedef struct MmMatrix MmMatrix;",
        "typedef struct MmCenteredMap MmCenteredMap;",
        "MM_STATUS_PANIC = 7",
        "mm_last_error(void)",
        "mm_matrix_load(",
        "mm_matrix_from_values(",
        "mm_matrix_free(",
        "mm_matrix_clip(",
        "mm_matrix_double_center(",
        "mm_centered_rescale_bits_per_byte(",
        "mm_kl_pair(",
        "mm_kl_matrix(",
        "mm_entropy_upper_bound(",
        "mm_fit_exponent(",
        "mm_fractal_dimension(",
        "mm_holder_exponent(",
        "mm_fbm_generate(",
        "mm_sawtooth(",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
