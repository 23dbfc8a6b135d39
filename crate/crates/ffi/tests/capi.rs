use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use seqdecon::{EstimatorSpec, Kernel, SpectralBasis, SufStat};
use seqdecon_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sd_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn new_stat(h: usize, w: usize) -> *mut SdStat {
    let mut stat = ptr::null_mut();
    assert_eq!(unsafe { sd_stat_new(h, w, &mut stat) }, SdStatus::Ok);
    stat
}

fn kernel(i: usize, p: usize) -> Vec<f64> {
    let mut k = vec![0.0; p];
    k[0] = 0.5;
    k[1 + i % (p - 1)] = 0.3;
    k[p - 1] += 0.2;
    k
}

fn observation(i: usize, p: usize) -> Vec<f64> {
    (0..p).map(|t| ((i * p + t) as f64 * 0.37).sin()).collect()
}

#[test]
fn matches_the_library() {
    let p = 16;
    let stat = new_stat(1, p);
    let basis = SpectralBasis::one_d(p).unwrap();
    let mut reference = SufStat::new(basis);
    for i in 0..5 {
        let (k, y) = (kernel(i, p), observation(i, p));
        assert_eq!(
            unsafe { sd_stat_update(stat, k.as_ptr(), y.as_ptr(), p) },
            SdStatus::Ok
        );
        let d = basis.diagonalize(&Kernel::new(k).unwrap()).unwrap();
        reference
            .update(&d, &basis.to_spectral_real(&y).unwrap())
            .unwrap();
    }
    assert_eq!(unsafe { sd_stat_count(stat) }, 5);
    assert_eq!(unsafe { sd_stat_len(stat) }, p);

    let cases = [
        (SdEstimator::Main, f64::NAN, EstimatorSpec::Main),
        (SdEstimator::Soft, f64::NAN, EstimatorSpec::Soft),
        (SdEstimator::Monotone, f64::NAN, EstimatorSpec::Monotone),
        (
            SdEstimator::TikhonovPhillips,
            0.25,
            EstimatorSpec::TikhonovPhillips { gamma: Some(0.25) },
        ),
        (
            SdEstimator::TikhonovPhillips,
            f64::NAN,
            EstimatorSpec::TikhonovPhillips { gamma: None },
        ),
        (
            SdEstimator::Landweber,
            7.0,
            EstimatorSpec::Landweber {
                iterations: Some(7),
                relaxation: None,
            },
        ),
    ];
    for (family, param, spec) in cases {
        let mut out = vec![0.0; p];
        assert_eq!(
            unsafe { sd_stat_estimate(stat, family, param, 0.1, out.as_mut_ptr(), p) },
            SdStatus::Ok
        );
        let expected = seqdecon::estimate(&reference, &spec, 0.1)
            .unwrap()
            .theta_hat;
        assert_eq!(out, expected, "{family:?}");
    }
    unsafe { sd_stat_free(stat) };
}

#[test]
fn merge_and_json_roundtrip() {
    let p = 8;
    let (a, b, whole) = (new_stat(1, p), new_stat(1, p), new_stat(1, p));
    for i in 0..6 {
        let (k, y) = (kernel(i, p), observation(i, p));
        let target = if i < 3 { a } else { b };
        unsafe {
            assert_eq!(
                sd_stat_update(target, k.as_ptr(), y.as_ptr(), p),
                SdStatus::Ok
            );
            assert_eq!(
                sd_stat_update(whole, k.as_ptr(), y.as_ptr(), p),
                SdStatus::Ok
            );
        }
    }
    unsafe {
        assert_eq!(sd_stat_merge(a, b), SdStatus::Ok);
        assert_eq!(sd_stat_merge(a, a), SdStatus::InvalidParameter);
        let mut ja = ptr::null_mut();
        let mut jw = ptr::null_mut();
        assert_eq!(sd_stat_to_json(a, &mut ja), SdStatus::Ok);
        assert_eq!(sd_stat_to_json(whole, &mut jw), SdStatus::Ok);
        let doc_a: serde_json::Value =
            serde_json::from_str(CStr::from_ptr(ja).to_str().unwrap()).unwrap();
        let doc_w: serde_json::Value =
            serde_json::from_str(CStr::from_ptr(jw).to_str().unwrap()).unwrap();
        assert_eq!(doc_a["n"], doc_w["n"]);
        for (x, y) in doc_a["delta"]
            .as_array()
            .unwrap()
            .iter()
            .zip(doc_w["delta"].as_array().unwrap())
        {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }

        let mut restored = ptr::null_mut();
        assert_eq!(sd_stat_from_json(ja, &mut restored), SdStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(sd_stat_to_json(restored, &mut again), SdStatus::Ok);
        assert_eq!(CStr::from_ptr(ja), CStr::from_ptr(again));

        for s in [ja, jw, again] {
            sd_string_free(s);
        }
        for s in [a, b, whole, restored] {
            sd_stat_free(s);
        }
    }
}

#[test]
fn error_codes_and_messages() {
    let p = 8;
    let stat = new_stat(1, p);
    let mut out = vec![0.0; p];
    unsafe {
        assert_eq!(
            sd_stat_estimate(stat, SdEstimator::Main, f64::NAN, 0.1, out.as_mut_ptr(), p),
            SdStatus::Degenerate
        );
        assert!(!last_error().is_empty());

        let k = kernel(0, p);
        let y = observation(0, p);
        assert_eq!(
            sd_stat_update(stat, k.as_ptr(), y.as_ptr(), p - 1),
            SdStatus::Dimension
        );
        assert!(last_error().contains("expected 8"));
        assert_eq!(
            sd_stat_update(stat, ptr::null(), y.as_ptr(), p),
            SdStatus::NullPointer
        );
        let mut bad = y.clone();
        bad[2] = f64::NAN;
        assert_eq!(
            sd_stat_update(stat, k.as_ptr(), bad.as_ptr(), p),
            SdStatus::NonFinite
        );
        assert_eq!(sd_stat_count(stat), 0);

        assert_eq!(
            sd_stat_update(stat, k.as_ptr(), y.as_ptr(), p),
            SdStatus::Ok
        );
        assert!(last_error().is_empty());
        assert_eq!(
            sd_stat_estimate(stat, SdEstimator::Landweber, 2.5, 0.1, out.as_mut_ptr(), p),
            SdStatus::InvalidParameter
        );
        assert_eq!(
            sd_stat_estimate(stat, SdEstimator::Soft, f64::NAN, -1.0, out.as_mut_ptr(), p),
            SdStatus::InvalidParameter
        );
        assert_eq!(
            sd_stat_estimate(stat, SdEstimator::Soft, f64::NAN, 0.1, ptr::null_mut(), p),
            SdStatus::NullPointer
        );
        assert_eq!(
            sd_stat_estimate(
                ptr::null(),
                SdEstimator::Soft,
                f64::NAN,
                0.1,
                out.as_mut_ptr(),
                p
            ),
            SdStatus::NullPointer
        );

        let mut other = ptr::null_mut();
        assert_eq!(sd_stat_new(1, 4, &mut other), SdStatus::Ok);
        assert_eq!(sd_stat_merge(stat, other), SdStatus::Dimension);
        assert_eq!(sd_stat_new(1, 0, &mut other), SdStatus::InvalidParameter);
        assert_eq!(sd_stat_new(1, 8, ptr::null_mut()), SdStatus::NullPointer);

        let mut restored = ptr::null_mut();
        assert_eq!(
            sd_stat_from_json(c"{\"version\":99}".as_ptr(), &mut restored),
            SdStatus::InvalidInput
        );
        assert!(restored.is_null());

        sd_stat_free(stat);
        sd_stat_free(ptr::null_mut());
        assert_eq!(sd_stat_len(ptr::null()), 0);
        assert!(!CStr::from_ptr(sd_version()).to_str().unwrap().is_empty());
    }
}

#[test]
fn spectral_update_and_averaged_ridge() {
    let (h, w) = (4, 4);
    let p = h * w;
    let stat = new_stat(h, w);
    let mut avg = ptr::null_mut();
    assert_eq!(unsafe { sd_averaged_new(h, w, &mut avg) }, SdStatus::Ok);
    let basis = SpectralBasis::two_d(h, w).unwrap();
    for i in 0..4 {
        let (k, y) = (kernel(i, p), observation(i, p));
        let d = basis.diagonalize(&Kernel::new(k.clone()).unwrap()).unwrap();
        let x = basis.to_spectral_real(&y).unwrap();
        let split = |v: &[seqdecon::Complex64]| -> (Vec<f64>, Vec<f64>) {
            (
                v.iter().map(|c| c.re).collect(),
                v.iter().map(|c| c.im).collect(),
            )
        };
        let (dr, di) = split(d.values());
        let (xr, xi) = split(&x);
        unsafe {
            assert_eq!(
                sd_stat_update_spectral(
                    stat,
                    dr.as_ptr(),
                    di.as_ptr(),
                    xr.as_ptr(),
                    xi.as_ptr(),
                    p
                ),
                SdStatus::Ok
            );
            assert_eq!(
                sd_averaged_update(avg, k.as_ptr(), y.as_ptr(), p),
                SdStatus::Ok
            );
        }
    }
    let mut theta = vec![0.0; p];
    let mut tau = 0.0;
    unsafe {
        assert_eq!(
            sd_averaged_ridge(avg, f64::NAN, theta.as_mut_ptr(), p, &mut tau),
            SdStatus::Ok
        );
        assert!(tau > 0.0);
        assert_eq!(
            sd_averaged_ridge(avg, 0.5, theta.as_mut_ptr(), p, ptr::null_mut()),
            SdStatus::Ok
        );
        assert_eq!(
            sd_averaged_ridge(avg, -1.0, theta.as_mut_ptr(), p, ptr::null_mut()),
            SdStatus::InvalidParameter
        );
        assert_eq!(
            sd_stat_estimate(
                stat,
                SdEstimator::Soft,
                f64::NAN,
                0.1,
                theta.as_mut_ptr(),
                p
            ),
            SdStatus::Ok
        );
        sd_averaged_free(avg);
        sd_stat_free(stat);
    }
}

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps/
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib_dir = target_dir();
    let has_lib = lib_dir.join("libseqdecon_ffi.so").exists()
        || lib_dir.join("libseqdecon_ffi.dylib").exists();
    if Command::new("cc").arg("--version").output().is_err() || !has_lib {
        eprintln!(
            "skipping: no C compiler or shared library at {}",
            lib_dir.display()
        );
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include "seqdecon.h"

int main(void) {
    SdStat *stat = NULL;
    if (sd_stat_new(1, 8, &stat) != SD_STATUS_OK) return 10;
    double k[8] = {1, 0, 0, 0, 0, 0, 0, 0};
    double y[8] = {0.5, -1, 2, 0, 3.5, 1, -0.75, 0.125};
    for (int i = 0; i < 3; i++)
        if (sd_stat_update(stat, k, y, 8) != SD_STATUS_OK) return 11;
    double out[8];
    if (sd_stat_estimate(stat, SD_ESTIMATOR_SOFT, NAN, 0.0, out, 8) != SD_STATUS_OK) return 12;
    for (int t = 0; t < 8; t++)
        if (fabs(out[t] - y[t]) > 1e-12) return 13;
    if (sd_stat_update(stat, k, y, 7) != SD_STATUS_DIMENSION) return 14;
    if (sd_last_error()[0] == '\0') return 15;
    sd_stat_free(stat);
    printf("ok %s\n", sd_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lseqdecon_ffi")
        .arg("-lm")
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
