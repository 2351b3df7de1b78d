use std::ffi::CStr;
use std::ptr;

use qualshift::cli::{estimate_sample, EstimateConfig};
use qualshift::dgp::{gen_sample, DgpDesign, DgpSpec, OutcomeKind};
use qualshift::iv::IvOptions;
use qualshift::rd::RdOptions;
use qualshift::soo::SooOptions;
use qualshift::{Design, Estimand};
use qualshift_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(qs_last_error_message()) }.to_str().unwrap().to_owned()
}

fn take_json(e: *const QsEstimate) -> String {
    unsafe {
        let s = qs_estimate_to_json(e);
        assert!(!s.is_null());
        let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
        qs_string_free(s);
        out
    }
}

fn simulated(design: QsSimDesign, n: usize, seed: u64) -> *mut QsSample {
    let mut s = ptr::null_mut();
    let status = unsafe { qs_sample_simulate(design, QsOutcomeKind::Multinomial, n, seed, &mut s) };
    assert_eq!(status, QsStatus::Ok);
    s
}

fn estimate(s: *const QsSample, opts: &QsOptions) -> Result<*mut QsEstimate, QsStatus> {
    let mut e = ptr::null_mut();
    match unsafe { qs_estimate(s, opts, &mut e) } {
        QsStatus::Ok => Ok(e),
        other => Err(other),
    }
}

#[test]
fn soo_handles_reproduce_the_library_estimate() {
    let n = 1500;
    let sample = gen_sample(&DgpSpec::new(DgpDesign::SooObservational, OutcomeKind::Multinomial, n, 11));
    let y = sample.outcome_labels();
    let d = sample.treatment().to_vec();
    let x = sample.covariates();
    let p = x.n_cols();
    let rows: Vec<f64> = (0..n).flat_map(|i| x.row(i).to_vec()).collect();

    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(qs_sample_new(y.as_ptr(), d.as_ptr(), n, &mut s), QsStatus::Ok);
        assert_eq!(qs_sample_set_covariates(s, rows.as_ptr(), n, p), QsStatus::Ok);
        assert_eq!(qs_sample_len(s), n);
    }
    let mut opts = qs_options_default(QsDesign::Soo);
    opts.seed = 3;
    opts.estimand = QsEstimand::Pst;
    let e = estimate(s, &opts).unwrap();

    let config = EstimateConfig {
        design: Design::Soo,
        estimand: Estimand::Pst,
        soo: SooOptions { seed: 3, ..SooOptions::default() },
        iv: IvOptions::default(),
        rd: RdOptions::default(),
        alpha: 0.05,
    };
    let direct = estimate_sample(&sample, &config).unwrap();
    assert_eq!(take_json(e), direct.to_json_string());

    unsafe {
        assert_eq!(qs_estimate_n_categories(e), direct.categories.len());
        let mut c = QsCategory { label: 0, point: 0.0, se: 0.0, ci_low: 0.0, ci_high: 0.0 };
        let mut sum = 0.0;
        for (i, want) in direct.categories.iter().enumerate() {
            assert_eq!(qs_estimate_category(e, i, &mut c), QsStatus::Ok);
            assert_eq!((c.label, c.point, c.se), (want.label, want.point, want.se));
            assert!(c.ci_low <= c.point && c.point <= c.ci_high);
            sum += c.point;
        }
        assert!(sum.abs() < 1e-10);
        let mut est = QsEstimand::Ps;
        assert_eq!(qs_estimate_estimand(e, &mut est), QsStatus::Ok);
        assert_eq!(est, QsEstimand::Pst);
        qs_estimate_free(e);
        qs_sample_free(s);
    }
}

#[test]
fn every_design_runs_through_the_abi() {
    let cases = [
        (QsSimDesign::SooRandomized, QsDesign::Soo, QsEstimand::Ps),
        (QsSimDesign::Iv, QsDesign::Iv, QsEstimand::Lps),
        (QsSimDesign::Rd, QsDesign::Rd, QsEstimand::Psc),
        (QsSimDesign::Did, QsDesign::Did, QsEstimand::Pst),
    ];
    for (sim, design, estimand) in cases {
        let s = simulated(sim, 2000, 5);
        let e = estimate(s, &qs_options_default(design)).unwrap_or_else(|st| panic!("{design:?}: {st:?} {}", last_error()));
        let json: serde_json::Value = serde_json::from_str(&take_json(e)).unwrap();
        assert!(json.is_object());
        unsafe {
            let mut got = QsEstimand::Ps;
            qs_estimate_estimand(e, &mut got);
            assert_eq!(got, estimand);
            assert_eq!(qs_estimate_n_categories(e), 3);
            qs_estimate_free(e);
            qs_sample_free(s);
        }
    }
}

#[test]
fn component_setters_build_an_iv_sample() {
    let src = gen_sample(&DgpSpec::new(DgpDesign::Iv, OutcomeKind::Ordered, 1000, 2));
    let (y, d, z) = (src.outcome_labels(), src.treatment().to_vec(), src.instrument().unwrap().to_vec());
    let mut s = ptr::null_mut();
    unsafe {
        qs_sample_new(y.as_ptr(), d.as_ptr(), y.len(), &mut s);
        assert_eq!(qs_sample_set_instrument(s, z.as_ptr(), z.len()), QsStatus::Ok);
    }
    let a = estimate(s, &qs_options_default(QsDesign::Iv)).unwrap();
    let b = simulated_iv_json(&src);
    assert_eq!(take_json(a), b);
    unsafe {
        qs_estimate_free(a);
        qs_sample_free(s);
    }
}

fn simulated_iv_json(sample: &qualshift::QualSample) -> String {
    qualshift::iv::estimate_lps(sample, &IvOptions::default()).unwrap().to_json_string()
}

#[test]
fn csv_input_matches_in_memory_sample() {
    let sample = gen_sample(&DgpSpec::new(DgpDesign::Did, OutcomeKind::Multinomial, 800, 4));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("did.csv");
    qualshift::io::write_sample_path(&sample, &path, &Default::default()).unwrap();
    let cpath = std::ffi::CString::new(path.to_str().unwrap()).unwrap();

    let mut from_csv = ptr::null_mut();
    assert_eq!(unsafe { qs_sample_read_csv(cpath.as_ptr(), &mut from_csv) }, QsStatus::Ok);
    let opts = qs_options_default(QsDesign::Did);
    let e = estimate(from_csv, &opts).unwrap();
    let want = qualshift::did::estimate_pst_did(&sample, 0.05).unwrap().to_json_string();
    assert_eq!(take_json(e), want);
    unsafe {
        qs_estimate_free(e);
        qs_sample_free(from_csv);
    }

    let missing = std::ffi::CString::new(dir.path().join("nope.csv").to_str().unwrap()).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { qs_sample_read_csv(missing.as_ptr(), &mut s) }, QsStatus::Io);
    assert!(s.is_null());
    assert!(last_error().contains("nope.csv"));
}

#[test]
fn null_pointers_are_reported_not_dereferenced() {
    let y = [1i64, 2];
    let d = [0u8, 1];
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(qs_sample_new(ptr::null(), d.as_ptr(), 2, &mut s), QsStatus::NullPointer);
        assert!(last_error().contains("outcome"));
        assert_eq!(qs_sample_new(y.as_ptr(), d.as_ptr(), 2, ptr::null_mut()), QsStatus::NullPointer);
        assert_eq!(qs_sample_set_instrument(ptr::null_mut(), d.as_ptr(), 2), QsStatus::NullPointer);
        assert_eq!(qs_sample_read_csv(ptr::null(), &mut s), QsStatus::NullPointer);
        let opts = qs_options_default(QsDesign::Soo);
        let mut e = ptr::null_mut();
        assert_eq!(qs_estimate(ptr::null(), &opts, &mut e), QsStatus::NullPointer);
        assert_eq!(qs_estimate_category(ptr::null(), 0, ptr::null_mut()), QsStatus::NullPointer);
        assert!(qs_estimate_to_json(ptr::null()).is_null());
        assert_eq!(qs_sample_len(ptr::null()), 0);
        assert_eq!(qs_estimate_n_categories(ptr::null()), 0);
        qs_sample_free(ptr::null_mut());
        qs_estimate_free(ptr::null_mut());
        qs_string_free(ptr::null_mut());
    }
}

#[test]
fn argument_and_input_errors_have_distinct_codes() {
    let s = simulated(QsSimDesign::SooRandomized, 600, 1);
    unsafe {
        let short = [0.5f64; 10];
        assert_eq!(qs_sample_set_running_var(s, short.as_ptr(), 10, 0.0), QsStatus::InvalidArgument);
        assert!(last_error().contains("10 entries"));
        // A failed setter leaves the sample untouched.
        assert_eq!(qs_sample_len(s), 600);
        let bad_period = vec![2u8; 600];
        assert_eq!(qs_sample_set_period(s, bad_period.as_ptr(), 600), QsStatus::InvalidArgument);
    }

    let mut opts = qs_options_default(QsDesign::Soo);
    opts.alpha = 1.5;
    assert_eq!(estimate(s, &opts).unwrap_err(), QsStatus::InvalidArgument);
    opts = qs_options_default(QsDesign::Soo);
    opts.folds = 1;
    assert_eq!(estimate(s, &opts).unwrap_err(), QsStatus::InvalidArgument);
    opts = qs_options_default(QsDesign::Soo);
    opts.estimand = QsEstimand::Psc;
    assert_eq!(estimate(s, &opts).unwrap_err(), QsStatus::InvalidArgument);

    // The sample has no instrument, so the IV design rejects it.
    assert_eq!(estimate(s, &qs_options_default(QsDesign::Iv)).unwrap_err(), QsStatus::InvalidInput);
    assert!(!last_error().is_empty());

    let mut opts = qs_options_default(QsDesign::Rd);
    opts.bandwidth = -1.0;
    let rd = simulated(QsSimDesign::Rd, 1000, 1);
    assert_eq!(estimate(rd, &opts).unwrap_err(), QsStatus::InvalidInput);

    let e = estimate(s, &qs_options_default(QsDesign::Soo)).unwrap();
    let mut c = QsCategory { label: 0, point: 0.0, se: 0.0, ci_low: 0.0, ci_high: 0.0 };
    unsafe {
        assert_eq!(qs_estimate_category(e, 3, &mut c), QsStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));
        qs_estimate_free(e);
        qs_sample_free(s);
        qs_sample_free(rd);
    }
}

#[test]
fn tiny_sample_fails_in_estimation() {
    let y: Vec<i64> = (0..12).map(|i| i % 3 + 1).collect();
    let d: Vec<u8> = (0..12).map(|i| (i / 3 % 2) as u8).collect();
    let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
    let mut s = ptr::null_mut();
    unsafe {
        qs_sample_new(y.as_ptr(), d.as_ptr(), 12, &mut s);
        qs_sample_set_covariates(s, x.as_ptr(), 12, 1);
    }
    assert_eq!(estimate(s, &qs_options_default(QsDesign::Soo)).unwrap_err(), QsStatus::Estimation);
    unsafe { qs_sample_free(s) };
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(qs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_public_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/qualshift.h")).unwrap();
    for decl in [
        "typedef struct QsSample QsSample;",
        "typedef struct QsEstimate QsEstimate;",
        "QS_STATUS_OK = 0",
        "QS_STATUS_INVALID_INPUT = 3",
        "QsStatus qs_sample_new(const int64_t *outcome,",
        "QsStatus qs_estimate(const struct QsSample *sample,",
        "QsOptions qs_options_default(enum QsDesign design);",
        "char *qs_estimate_to_json(const struct QsEstimate *estimate);",
        "void qs_sample_free(struct QsSample *sample);",
        "const char *qs_last_error_message(void);",
    ] {
        assert!(header.contains(decl), "missing `{decl}`");
    }
}
