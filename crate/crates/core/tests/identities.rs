//! Algebraic identities that hold on every valid input.

use proptest::prelude::*;
use qualshift::dgp::{gen_sample, DgpDesign, DgpSpec, OutcomeKind};
use qualshift::did::{estimate_pst_did, fit_did};
use qualshift::iv::{estimate_lps, fit_2sls, wald_ratios, IvCovariance, IvOptions};
use qualshift::rd::{estimate_psc, Bandwidth, RdOptions};
use qualshift::soo::{estimate_ps, estimate_pst, SooOptions};
use qualshift::{Period, QualSample};

const TOL: f64 = 1e-10;

fn outcome_kind() -> impl Strategy<Value = OutcomeKind> {
    prop_oneof![Just(OutcomeKind::Multinomial), Just(OutcomeKind::Ordered)]
}

fn sum(v: &[f64]) -> f64 {
    v.iter().sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn soo_points_balance(seed in any::<u64>(), outcome in outcome_kind(), observational in any::<bool>()) {
        let design = if observational { DgpDesign::SooObservational } else { DgpDesign::SooRandomized };
        let s = gen_sample(&DgpSpec::new(design, outcome, 600, seed));
        let opts = SooOptions::new(5, seed);
        let ps = estimate_ps(&s, &opts).unwrap();
        prop_assert!(sum(&ps.points()).abs() <= TOL);
        let pst = estimate_pst(&s, &opts).unwrap();
        prop_assert!(sum(&pst.points()).abs() <= TOL);
    }

    #[test]
    fn iv_rd_did_points_balance(seed in any::<u64>(), outcome in outcome_kind()) {
        let iv = gen_sample(&DgpSpec::new(DgpDesign::Iv, outcome, 800, seed));
        prop_assert!(sum(&estimate_lps(&iv, &IvOptions::default()).unwrap().points()).abs() <= TOL);
        let rd = gen_sample(&DgpSpec::new(DgpDesign::Rd, outcome, 800, seed));
        prop_assert!(sum(&estimate_psc(&rd, &RdOptions::default()).unwrap().points()).abs() <= TOL);
        let conventional = RdOptions { bias_correction: false, ..RdOptions::default() };
        prop_assert!(sum(&estimate_psc(&rd, &conventional).unwrap().points()).abs() <= TOL);
        let did = gen_sample(&DgpSpec::new(DgpDesign::Did, outcome, 400, seed));
        prop_assert!(sum(&estimate_pst_did(&did, 0.05).unwrap().points()).abs() <= TOL);
    }
}

// Arbitrary (y, d, z) rows with both instrument arms and a non-zero first stage.
fn iv_rows() -> impl Strategy<Value = Vec<(i64, u8, u8)>> {
    prop::collection::vec((1i64..=4, 0u8..=1, 0u8..=1), 12..200).prop_filter("usable instrument", |rows| {
        let share = |z: u8| {
            let arm: Vec<_> = rows.iter().filter(|r| r.2 == z).collect();
            if arm.is_empty() {
                return None;
            }
            Some(arm.iter().filter(|r| r.1 == 1).count() as f64 / arm.len() as f64)
        };
        let cats: std::collections::BTreeSet<_> = rows.iter().map(|r| r.0).collect();
        let arms = rows.iter().any(|r| r.1 == 0) && rows.iter().any(|r| r.1 == 1);
        matches!((share(0), share(1)), (Some(a), Some(b)) if (a - b).abs() > 0.05) && cats.len() >= 2 && arms
    })
}

proptest! {
    #[test]
    fn two_stage_least_squares_is_the_wald_ratio(rows in iv_rows(), homoskedastic in any::<bool>()) {
        let s = QualSample::new(rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect())
            .with_instrument(rows.iter().map(|r| r.2).collect());
        let cov = if homoskedastic { IvCovariance::Homoskedastic } else { IvCovariance::Robust };
        let fit = fit_2sls(&s, cov).unwrap();
        let wald = wald_ratios(&s).unwrap();
        for (a, w) in fit.slopes.iter().zip(&wald) {
            prop_assert!((a - w).abs() <= TOL * (1.0 + w.abs()), "{a} vs {w}");
        }
        prop_assert!(sum(&fit.slopes).abs() <= TOL * 10.0);
    }
}

fn did_rows() -> impl Strategy<Value = Vec<(i64, u8, u8)>> {
    prop::collection::vec((1i64..=3, 0u8..=1, 0u8..=1), 8..200).prop_filter("all four cells", |rows| {
        [(0, 0), (0, 1), (1, 0), (1, 1)].iter().all(|&(d, t)| rows.iter().any(|r| r.1 == d && r.2 == t))
            && rows.iter().map(|r| r.0).collect::<std::collections::BTreeSet<_>>().len() >= 2
    })
}

fn did_sample(rows: &[(i64, u8, u8)]) -> QualSample {
    QualSample::new(rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect())
        .with_period(rows.iter().map(|r| if r.2 == 1 { Period::Post } else { Period::Pre }).collect())
}

proptest! {
    #[test]
    fn did_plug_in_equals_interaction_coefficient(rows in did_rows()) {
        let fit = fit_did(&did_sample(&rows)).unwrap();
        for (a, b) in fit.plug_in.iter().zip(&fit.interaction) {
            prop_assert!((a - b).abs() <= TOL, "{a} vs {b}");
        }
    }

    #[test]
    fn did_panel_plug_in_equals_interaction_coefficient(seed in any::<u64>(), outcome in outcome_kind()) {
        let s = gen_sample(&DgpSpec::new(DgpDesign::Did, outcome, 300, seed));
        let fit = fit_did(&s).unwrap();
        prop_assert!(fit.clustered);
        for (a, b) in fit.plug_in.iter().zip(&fit.interaction) {
            prop_assert!((a - b).abs() <= TOL);
        }
    }

    #[test]
    fn did_follows_category_relabeling(rows in did_rows(), perm in Just([3i64, 1, 2]).prop_shuffle()) {
        let base = estimate_pst_did(&did_sample(&rows), 0.05).unwrap();
        let relabeled: Vec<(i64, u8, u8)> = rows.iter().map(|&(y, d, t)| (10 * perm[(y - 1) as usize], d, t)).collect();
        let moved = estimate_pst_did(&did_sample(&relabeled), 0.05).unwrap();
        for c in &base.categories {
            let label = 10 * perm[(c.label - 1) as usize];
            let other = moved.categories.iter().find(|o| o.label == label);
            // a category absent from the data has no row in either estimate
            let other = other.expect("relabeled category present");
            prop_assert!((c.point - other.point).abs() <= TOL);
            prop_assert!((c.se - other.se).abs() <= TOL);
        }
    }
}

fn rd_sample(seed: u64) -> QualSample {
    gen_sample(&DgpSpec::new(DgpDesign::Rd, OutcomeKind::Ordered, 1500, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rd_points_ignore_outcomes_outside_the_window(seed in any::<u64>(), h in 0.05f64..0.3) {
        let s = rd_sample(seed);
        let opts = RdOptions { bandwidth: Bandwidth::Fixed(h), ..RdOptions::default() };
        let base = estimate_psc(&s, &opts).unwrap();
        let run = s.running_var().unwrap();
        let y: Vec<i64> = s
            .outcome()
            .iter()
            .zip(run)
            .map(|(&y, &x)| if (x - 0.5).abs() >= h { 4 - y } else { y })
            .collect();
        let x = s.covariates().clone();
        let flipped = QualSample::new(y, s.treatment().to_vec())
            .with_covariates(x)
            .with_running_var(run.to_vec())
            .with_cutoff(0.5);
        let after = estimate_psc(&flipped, &opts).unwrap();
        for (a, b) in base.points().iter().zip(after.points()) {
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rd_mirror_image_negates_the_jump(seed in any::<u64>(), fixed in any::<bool>()) {
        let s = rd_sample(seed);
        let opts = RdOptions {
            bandwidth: if fixed { Bandwidth::Fixed(0.2) } else { Bandwidth::Auto },
            ..RdOptions::default()
        };
        let base = estimate_psc(&s, &opts).unwrap();
        // reflect around the cutoff; treatment follows the side of the cutoff
        let run: Vec<f64> = s.running_var().unwrap().iter().map(|x| 1.0 - x).collect();
        prop_assume!(run.iter().all(|&x| x != 0.5));
        let d = run.iter().map(|&x| u8::from(x >= 0.5)).collect();
        let mirrored = QualSample::new(s.outcome().to_vec(), d).with_running_var(run).with_cutoff(0.5);
        let after = estimate_psc(&mirrored, &opts).unwrap();
        for (a, b) in base.categories.iter().zip(&after.categories) {
            prop_assert!((a.point + b.point).abs() <= 1e-9, "{} vs {}", a.point, b.point);
            prop_assert!((a.se - b.se).abs() <= 1e-9);
        }
    }
}
