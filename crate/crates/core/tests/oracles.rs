//! Engine output against independently computed values.
//!
//! Population truths were computed once by 40-point-per-axis Gauss–Legendre
//! quadrature of the simulation designs' class probabilities over the
//! covariate cube and are frozen here.

use qualshift::dgp::{gen_sample, true_shift, DgpDesign, DgpSpec, OutcomeKind};
use qualshift::did::estimate_pst_did;
use qualshift::estimate::Estimand;
use qualshift::iv::{estimate_lps, fit_2sls, IvCovariance, IvOptions};
use qualshift::nuisance::NuisancePredictions;
use qualshift::rd::{estimate_psc, RdOptions};
use qualshift::soo::{dr_scores, estimate_pst, SooOptions};
use qualshift::{validate_sample, Design, Period, QualSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PS_MULTINOMIAL: [f64; 3] = [0.003130206680, -0.049882406344, 0.046752199664];
const PS_ORDERED: [f64; 3] = [-0.5822906772596, 0.0, 0.5822906772596];
const PST_MULTINOMIAL: [f64; 3] = [0.003565758984, -0.057720535806, 0.054154776822];
const PST_ORDERED: [f64; 3] = [-0.551924367013, -0.060732620493, 0.612656987506];
const PSC_MULTINOMIAL: [f64; 3] = [0.001744047778, -0.050394616034, 0.048650568256];
const PSC_ORDERED: [f64; 3] = [-0.5954631041488, 0.0, 0.5954631041488];

fn check_truth(design: DgpDesign, outcome: OutcomeKind, estimand: Estimand, expected: [f64; 3]) {
    let t = true_shift(&DgpSpec::new(design, outcome, 1, 2024), estimand, 1_000_000).unwrap();
    for (m, &want) in expected.iter().enumerate() {
        let tol = 4.0 * t.mc_se[m] + 1e-9;
        assert!(
            (t.values[m] - want).abs() <= tol,
            "{design:?}/{outcome:?} class {}: {} vs {want} (tol {tol})",
            m + 1,
            t.values[m]
        );
    }
}

#[test]
fn soo_truths_match_quadrature() {
    for design in [DgpDesign::SooRandomized, DgpDesign::SooObservational] {
        check_truth(design, OutcomeKind::Multinomial, Estimand::Ps, PS_MULTINOMIAL);
        check_truth(design, OutcomeKind::Ordered, Estimand::Ps, PS_ORDERED);
    }
    check_truth(DgpDesign::SooObservational, OutcomeKind::Multinomial, Estimand::Pst, PST_MULTINOMIAL);
    check_truth(DgpDesign::SooObservational, OutcomeKind::Ordered, Estimand::Pst, PST_ORDERED);
}

#[test]
fn complier_truths_match_quadrature() {
    // P(complier | X) = 1/3 everywhere, so LPS coincides with PS.
    check_truth(DgpDesign::Iv, OutcomeKind::Multinomial, Estimand::Lps, PS_MULTINOMIAL);
    check_truth(DgpDesign::Iv, OutcomeKind::Ordered, Estimand::Lps, PS_ORDERED);
}

#[test]
fn cutoff_and_treated_truths_match_quadrature() {
    check_truth(DgpDesign::Rd, OutcomeKind::Multinomial, Estimand::Psc, PSC_MULTINOMIAL);
    check_truth(DgpDesign::Rd, OutcomeKind::Ordered, Estimand::Psc, PSC_ORDERED);
    check_truth(DgpDesign::Did, OutcomeKind::Multinomial, Estimand::Pst, PST_MULTINOMIAL);
    check_truth(DgpDesign::Did, OutcomeKind::Ordered, Estimand::Pst, PST_ORDERED);
}

#[test]
fn hand_evaluated_dr_score() {
    // D=1, Y=2, p₂(1,x)=0.6, p₂(0,x)=0.3, e=0.5: Γ₂ = 0.3 + (1 − 0.6)/0.5 = 1.1
    let s = validate_sample(&QualSample::new(vec![2, 1], vec![1, 0]), Design::Soo).unwrap();
    let preds = NuisancePredictions {
        n_categories: 2,
        treated: vec![0.4, 0.6, 0.4, 0.6],
        control: vec![0.7, 0.3, 0.7, 0.3],
        propensity: vec![0.5, 0.5],
    };
    let t = dr_scores(&s, &preds).unwrap();
    assert!((t.get(0, 1) - 1.1).abs() <= 1e-12);
    assert!((t.get(0, 0) + 1.1).abs() <= 1e-12);
    // control unit with Y=1: 0.3 − (0 − 0.3)/0.5 = 0.9 for category 2
    assert!((t.get(1, 1) - 0.9).abs() <= 1e-12);
}

fn table_rows(cells: &[(u8, u8, [usize; 3])]) -> (Vec<i64>, Vec<u8>, Vec<u8>) {
    let (mut y, mut d, mut z) = (vec![], vec![], vec![]);
    for &(zi, di, counts) in cells {
        for (m, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                y.push(m as i64 + 1);
                d.push(di);
                z.push(zi);
            }
        }
    }
    (y, d, z)
}

#[test]
fn hand_contingency_table_iv() {
    // n = 40. Z=1: 14 treated (2, 4, 8), 6 untreated (3, 2, 1);
    //         Z=0: 4 treated (1, 1, 2), 16 untreated (8, 5, 3).
    // First stage 14/20 − 4/20 = 0.5; reduced forms (5−9)/20, (6−6)/20, (9−5)/20.
    let (y, d, z) = table_rows(&[(1, 1, [2, 4, 8]), (1, 0, [3, 2, 1]), (0, 1, [1, 1, 2]), (0, 0, [8, 5, 3])]);
    let s = QualSample::new(y, d).with_instrument(z);
    let est = estimate_lps(&s, &IvOptions::default()).unwrap();
    let expected = [-0.4, 0.0, 0.4];
    for (c, e) in est.categories.iter().zip(expected) {
        assert!((c.point - e).abs() <= 1e-10, "{} vs {e}", c.point);
    }
    let fit = fit_2sls(&s, IvCovariance::Robust).unwrap();
    assert!((fit.first_stage.1 - 0.5).abs() <= 1e-12);
    // α̂₀ = E[Y|Z=0] − α̂₁·E[D|Z=0] for category 1: 0.45 + 0.4·0.2
    assert!((fit.intercepts[0] - 0.53).abs() <= 1e-10);
}

#[test]
fn hand_two_by_two_by_two_did() {
    let mut y = vec![];
    let mut d = vec![];
    let mut t = vec![];
    for (di, period, counts) in [
        (1u8, Period::Pre, [10, 10]),
        (1, Period::Post, [5, 15]),
        (0, Period::Pre, [10, 10]),
        (0, Period::Post, [8, 12]),
    ] {
        for (m, c) in counts.into_iter().enumerate() {
            for _ in 0..c {
                y.push(m as i64 + 1);
                d.push(di);
                t.push(period);
            }
        }
    }
    let est = estimate_pst_did(&QualSample::new(y, d).with_period(t), 0.05).unwrap();
    // (5 − 10)/20 − (8 − 10)/20
    assert!((est.categories[0].point + 0.15).abs() <= 1e-10);
    assert!((est.categories[1].point - 0.15).abs() <= 1e-10);
}

#[test]
fn rd_recovers_a_constructed_jump() {
    // P(Y = 2 | x) is 0.3 below the cutoff and 0.7 above, flat on each side.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 20_000;
    let run: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let y: Vec<i64> = run
        .iter()
        .map(|&x| {
            let p = if x >= 0.5 { 0.7 } else { 0.3 };
            if rng.random::<f64>() < p {
                2
            } else {
                1
            }
        })
        .collect();
    let d = run.iter().map(|&x| u8::from(x >= 0.5)).collect();
    let s = QualSample::new(y, d).with_running_var(run).with_cutoff(0.5);
    let est = estimate_psc(&s, &RdOptions::default()).unwrap();
    let c = &est.categories[1];
    assert!((c.point - 0.4).abs() <= 3.0 * c.se, "{} ± {}", c.point, c.se);
}

#[test]
fn pst_on_observational_draw_is_near_the_oracle() {
    let s = gen_sample(&DgpSpec::new(DgpDesign::SooObservational, OutcomeKind::Multinomial, 20_000, 5));
    let est = estimate_pst(&s, &SooOptions::new(5, 5)).unwrap();
    for (c, truth) in est.categories.iter().zip(PST_MULTINOMIAL) {
        assert!((c.point - truth).abs() <= 3.0 * c.se, "{} vs {truth} (se {})", c.point, c.se);
    }
}

#[test]
fn iv_dump_covers_truth() {
    let s = gen_sample(&DgpSpec::new(DgpDesign::Iv, OutcomeKind::Ordered, 20_000, 9));
    let est = estimate_lps(&s, &IvOptions::default()).unwrap();
    for (c, truth) in est.categories.iter().zip(PS_ORDERED) {
        assert!((c.point - truth).abs() <= 3.0 * c.se);
    }
}
