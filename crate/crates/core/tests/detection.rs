#![allow(clippy::excessive_precision)]

mod common;

use approx::assert_abs_diff_eq;
use coalition_sense::detection::*;
use proptest::prelude::*;

use common::{monte_carlo_miss, naive_upper_gamma};

/// 1 − P_d with P_d in its textbook two-sum form, evaluated at 50 digits.
const MISS_REFERENCE: [(u32, f64, f64, f64); 6] = [
    (5, 20.0, 10.0, 0.411_532_988_882_660_48),
    (5, 20.0, 100.0, 0.057_626_731_363_352_044),
    (2, 5.0, 1.0, 0.509_075_404_903_518_6),
    (5, 10.0, 3.0, 0.267_527_182_245_544_5),
    (10, 30.0, 50.0, 0.110_788_846_375_635_29),
    (5, 20.0, 0.5, 0.945_645_920_036_542_6),
];

#[test]
fn path_gain_and_snr_examples() {
    let ch = ChannelModel::new(1.0, 3.0, 1e-12, 0.1).unwrap();
    assert_abs_diff_eq!(path_gain(1.0, &ch).unwrap(), 1.0);
    assert_abs_diff_eq!(path_gain(1000.0, &ch).unwrap(), 1e-9, epsilon = 1e-24);
    assert_abs_diff_eq!(path_gain(2000.0, &ch).unwrap() / path_gain(1000.0, &ch).unwrap(), 0.125, epsilon = 1e-15);
    assert_abs_diff_eq!(avg_snr(0.1, 1000.0, &ch).unwrap(), 100.0, epsilon = 1e-9);
    assert_abs_diff_eq!(avg_snr(0.2, 1000.0, &ch).unwrap(), 200.0, epsilon = 1e-9);
    assert!(avg_snr(0.1, 1e13, &ch).unwrap() < 1e-26);
}

#[test]
fn gamma_examples() {
    assert_abs_diff_eq!(regularized_upper_gamma(1, 1.0).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
    for m in [1, 2, 5, 40] {
        assert_eq!(regularized_upper_gamma(m, 0.0).unwrap(), 1.0);
    }
    let series = (-10.0f64).exp() * (1.0 + 10.0 + 50.0 + 1000.0 / 6.0 + 10000.0 / 24.0);
    assert_abs_diff_eq!(regularized_upper_gamma(5, 10.0).unwrap(), series, epsilon = 1e-15);
    assert_abs_diff_eq!(series, 0.029253, epsilon = 5e-7);
    assert!(regularized_upper_gamma(0, 1.0).is_err());
    assert!(regularized_upper_gamma(3, -1.0).is_err());
}

#[test]
fn false_alarm_examples() {
    let p = |m, lambda| prob_false_alarm_noncoop(&DetectionParams { m, lambda, alpha: 0.1 });
    assert_abs_diff_eq!(p(1, 2.0), (-1.0f64).exp(), epsilon = 1e-15);
    assert_eq!(p(5, 0.0), 1.0);
    assert_abs_diff_eq!(p(5, 20.0), 0.029253, epsilon = 5e-7);
}

#[test]
fn miss_matches_high_precision_reference() {
    for (m, lambda, snr, want) in MISS_REFERENCE {
        let params = DetectionParams::new(m, lambda, 0.1).unwrap();
        let got = prob_miss_noncoop(snr, &params).unwrap();
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
    }
}

#[test]
fn miss_matches_simulated_detector() {
    for (i, &(m, lambda, snr, _)) in MISS_REFERENCE.iter().enumerate().take(4) {
        let params = DetectionParams::new(m, lambda, 0.1).unwrap();
        let exact = prob_miss_noncoop(snr, &params).unwrap();
        let (mc, se) = monte_carlo_miss(m, lambda, snr, 200_000, 11 + i as u64);
        assert!((exact - mc).abs() <= 4.0 * se, "m={m} λ={lambda} γ={snr}: {exact} vs {mc} ± {se}");
    }
}

#[test]
fn miss_is_monotone_in_snr() {
    let params = DetectionParams::new(5, 20.0, 0.1).unwrap();
    let lo = prob_miss_noncoop(10.0, &params).unwrap();
    let hi = prob_miss_noncoop(100.0, &params).unwrap();
    assert!(hi < lo);
    assert!(prob_miss_noncoop(0.0, &params).is_err());
    assert_eq!(prob_miss_noncoop(f64::INFINITY, &params).unwrap(), 0.0);
}

#[test]
fn reporting_error_examples() {
    assert_abs_diff_eq!(prob_reporting_error(0.0).unwrap(), 0.5);
    assert_abs_diff_eq!(prob_reporting_error(1.0).unwrap(), 0.5 * (1.0 - 0.5f64.sqrt()), epsilon = 1e-15);
    assert!(prob_reporting_error(1e12).unwrap() < 1e-12);
    assert!(prob_reporting_error(-1.0).is_err());
}

#[test]
fn head_selection_examples() {
    assert_eq!(select_head(&[(SuId(1), 0.3), (SuId(2), 0.1)]).unwrap(), SuId(2));
    assert_eq!(select_head(&[(SuId(5), 0.2)]).unwrap(), SuId(5));
    assert_eq!(select_head(&[(SuId(3), 0.2), (SuId(1), 0.2)]).unwrap(), SuId(1));
    assert!(select_head(&[]).is_err());
}

#[test]
fn fusion_examples() {
    assert_abs_diff_eq!(coalition_miss(0.3, &[], &[]).unwrap(), 0.3);
    assert_abs_diff_eq!(coalition_miss(0.3, &[0.4], &[0.0]).unwrap(), 0.12, epsilon = 1e-15);
    assert_abs_diff_eq!(coalition_miss(0.3, &[0.4], &[0.1]).unwrap(), 0.126, epsilon = 1e-15);
    assert_abs_diff_eq!(coalition_false_alarm(0.01, &[]).unwrap(), 0.01, epsilon = 1e-15);
    assert_abs_diff_eq!(coalition_false_alarm(0.01, &[0.0]).unwrap(), 0.0199, epsilon = 1e-15);
    assert_abs_diff_eq!(coalition_false_alarm(0.01, &[0.1]).unwrap(), 1.0 - 0.99 * 0.892, epsilon = 1e-15);
    assert!(coalition_miss(0.3, &[0.4], &[]).is_err());
}

#[test]
fn threshold_inversion_examples() {
    assert_abs_diff_eq!(threshold_for_false_alarm(1, (-1.0f64).exp()).unwrap(), 2.0, epsilon = 1e-12);
    let lambda = threshold_for_false_alarm(5, 0.029_252_688_076_961_45).unwrap();
    assert_abs_diff_eq!(lambda, 20.0, epsilon = 1e-6);
    assert!(threshold_for_false_alarm(5, 0.0).is_err());
    assert!(threshold_for_false_alarm(5, 1.0).is_err());
}

proptest! {
    #[test]
    fn upper_gamma_matches_series(m in 1u32..60, x in 0.0f64..40.0) {
        let got = regularized_upper_gamma(m, x).unwrap();
        prop_assert!((got - naive_upper_gamma(m, x)).abs() <= 1e-12);
        prop_assert!((got + regularized_lower_gamma(m, x).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn miss_is_a_probability(m in 2u32..30, lambda in 0.0f64..80.0, snr_db in -30.0f64..60.0) {
        let params = DetectionParams::new(m, lambda, 0.1).unwrap();
        let pm = prob_miss_noncoop(10f64.powf(snr_db / 10.0), &params).unwrap();
        prop_assert!((0.0..=1.0).contains(&pm));
    }

    #[test]
    fn miss_decreases_with_snr(lambda in 1.0f64..40.0, a in 0.01f64..1e4, k in 1.01f64..10.0) {
        let params = DetectionParams::new(5, lambda, 0.1).unwrap();
        let lo = prob_miss_noncoop(a, &params).unwrap();
        let hi = prob_miss_noncoop(a * k, &params).unwrap();
        prop_assert!(hi <= lo + 1e-12);
    }

    #[test]
    fn threshold_round_trips(m in 1u32..50, pf in 1e-6f64..0.99) {
        let lambda = threshold_for_false_alarm(m, pf).unwrap();
        prop_assert!((regularized_upper_gamma(m, lambda / 2.0).unwrap() - pf).abs() <= 1e-10);
    }

    #[test]
    fn reporting_error_in_half_interval(snr in 0.0f64..1e9) {
        let pe = prob_reporting_error(snr).unwrap();
        prop_assert!((0.0..=0.5).contains(&pe));
    }

    #[test]
    fn perfect_links_reduce_to_products(
        pms in prop::collection::vec(0.0f64..=1.0, 1..12),
        pf in 0.0f64..0.5,
    ) {
        let (head, rest) = pms.split_first().unwrap();
        let zeros = vec![0.0; rest.len()];
        let qm = coalition_miss(*head, rest, &zeros).unwrap();
        prop_assert!((qm - pms.iter().product::<f64>()).abs() <= 1e-15);
        let qf = coalition_false_alarm(pf, &zeros).unwrap();
        prop_assert!((qf - (1.0 - (1.0 - pf).powi(pms.len() as i32))).abs() <= 1e-14);
    }
}
