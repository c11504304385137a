mod common;

use common::{cn_vec, norm_sq};
use eibamp::config::ScenarioConfig;
use eibamp::detect::{activity_threshold, detect_eib, detect_plain, score_report, DetectionReport};
use eibamp::experiments::{calibrate, evaluate, Algorithm};
use eibamp::model::UserState;
use eibamp::C64;
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Empirical miss / false-alarm rates of the closed-form threshold on
/// decoupled observations, with the chi-square predictions.
fn chi2_rates(m: usize, samples: usize, seed: u64) -> ((f64, f64), (f64, f64)) {
    let (beta, tau_sq) = (1.0, 1.0);
    let thr = activity_threshold(beta, tau_sq, m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut misses = 0;
    let mut alarms = 0;
    for _ in 0..samples {
        let h = cn_vec(&mut rng, m, beta);
        let w = cn_vec(&mut rng, m, tau_sq);
        let active: Vec<C64> = h.iter().zip(&w).map(|(a, b)| a + b).collect();
        let w2 = cn_vec(&mut rng, m, tau_sq);
        let x = Array2::from_shape_fn((2, m), |(r, k)| if r == 0 { active[k].conj() } else { w2[k].conj() });
        let report = detect_plain(x.view(), &[beta, beta], tau_sq, 1.0);
        misses += usize::from(!report.detected_active.contains(&0));
        alarms += usize::from(report.detected_active.contains(&1));
    }
    let chi = ChiSquared::new(2.0 * m as f64).unwrap();
    let p_miss = chi.cdf(2.0 * thr / (beta + tau_sq));
    let p_fa = chi.sf(2.0 * thr / tau_sq);
    ((misses as f64 / samples as f64, p_miss), (alarms as f64 / samples as f64, p_fa))
}

#[test]
fn chi_square_tails_predict_error_rates() {
    let ((miss, p_miss), (fa, p_fa)) = chi2_rates(64, 100_000, 1);
    println!("M=64 miss {miss:.3e} (theory {p_miss:.3e}), false alarm {fa:.3e} (theory {p_fa:.3e})");
    assert!(miss <= 1.2 * p_miss && miss >= p_miss / 1.2);
    assert!(fa <= 1.2 * p_fa && fa >= p_fa / 1.2);
}

#[test]
fn error_rates_fall_with_antennas() {
    let mut last = (1.0, 1.0);
    for m in [8, 16, 32, 64] {
        let ((miss, _), (fa, _)) = chi2_rates(m, 50_000, m as u64);
        assert!(miss < last.0 && fa < last.1, "M={m}: {miss} {fa} after {last:?}");
        last = (miss, fa);
    }
}

#[test]
fn eib_bit_errors_match_direct_comparison() {
    let (m, beta, tau_sq) = (16, 1.0, 1.0);
    let samples = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut errors = 0;
    let mut decoded = 0;
    for _ in 0..samples {
        let h = cn_vec(&mut rng, m, beta);
        let w = cn_vec(&mut rng, m, tau_sq);
        let w2 = cn_vec(&mut rng, m, tau_sq);
        let x = Array2::from_shape_fn((2, m), |(r, k)| if r == 0 { h[k] + w[k] } else { w2[k] });
        // scale 0 declares every user active so every bit is decoded
        let report = detect_eib(x.view(), &[beta], tau_sq, 0.0);
        if let Some(&bit) = report.decoded_bits.get(&0) {
            decoded += 1;
            errors += usize::from(bit);
        }
    }
    assert_eq!(decoded, samples);
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut direct = 0;
    for _ in 0..samples {
        let a: Vec<C64> = cn_vec(&mut rng, m, beta).iter().zip(cn_vec(&mut rng, m, tau_sq)).map(|(h, w)| h + w).collect();
        let b = cn_vec(&mut rng, m, tau_sq);
        direct += usize::from(norm_sq(&b) > norm_sq(&a));
    }
    let (rate, oracle) = (errors as f64 / samples as f64, direct as f64 / samples as f64);
    println!("EIB error {rate:.4e}, direct {oracle:.4e}");
    assert!((rate / oracle - 1.0).abs() < 0.1);
}

#[test]
fn zero_second_slot_never_decodes_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let a = cn_vec(&mut rng, 4, 1e-6);
        let x = Array2::from_shape_fn((2, 4), |(r, k)| if r == 0 { a[k] } else { C64::new(0.0, 0.0) });
        let report = detect_eib(x.view(), &[1.0], 0.3, 0.0);
        assert_eq!(report.decoded_bits.get(&0), Some(&false));
    }
    let silent = Array2::<C64>::zeros((2, 4));
    let report = detect_eib(silent.view(), &[1.0], 0.3, 1.0);
    assert!(report.detected_active.is_empty() && report.decoded_bits.is_empty());
}

fn user(active: bool) -> UserState {
    UserState { active, eib_bit: false, distance_km: 0.1, beta: 1.0, channel: Array1::zeros(2) }
}

#[test]
fn report_scoring_examples() {
    let truth: Vec<UserState> = (0..5).map(|_| user(false)).collect();
    let mut report = DetectionReport::default();
    report.detected_active.insert(2);
    let m = score_report(&report, &truth);
    assert_eq!((m.false_alarms, m.misses), (1, 0));

    let truth: Vec<UserState> = (0..5).map(|n| user(n < 3)).collect();
    let m = score_report(&DetectionReport::default(), &truth);
    assert_eq!((m.misses, m.num_active), (3, 3));
}

#[test]
fn calibrated_point_holds_on_fresh_trials() {
    let cfg = ScenarioConfig { num_users: 100, pilot_len: 10, num_antennas: 8, eib_enabled: true, ..Default::default() };
    for alg in [Algorithm::AmpEib, Algorithm::MampEib] {
        let cal = calibrate(&cfg, alg, 0, 2000).unwrap();
        let eval = evaluate(&cfg, alg, 0, 10_000, cal.threshold_scale).unwrap();
        let m = eval.metrics;
        let p_miss = m.misses as f64 / m.num_active as f64;
        let p_fa = m.false_alarms as f64 / m.num_inactive as f64;
        println!("{alg}: scale {:.3}, held-out P_miss {p_miss:.4}, P_fa {p_fa:.4}", cal.threshold_scale);
        assert!((p_miss - p_fa).abs() / p_fa < 0.15);
    }
}
