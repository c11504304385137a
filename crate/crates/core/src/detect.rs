//! Activity and embedded-bit decisions on the decoupled observations.
//!
//! Detection works on the final pseudo-observations `S^H R + X` of an AMP run,
//! which behave like `x + tau w`. A user's score is `|x|^2` divided by the
//! equal-cost likelihood-ratio threshold; the user is declared active when
//! the score exceeds `threshold_scale`.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::ArrayView2;

use crate::denoise::{row_energy, SlotParams};
use crate::model::UserState;
use crate::{Error, Result, C64};

/// Equal-cost threshold on `|x|^2`:
/// `M ln((tau^2 + beta)/tau^2) tau^2 (beta + tau^2) / beta`.
pub fn activity_threshold(beta: f64, tau_sq: f64, num_antennas: usize) -> f64 {
    let u = beta / tau_sq;
    num_antennas as f64 * u.ln_1p() * tau_sq * (1.0 + 1.0 / u)
}

/// Detection score and bit decision of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserScore {
    /// Energy over threshold; the larger slot of the pair with EIB.
    pub score: f64,
    /// Decoded bit (EIB layout only).
    pub bit: Option<bool>,
}

/// Scores every user. `pseudo` has one row per slot (two per user with EIB,
/// user `n` owning rows `2n` and `2n + 1`); `betas` has one entry per user.
pub fn user_scores(pseudo: ArrayView2<'_, C64>, betas: &[f64], tau_sq: f64, eib: bool) -> Vec<UserScore> {
    let m = pseudo.ncols();
    let energy = row_energy(pseudo);
    betas
        .iter()
        .enumerate()
        .map(|(n, &beta)| {
            let thr = activity_threshold(beta, tau_sq, m);
            if eib {
                let (ea, eb) = (energy[2 * n], energy[2 * n + 1]);
                // log-likelihood comparison; ties go to bit 0
                let p = SlotParams::new(beta, 0.5, m, tau_sq);
                let bit = p.log_likelihood(eb) > p.log_likelihood(ea);
                UserScore { score: ea.max(eb) / thr, bit: Some(bit) }
            } else {
                UserScore { score: energy[n] / thr, bit: None }
            }
        })
        .collect()
}

/// Decisions of one trial.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DetectionReport {
    pub detected_active: BTreeSet<usize>,
    /// Decoded bit per detected user (EIB only). Keys are a subset of
    /// `detected_active`.
    pub decoded_bits: BTreeMap<usize, bool>,
}

impl DetectionReport {
    pub fn from_scores(scores: &[UserScore], threshold_scale: f64) -> Self {
        let mut report = DetectionReport::default();
        for (n, s) in scores.iter().enumerate() {
            if s.score > threshold_scale {
                report.detected_active.insert(n);
                if let Some(bit) = s.bit {
                    report.decoded_bits.insert(n, bit);
                }
            }
        }
        report
    }
}

/// Plain layout: user `n` is active iff `|x_n|^2 > scale * threshold_n`.
pub fn detect_plain(pseudo: ArrayView2<'_, C64>, betas: &[f64], tau_sq: f64, threshold_scale: f64) -> DetectionReport {
    DetectionReport::from_scores(&user_scores(pseudo, betas, tau_sq, false), threshold_scale)
}

/// EIB layout: a user is active iff either of its slots crosses the scaled
/// threshold; the bit is the slot with the larger likelihood.
pub fn detect_eib(pseudo: ArrayView2<'_, C64>, betas: &[f64], tau_sq: f64, threshold_scale: f64) -> DetectionReport {
    DetectionReport::from_scores(&user_scores(pseudo, betas, tau_sq, true), threshold_scale)
}

/// Error counts of one trial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrialMetrics {
    pub misses: u64,
    pub num_active: u64,
    pub false_alarms: u64,
    pub num_inactive: u64,
    /// Wrong bits among users that are active and detected.
    pub eib_errors: u64,
    /// Users that are active and detected (denominator of the bit error).
    pub eib_decoded: u64,
}

impl std::ops::AddAssign for TrialMetrics {
    fn add_assign(&mut self, o: Self) {
        self.misses += o.misses;
        self.num_active += o.num_active;
        self.false_alarms += o.false_alarms;
        self.num_inactive += o.num_inactive;
        self.eib_errors += o.eib_errors;
        self.eib_decoded += o.eib_decoded;
    }
}

/// Compares decisions with ground truth.
pub fn score_report(report: &DetectionReport, truth: &[UserState]) -> TrialMetrics {
    let mut m = TrialMetrics::default();
    for (n, user) in truth.iter().enumerate() {
        let detected = report.detected_active.contains(&n);
        if user.active {
            m.num_active += 1;
            if !detected {
                m.misses += 1;
            } else if let Some(&bit) = report.decoded_bits.get(&n) {
                m.eib_decoded += 1;
                if bit != user.eib_bit {
                    m.eib_errors += 1;
                }
            }
        } else {
            m.num_inactive += 1;
            if detected {
                m.false_alarms += 1;
            }
        }
    }
    m
}

/// Miss and false-alarm rates of `scale` on fixed score samples.
pub fn error_rates(active: &[f64], inactive: &[f64], scale: f64) -> (f64, f64) {
    let miss = active.iter().filter(|&&s| s <= scale).count() as f64 / active.len() as f64;
    let fa = inactive.iter().filter(|&&s| s > scale).count() as f64 / inactive.len() as f64;
    (miss, fa)
}

/// Finds the threshold scale at which miss and false-alarm rates coincide.
///
/// Bisects in log-scale until `|P_miss - P_fa| <= 0.1 min(P_miss, P_fa)` or
/// the bracket collapses.
pub fn equal_error_calibrate(active: &[f64], inactive: &[f64]) -> Result<f64> {
    if active.is_empty() || inactive.is_empty() {
        return Err(Error::Calibration(format!(
            "need samples from both classes, got {} active and {} inactive",
            active.len(),
            inactive.len()
        )));
    }
    let all = || active.iter().chain(inactive);
    if all().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::Calibration("scores must be finite and nonnegative".into()));
    }
    let first = active[0];
    if all().all(|&s| s == first) {
        return Err(Error::Calibration("all scores are equal".into()));
    }
    let min_pos = all().copied().filter(|&s| s > 0.0).fold(f64::INFINITY, f64::min);
    let max = all().copied().fold(0.0, f64::max);
    let mut lo = (min_pos * 0.5).ln();
    let mut hi = (max * 2.0).ln();

    let mut active = active.to_vec();
    let mut inactive = inactive.to_vec();
    active.sort_by(f64::total_cmp);
    inactive.sort_by(f64::total_cmp);
    let rates = |s: f64| {
        let miss = active.partition_point(|&a| a <= s) as f64 / active.len() as f64;
        let fa = (inactive.len() - inactive.partition_point(|&a| a <= s)) as f64 / inactive.len() as f64;
        (miss, fa)
    };

    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let (miss, fa) = rates(mid.exp());
        if (miss - fa).abs() <= 0.1 * miss.min(fa) {
            break;
        }
        if miss > fa {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(mid.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn threshold_hand_value() {
        assert!((activity_threshold(1.0, 1.0, 10) - 20.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn threshold_equalizes_gaussian_densities() {
        // Circular complex Gaussians with per-entry variance tau^2 vs tau^2 + beta.
        let logpdf = |e: f64, v: f64, m: f64| -m * (std::f64::consts::PI * v).ln() - e / v;
        for &(beta, tau2, m) in &[(1.0, 1.0, 10usize), (3.0, 0.2, 4), (1e-9, 1e-11, 64), (0.01, 5.0, 1)] {
            let thr = activity_threshold(beta, tau2, m);
            let d = logpdf(thr, tau2, m as f64) - logpdf(thr, tau2 + beta, m as f64);
            assert!(d.abs() < 1e-9 * logpdf(thr, tau2, m as f64).abs().max(1.0), "{d}");
        }
    }

    #[test]
    fn threshold_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let beta = 10f64.powf(rng.random_range(-6.0..6.0));
            let tau2 = 10f64.powf(rng.random_range(-6.0..6.0));
            let m = rng.random_range(1..256);
            let thr = activity_threshold(beta, tau2, m);
            let mf = m as f64;
            assert!(thr >= mf * tau2 * (1.0 - 1e-12) && thr <= mf * (tau2 + beta) * (1.0 + 1e-12));
        }
    }

    fn truth(active: &[bool], bits: &[bool]) -> Vec<UserState> {
        active
            .iter()
            .zip(bits)
            .map(|(&a, &b)| UserState {
                active: a,
                eib_bit: b,
                distance_km: 0.1,
                beta: 1.0,
                channel: ndarray::Array1::zeros(1),
            })
            .collect()
    }

    #[test]
    fn zero_estimate_detects_nothing() {
        let x = Array2::<C64>::zeros((5, 4));
        assert!(detect_plain(x.view(), &[1.0; 5], 0.1, 1.0).detected_active.is_empty());
        let x = Array2::<C64>::zeros((10, 4));
        let r = detect_eib(x.view(), &[1.0; 5], 0.1, 1.0);
        assert!(r.detected_active.is_empty() && r.decoded_bits.is_empty());
    }

    #[test]
    fn perfect_recovery_scores_clean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let active = [true, false, true, false, false, true];
        let mut x = Array2::<C64>::zeros((6, 8));
        for (n, &a) in active.iter().enumerate() {
            if a {
                x.row_mut(n).mapv_inplace(|_| C64::new(rng.random::<f64>() + 1.0, 0.0));
            }
        }
        let report = detect_plain(x.view(), &[1.0; 6], 0.01, 1.0);
        let m = score_report(&report, &truth(&active, &[false; 6]));
        assert_eq!((m.misses, m.false_alarms, m.num_active, m.num_inactive), (0, 0, 3, 3));
    }

    #[test]
    fn eib_pair_with_zero_second_slot_decodes_zero() {
        let mut x = Array2::<C64>::zeros((2, 4));
        x.row_mut(0).fill(C64::new(2.0, -1.0));
        let r = detect_eib(x.view(), &[1.0], 0.1, 1.0);
        assert!(r.detected_active.contains(&0));
        assert_eq!(r.decoded_bits[&0], false);
        // exact tie goes to zero
        x.row_mut(1).fill(C64::new(2.0, -1.0));
        assert_eq!(detect_eib(x.view(), &[1.0], 0.1, 1.0).decoded_bits[&0], false);
    }

    #[test]
    fn score_report_counts() {
        let none = DetectionReport::default();
        let m = score_report(&none, &truth(&[false; 4], &[false; 4]));
        assert_eq!(m, TrialMetrics { num_inactive: 4, ..Default::default() });

        let mut one = DetectionReport::default();
        one.detected_active.insert(2);
        let m = score_report(&one, &truth(&[false; 4], &[false; 4]));
        assert_eq!((m.false_alarms, m.misses), (1, 0));

        let m = score_report(&none, &truth(&[true, true, false], &[false; 3]));
        assert_eq!(m.misses, 2);

        let mut bits = DetectionReport::default();
        bits.detected_active.extend([0, 1]);
        bits.decoded_bits.insert(0, true);
        bits.decoded_bits.insert(1, true);
        let m = score_report(&bits, &truth(&[true, true, true], &[true, false, false]));
        assert_eq!((m.eib_decoded, m.eib_errors, m.misses), (2, 1, 1));
    }

    #[test]
    fn calibration_recovers_mirrored_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let active: Vec<f64> = (0..5000)
            .map(|_| {
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                (1.0 + z).exp()
            })
            .collect();
        let inactive: Vec<f64> = active.iter().map(|a| 1.0 / a).collect();
        let scale = equal_error_calibrate(&active, &inactive).unwrap();
        assert!((scale - 1.0).abs() < 0.02, "{scale}");
    }

    #[test]
    fn calibration_rejects_degenerate_samples() {
        assert!(equal_error_calibrate(&[1.0; 4], &[1.0; 4]).is_err());
        assert!(equal_error_calibrate(&[], &[1.0]).is_err());
        assert!(equal_error_calibrate(&[2.0], &[]).is_err());
    }

    #[test]
    fn rates_are_monotone_in_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let active: Vec<f64> = (0..500).map(|_| rng.random::<f64>() * 3.0).collect();
        let inactive: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let mut last = (0.0, 1.0);
        for k in 0..100 {
            let (miss, fa) = error_rates(&active, &inactive, k as f64 * 0.04);
            assert!(miss >= last.0 && fa <= last.1);
            last = (miss, fa);
        }
    }
}
