/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Point estimate `k/n` and the half-width of the 95% Wilson score interval.
/// An empty sample gives `(0, 0)`.
pub fn wilson_interval(successes: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let half = Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (p, half)
}

/// Wilson interval bounds, clamped to [0, 1].
pub fn wilson_bounds(successes: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = Z95 * Z95;
    let center = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
    let (_, half) = wilson_interval(successes, n);
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_and_degenerate_samples() {
        assert_eq!(wilson_interval(0, 0), (0.0, 0.0));
        let (p, h) = wilson_interval(0, 100);
        assert_eq!(p, 0.0);
        assert!(h > 0.0 && h < 0.05);
        let (lo, hi) = wilson_bounds(100, 100);
        assert!(hi == 1.0 && lo > 0.95);
    }

    #[test]
    fn nominal_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (p, n, reps) = (0.1, 500u64, 1000);
        let mut covered = 0;
        for _ in 0..reps {
            let k = (0..n).filter(|_| rng.random::<f64>() < p).count() as u64;
            let (lo, hi) = wilson_bounds(k, n);
            if lo <= p && p <= hi {
                covered += 1;
            }
        }
        let rate = covered as f64 / reps as f64;
        assert!((0.92..=0.98).contains(&rate), "{rate}");
    }

    #[test]
    fn width_scales_with_inverse_sqrt_n() {
        let (_, h1) = wilson_interval(100, 1000);
        let (_, h4) = wilson_interval(400, 4000);
        let (_, h2) = wilson_interval(200, 2000);
        assert!((h1 / h4 - 2.0).abs() < 0.15 * 2.0);
        assert!((h1 / h2 - 2f64.sqrt()).abs() < 0.15 * 2f64.sqrt());
    }
}
