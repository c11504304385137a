//! Activity-aware denoisers for the decoupled observation `x + tau w`.
//!
//! Both denoisers are radial: the output is `a(|x|^2) x` for a real gain `a`,
//! so the Wirtinger Jacobian is `a I + a' x x^H` with `a' = da/d|x|^2`. All
//! likelihood algebra runs in the log domain; `((tau^2 + beta)/tau^2)^(M/2)`
//! overflows long before realistic antenna counts are reached otherwise.
//!
//! The paired denoiser (M-AMP) multiplies the MMSE gain of each slot by a
//! sigmoid of its EIB coefficient, the share of the pair's likelihood that
//! falls on that slot. Its Jacobian holds the partner slot fixed.

use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut2, Axis};

use crate::C64;

/// Per-slot denoiser parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotParams {
    pub beta: f64,
    /// Prior probability that the slot is occupied.
    pub activity_prior: f64,
    pub num_antennas: usize,
    pub tau_sq: f64,
}

impl SlotParams {
    pub fn new(beta: f64, activity_prior: f64, num_antennas: usize, tau_sq: f64) -> Self {
        debug_assert!(beta >= 0.0 && tau_sq > 0.0);
        debug_assert!((0.0..=1.0).contains(&activity_prior));
        SlotParams { beta, activity_prior, num_antennas, tau_sq }
    }

    /// Linear MMSE shrinkage `beta / (beta + tau^2)`.
    pub fn shrinkage(&self) -> f64 {
        self.beta / (self.beta + self.tau_sq)
    }

    /// `(1/tau^2 - 1/(tau^2 + beta)) / 2`, the slope of log-likelihood in |x|^2.
    fn lr_slope(&self) -> f64 {
        0.5 * self.beta / (self.tau_sq * (self.tau_sq + self.beta))
    }

    /// Log-likelihood ratio (active vs. inactive) as a function of |x|^2.
    pub fn log_likelihood(&self, norm_sq: f64) -> f64 {
        -0.5 * self.num_antennas as f64 * (self.beta / self.tau_sq).ln_1p() + self.lr_slope() * norm_sq
    }
}

/// Numerically stable logistic function.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Soft threshold centered at one half with sharpness `c`.
pub fn sigmoid(x: f64, c: f64) -> f64 {
    logistic(c * (x - 0.5))
}

fn norm_sq(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

/// Likelihood ratio of the active vs. inactive hypothesis at `x`.
pub fn likelihood_lambda(x: &[C64], p: &SlotParams) -> f64 {
    p.log_likelihood(norm_sq(x)).exp()
}

/// Gate value and its derivative with respect to |x|^2.
fn gate_with_slope(norm_sq: f64, p: &SlotParams) -> (f64, f64) {
    let eps = p.activity_prior;
    if eps >= 1.0 {
        return (1.0, 0.0);
    }
    if eps <= 0.0 {
        return (0.0, 0.0);
    }
    let logit = eps.ln() - (-eps).ln_1p();
    let t = logistic(p.log_likelihood(norm_sq) + logit);
    (t, t * (1.0 - t) * p.lr_slope())
}

/// Posterior probability that the slot is active.
pub fn gate_t(x: &[C64], p: &SlotParams) -> f64 {
    gate_with_slope(norm_sq(x), p).0
}

/// Share of the pair likelihood on slot `a`.
pub fn eib_coefficient(x_a: &[C64], x_b: &[C64], p: &SlotParams) -> f64 {
    logistic(p.log_likelihood(norm_sq(x_a)) - p.log_likelihood(norm_sq(x_b)))
}

/// Radial gain `a` and slope `da/d|x|^2` of a denoiser at one slot.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SlotGain {
    pub gain: f64,
    pub slope: f64,
}

impl SlotGain {
    pub fn apply(&self, x: &[C64]) -> Array1<C64> {
        x.iter().map(|v| v * self.gain).collect()
    }

    /// Wirtinger Jacobian `gain I + slope x x^H`.
    pub fn jacobian(&self, x: &[C64]) -> Array2<C64> {
        let m = x.len();
        Array2::from_shape_fn((m, m), |(i, j)| {
            let diag = if i == j { self.gain } else { 0.0 };
            C64::from(diag) + x[i] * x[j].conj() * self.slope
        })
    }
}

/// Gain of the spike-and-Gaussian MMSE denoiser.
pub fn mmse_gain(norm_sq: f64, p: &SlotParams) -> SlotGain {
    let k = p.shrinkage();
    let (t, dt) = gate_with_slope(norm_sq, p);
    SlotGain { gain: t * k, slope: dt * k }
}

/// MMSE denoiser value and Jacobian at `x`.
pub fn mmse_denoise(x: &[C64], p: &SlotParams) -> (Array1<C64>, Array2<C64>) {
    let g = mmse_gain(norm_sq(x), p);
    (g.apply(x), g.jacobian(x))
}

/// Gains of the paired denoiser for the two slots of one user.
pub fn mamp_gains(norm_a: f64, norm_b: f64, p: &SlotParams, c: f64) -> (SlotGain, SlotGain) {
    let k = p.shrinkage();
    let slope = p.lr_slope();
    let one = |own: f64, other: f64| {
        let phi = logistic(slope * (own - other));
        let f = sigmoid(phi, c);
        let df_dn = c * f * (1.0 - f) * phi * (1.0 - phi) * slope;
        let (t, dt) = gate_with_slope(own, p);
        SlotGain { gain: f * t * k, slope: k * (df_dn * t + f * dt) }
    };
    (one(norm_a, norm_b), one(norm_b, norm_a))
}

/// Paired (M-AMP) denoiser values and per-slot Jacobians, each slot
/// differentiated with its partner held fixed.
pub fn mamp_denoise(
    x_a: &[C64],
    x_b: &[C64],
    p: &SlotParams,
    c: f64,
) -> ([Array1<C64>; 2], [Array2<C64>; 2]) {
    let (ga, gb) = mamp_gains(norm_sq(x_a), norm_sq(x_b), p, c);
    ([ga.apply(x_a), gb.apply(x_b)], [ga.jacobian(x_a), gb.jacobian(x_b)])
}

/// A denoiser applied jointly to all slots of an AMP iterate.
pub trait Denoiser: Sync {
    fn num_slots(&self) -> usize;

    /// Writes the denoised rows of `pseudo` into `estimate` and returns the
    /// slot average of the row-space Jacobians (`J_n^T`, M x M).
    fn apply(&self, pseudo: ArrayView2<'_, C64>, tau_sq: f64, estimate: ArrayViewMut2<'_, C64>) -> Array2<C64>;
}

fn row_norms(pseudo: ArrayView2<'_, C64>) -> Vec<f64> {
    pseudo.rows().into_iter().map(|r| r.iter().map(|v| v.norm_sqr()).sum()).collect()
}

/// Applies radial gains row by row and averages `gain I + slope conj(r) r^T`.
fn apply_radial(pseudo: ArrayView2<'_, C64>, gains: &[SlotGain], mut estimate: ArrayViewMut2<'_, C64>) -> Array2<C64> {
    let (p, m) = pseudo.dim();
    let mut weighted = pseudo.to_owned();
    for ((mut est, mut w), (row, g)) in estimate
        .rows_mut()
        .into_iter()
        .zip(weighted.rows_mut())
        .zip(pseudo.rows().into_iter().zip(gains))
    {
        est.zip_mut_with(&row, |e, &v| *e = v * g.gain);
        w.mapv_inplace(|v| v * g.slope);
    }
    let mut jac = pseudo.t().mapv(|v| v.conj()).dot(&weighted);
    let mean_gain = gains.iter().map(|g| g.gain).sum::<f64>();
    for i in 0..m {
        jac[[i, i]] += mean_gain;
    }
    jac / C64::from(p as f64)
}

/// Per-slot MMSE denoiser.
#[derive(Debug, Clone)]
pub struct MmseDenoiser {
    betas: Vec<f64>,
    activity_prior: f64,
}

impl MmseDenoiser {
    pub fn new(betas: Vec<f64>, activity_prior: f64) -> Self {
        MmseDenoiser { betas, activity_prior }
    }
}

impl Denoiser for MmseDenoiser {
    fn num_slots(&self) -> usize {
        self.betas.len()
    }

    fn apply(&self, pseudo: ArrayView2<'_, C64>, tau_sq: f64, estimate: ArrayViewMut2<'_, C64>) -> Array2<C64> {
        let m = pseudo.ncols();
        let gains: Vec<SlotGain> = row_norms(pseudo)
            .iter()
            .zip(&self.betas)
            .map(|(&n, &beta)| mmse_gain(n, &SlotParams::new(beta, self.activity_prior, m, tau_sq)))
            .collect();
        apply_radial(pseudo, &gains, estimate)
    }
}

/// Paired M-AMP denoiser; user `n` owns slots `2n` and `2n + 1`.
#[derive(Debug, Clone)]
pub struct PairedDenoiser {
    user_betas: Vec<f64>,
    activity_prior: f64,
    sharpness: f64,
}

impl PairedDenoiser {
    /// `activity_prior` is the per-slot prior (half the user activity probability).
    pub fn new(user_betas: Vec<f64>, activity_prior: f64, sharpness: f64) -> Self {
        PairedDenoiser { user_betas, activity_prior, sharpness }
    }
}

impl Denoiser for PairedDenoiser {
    fn num_slots(&self) -> usize {
        2 * self.user_betas.len()
    }

    fn apply(&self, pseudo: ArrayView2<'_, C64>, tau_sq: f64, estimate: ArrayViewMut2<'_, C64>) -> Array2<C64> {
        let m = pseudo.ncols();
        let norms = row_norms(pseudo);
        let mut gains = Vec::with_capacity(norms.len());
        for (pair, &beta) in norms.chunks_exact(2).zip(&self.user_betas) {
            let p = SlotParams::new(beta, self.activity_prior, m, tau_sq);
            let (a, b) = mamp_gains(pair[0], pair[1], &p, self.sharpness);
            gains.push(a);
            gains.push(b);
        }
        apply_radial(pseudo, &gains, estimate)
    }
}

/// Sum over rows of |x|^2, exposed for detectors and diagnostics.
pub fn row_energy(x: ArrayView2<'_, C64>) -> Array1<f64> {
    x.map_axis(Axis(1), |r| r.iter().map(|v| v.norm_sqr()).sum())
}
