//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use eibamp::C64;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn gauss_pdf(x: f64, var: f64) -> f64 {
    (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Posterior mean of `x` given `y = x + tau w` for the real scalar prior
/// `(1 - eps) delta_0 + eps N(0, beta)`, from Gaussian densities directly.
pub fn bayes_mean(y: f64, beta: f64, tau_sq: f64, eps: f64) -> f64 {
    let p1 = eps * gauss_pdf(y, beta + tau_sq);
    let p0 = (1.0 - eps) * gauss_pdf(y, tau_sq);
    p1 / (p0 + p1) * beta / (beta + tau_sq) * y
}

/// Same posterior mean by composite Simpson quadrature over `x`.
pub fn bayes_mean_quadrature(y: f64, beta: f64, tau_sq: f64, eps: f64) -> f64 {
    let sd = beta.sqrt();
    let (a, b) = (-40.0 * sd, 40.0 * sd);
    let n = 200_000;
    let h = (b - a) / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=n {
        let x = a + i as f64 * h;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let f = gauss_pdf(y - x, tau_sq) * gauss_pdf(x, beta);
        num += w * x * f;
        den += w * f;
    }
    let num = eps * num * h / 3.0;
    let den = eps * den * h / 3.0 + (1.0 - eps) * gauss_pdf(y, tau_sq);
    num / den
}

/// Central-difference Wirtinger Jacobian `d f_i / d z_j`.
pub fn fd_wirtinger(f: impl Fn(&[C64]) -> Vec<C64>, x: &[C64], h: f64) -> Array2<C64> {
    let m = x.len();
    let mut jac = Array2::zeros((m, m));
    for j in 0..m {
        let probe = |d: C64| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += d;
            xm[j] -= d;
            let (fp, fm) = (f(&xp), f(&xm));
            fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>()
        };
        let dre = probe(C64::new(h, 0.0));
        let dim = probe(C64::new(0.0, h));
        for i in 0..m {
            jac[[i, j]] = (dre[i] - C64::i() * dim[i]) * 0.5;
        }
    }
    jac
}

pub fn frob(a: &Array2<C64>) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Circular complex Gaussian with variance `var`, drawn independently of the
/// library's sampler.
pub fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

pub fn cn_vec<R: Rng + ?Sized>(rng: &mut R, m: usize, var: f64) -> Vec<C64> {
    (0..m).map(|_| cn(rng, var)).collect()
}

pub fn norm_sq(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}
