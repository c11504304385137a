//! The AMP recursion and its state evolution.
//!
//! AMP runs on the power-normalized observation `Y / sqrt(rho)`, so the
//! effective noise variance is `sigma^2 / rho` and estimates live on the same
//! scale as the channels. Row `n` of the estimate tracks row `n` of the
//! effective channel matrix (`alpha_n h_n^H`).
//!
//! One iteration:
//!
//! ```text
//! U     = S^H R_t + X_t                       (pseudo-observations, P x M)
//! X_t+1 = eta_t(U)                            (row-wise)
//! R_t+1 = Y - S X_t+1 + (P/L) R_t mean_n(J_n^T)
//! ```
//!
//! The denoiser at iteration `t` uses the empirical effective noise
//! `tau_t^2 = |R_t|_F^2 / (L M)`; iteration zero uses the prior-based value.
//! `P` is the number of pilot slots (`N`, or `2N` with EIB) in both places it
//! appears.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::config::ScenarioConfig;
use crate::denoise::{mamp_gains, mmse_gain, Denoiser, SlotGain, SlotParams};
use crate::experiments::Algorithm;
use crate::model::{complex_gaussian, PilotMatrix};
use crate::{Error, Result, C64};

/// Factor by which `tau^2` may grow over its initial value before a run is
/// declared divergent.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Smallest `tau^2` used, relative to the initial value. Keeps the denoiser
/// finite once a noiseless run has converged exactly.
const TAU_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct AmpState {
    /// Current estimate, P x M.
    pub estimate: Array2<C64>,
    /// Current residual, L x M.
    pub residual: Array2<C64>,
    /// Effective noise variance used by the next denoising step.
    pub tau_sq: f64,
    pub iter: usize,
    pub initial_tau_sq: f64,
}

/// `sigma^2/rho + (P/L) eps_slot E[beta]`. The product `P eps_slot` equals
/// `N eps` in both layouts.
pub fn initial_tau_sq(cfg: &ScenarioConfig, mean_beta: f64) -> f64 {
    cfg.effective_noise_var()
        + cfg.num_slots() as f64 / cfg.pilot_len as f64 * cfg.slot_activity_prob() * mean_beta
}

/// Starts AMP from `X = 0`, `R = Y` where `y` is already power-normalized.
pub fn amp_init(y: ArrayView2<'_, C64>, cfg: &ScenarioConfig, mean_beta: f64) -> Result<AmpState> {
    let tau_sq = initial_tau_sq(cfg, mean_beta);
    if !(tau_sq > 0.0 && tau_sq.is_finite()) {
        return Err(Error::Config(format!("initial tau^2 must be positive, got {tau_sq}")));
    }
    Ok(AmpState {
        estimate: Array2::zeros((cfg.num_slots(), y.ncols())),
        residual: y.to_owned(),
        tau_sq,
        iter: 0,
        initial_tau_sq: tau_sq,
    })
}

/// `S^H R + X`: the per-slot decoupled observations.
pub fn pseudo_observation(state: &AmpState, pilots: &PilotMatrix) -> Array2<C64> {
    let sh = pilots.entries().t().mapv(|v| v.conj());
    sh.dot(&state.residual) + &state.estimate
}

fn check_dims(state: &AmpState, pilots: &PilotMatrix, y: ArrayView2<'_, C64>, denoiser: &dyn Denoiser) -> Result<()> {
    let (l, p) = pilots.entries().dim();
    let (pe, m) = state.estimate.dim();
    if y.dim() != (l, m) || state.residual.dim() != (l, m) || pe != p || denoiser.num_slots() != p {
        return Err(Error::Dimension(format!(
            "pilots {l}x{p}, y {:?}, estimate {:?}, residual {:?}, denoiser slots {}",
            y.dim(),
            state.estimate.dim(),
            state.residual.dim(),
            denoiser.num_slots()
        )));
    }
    Ok(())
}

struct Workspace {
    s: Array2<C64>,
    sh: Array2<C64>,
}

impl Workspace {
    fn new(pilots: &PilotMatrix) -> Self {
        let s = pilots.entries().to_owned();
        let sh = s.t().mapv(|v| v.conj());
        Workspace { s, sh }
    }

    fn step(&self, state: &AmpState, y: ArrayView2<'_, C64>, denoiser: &dyn Denoiser) -> Result<AmpState> {
        let (l, p) = self.s.dim();
        let m = y.ncols();
        let pseudo = self.sh.dot(&state.residual) + &state.estimate;
        let mut estimate = Array2::zeros((p, m));
        let jac_mean = denoiser.apply(pseudo.view(), state.tau_sq, estimate.view_mut());
        let onsager = state.residual.dot(&jac_mean) * C64::from(p as f64 / l as f64);
        let residual = &y - &self.s.dot(&estimate) + onsager;
        let energy: f64 = residual.iter().map(|v| v.norm_sqr()).sum();
        let tau_sq = (energy / (l * m) as f64).max(state.initial_tau_sq * TAU_FLOOR);
        if !tau_sq.is_finite() || estimate.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Diverged { iter: state.iter + 1, tau_sq });
        }
        Ok(AmpState { estimate, residual, tau_sq, iter: state.iter + 1, initial_tau_sq: state.initial_tau_sq })
    }
}

/// One AMP iteration.
pub fn amp_iterate(
    state: &AmpState,
    pilots: &PilotMatrix,
    y: ArrayView2<'_, C64>,
    denoiser: &dyn Denoiser,
) -> Result<AmpState> {
    check_dims(state, pilots, y, denoiser)?;
    Workspace::new(pilots).step(state, y, denoiser)
}

/// Result of a full AMP run.
#[derive(Debug, Clone)]
pub struct AmpRun {
    pub state: AmpState,
    /// Effective noise used by the denoiser at each iteration, `t = 0..=T`.
    pub tau_trajectory: Vec<f64>,
    /// `|R_t|_F^2 / (L M)` for `t = 0..=T`.
    pub residual_trajectory: Vec<f64>,
}

impl AmpRun {
    pub fn final_tau_sq(&self) -> f64 {
        self.state.tau_sq
    }
}

/// Runs `cfg.num_iterations` AMP iterations from [`amp_init`]. `y` must be
/// power-normalized.
pub fn run_amp(
    y: ArrayView2<'_, C64>,
    pilots: &PilotMatrix,
    cfg: &ScenarioConfig,
    mean_beta: f64,
    denoiser: &dyn Denoiser,
) -> Result<AmpRun> {
    let mut state = amp_init(y, cfg, mean_beta)?;
    check_dims(&state, pilots, y, denoiser)?;
    let (l, m) = y.dim();
    let residual_energy = |r: &Array2<C64>| r.iter().map(|v| v.norm_sqr()).sum::<f64>() / (l * m) as f64;
    let mut tau_trajectory = vec![state.tau_sq];
    let mut residual_trajectory = vec![residual_energy(&state.residual)];
    let ws = Workspace::new(pilots);
    for _ in 0..cfg.num_iterations {
        state = ws.step(&state, y, denoiser)?;
        if state.tau_sq > DIVERGENCE_FACTOR * state.initial_tau_sq {
            return Err(Error::Diverged { iter: state.iter, tau_sq: state.tau_sq });
        }
        tau_trajectory.push(state.tau_sq);
        residual_trajectory.push(residual_energy(&state.residual));
    }
    Ok(AmpRun { state, tau_trajectory, residual_trajectory })
}

/// Monte Carlo state evolution for one algorithm.
///
/// Each sample draws a user (large-scale fading uniformly from `betas`,
/// activity with probability `eps`, and with EIB a uniform bit), forms the
/// decoupled observations `x + tau w` for its slot(s) and measures the
/// denoising error. Returns `tau_t^2` for `t = 0..=cfg.num_iterations`.
pub fn state_evolution<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    algorithm: Algorithm,
    betas: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if betas.is_empty() || samples == 0 {
        return Err(Error::Config("state evolution needs a beta population and samples".into()));
    }
    let cfg = algorithm.scenario(cfg);
    let mean_beta = betas.iter().sum::<f64>() / betas.len() as f64;
    let m = cfg.num_antennas;
    let ratio = cfg.num_slots() as f64 / cfg.pilot_len as f64;
    let noise = cfg.effective_noise_var();
    let eps_slot = cfg.slot_activity_prob();
    let slots_per_sample = if cfg.eib_enabled { 2 } else { 1 };

    let mut tau_sq = initial_tau_sq(&cfg, mean_beta);
    let mut out = vec![tau_sq];
    let mut h = vec![C64::new(0.0, 0.0); m];
    let mut obs = [vec![C64::new(0.0, 0.0); m], vec![C64::new(0.0, 0.0); m]];
    for _ in 0..cfg.num_iterations {
        let tau = tau_sq.sqrt();
        let mut err = 0.0;
        for _ in 0..samples {
            let beta = betas[rng.random_range(0..betas.len())];
            let active = rng.random::<f64>() < cfg.activity_prob;
            let bit = usize::from(rng.random::<bool>());
            let scale = beta.sqrt();
            for v in h.iter_mut() {
                *v = complex_gaussian(rng) * scale;
            }
            // slot k carries the channel iff the user is active and picked it
            let carries = |k: usize| active && (!cfg.eib_enabled || k == bit);
            let mut norms = [0.0; 2];
            for k in 0..slots_per_sample {
                for (o, hv) in obs[k].iter_mut().zip(&h) {
                    let w = complex_gaussian(rng) * tau;
                    *o = if carries(k) { hv + w } else { w };
                }
                norms[k] = obs[k].iter().map(|v| v.norm_sqr()).sum();
            }
            let params = SlotParams::new(beta, eps_slot, m, tau_sq);
            let gains: [SlotGain; 2] = match algorithm {
                Algorithm::AmpNoEib | Algorithm::AmpEib => {
                    [mmse_gain(norms[0], &params), mmse_gain(norms[1], &params)]
                }
                Algorithm::MampEib => {
                    let (a, b) = mamp_gains(norms[0], norms[1], &params, cfg.sigmoid_c);
                    [a, b]
                }
            };
            for k in 0..slots_per_sample {
                let g = gains[k].gain;
                err += obs[k]
                    .iter()
                    .zip(&h)
                    .map(|(o, hv)| {
                        let target = if carries(k) { *hv } else { C64::new(0.0, 0.0) };
                        (o * g - target).norm_sqr()
                    })
                    .sum::<f64>();
            }
        }
        let slot_mse = err / (samples * slots_per_sample) as f64;
        tau_sq = noise + ratio * slot_mse / m as f64;
        out.push(tau_sq);
    }
    Ok(out)
}
