use rayon::prelude::*;

use super::{phase, simulate_trial, Algorithm, TrialOutcome};
use crate::amp::state_evolution;
use crate::config::ScenarioConfig;
use crate::model::{path_loss_linear, sample_distance};
use crate::rng::{Purpose, StreamId};
use crate::Result;

/// One line of a state-evolution comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeRow {
    pub iter: usize,
    pub tau_sq_se: f64,
    /// Mean `|R_t|_F^2 / (L M)` over completed AMP trials.
    pub tau_sq_empirical: Option<f64>,
}

/// Large-scale fading of `size` users placed uniformly in the cell.
pub fn se_population(cfg: &ScenarioConfig, size: usize) -> Vec<f64> {
    let mut rng = StreamId::new(cfg.rng_seed, phase::POPULATION, 0, 0).rng(Purpose::Population);
    (0..size).map(|_| path_loss_linear(sample_distance(cfg, &mut rng))).collect()
}

/// State-evolution prediction next to the empirical residual energy of
/// `trials` AMP runs (no empirical column when `trials` is zero).
pub fn se_comparison(
    cfg: &ScenarioConfig,
    algorithm: Algorithm,
    samples: usize,
    trials: usize,
) -> Result<Vec<SeRow>> {
    let population = se_population(cfg, samples.max(1));
    let mut rng = StreamId::new(cfg.rng_seed, phase::STATE_EVOLUTION, 0, 0).rng(Purpose::StateEvolution);
    let se = state_evolution(cfg, algorithm, &population, samples, &mut rng)?;

    let runs: Vec<Option<Vec<f64>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let stream = StreamId::new(cfg.rng_seed, phase::STATE_EVOLUTION, 1, t as u64);
            Ok(match simulate_trial(cfg, algorithm, stream)? {
                TrialOutcome::Completed(trial) => Some(trial.run.residual_trajectory),
                TrialOutcome::Diverged { .. } => None,
            })
        })
        .collect::<Result<_>>()?;
    let completed: Vec<&Vec<f64>> = runs.iter().flatten().collect();
    let empirical = |t: usize| {
        (!completed.is_empty()).then(|| completed.iter().map(|r| r[t]).sum::<f64>() / completed.len() as f64)
    };
    Ok(se
        .iter()
        .enumerate()
        .map(|(iter, &tau_sq_se)| SeRow { iter, tau_sq_se, tau_sq_empirical: empirical(iter) })
        .collect())
}
