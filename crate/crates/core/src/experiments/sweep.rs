use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::wilson_interval;
use super::{phase, simulate_trial, Algorithm, SweepParam, TrialOutcome};
use crate::config::{RunConfig, ScenarioConfig};
use crate::detect::{equal_error_calibrate, error_rates, TrialMetrics};
use crate::rng::StreamId;
use crate::Result;

/// A set of sweep points and the algorithms to compare on each.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub label: String,
    pub base: ScenarioConfig,
    /// Swept parameter and its values; `None` runs the base point alone.
    pub sweep: Option<(SweepParam, Vec<usize>)>,
    pub algorithms: Vec<Algorithm>,
    pub trials: usize,
    /// Trials used to find the equal-error threshold; zero uses `threshold_scale`.
    pub calib_trials: usize,
    pub threshold_scale: f64,
}

impl SweepSpec {
    pub fn from_run_config(cfg: &RunConfig) -> Self {
        let mut algorithms = cfg.resolved_algorithms();
        algorithms.sort();
        algorithms.dedup();
        SweepSpec {
            label: cfg.label.clone(),
            base: cfg.scenario.clone(),
            sweep: cfg.sweep.clone(),
            algorithms,
            trials: cfg.trials,
            calib_trials: cfg.calib_trials,
            threshold_scale: cfg.threshold_scale,
        }
    }

    /// `(point index, swept value, scenario)` for every point.
    pub fn points(&self) -> Vec<(usize, usize, ScenarioConfig)> {
        match &self.sweep {
            Some((param, values)) => {
                values.iter().enumerate().map(|(i, &v)| (i, v, param.apply(&self.base, v))).collect()
            }
            None => vec![(0, 0, self.base.clone())],
        }
    }

    fn param_id(&self) -> &'static str {
        self.sweep.as_ref().map_or("none", |(p, _)| p.id())
    }
}

/// One aggregated line of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub sweep_param: String,
    pub sweep_value: usize,
    pub p_miss: f64,
    pub p_miss_ci: f64,
    pub p_fa: f64,
    pub p_fa_ci: f64,
    /// Bit error rate among active users that were detected. Empty without EIB.
    pub eib_err: Option<f64>,
    pub eib_err_ci: Option<f64>,
    /// Mean final effective noise over completed trials.
    pub tau_sq_final: f64,
    pub trials: usize,
    pub diverged: usize,
    pub threshold_scale: f64,
    pub label: String,
}

/// Outcome of a calibration run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub threshold_scale: f64,
    pub p_miss: f64,
    pub p_fa: f64,
    pub diverged: usize,
}

/// Runs `trials` calibration trials and returns the equal-error threshold scale.
pub fn calibrate(cfg: &ScenarioConfig, algorithm: Algorithm, point: usize, trials: usize) -> Result<Calibration> {
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let stream = StreamId::new(cfg.rng_seed, phase::CALIBRATION, point as u64, t as u64);
            simulate_trial(cfg, algorithm, stream)
        })
        .collect::<Result<_>>()?;
    let mut active = Vec::new();
    let mut inactive = Vec::new();
    let mut diverged = 0;
    for outcome in &outcomes {
        match outcome {
            TrialOutcome::Completed(t) => {
                let (a, i) = t.split_scores();
                active.extend(a);
                inactive.extend(i);
            }
            TrialOutcome::Diverged { .. } => diverged += 1,
        }
    }
    let threshold_scale = equal_error_calibrate(&active, &inactive)?;
    let (p_miss, p_fa) = error_rates(&active, &inactive, threshold_scale);
    Ok(Calibration { threshold_scale, p_miss, p_fa, diverged })
}

/// Aggregate of evaluation trials at a fixed threshold scale.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Evaluation {
    pub metrics: TrialMetrics,
    pub tau_sq_final: f64,
    pub trials: usize,
    pub diverged: usize,
}

/// Runs `trials` fresh evaluation trials. Aggregation follows trial order.
pub fn evaluate(
    cfg: &ScenarioConfig,
    algorithm: Algorithm,
    point: usize,
    trials: usize,
    threshold_scale: f64,
) -> Result<Evaluation> {
    let results: Vec<Option<(TrialMetrics, f64)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let stream = StreamId::new(cfg.rng_seed, phase::EVALUATION, point as u64, t as u64);
            Ok(match simulate_trial(cfg, algorithm, stream)? {
                TrialOutcome::Completed(trial) => Some((trial.metrics(threshold_scale), trial.run.final_tau_sq())),
                TrialOutcome::Diverged { .. } => None,
            })
        })
        .collect::<Result<_>>()?;
    let mut eval = Evaluation { trials, ..Default::default() };
    let mut tau_sum = 0.0;
    for r in results {
        match r {
            Some((m, tau)) => {
                eval.metrics += m;
                tau_sum += tau;
            }
            None => eval.diverged += 1,
        }
    }
    let completed = trials - eval.diverged;
    eval.tau_sq_final = if completed > 0 { tau_sum / completed as f64 } else { f64::NAN };
    Ok(eval)
}

/// Runs every (algorithm, point) pair: calibrates the threshold on
/// calibration streams, then evaluates on fresh streams. Rows come out sorted
/// by algorithm, then sweep value, and are handed to `on_row` as they finish.
pub fn run_sweep(spec: &SweepSpec, mut on_row: impl FnMut(&ResultRow) -> Result<()>) -> Result<Vec<ResultRow>> {
    spec.base.validate()?;
    let mut algorithms = spec.algorithms.clone();
    algorithms.sort();
    algorithms.dedup();
    let mut rows = Vec::new();
    for &algorithm in &algorithms {
        for (point, value, cfg) in spec.points() {
            cfg.validate()?;
            let scale = if spec.calib_trials > 0 {
                calibrate(&cfg, algorithm, point, spec.calib_trials)?.threshold_scale
            } else {
                spec.threshold_scale
            };
            let eval = evaluate(&cfg, algorithm, point, spec.trials, scale)?;
            let m = &eval.metrics;
            let (p_miss, p_miss_ci) = wilson_interval(m.misses, m.num_active);
            let (p_fa, p_fa_ci) = wilson_interval(m.false_alarms, m.num_inactive);
            let (eib_err, eib_err_ci) = if algorithm.uses_eib() {
                let (p, ci) = wilson_interval(m.eib_errors, m.eib_decoded);
                (Some(p), Some(ci))
            } else {
                (None, None)
            };
            let row = ResultRow {
                algorithm,
                sweep_param: spec.param_id().to_string(),
                sweep_value: value,
                p_miss,
                p_miss_ci,
                p_fa,
                p_fa_ci,
                eib_err,
                eib_err_ci,
                tau_sq_final: eval.tau_sq_final,
                trials: eval.trials,
                diverged: eval.diverged,
                threshold_scale: scale,
                label: spec.label.clone(),
            };
            on_row(&row)?;
            rows.push(row);
        }
    }
    Ok(rows)
}
