//! Monte Carlo trials, sweeps and result files.

mod csv_io;
mod se;
mod stats;
mod sweep;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::amp::{run_amp, AmpRun};
use crate::config::ScenarioConfig;
use crate::denoise::{Denoiser, MmseDenoiser, PairedDenoiser};
use crate::detect::{score_report, user_scores, DetectionReport, TrialMetrics, UserScore};
use crate::model::{Scenario, UserState};
use crate::rng::StreamId;
use crate::{Error, Result, C64};

pub use csv_io::{format_row, persist, read_rows, CsvSink, CSV_HEADER};
pub use se::{se_comparison, se_population, SeRow};
pub use stats::{wilson_bounds, wilson_interval};
pub use sweep::{calibrate, evaluate, run_sweep, ResultRow, SweepSpec};

/// Stream phase tags.
pub mod phase {
    pub const CALIBRATION: u64 = 1;
    pub const EVALUATION: u64 = 2;
    pub const STATE_EVOLUTION: u64 = 3;
    pub const POPULATION: u64 = 4;
}

/// Detection scheme compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// AMP over N single-pilot users.
    AmpNoEib,
    /// Plain AMP over the 2N EIB slots with per-slot prior eps/2.
    AmpEib,
    /// AMP over the 2N EIB slots with the paired M-AMP denoiser.
    MampEib,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::AmpNoEib, Algorithm::AmpEib, Algorithm::MampEib];

    pub fn uses_eib(self) -> bool {
        !matches!(self, Algorithm::AmpNoEib)
    }

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::AmpNoEib => "amp_no_eib",
            Algorithm::AmpEib => "amp_eib",
            Algorithm::MampEib => "mamp_eib",
        }
    }

    /// Human-readable name for legends and summaries.
    pub fn display_name(self) -> &'static str {
        match self {
            Algorithm::AmpNoEib => "AMP without EIB",
            Algorithm::AmpEib => "AMP with EIB",
            Algorithm::MampEib => "M-AMP with EIB",
        }
    }

    /// The scenario this algorithm runs on (EIB layout switched accordingly).
    pub fn scenario(self, cfg: &ScenarioConfig) -> ScenarioConfig {
        ScenarioConfig { eib_enabled: self.uses_eib(), ..cfg.clone() }
    }

    /// Denoiser for a trial with the given per-user large-scale fading.
    pub fn denoiser(self, cfg: &ScenarioConfig, user_betas: &[f64]) -> Box<dyn Denoiser> {
        match self {
            Algorithm::AmpNoEib => Box::new(MmseDenoiser::new(user_betas.to_vec(), cfg.activity_prob)),
            Algorithm::AmpEib => Box::new(MmseDenoiser::new(
                user_betas.iter().flat_map(|&b| [b, b]).collect(),
                cfg.activity_prob / 2.0,
            )),
            Algorithm::MampEib => {
                Box::new(PairedDenoiser::new(user_betas.to_vec(), cfg.activity_prob / 2.0, cfg.sigmoid_c))
            }
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}` (expected amp_no_eib, amp_eib or mamp_eib)")))
    }
}

/// Scenario parameter that a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    NumAntennas,
    PilotLen,
    NumUsers,
}

impl SweepParam {
    pub fn id(self) -> &'static str {
        match self {
            SweepParam::NumAntennas => "n_antennas",
            SweepParam::PilotLen => "pilot_len",
            SweepParam::NumUsers => "n_users",
        }
    }

    pub fn apply(self, cfg: &ScenarioConfig, value: usize) -> ScenarioConfig {
        let mut cfg = cfg.clone();
        match self {
            SweepParam::NumAntennas => cfg.num_antennas = value,
            SweepParam::PilotLen => cfg.pilot_len = value,
            SweepParam::NumUsers => cfg.num_users = value,
        }
        cfg
    }

    pub fn value(self, cfg: &ScenarioConfig) -> usize {
        match self {
            SweepParam::NumAntennas => cfg.num_antennas,
            SweepParam::PilotLen => cfg.pilot_len,
            SweepParam::NumUsers => cfg.num_users,
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepParam::NumAntennas, SweepParam::PilotLen, SweepParam::NumUsers]
            .into_iter()
            .find(|p| p.id() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown sweep parameter `{s}`")))
    }
}

/// Everything a finished trial produced.
#[derive(Debug, Clone)]
pub struct CompletedTrial {
    pub users: Vec<UserState>,
    pub scores: Vec<UserScore>,
    pub run: AmpRun,
}

impl CompletedTrial {
    pub fn metrics(&self, threshold_scale: f64) -> TrialMetrics {
        score_report(&DetectionReport::from_scores(&self.scores, threshold_scale), &self.users)
    }

    /// Detection scores split by ground truth.
    pub fn split_scores(&self) -> (Vec<f64>, Vec<f64>) {
        let mut active = Vec::new();
        let mut inactive = Vec::new();
        for (u, s) in self.users.iter().zip(&self.scores) {
            if u.active {
                active.push(s.score);
            } else {
                inactive.push(s.score);
            }
        }
        (active, inactive)
    }
}

#[derive(Debug, Clone)]
pub enum TrialOutcome {
    Completed(Box<CompletedTrial>),
    Diverged { iter: usize },
}

/// Generates one scenario, runs the algorithm and scores every user.
/// Divergence is reported as an outcome, not an error.
pub fn simulate_trial(cfg: &ScenarioConfig, algorithm: Algorithm, stream: StreamId) -> Result<TrialOutcome> {
    let cfg = algorithm.scenario(cfg);
    let scenario = Scenario::generate(&cfg, stream)?;
    let betas: Vec<f64> = scenario.users.iter().map(|u| u.beta).collect();
    let mean_beta = betas.iter().sum::<f64>() / betas.len() as f64;
    let denoiser = algorithm.denoiser(&cfg, &betas);
    let y = &scenario.y / C64::from(cfg.tx_power().sqrt());
    let run = match run_amp(y.view(), &scenario.pilots, &cfg, mean_beta, denoiser.as_ref()) {
        Ok(run) => run,
        Err(Error::Diverged { iter, .. }) => return Ok(TrialOutcome::Diverged { iter }),
        Err(e) => return Err(e),
    };
    let pseudo = crate::amp::pseudo_observation(&run.state, &scenario.pilots);
    let scores = user_scores(pseudo.view(), &betas, run.final_tau_sq(), cfg.eib_enabled);
    Ok(TrialOutcome::Completed(Box::new(CompletedTrial { users: scenario.users, scores, run })))
}

/// Per-trial metric row at a fixed threshold scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    /// `None` when the trial diverged.
    pub metrics: Option<TrialMetrics>,
    pub tau_sq_final: Option<f64>,
}

pub fn run_trial(
    cfg: &ScenarioConfig,
    algorithm: Algorithm,
    stream: StreamId,
    threshold_scale: f64,
) -> Result<TrialResult> {
    Ok(match simulate_trial(cfg, algorithm, stream)? {
        TrialOutcome::Completed(t) => TrialResult {
            metrics: Some(t.metrics(threshold_scale)),
            tau_sq_final: Some(t.run.final_tau_sq()),
        },
        TrialOutcome::Diverged { .. } => TrialResult { metrics: None, tau_sq_final: None },
    })
}
