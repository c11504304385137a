//! Scenario parameters and the flat key-value config format.
//!
//! A config file is a list of `key = value` lines. `#` starts a comment.
//! Optional `[name]` section headers split the file into several setups:
//! keys before the first header form the base, and each section overrides the
//! base for one setup. A file without sections describes exactly one setup.
//!
//! ```text
//! n_users = 100
//! pilot_len = 5
//! n_antennas = 8
//! activity_prob = 0.05
//! eib = true
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::experiments::{Algorithm, SweepParam};
use crate::model::path_loss_db;
use crate::{Error, Result};

/// Scalar parameters of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_users: usize,
    pub pilot_len: usize,
    pub num_antennas: usize,
    pub activity_prob: f64,
    pub tx_power_dbm: f64,
    pub snr_db: f64,
    /// Explicit noise variance in watts; replaces the SNR convention when set.
    pub noise_var: Option<f64>,
    pub cell_radius_km: f64,
    pub min_radius_km: f64,
    pub sigmoid_c: f64,
    pub num_iterations: usize,
    pub eib_enabled: bool,
    pub rng_seed: u64,
    /// Coherence block length. Metadata only; only pilots are simulated.
    pub coherence_len: Option<usize>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_users: 100,
            pilot_len: 10,
            num_antennas: 8,
            activity_prob: 0.05,
            tx_power_dbm: 10.0,
            snr_db: 10.0,
            noise_var: None,
            cell_radius_km: 0.35,
            min_radius_km: 0.01,
            sigmoid_c: 10.0,
            num_iterations: 20,
            eib_enabled: false,
            rng_seed: 1,
            coherence_len: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_users == 0 {
            return fail("n_users must be positive".into());
        }
        if self.pilot_len == 0 {
            return fail("pilot_len must be positive".into());
        }
        if self.num_antennas == 0 {
            return fail("n_antennas must be positive".into());
        }
        if !(self.activity_prob >= 0.0 && self.activity_prob <= 1.0) {
            return fail(format!("activity_prob must lie in [0, 1], got {}", self.activity_prob));
        }
        if !self.tx_power_dbm.is_finite() || !self.snr_db.is_finite() {
            return fail("tx_power_dbm and snr_db must be finite".into());
        }
        if let Some(v) = self.noise_var {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("noise_var must be positive, got {v}"));
            }
        }
        if !(self.min_radius_km > 0.0 && self.cell_radius_km > self.min_radius_km) {
            return fail(format!(
                "need 0 < min_radius_km < cell_radius_km, got {} and {}",
                self.min_radius_km, self.cell_radius_km
            ));
        }
        if !(self.sigmoid_c > 0.0 && self.sigmoid_c.is_finite()) {
            return fail(format!("sigmoid_c must be positive, got {}", self.sigmoid_c));
        }
        if let Some(t) = self.coherence_len {
            if t < self.pilot_len {
                return fail(format!("coherence_len {t} is shorter than pilot_len {}", self.pilot_len));
            }
        }
        Ok(())
    }

    pub fn tx_power(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    /// Distance below which half of the uniformly placed users fall.
    pub fn median_distance_km(&self) -> f64 {
        let (r0, r1) = (self.min_radius_km, self.cell_radius_km);
        ((r0 * r0 + r1 * r1) / 2.0).sqrt()
    }

    /// Noise variance in watts. Unless overridden, chosen so that the
    /// median-distance user sees `snr_db` at the receiver.
    pub fn noise_var(&self) -> f64 {
        match self.noise_var {
            Some(v) => v,
            None => {
                let beta_med = 10f64.powf(path_loss_db(self.median_distance_km()) / 10.0);
                self.tx_power() * beta_med / 10f64.powf(self.snr_db / 10.0)
            }
        }
    }

    /// Noise variance seen after normalizing the received signal by the
    /// square root of the transmit power.
    pub fn effective_noise_var(&self) -> f64 {
        self.noise_var() / self.tx_power()
    }

    /// Number of pilot slots: one per user, or two with EIB.
    pub fn num_slots(&self) -> usize {
        if self.eib_enabled {
            2 * self.num_users
        } else {
            self.num_users
        }
    }

    /// Prior activity probability of one slot.
    pub fn slot_activity_prob(&self) -> f64 {
        if self.eib_enabled {
            self.activity_prob / 2.0
        } else {
            self.activity_prob
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// One runnable setup: a scenario plus what to do with it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub label: String,
    pub scenario: ScenarioConfig,
    /// Explicit algorithm list. Empty means "derive from `eib`".
    pub algorithms: Vec<Algorithm>,
    pub sweep: Option<(SweepParam, Vec<usize>)>,
    pub trials: usize,
    pub calib_trials: usize,
    /// Fixed threshold scale, used when `calib_trials` is zero.
    pub threshold_scale: f64,
    pub se_samples: usize,
    pub se_trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            label: String::new(),
            scenario: ScenarioConfig::default(),
            algorithms: Vec::new(),
            sweep: None,
            trials: 10_000,
            calib_trials: 2_000,
            threshold_scale: 1.0,
            se_samples: 100_000,
            se_trials: 200,
        }
    }
}

impl RunConfig {
    pub fn resolved_algorithms(&self) -> Vec<Algorithm> {
        if !self.algorithms.is_empty() {
            return self.algorithms.clone();
        }
        if self.scenario.eib_enabled {
            vec![Algorithm::AmpEib, Algorithm::MampEib]
        } else {
            vec![Algorithm::AmpNoEib]
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if !(self.threshold_scale > 0.0 && self.threshold_scale.is_finite()) {
            return Err(Error::Config("threshold_scale must be positive".into()));
        }
        if let Some((_, values)) = &self.sweep {
            if values.is_empty() {
                return Err(Error::Config("sweep_values is empty".into()));
            }
            if values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("sweep_values must be strictly increasing".into()));
            }
            if values.contains(&0) {
                return Err(Error::Config("sweep_values must be positive".into()));
            }
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let sc = &mut self.scenario;
        match key {
            "label" => self.label = value.to_string(),
            "n_users" => sc.num_users = parse(key, value)?,
            "pilot_len" => sc.pilot_len = parse(key, value)?,
            "n_antennas" => sc.num_antennas = parse(key, value)?,
            "activity_prob" => sc.activity_prob = parse(key, value)?,
            "tx_power_dbm" => sc.tx_power_dbm = parse(key, value)?,
            "snr_db" => sc.snr_db = parse(key, value)?,
            "noise_var" => sc.noise_var = parse_opt(key, value)?,
            "cell_radius_km" => sc.cell_radius_km = parse(key, value)?,
            "min_radius_km" => sc.min_radius_km = parse(key, value)?,
            "sigmoid_c" => sc.sigmoid_c = parse(key, value)?,
            "iters" => sc.num_iterations = parse(key, value)?,
            "eib" => sc.eib_enabled = parse(key, value)?,
            "seed" => sc.rng_seed = parse(key, value)?,
            "coherence_len" => sc.coherence_len = parse_opt(key, value)?,
            "algorithms" => self.algorithms = parse_list(key, value)?,
            "trials" => self.trials = parse(key, value)?,
            "calib_trials" => self.calib_trials = parse(key, value)?,
            "threshold_scale" => self.threshold_scale = parse(key, value)?,
            "se_samples" => self.se_samples = parse(key, value)?,
            "se_trials" => self.se_trials = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Canonical key-value rendering; parsing it back yields `self`.
    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        let sc = &self.scenario;
        let mut kv = vec![
            ("label", self.label.clone()),
            ("n_users", sc.num_users.to_string()),
            ("pilot_len", sc.pilot_len.to_string()),
            ("n_antennas", sc.num_antennas.to_string()),
            ("activity_prob", sc.activity_prob.to_string()),
            ("tx_power_dbm", sc.tx_power_dbm.to_string()),
            ("snr_db", sc.snr_db.to_string()),
        ];
        if let Some(v) = sc.noise_var {
            kv.push(("noise_var", v.to_string()));
        }
        kv.extend([
            ("cell_radius_km", sc.cell_radius_km.to_string()),
            ("min_radius_km", sc.min_radius_km.to_string()),
            ("sigmoid_c", sc.sigmoid_c.to_string()),
            ("iters", sc.num_iterations.to_string()),
            ("eib", sc.eib_enabled.to_string()),
            ("seed", sc.rng_seed.to_string()),
        ]);
        if let Some(t) = sc.coherence_len {
            kv.push(("coherence_len", t.to_string()));
        }
        kv.push(("algorithms", join(&self.resolved_algorithms())));
        if let Some((param, values)) = &self.sweep {
            kv.push(("sweep_param", param.to_string()));
            kv.push(("sweep_values", join(values)));
        }
        kv.extend([
            ("trials", self.trials.to_string()),
            ("calib_trials", self.calib_trials.to_string()),
            ("threshold_scale", self.threshold_scale.to_string()),
            ("se_samples", self.se_samples.to_string()),
            ("se_trials", self.se_trials.to_string()),
        ]);
        kv
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value.trim() {
        "" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// Every key accepted in a config file or override.
pub const KNOWN_KEYS: &[&str] = &[
    "label",
    "n_users",
    "pilot_len",
    "n_antennas",
    "activity_prob",
    "tx_power_dbm",
    "snr_db",
    "noise_var",
    "cell_radius_km",
    "min_radius_km",
    "sigmoid_c",
    "iters",
    "eib",
    "seed",
    "coherence_len",
    "algorithms",
    "sweep_param",
    "sweep_values",
    "trials",
    "calib_trials",
    "threshold_scale",
    "se_samples",
    "se_trials",
];

/// Raw key-value document: a base block plus named sections.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigDoc {
    base: BTreeMap<String, String>,
    sections: Vec<(String, BTreeMap<String, String>)>,
}

impl ConfigDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = ConfigDoc::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if name.is_empty() || doc.sections.iter().any(|(n, _)| n == name) {
                    return Err(Error::Config(format!("line {}: bad or duplicate section `{name}`", lineno + 1)));
                }
                doc.sections.push((name.to_string(), BTreeMap::new()));
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            check_key(key)?;
            let map = match doc.sections.last_mut() {
                Some((_, m)) => m,
                None => &mut doc.base,
            };
            map.insert(key.to_string(), value.trim().to_string());
        }
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies `key=value` to every setup, or `section.key=value` to one.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (lhs, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
        let lhs = lhs.trim();
        let value = value.trim().to_string();
        match lhs.rsplit_once('.') {
            Some((section, key)) => {
                check_key(key)?;
                let map = self
                    .sections
                    .iter_mut()
                    .find(|(n, _)| n == section)
                    .map(|(_, m)| m)
                    .ok_or_else(|| Error::Config(format!("override names unknown section `{section}`")))?;
                map.insert(key.to_string(), value);
            }
            None => {
                check_key(lhs)?;
                self.base.insert(lhs.to_string(), value.clone());
                for (_, map) in &mut self.sections {
                    if map.contains_key(lhs) {
                        map.insert(lhs.to_string(), value.clone());
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolves every setup, validating each.
    pub fn resolve(&self) -> Result<Vec<RunConfig>> {
        let build = |label: &str, layers: &[&BTreeMap<String, String>]| -> Result<RunConfig> {
            let mut merged: BTreeMap<&str, &str> = BTreeMap::new();
            for layer in layers {
                for (k, v) in layer.iter() {
                    merged.insert(k, v);
                }
            }
            let mut cfg = RunConfig { label: label.to_string(), ..RunConfig::default() };
            let param = merged.remove("sweep_param").filter(|v| !v.trim().is_empty());
            let values = merged.remove("sweep_values").filter(|v| !v.trim().is_empty());
            for (k, v) in &merged {
                cfg.set(k, v)?;
            }
            cfg.sweep = match (param, values) {
                (Some(p), Some(v)) => Some((parse("sweep_param", p)?, parse_list("sweep_values", v)?)),
                (None, None) => None,
                _ => {
                    return Err(Error::Config(
                        "sweep_param and sweep_values must be given together".into(),
                    ))
                }
            };
            cfg.algorithms = cfg.resolved_algorithms();
            cfg.validate()?;
            Ok(cfg)
        };
        if self.sections.is_empty() {
            Ok(vec![build("", &[&self.base])?])
        } else {
            self.sections
                .iter()
                .map(|(name, map)| build(name, &[&self.base, map]))
                .collect()
        }
    }
}

fn check_key(key: &str) -> Result<()> {
    if KNOWN_KEYS.contains(&key) {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown config key `{key}`")))
    }
}

/// Renders resolved setups in the config format. A single unlabeled setup is
/// written flat; otherwise each setup becomes a fully resolved section.
pub fn render(setups: &[RunConfig]) -> String {
    let mut out = String::new();
    let flat = setups.len() == 1 && setups[0].label.is_empty();
    for cfg in setups {
        if !flat {
            let _ = writeln!(out, "[{}]", cfg.label);
        }
        for (k, v) in cfg.to_kv() {
            if k == "label" {
                continue;
            }
            let _ = writeln!(out, "{k} = {v}");
        }
        if !flat {
            out.push('\n');
        }
    }
    out
}
