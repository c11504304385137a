//! Users, channels, pilots and the received pilot signal.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::ScenarioConfig;
use crate::rng::{Purpose, StreamId};
use crate::{Error, Result, C64};

/// Large-scale fading in dB at distance `r_km` kilometers.
pub fn path_loss_db(r_km: f64) -> f64 {
    -130.0 - 37.6 * r_km.log10()
}

pub fn path_loss_linear(r_km: f64) -> f64 {
    10f64.powf(path_loss_db(r_km) / 10.0)
}

/// Draws a circularly-symmetric complex Gaussian sample with unit variance
/// (variance 1/2 per real component).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// L x P matrix of pilot columns with entries in {(±1 ± j)/sqrt(2L)}.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix {
    entries: Array2<C64>,
}

impl PilotMatrix {
    pub fn entries(&self) -> ArrayView2<'_, C64> {
        self.entries.view()
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_columns(&self) -> usize {
        self.entries.ncols()
    }

    /// Wraps an explicit matrix. Every column must have unit norm.
    pub fn from_entries(entries: Array2<C64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Dimension("empty pilot matrix".into()));
        }
        for (j, col) in entries.columns().into_iter().enumerate() {
            let norm_sq: f64 = col.iter().map(|s| s.norm_sqr()).sum();
            if (norm_sq - 1.0).abs() > 1e-9 {
                return Err(Error::Dimension(format!("pilot column {j} has squared norm {norm_sq}")));
            }
        }
        Ok(PilotMatrix { entries })
    }
}

/// Samples `num_columns` pilots of length `len` from the symmetric
/// Bernoulli QPSK alphabet.
pub fn gen_pilots<R: Rng + ?Sized>(len: usize, num_columns: usize, rng: &mut R) -> Result<PilotMatrix> {
    if len == 0 || num_columns == 0 {
        return Err(Error::Dimension(format!("pilot matrix must be nonempty, got {len}x{num_columns}")));
    }
    let amp = (2.0 * len as f64).sqrt().recip();
    let entries = Array2::from_shape_simple_fn((len, num_columns), || {
        let bits: u8 = rng.random();
        let re = if bits & 1 == 0 { amp } else { -amp };
        let im = if bits & 2 == 0 { amp } else { -amp };
        C64::new(re, im)
    });
    Ok(PilotMatrix { entries })
}

/// Ground truth for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub active: bool,
    /// Embedded bit; only meaningful when the scenario uses EIB.
    pub eib_bit: bool,
    pub distance_km: f64,
    /// Large-scale fading as a linear power gain.
    pub beta: f64,
    /// `sqrt(beta) * g` with `g` unit-variance circular Gaussian.
    pub channel: Array1<C64>,
}

/// Samples a distance uniformly over the annulus `[min_radius, cell_radius]`.
pub fn sample_distance<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> f64 {
    let (r0, r1) = (cfg.min_radius_km, cfg.cell_radius_km);
    let u: f64 = rng.random();
    (r0 * r0 + u * (r1 * r1 - r0 * r0)).sqrt()
}

/// Draws the user population. The random draws per user do not depend on
/// whether EIB is enabled, so plain and EIB runs can share users.
pub fn gen_users<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<UserState> {
    (0..cfg.num_users)
        .map(|_| {
            let active = rng.random::<f64>() < cfg.activity_prob;
            let eib_bit = rng.random::<bool>();
            let distance_km = sample_distance(cfg, rng);
            let beta = path_loss_linear(distance_km);
            let scale = beta.sqrt();
            let channel = (0..cfg.num_antennas).map(|_| complex_gaussian(rng) * scale).collect();
            UserState { active, eib_bit, distance_km, beta, channel }
        })
        .collect()
}

/// Builds the effective channel matrix: row `n` is `alpha_n h_n^H`. With EIB,
/// user `n` owns rows `2n` and `2n + 1`, and only the row selected by its bit
/// can be nonzero.
pub fn encode(users: &[UserState], pilots: &PilotMatrix, eib: bool) -> Result<Array2<C64>> {
    let slots = if eib { 2 * users.len() } else { users.len() };
    if pilots.num_columns() != slots {
        return Err(Error::Dimension(format!(
            "{} pilot columns for {} users ({} slots)",
            pilots.num_columns(),
            users.len(),
            slots
        )));
    }
    let m = users.first().map_or(0, |u| u.channel.len());
    let mut x = Array2::zeros((slots, m));
    for (n, user) in users.iter().enumerate() {
        if !user.active {
            continue;
        }
        let row = if eib { 2 * n + usize::from(user.eib_bit) } else { n };
        x.row_mut(row).assign(&user.channel.mapv(|h| h.conj()));
    }
    Ok(x)
}

/// `Y = sqrt(rho) S X + Z` with `Z` i.i.d. CN(0, noise_var).
pub fn synthesize_rx<R: Rng + ?Sized>(
    pilots: &PilotMatrix,
    x: ArrayView2<'_, C64>,
    tx_power: f64,
    noise_var: f64,
    rng: &mut R,
) -> Result<Array2<C64>> {
    let s = pilots.entries();
    if s.ncols() != x.nrows() {
        return Err(Error::Dimension(format!(
            "pilots are {}x{} but channel matrix has {} rows",
            s.nrows(),
            s.ncols(),
            x.nrows()
        )));
    }
    let mut y = s.dot(&x) * C64::from(tx_power.sqrt());
    if noise_var > 0.0 {
        let sd = noise_var.sqrt();
        y.mapv_inplace(|v| v + complex_gaussian(rng) * sd);
    }
    Ok(y)
}

/// One generated trial: ground truth, pilots, channels and received signal.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub users: Vec<UserState>,
    pub pilots: PilotMatrix,
    pub x: Array2<C64>,
    pub y: Array2<C64>,
}

impl Scenario {
    /// Generates a trial from independent user, pilot and noise substreams.
    pub fn generate(cfg: &ScenarioConfig, stream: StreamId) -> Result<Self> {
        cfg.validate()?;
        let users = gen_users(cfg, &mut stream.rng(Purpose::Users));
        let pilots = gen_pilots(cfg.pilot_len, cfg.num_slots(), &mut stream.rng(Purpose::Pilots))?;
        let x = encode(&users, &pilots, cfg.eib_enabled)?;
        let y = synthesize_rx(&pilots, x.view(), cfg.tx_power(), cfg.noise_var(), &mut stream.rng(Purpose::Noise))?;
        Ok(Scenario { users, pilots, x, y })
    }

    /// Large-scale fading per slot; both slots of an EIB pair share their user's value.
    pub fn slot_betas(&self, eib: bool) -> Vec<f64> {
        let per_user = self.users.iter().map(|u| u.beta);
        if eib {
            per_user.flat_map(|b| [b, b]).collect()
        } else {
            per_user.collect()
        }
    }
}
