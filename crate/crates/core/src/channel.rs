//! Sparse multipath MISO channels.
//!
//! A channel is a set of temporally resolvable paths. Path `l` arrives with an
//! integer delay `n_l` (in symbol periods `1/B`) and carries a spatial
//! signature `h_l ∈ C^M` built from one or more same-delay sub-paths:
//!
//! ```text
//! h_l = α_l · Σ_i (1/√μ_l)·e^{jφ_li} · a(θ_li)
//! ```
//!
//! where `a(θ)` is the steering vector of a uniform linear array.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;

/// Uniform linear array with `num_antennas` elements spaced by
/// `element_spacing` wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UlaGeometry {
    num_antennas: usize,
    element_spacing: f64,
}

impl UlaGeometry {
    pub fn new(num_antennas: usize, element_spacing: f64) -> Result<Self> {
        if num_antennas == 0 {
            return Err(Error::invalid("num_antennas", "must be at least 1"));
        }
        if !(element_spacing > 0.0) || !element_spacing.is_finite() {
            return Err(Error::invalid("element_spacing", "must be positive"));
        }
        Ok(UlaGeometry {
            num_antennas,
            element_spacing,
        })
    }

    /// Half-wavelength array.
    pub fn half_wavelength(num_antennas: usize) -> Result<Self> {
        Self::new(num_antennas, 0.5)
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn element_spacing(&self) -> f64 {
        self.element_spacing
    }
}

/// Steering vector of the array toward `aod_deg`, phase-referenced at element 0.
pub fn array_response(geometry: &UlaGeometry, aod_deg: f64) -> Result<Vec<Complex64>> {
    if !(aod_deg.abs() < 90.0) {
        return Err(Error::EndfireAngle(aod_deg));
    }
    let step = TAU * geometry.element_spacing * aod_deg.to_radians().sin();
    Ok((0..geometry.num_antennas)
        .map(|m| Complex64::from_polar(1.0, step * m as f64))
        .collect())
}

/// One same-delay component of a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubPath {
    pub aod_deg: f64,
    pub phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPath {
    delay: usize,
    alpha: Complex64,
    sub_paths: Vec<SubPath>,
    gain_vector: Vec<Complex64>,
}

impl ChannelPath {
    /// Builds `h_l` from its sub-path decomposition.
    pub fn from_sub_paths(
        geometry: &UlaGeometry,
        delay: usize,
        alpha: Complex64,
        sub_paths: Vec<SubPath>,
    ) -> Result<Self> {
        if sub_paths.is_empty() {
            return Err(Error::invalid(
                "sub_paths",
                "a path needs at least one sub-path",
            ));
        }
        for sp in &sub_paths {
            if !(0.0..TAU).contains(&sp.phase_rad) {
                return Err(Error::invalid(
                    "phase_rad",
                    format!("{} not in [0, 2π)", sp.phase_rad),
                ));
            }
        }
        let gain_vector = synthesize(geometry, alpha, &sub_paths)?;
        Ok(ChannelPath {
            delay,
            alpha,
            sub_paths,
            gain_vector,
        })
    }

    /// A path given directly by its spatial signature, with no sub-path
    /// decomposition. Useful for hand-built test channels.
    pub fn from_vector(delay: usize, gain_vector: Vec<Complex64>) -> Self {
        ChannelPath {
            delay,
            alpha: Complex64::new(1.0, 0.0),
            sub_paths: Vec::new(),
            gain_vector,
        }
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn alpha(&self) -> Complex64 {
        self.alpha
    }

    pub fn sub_paths(&self) -> &[SubPath] {
        &self.sub_paths
    }

    pub fn gain_vector(&self) -> &[Complex64] {
        &self.gain_vector
    }

    /// Relative error between the stored `h_l` and the one re-synthesized from
    /// `α_l` and the sub-paths. Zero for paths built from a raw vector.
    pub fn reconstruction_error(&self, geometry: &UlaGeometry) -> f64 {
        if self.sub_paths.is_empty() {
            return 0.0;
        }
        let rebuilt = match synthesize(geometry, self.alpha, &self.sub_paths) {
            Ok(v) => v,
            Err(_) => return f64::INFINITY,
        };
        let diff: f64 = rebuilt
            .iter()
            .zip(&self.gain_vector)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        diff / norm(&self.gain_vector).max(f64::MIN_POSITIVE)
    }
}

fn synthesize(
    geometry: &UlaGeometry,
    alpha: Complex64,
    sub_paths: &[SubPath],
) -> Result<Vec<Complex64>> {
    let amp = 1.0 / (sub_paths.len() as f64).sqrt();
    let mut h = vec![Complex64::new(0.0, 0.0); geometry.num_antennas];
    for sp in sub_paths {
        let coeff = alpha * Complex64::from_polar(amp, sp.phase_rad);
        for (hm, am) in h.iter_mut().zip(array_response(geometry, sp.aod_deg)?) {
            *hm += coeff * am;
        }
    }
    Ok(h)
}

/// A MISO channel: `hᴴ[n] = Σ_l h_lᴴ δ[n − n_l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathChannel {
    geometry: UlaGeometry,
    paths: Vec<ChannelPath>,
}

impl MultipathChannel {
    pub fn new(geometry: UlaGeometry, paths: Vec<ChannelPath>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::invalid("paths", "a channel needs at least one path"));
        }
        let mut delays: Vec<usize> = paths.iter().map(|p| p.delay).collect();
        delays.sort_unstable();
        if delays.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(
                "paths",
                "path delays must be pairwise distinct",
            ));
        }
        if let Some(p) = paths
            .iter()
            .find(|p| p.gain_vector.len() != geometry.num_antennas)
        {
            return Err(Error::invalid(
                "gain_vector",
                format!(
                    "length {} does not match {} antennas",
                    p.gain_vector.len(),
                    geometry.num_antennas
                ),
            ));
        }
        Ok(MultipathChannel { geometry, paths })
    }

    /// Convenience constructor from `(delay, h_l)` pairs.
    pub fn from_vectors(delays_and_vectors: Vec<(usize, Vec<Complex64>)>) -> Result<Self> {
        let m = delays_and_vectors
            .first()
            .map(|(_, h)| h.len())
            .ok_or_else(|| Error::invalid("paths", "a channel needs at least one path"))?;
        let geometry = UlaGeometry::half_wavelength(m)?;
        let paths = delays_and_vectors
            .into_iter()
            .map(|(d, h)| ChannelPath::from_vector(d, h))
            .collect();
        Self::new(geometry, paths)
    }

    pub fn geometry(&self) -> &UlaGeometry {
        &self.geometry
    }

    pub fn num_antennas(&self) -> usize {
        self.geometry.num_antennas
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn paths(&self) -> &[ChannelPath] {
        &self.paths
    }

    pub fn delays(&self) -> Vec<usize> {
        self.paths.iter().map(|p| p.delay).collect()
    }

    pub fn min_delay(&self) -> usize {
        self.paths.iter().map(|p| p.delay).min().unwrap_or(0)
    }

    pub fn max_delay(&self) -> usize {
        self.paths.iter().map(|p| p.delay).max().unwrap_or(0)
    }

    pub fn delay_spread(&self) -> usize {
        self.max_delay() - self.min_delay()
    }

    /// `Σ_l ‖h_l‖²`
    pub fn total_gain(&self) -> f64 {
        self.paths
            .iter()
            .map(|p| crate::linalg::norm_sqr(&p.gain_vector))
            .sum()
    }

    /// Tap at delay `n`: `h_l` if some path has `n_l = n`, else the zero vector.
    pub fn impulse_response(&self, n: i64) -> Vec<Complex64> {
        self.paths
            .iter()
            .find(|p| p.delay as i64 == n)
            .map(|p| p.gain_vector.clone())
            .unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); self.geometry.num_antennas])
    }

    pub fn to_record(&self) -> ChannelRecord {
        ChannelRecord {
            num_antennas: self.geometry.num_antennas,
            element_spacing: self.geometry.element_spacing,
            paths: self
                .paths
                .iter()
                .map(|p| PathRecord {
                    delay: p.delay,
                    alpha: [p.alpha.re, p.alpha.im],
                    sub_paths: p.sub_paths.clone(),
                    gain_vector: p
                        .sub_paths
                        .is_empty()
                        .then(|| p.gain_vector.iter().map(|z| [z.re, z.im]).collect()),
                })
                .collect(),
        }
    }

    pub fn from_record(record: &ChannelRecord) -> Result<Self> {
        let geometry = UlaGeometry::new(record.num_antennas, record.element_spacing)?;
        let paths = record
            .paths
            .iter()
            .map(|p| match &p.gain_vector {
                Some(v) if p.sub_paths.is_empty() => Ok(ChannelPath::from_vector(
                    p.delay,
                    v.iter().map(|z| Complex64::new(z[0], z[1])).collect(),
                )),
                _ => ChannelPath::from_sub_paths(
                    &geometry,
                    p.delay,
                    Complex64::new(p.alpha[0], p.alpha[1]),
                    p.sub_paths.clone(),
                ),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(geometry, paths)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.to_record()).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: ChannelRecord =
            serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        Self::from_record(&record)
    }
}

/// Text fixture form of a channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub num_antennas: usize,
    pub element_spacing: f64,
    pub paths: Vec<PathRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub delay: usize,
    pub alpha: [f64; 2],
    #[serde(default)]
    pub sub_paths: Vec<SubPath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_vector: Option<Vec<[f64; 2]>>,
}

/// Statistics of the per-path complex gains `α_l`.
///
/// Both variants give `α_l = √g_l · e^{jψ_l}` with `ψ_l` uniform and
/// `Σ_l g_l = G` per realization, so `E[Σ_l ‖h_l‖²] = M·G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainModel {
    /// `g_l ∝ exp(−n_l·T_s/τ_decay)`.
    ExponentialPdp { tau_decay_s: f64, mean_gain_db: f64 },
    /// Equal power on every path.
    Equal { mean_gain_db: f64 },
}

impl Default for GainModel {
    fn default() -> Self {
        GainModel::ExponentialPdp {
            tau_decay_s: 5.0 / 128e6,
            mean_gain_db: -119.0,
        }
    }
}

impl GainModel {
    pub fn mean_gain(&self) -> f64 {
        let db = match self {
            GainModel::ExponentialPdp { mean_gain_db, .. } | GainModel::Equal { mean_gain_db } => {
                *mean_gain_db
            }
        };
        10f64.powf(db / 10.0)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            GainModel::ExponentialPdp {
                tau_decay_s,
                mean_gain_db,
            } => {
                if !(tau_decay_s > 0.0) {
                    return Err(Error::invalid("tau_decay_s", "must be positive"));
                }
                if !mean_gain_db.is_finite() {
                    return Err(Error::invalid("mean_gain_db", "must be finite"));
                }
            }
            GainModel::Equal { mean_gain_db } => {
                if !mean_gain_db.is_finite() {
                    return Err(Error::invalid("mean_gain_db", "must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Per-path powers `g_l` for the given delays.
    pub fn path_powers(&self, delays: &[usize], symbol_period_s: f64) -> Vec<f64> {
        let weights: Vec<f64> = match *self {
            GainModel::ExponentialPdp { tau_decay_s, .. } => delays
                .iter()
                .map(|&n| (-(n as f64) * symbol_period_s / tau_decay_s).exp())
                .collect(),
            GainModel::Equal { .. } => vec![1.0; delays.len()],
        };
        let total: f64 = weights.iter().sum();
        let g = self.mean_gain();
        weights.iter().map(|w| g * w / total).collect()
    }
}

/// Parameters for drawing random channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub num_antennas: usize,
    pub element_spacing: f64,
    pub num_paths: usize,
    pub bandwidth_hz: f64,
    pub tau_max_s: f64,
    pub mu_max: usize,
    pub aod_min_deg: f64,
    pub aod_max_deg: f64,
    pub gain_model: GainModel,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            num_antennas: 128,
            element_spacing: 0.5,
            num_paths: 5,
            bandwidth_hz: 128e6,
            tau_max_s: 312.5e-9,
            mu_max: 3,
            aod_min_deg: -60.0,
            aod_max_deg: 60.0,
            gain_model: GainModel::default(),
        }
    }
}

impl ChannelParams {
    /// Number of integer delay bins `{0, …, round(τ_max·B)}`.
    pub fn delay_bins(&self) -> usize {
        (self.tau_max_s * self.bandwidth_hz).round() as usize + 1
    }

    pub fn symbol_period_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn validate(&self) -> Result<()> {
        UlaGeometry::new(self.num_antennas, self.element_spacing)?;
        if self.num_paths == 0 {
            return Err(Error::invalid("num_paths", "must be at least 1"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::invalid("bandwidth_hz", "must be positive"));
        }
        if !(self.tau_max_s >= 0.0) {
            return Err(Error::invalid("tau_max_s", "must be non-negative"));
        }
        if self.mu_max == 0 {
            return Err(Error::invalid("mu_max", "must be at least 1"));
        }
        if !(self.aod_min_deg > -90.0 && self.aod_max_deg < 90.0)
            || self.aod_min_deg > self.aod_max_deg
        {
            return Err(Error::invalid(
                "aod_interval",
                format!(
                    "[{}, {}] must be ordered and inside (-90, 90)",
                    self.aod_min_deg, self.aod_max_deg
                ),
            ));
        }
        self.gain_model.validate()?;
        let available = self.delay_bins();
        if self.num_paths > available {
            return Err(Error::NotEnoughDelays {
                requested: self.num_paths,
                available,
            });
        }
        Ok(())
    }
}

/// Draws a channel realization. Paths are returned sorted by delay.
pub fn sample_channel(seed: u64, params: &ChannelParams) -> Result<MultipathChannel> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geometry = UlaGeometry::new(params.num_antennas, params.element_spacing)?;

    let mut delays = index::sample(&mut rng, params.delay_bins(), params.num_paths).into_vec();
    delays.sort_unstable();
    let powers = params
        .gain_model
        .path_powers(&delays, params.symbol_period_s());

    let paths = delays
        .iter()
        .zip(&powers)
        .map(|(&delay, &g)| {
            let mu = rng.random_range(1..=params.mu_max);
            let sub_paths = (0..mu)
                .map(|_| SubPath {
                    aod_deg: rng.random_range(params.aod_min_deg..=params.aod_max_deg),
                    phase_rad: rng.random_range(0.0..TAU),
                })
                .collect();
            let psi = rng.random_range(0.0..2.0 * PI);
            let alpha = Complex64::from_polar(g.sqrt(), psi);
            ChannelPath::from_sub_paths(&geometry, delay, alpha, sub_paths)
        })
        .collect::<Result<Vec<_>>>()?;
    MultipathChannel::new(geometry, paths)
}
