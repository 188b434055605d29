//! OFDM comparison arm and the overhead-aware spectral efficiency of both
//! schemes.
//!
//! DAM pays one guard interval of `2ñ_max` symbols per coherence block, while
//! OFDM pays a cyclic prefix of `ñ_max` on each of its
//! `n_OFDM = ⌊n_c / (K + ñ_max)⌋` symbols.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamforming::LinkBudget;
use crate::channel::MultipathChannel;
use crate::error::{Error, Result};
use crate::linalg::{axpy, norm_sqr};

/// Coherence-block framing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    bandwidth_hz: f64,
    coherence_time_s: f64,
    n_c: usize,
}

impl FrameConfig {
    /// `n_c = round(T_c · B)`.
    pub fn new(bandwidth_hz: f64, coherence_time_s: f64) -> Result<Self> {
        if !(bandwidth_hz > 0.0) || !bandwidth_hz.is_finite() {
            return Err(Error::invalid("bandwidth_hz", "must be positive"));
        }
        if !(coherence_time_s > 0.0) || !coherence_time_s.is_finite() {
            return Err(Error::invalid("coherence_time_s", "must be positive"));
        }
        let n_c = (coherence_time_s * bandwidth_hz).round() as usize;
        if n_c == 0 {
            return Err(Error::invalid(
                "coherence_time_s",
                "shorter than one symbol",
            ));
        }
        Ok(FrameConfig {
            bandwidth_hz,
            coherence_time_s,
            n_c,
        })
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn coherence_time_s(&self) -> f64 {
        self.coherence_time_s
    }

    pub fn symbol_period_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    /// Single-carrier symbols per coherence block.
    pub fn n_c(&self) -> usize {
        self.n_c
    }

    /// `2ñ_max / n_c`
    pub fn dam_guard_overhead(&self, max_delay_bound: usize) -> f64 {
        (2 * max_delay_bound) as f64 / self.n_c as f64
    }

    fn check_guard(&self, max_delay_bound: usize) -> Result<()> {
        if self.n_c <= 2 * max_delay_bound {
            return Err(Error::invalid(
                "n_c",
                format!(
                    "{} symbols cannot hold a guard of {}",
                    self.n_c,
                    2 * max_delay_bound
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    pub num_subcarriers: usize,
    /// Cyclic prefix length `ñ_max`, also the delay bound used for the DAM guard.
    pub cp_length: usize,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        OfdmConfig {
            num_subcarriers: 512,
            cp_length: 40,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_subcarriers == 0 {
            return Err(Error::invalid("num_subcarriers", "must be at least 1"));
        }
        if self.num_subcarriers <= self.cp_length {
            return Err(Error::invalid(
                "cp_length",
                "cyclic prefix must be shorter than the OFDM symbol",
            ));
        }
        Ok(())
    }

    /// OFDM symbols per coherence block, `⌊n_c / (K + ñ_max)⌋`.
    pub fn symbols_per_block(&self, frame: &FrameConfig) -> usize {
        frame.n_c / (self.num_subcarriers + self.cp_length)
    }

    /// `n_OFDM · ñ_max / n_c`
    pub fn cp_overhead(&self, frame: &FrameConfig) -> f64 {
        (self.symbols_per_block(frame) * self.cp_length) as f64 / frame.n_c as f64
    }
}

/// Per-subcarrier channels `h[k] = Σ_l h_l e^{−j2πk n_l/K}`, `k = 0…K−1`.
pub fn freq_channel(ch: &MultipathChannel, num_subcarriers: usize) -> Result<Vec<Vec<Complex64>>> {
    let k_count = num_subcarriers;
    if ch.max_delay() >= k_count {
        return Err(Error::invalid(
            "num_subcarriers",
            format!("max delay {} must be below K = {k_count}", ch.max_delay()),
        ));
    }
    let twiddle: Vec<Complex64> = (0..k_count)
        .map(|k| Complex64::from_polar(1.0, -TAU * k as f64 / k_count as f64))
        .collect();
    Ok((0..k_count)
        .map(|k| {
            let mut hk = vec![Complex64::new(0.0, 0.0); ch.num_antennas()];
            for p in ch.paths() {
                axpy(twiddle[(k * p.delay()) % k_count], p.gain_vector(), &mut hk);
            }
            hk
        })
        .collect())
}

/// Water-filling over parallel channels: maximizes `Σ log2(1 + p_k g_k / N)`
/// subject to `Σ p_k = P`.
///
/// Solved exactly: sort inverse levels `N/g_k` ascending and take the
/// largest active set whose water level stays above its worst member.
pub fn water_fill(gains: &[f64], total_power: f64, noise: f64) -> Result<Vec<f64>> {
    if !(total_power >= 0.0) || !total_power.is_finite() {
        return Err(Error::invalid("total_power", "must be non-negative"));
    }
    if !(noise > 0.0) || !noise.is_finite() {
        return Err(Error::invalid("noise", "must be positive"));
    }
    if gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::invalid("gains", "must be finite and non-negative"));
    }
    let mut order: Vec<usize> = (0..gains.len()).filter(|&k| gains[k] > 0.0).collect();
    if order.is_empty() {
        return Err(Error::AllZeroGains);
    }
    let inv = |k: usize| noise / gains[k];
    order.sort_by(|&a, &b| inv(a).total_cmp(&inv(b)));

    let mut level = 0.0;
    let mut active = 0;
    let mut prefix = 0.0;
    for (n, &k) in order.iter().enumerate() {
        prefix += inv(k);
        let candidate = (total_power + prefix) / (n + 1) as f64;
        if candidate > inv(k) {
            level = candidate;
            active = n + 1;
        } else {
            break;
        }
    }
    let mut powers = vec![0.0; gains.len()];
    for &k in &order[..active] {
        powers[k] = (level - inv(k)).max(0.0);
    }
    Ok(powers)
}

/// `Σ_k log2(1 + p_k g_k / N)`.
pub fn rate_sum(powers: &[f64], gains: &[f64], noise: f64) -> f64 {
    powers
        .iter()
        .zip(gains)
        .map(|(p, g)| (p * g / noise).ln_1p())
        .sum::<f64>()
        / std::f64::consts::LN_2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerAllocation {
    WaterFilling,
    Uniform,
}

/// Effective OFDM spectral efficiency with per-subcarrier MRT and
/// water-filling power allocation (bps/Hz).
pub fn ofdm_spectral_efficiency(
    ch: &MultipathChannel,
    frame: &FrameConfig,
    ofdm: &OfdmConfig,
    budget: &LinkBudget,
) -> Result<f64> {
    ofdm_spectral_efficiency_with(ch, frame, ofdm, budget, PowerAllocation::WaterFilling)
}

pub fn ofdm_spectral_efficiency_with(
    ch: &MultipathChannel,
    frame: &FrameConfig,
    ofdm: &OfdmConfig,
    budget: &LinkBudget,
    allocation: PowerAllocation,
) -> Result<f64> {
    ofdm.validate()?;
    if ch.max_delay() > ofdm.cp_length {
        return Err(Error::invalid(
            "cp_length",
            format!(
                "cyclic prefix {} does not cover delay {}",
                ofdm.cp_length,
                ch.max_delay()
            ),
        ));
    }
    let k_count = ofdm.num_subcarriers;
    let gains: Vec<f64> = freq_channel(ch, k_count)?
        .iter()
        .map(|hk| norm_sqr(hk))
        .collect();
    let noise = budget.noise_power() / k_count as f64;
    let powers = match allocation {
        PowerAllocation::WaterFilling => water_fill(&gains, budget.tx_power(), noise)?,
        PowerAllocation::Uniform => vec![budget.tx_power() / k_count as f64; k_count],
    };
    let n_c = frame.n_c();
    let cp_symbols = ofdm.symbols_per_block(frame) * ofdm.cp_length;
    if cp_symbols >= n_c {
        return Err(Error::invalid(
            "coherence_time_s",
            "block shorter than one OFDM symbol",
        ));
    }
    let efficiency = (n_c - cp_symbols) as f64 / n_c as f64;
    Ok(efficiency * rate_sum(&powers, &gains, noise) / k_count as f64)
}

/// Effective DAM spectral efficiency `((n_c − 2ñ_max)/n_c)·log2(1 + γ)`.
pub fn dam_spectral_efficiency(
    gamma: f64,
    frame: &FrameConfig,
    max_delay_bound: usize,
) -> Result<f64> {
    frame.check_guard(max_delay_bound)?;
    if !(gamma >= 0.0) {
        return Err(Error::invalid("gamma", "SINR must be non-negative"));
    }
    let n_c = frame.n_c();
    Ok((n_c - 2 * max_delay_bound) as f64 / n_c as f64 * (1.0 + gamma).log2())
}
