//! Fast self-check suite behind `dam-sim verify`.
//!
//! Each check recomputes a quantity by a second route (normal equations
//! instead of Gram-Schmidt, brute-force search instead of the closed form,
//! waveform simulation instead of the analytic SINR) and reports pass/fail.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::beamforming::{mmse_beamformer, mrt_beamformer, sinr_of, zf_beamformer, LinkBudget};
use crate::channel::{sample_channel, ChannelParams, MultipathChannel};
use crate::error::Result;
use crate::linalg::{inner, norm, norm_sqr, Cholesky};
use crate::link::{
    dam_waveform, propagate, simulate_dam_link, BlockLayout, Constellation, LinkSettings, PaprCcdf,
    SymbolStream,
};
use crate::ofdm::{rate_sum, water_fill, FrameConfig, OfdmConfig};
use crate::precoding::EffectiveChannels;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, body: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match body() {
        Ok((passed, detail)) => Check {
            name,
            passed,
            detail,
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn params(m: usize, l: usize) -> ChannelParams {
    ChannelParams {
        num_antennas: m,
        num_paths: l,
        ..Default::default()
    }
}

/// `‖(I − H(HᴴH)⁻¹Hᴴ)h‖²` through the normal equations.
pub fn projected_norm_normal_eq(others: &[&[Complex64]], h: &[Complex64]) -> Result<f64> {
    let k = others.len();
    if k == 0 {
        return Ok(norm_sqr(h));
    }
    let mut gram = vec![Complex64::new(0.0, 0.0); k * k];
    for i in 0..k {
        for j in 0..k {
            gram[i * k + j] = inner(others[i], others[j]);
        }
    }
    let rhs: Vec<Complex64> = others.iter().map(|c| inner(c, h)).collect();
    let coef = Cholesky::factor(&gram, k)?.solve(&rhs);
    let mut r = h.to_vec();
    for (c, col) in coef.iter().zip(others) {
        for (ri, x) in r.iter_mut().zip(col.iter()) {
            *ri -= c * x;
        }
    }
    Ok(norm_sqr(&r))
}

fn random_unit_power(rng: &mut ChaCha8Rng, len: usize, power: f64) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect();
    let s = power.sqrt() / norm(&v);
    v.iter_mut().for_each(|x| *x *= s);
    v
}

/// Runs every check. `quick` trims the Monte Carlo sizes.
pub fn run_all(quick: bool) -> Vec<Check> {
    let scale = if quick { 1 } else { 5 };
    let budget = LinkBudget::from_dbm(30.0, -85.0).expect("valid budget");
    vec![
        check("zf_cross_terms_vanish", || {
            let mut worst: f64 = 0.0;
            for seed in 0..20 * scale as u64 {
                let ch = sample_channel(seed, &params(16, 5))?;
                let r = zf_beamformer(&ch, &budget)?;
                for (l, p) in ch.paths().iter().enumerate() {
                    for (k, f) in r.precoder.beamformers().iter().enumerate() {
                        if k != l {
                            let x = inner(p.gain_vector(), f).norm()
                                / (norm(p.gain_vector()) * norm(f));
                            worst = worst.max(x);
                        }
                    }
                }
            }
            Ok((
                worst < 1e-10,
                format!("max normalized cross term {worst:.2e}"),
            ))
        }),
        check("zf_value_matches_normal_equations", || {
            let mut worst: f64 = 0.0;
            for seed in 0..20 * scale as u64 {
                let ch = sample_channel(seed + 1000, &params(8, 5))?;
                let r = zf_beamformer(&ch, &budget)?;
                let mut total = 0.0;
                for l in 0..ch.num_paths() {
                    let others: Vec<&[Complex64]> = ch
                        .paths()
                        .iter()
                        .enumerate()
                        .filter(|&(k, _)| k != l)
                        .map(|(_, p)| p.gain_vector())
                        .collect();
                    total += projected_norm_normal_eq(&others, ch.paths()[l].gain_vector())?;
                }
                let oracle = budget.p_bar() * total;
                worst = worst.max((r.analytic_sinr - oracle).abs() / oracle);
            }
            Ok((worst < 1e-9, format!("max relative gap {worst:.2e}")))
        }),
        check("zf_hand_example", || {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let ch = MultipathChannel::from_vectors(vec![
                (0, vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]),
                (1, vec![Complex64::new(s, 0.0), Complex64::new(s, 0.0)]),
            ])?;
            let g = zf_beamformer(&ch, &LinkBudget::new(1.0, 1.0)?)?.analytic_sinr;
            Ok(((g - 1.0).abs() < 1e-15, format!("gamma = {g}")))
        }),
        check("mmse_beats_random_search", || {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let mut worst = f64::INFINITY;
            for seed in 0..5 * scale as u64 {
                let ch = sample_channel(seed + 2000, &params(2, 3))?;
                let mmse = mmse_beamformer(&ch, &budget)?.analytic_sinr;
                let mrt = mrt_beamformer(&ch, &budget)?.analytic_sinr;
                let mut best = mrt;
                for _ in 0..2000 {
                    let f = random_unit_power(&mut rng, 6, budget.tx_power());
                    best = best.max(sinr_of(&f, &ch, &budget)?);
                }
                worst = worst.min(mmse / best);
            }
            Ok((
                worst >= 1.0 - 1e-9,
                format!("min gamma_MMSE / best other {worst:.6}"),
            ))
        }),
        check("mmse_closed_form_matches_sinr", || {
            let mut worst: f64 = 0.0;
            for seed in 0..10 * scale as u64 {
                let ch = sample_channel(seed + 3000, &params(4, 5))?;
                let r = mmse_beamformer(&ch, &budget)?;
                let direct = sinr_of(&r.precoder.stacked(), &ch, &budget)?;
                worst = worst.max((direct - r.analytic_sinr).abs() / r.analytic_sinr);
            }
            Ok((worst < 1e-9, format!("max relative gap {worst:.2e}")))
        }),
        check("effective_channels_symmetric", || {
            let mut ok = true;
            for seed in 0..10 {
                let ch = sample_channel(seed + 4000, &params(4, 6))?;
                let eff = EffectiveChannels::new(&ch);
                for (i, blocks) in eff.groups() {
                    for &(b, s) in blocks {
                        ok &= eff.blocks(-i).contains(&(s, b));
                    }
                    let dense: f64 = norm_sqr(&eff.g_bar(i));
                    let sparse: f64 = blocks.iter().map(|&(_, s)| norm_sqr(eff.path(s))).sum();
                    ok &= (dense - sparse).abs() <= 1e-12 * dense.max(1e-300);
                }
            }
            Ok((ok, "g[-i] mirrors g[i]".into()))
        }),
        check("water_filling_kkt", || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut worst_budget: f64 = 0.0;
            let mut worst_level: f64 = 0.0;
            let mut beats_uniform = true;
            for _ in 0..200 * scale {
                let k = rng.random_range(1..64);
                let gains: Vec<f64> = (0..k)
                    .map(|_| rng.random::<f64>() * 10f64.powi(rng.random_range(-3..3)))
                    .collect();
                let p = 10f64.powf(rng.random_range(-2.0..2.0));
                let noise = 10f64.powf(rng.random_range(-2.0..1.0));
                let w = water_fill(&gains, p, noise)?;
                worst_budget = worst_budget.max((w.iter().sum::<f64>() - p).abs() / p);
                let levels: Vec<f64> = w
                    .iter()
                    .zip(&gains)
                    .filter(|(pk, _)| **pk > 0.0)
                    .map(|(pk, g)| pk + noise / g)
                    .collect();
                let mu = levels[0];
                worst_level = worst_level.max(
                    levels
                        .iter()
                        .map(|l| (l - mu).abs() / mu)
                        .fold(0.0, f64::max),
                );
                let uniform = vec![p / k as f64; k];
                beats_uniform &=
                    rate_sum(&w, &gains, noise) >= rate_sum(&uniform, &gains, noise) - 1e-12;
            }
            Ok((
                worst_budget <= 1e-9 && worst_level <= 1e-8 && beats_uniform,
                format!("budget gap {worst_budget:.1e}, level spread {worst_level:.1e}"),
            ))
        }),
        check("overhead_arithmetic", || {
            let frame = FrameConfig::new(128e6, 1e-3)?;
            let ofdm = OfdmConfig::default();
            let n = ofdm.symbols_per_block(&frame);
            let dam = frame.dam_guard_overhead(ofdm.cp_length);
            let cp = ofdm.cp_overhead(&frame);
            Ok((
                n == 231 && dam == 0.000625 && cp == 0.0721875,
                format!("n_OFDM = {n}, guard {dam}, CP {cp}"),
            ))
        }),
        check("end_to_end_isi_free", || {
            let ch = sample_channel(11, &params(16, 5))?;
            let r = zf_beamformer(&ch, &budget)?;
            let settings = LinkSettings {
                symbols: 110_000,
                block_len: 16_384,
                constellation: Constellation::Qpsk,
            };
            let (_, _, m) = simulate_dam_link(&ch, &r.precoder, 80, 0.0, &settings, 3)?;
            let rel = m.residual_isi_power / m.signal_power;
            Ok((rel < 1e-18, format!("residual ISI / signal {rel:.1e}")))
        }),
        check("guard_blocks_do_not_leak", || {
            let ch = sample_channel(12, &params(8, 5))?;
            let r = mrt_beamformer(&ch, &budget)?;
            let guard = 2 * ch.delay_spread();
            let layout = BlockLayout::new(256 + guard, guard)?;
            let mut s = SymbolStream::generate(Constellation::Qpsk, 512, 4)
                .symbols()
                .to_vec();
            s[256..]
                .iter_mut()
                .for_each(|x| *x = Complex64::new(0.0, 0.0));
            let stream = SymbolStream::from_symbols(s, Constellation::Qpsk);
            let w = dam_waveform(&stream, &r.precoder, layout, 1.0)?;
            let y = propagate(&w, &ch, 0.0, 0)?;
            let start = layout.block_len + ch.min_delay();
            let leak: f64 = y[start..].iter().map(|v| v.norm_sqr()).sum();
            Ok((leak == 0.0, format!("energy after block boundary {leak:e}")))
        }),
        check("mrt_approaches_zf", || {
            let mut ratios = Vec::new();
            for seed in 0..20 * scale as u64 {
                let ch = sample_channel(seed + 5000, &params(128, 5))?;
                let zf = zf_beamformer(&ch, &budget)?.analytic_sinr;
                let mrt = mrt_beamformer(&ch, &budget)?.analytic_sinr;
                ratios.push((zf - mrt).abs() / zf);
            }
            ratios.sort_by(f64::total_cmp);
            let median = ratios[ratios.len() / 2];
            Ok((
                median < 0.05,
                format!("median |gZF - gMRT|/gZF = {median:.4} at M = 128"),
            ))
        }),
        check("constant_envelope_papr", || {
            let ch = MultipathChannel::from_vectors(vec![(0, vec![Complex64::new(1.0, 0.0); 2])])?;
            let r = mrt_beamformer(&ch, &LinkBudget::new(1.0, 1.0)?)?;
            let s = SymbolStream::generate(Constellation::Qpsk, 10_000, 1);
            let w = dam_waveform(&s, &r.precoder, BlockLayout::new(10_000, 0)?, 1.0)?;
            let peak = PaprCcdf::from_waveform(&w, 1, 1).max_db();
            Ok((peak.abs() < 1e-12, format!("peak PAPR {peak:.2e} dB")))
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        for c in run_all(true) {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn normal_equations_agree_with_hand_projection() {
        let a = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let h = [Complex64::new(3.0, 0.0), Complex64::new(0.0, 4.0)];
        assert!((projected_norm_normal_eq(&[&a], &h).unwrap() - 16.0).abs() < 1e-12);
        assert_eq!(projected_norm_normal_eq(&[], &h).unwrap(), 25.0);
    }
}
