//! ISI-ZF, ISI-MRT and ISI-MMSE beamformers for delay alignment.
//!
//! All three use the full power budget and are phase-normalized so that
//! `h̄ᴴf̄` is real and non-negative.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::MultipathChannel;
use crate::error::{Error, Result};
use crate::linalg::{inner, norm, norm_sqr, orthonormal_basis, project_out, scale, Cholesky};
use crate::precoding::{DamPrecoder, EffectiveChannels, POWER_SLACK};

/// Transmit power `P` and receiver noise power `σ²`, both in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    tx_power_w: f64,
    noise_power_w: f64,
}

impl LinkBudget {
    pub fn new(tx_power_w: f64, noise_power_w: f64) -> Result<Self> {
        if !(tx_power_w > 0.0) || !tx_power_w.is_finite() {
            return Err(Error::invalid("tx_power", "must be positive and finite"));
        }
        if !(noise_power_w > 0.0) || !noise_power_w.is_finite() {
            return Err(Error::invalid("noise_power", "must be positive and finite"));
        }
        Ok(LinkBudget {
            tx_power_w,
            noise_power_w,
        })
    }

    pub fn from_dbm(tx_power_dbm: f64, noise_power_dbm: f64) -> Result<Self> {
        Self::new(dbm_to_watts(tx_power_dbm), dbm_to_watts(noise_power_dbm))
    }

    pub fn tx_power(&self) -> f64 {
        self.tx_power_w
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power_w
    }

    /// `P̄ = P/σ²`
    pub fn p_bar(&self) -> f64 {
        self.tx_power_w / self.noise_power_w
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Zf,
    Mrt,
    Mmse,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Zf, Scheme::Mrt, Scheme::Mmse];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Zf => "ZF",
            Scheme::Mrt => "MRT",
            Scheme::Mmse => "MMSE",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerResult {
    pub precoder: DamPrecoder,
    pub analytic_sinr: f64,
    pub scheme: Scheme,
}

impl BeamformerResult {
    pub fn to_record(&self) -> BeamformerRecord {
        BeamformerRecord {
            scheme: self.scheme,
            analytic_sinr: self.analytic_sinr,
            power_budget: self.precoder.power_budget(),
            comp_delays: self.precoder.comp_delays().to_vec(),
            beamformers: self
                .precoder
                .beamformers()
                .iter()
                .map(|f| f.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }
}

/// Fixture form of a [`BeamformerResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerRecord {
    pub scheme: Scheme,
    pub analytic_sinr: f64,
    pub power_budget: f64,
    pub comp_delays: Vec<usize>,
    pub beamformers: Vec<Vec<[f64; 2]>>,
}

impl BeamformerRecord {
    pub fn into_result(self) -> Result<BeamformerResult> {
        let beamformers = self
            .beamformers
            .into_iter()
            .map(|f| f.into_iter().map(|z| Complex64::new(z[0], z[1])).collect())
            .collect();
        Ok(BeamformerResult {
            precoder: DamPrecoder::new(beamformers, self.comp_delays, self.power_budget)?,
            analytic_sinr: self.analytic_sinr,
            scheme: self.scheme,
        })
    }
}

/// Runs the beamformer for `scheme`.
pub fn design(
    scheme: Scheme,
    ch: &MultipathChannel,
    budget: &LinkBudget,
) -> Result<BeamformerResult> {
    match scheme {
        Scheme::Zf => zf_beamformer(ch, budget),
        Scheme::Mrt => mrt_beamformer(ch, budget),
        Scheme::Mmse => mmse_beamformer(ch, budget),
    }
}

/// `Q_l h_l` for every path: the part of `h_l` orthogonal to all other paths.
///
/// Fails when `M < L` or when some `H_l` loses column rank.
pub fn zf_projections(ch: &MultipathChannel) -> Result<Vec<Vec<Complex64>>> {
    let m = ch.num_antennas();
    let l_count = ch.num_paths();
    if m < l_count {
        return Err(Error::InfeasibleZf(format!(
            "{m} antennas cannot null {l_count} paths"
        )));
    }
    let paths = ch.paths();
    (0..l_count)
        .map(|l| {
            let others: Vec<&[Complex64]> = paths
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != l)
                .map(|(_, p)| p.gain_vector())
                .collect();
            let (basis, rank) = orthonormal_basis(&others);
            if rank < others.len() {
                return Err(Error::InfeasibleZf(format!(
                    "interfering paths for path {l} have rank {rank} < {}",
                    others.len()
                )));
            }
            Ok(project_out(&basis, paths[l].gain_vector()))
        })
        .collect()
}

/// ISI-ZF: `f_l = √P·Q_l h_l / √(Σ_m ‖Q_m h_m‖²)`, SNR `P̄·Σ_l ‖Q_l h_l‖²`.
pub fn zf_beamformer(ch: &MultipathChannel, budget: &LinkBudget) -> Result<BeamformerResult> {
    let projected = zf_projections(ch)?;
    let total: f64 = projected.iter().map(|q| norm_sqr(q)).sum();
    if !(total > 0.0) {
        return Err(Error::InfeasibleZf("all projected paths vanish".into()));
    }
    let mut f_bar: Vec<Complex64> = projected.into_iter().flatten().collect();
    scale(
        Complex64::new((budget.tx_power() / total).sqrt(), 0.0),
        &mut f_bar,
    );
    let eff = EffectiveChannels::new(ch);
    normalize_phase(eff.h_bar(), &mut f_bar);
    Ok(BeamformerResult {
        precoder: DamPrecoder::from_stacked(ch, &f_bar, budget.tx_power())?,
        analytic_sinr: budget.p_bar() * total,
        scheme: Scheme::Zf,
    })
}

/// ISI-MRT: `f̄ = √P·h̄/‖h̄‖`, with residual ISI left in the SINR.
pub fn mrt_beamformer(ch: &MultipathChannel, budget: &LinkBudget) -> Result<BeamformerResult> {
    let eff = EffectiveChannels::new(ch);
    let h_norm = norm(eff.h_bar());
    if !(h_norm > 0.0) {
        return Err(Error::invalid("channel", "stacked channel is zero"));
    }
    let p = budget.tx_power();
    let interference: f64 = eff
        .delay_differences()
        .map(|i| (eff.g_bar_dot(i, eff.h_bar()) / h_norm).norm_sqr())
        .sum();
    let analytic_sinr = p * h_norm * h_norm / (p * interference + budget.noise_power());

    let mut f_bar = eff.h_bar().to_vec();
    scale(Complex64::new(p.sqrt() / h_norm, 0.0), &mut f_bar);
    Ok(BeamformerResult {
        precoder: DamPrecoder::from_stacked(ch, &f_bar, p)?,
        analytic_sinr,
        scheme: Scheme::Mrt,
    })
}

/// `C⁻¹h̄` and `h̄ᴴC⁻¹h̄` for `C = Σ_{i≠0} ḡ[i]ḡᴴ[i] + (σ²/P)·I`.
///
/// The interference part of `C` has rank at most the number of distinct
/// delay differences, so the solve goes through the Woodbury identity with a
/// Cholesky factorization of the small capacitance matrix `εI + GᴴG`, whose
/// entries come from the `L×L` Gram matrix of the paths.
pub fn mmse_solve(eff: &EffectiveChannels, budget: &LinkBudget) -> Result<(Vec<Complex64>, f64)> {
    let eps = budget.noise_power() / budget.tx_power();
    let m = eff.num_antennas();
    let l_count = eff.num_paths();

    let mut gram = vec![Complex64::new(0.0, 0.0); l_count * l_count];
    for a in 0..l_count {
        for b in a..l_count {
            let v = inner(eff.path(a), eff.path(b));
            gram[a * l_count + b] = v;
            gram[b * l_count + a] = v.conj();
        }
    }

    // Per group: source path for each block, or None.
    let groups: Vec<Vec<Option<usize>>> = eff
        .groups()
        .map(|(_, blocks)| {
            let mut src = vec![None; l_count];
            for &(block, s) in blocks {
                src[block] = Some(s);
            }
            src
        })
        .collect();
    let r = groups.len();

    let g_h: Vec<Complex64> = groups
        .iter()
        .map(|src| {
            src.iter()
                .enumerate()
                .filter_map(|(block, s)| s.map(|s| gram[s * l_count + block]))
                .sum()
        })
        .collect();

    let mut cap = vec![Complex64::new(0.0, 0.0); r * r];
    for a in 0..r {
        for b in a..r {
            let v: Complex64 = (0..l_count)
                .filter_map(|block| match (groups[a][block], groups[b][block]) {
                    (Some(sa), Some(sb)) => Some(gram[sa * l_count + sb]),
                    _ => None,
                })
                .sum();
            cap[a * r + b] = v;
            cap[b * r + a] = v.conj();
        }
        cap[a * r + a] += eps;
    }

    let y = if r > 0 {
        Cholesky::factor(&cap, r)?.solve(&g_h)
    } else {
        Vec::new()
    };

    let mut w = eff.h_bar().to_vec();
    for (src, ya) in groups.iter().zip(&y) {
        for (block, s) in src.iter().enumerate() {
            if let Some(s) = *s {
                let out = &mut w[block * m..(block + 1) * m];
                for (o, h) in out.iter_mut().zip(eff.path(s)) {
                    *o -= ya * h;
                }
            }
        }
    }
    scale(Complex64::new(1.0 / eps, 0.0), &mut w);
    let gamma = inner(eff.h_bar(), &w).re;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::NotPositiveDefinite {
            index: 0,
            pivot: gamma,
        });
    }
    Ok((w, gamma))
}

/// ISI-MMSE: `f̄ = √P·C⁻¹h̄/‖C⁻¹h̄‖`, SINR `h̄ᴴC⁻¹h̄`.
pub fn mmse_beamformer(ch: &MultipathChannel, budget: &LinkBudget) -> Result<BeamformerResult> {
    let eff = EffectiveChannels::new(ch);
    let (mut w, gamma) = mmse_solve(&eff, budget)?;
    let w_norm = norm(&w);
    if !(w_norm > 0.0) {
        return Err(Error::invalid("channel", "stacked channel is zero"));
    }
    scale(
        Complex64::new(budget.tx_power().sqrt() / w_norm, 0.0),
        &mut w,
    );
    normalize_phase(eff.h_bar(), &mut w);
    Ok(BeamformerResult {
        precoder: DamPrecoder::from_stacked(ch, &w, budget.tx_power())?,
        analytic_sinr: gamma,
        scheme: Scheme::Mmse,
    })
}

/// SINR of an arbitrary stacked beamformer after delay alignment:
///
/// ```text
/// |h̄ᴴf̄|² / (Σ_{i≠0} |ḡᴴ[i]f̄|² + σ²)
/// ```
pub fn sinr_of(f_bar: &[Complex64], ch: &MultipathChannel, budget: &LinkBudget) -> Result<f64> {
    let eff = EffectiveChannels::new(ch);
    sinr_with(f_bar, &eff, budget)
}

/// [`sinr_of`] against precomputed effective channels.
pub fn sinr_with(f_bar: &[Complex64], eff: &EffectiveChannels, budget: &LinkBudget) -> Result<f64> {
    if f_bar.len() != eff.h_bar().len() {
        return Err(Error::invalid("f_bar", "length must be M·L"));
    }
    let power = norm_sqr(f_bar);
    if power > budget.tx_power() * (1.0 + POWER_SLACK) {
        return Err(Error::PowerViolation {
            power,
            budget: budget.tx_power(),
        });
    }
    let signal = inner(eff.h_bar(), f_bar).norm_sqr();
    let isi: f64 = eff
        .delay_differences()
        .map(|i| eff.g_bar_dot(i, f_bar).norm_sqr())
        .sum();
    Ok(signal / (isi + budget.noise_power()))
}

/// Residual ISI power `Σ_{i≠0} |ḡᴴ[i]f̄|²` (watts at the receiver).
pub fn residual_isi(f_bar: &[Complex64], eff: &EffectiveChannels) -> f64 {
    eff.delay_differences()
        .map(|i| eff.g_bar_dot(i, f_bar).norm_sqr())
        .sum()
}

/// Rotates `f̄` so that `h̄ᴴf̄` is real and non-negative.
fn normalize_phase(h_bar: &[Complex64], f_bar: &mut [Complex64]) {
    let g = inner(h_bar, f_bar);
    if g.norm() > 0.0 {
        scale(g.conj() / g.norm(), f_bar);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel, ChannelParams};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit_budget() -> LinkBudget {
        LinkBudget::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn zf_single_path_is_matched_filter() {
        let h = vec![c(1.0, 1.0), c(0.5, -2.0), c(0.0, 0.3)];
        let ch = MultipathChannel::from_vectors(vec![(4, h.clone())]).unwrap();
        let budget = LinkBudget::new(2.0, 0.5).unwrap();
        let r = zf_beamformer(&ch, &budget).unwrap();
        let hn = norm(&h);
        for (f, hm) in r.precoder.beamformers()[0].iter().zip(&h) {
            assert!((f - hm * (2f64.sqrt() / hn)).norm() < 1e-14);
        }
        assert!((r.analytic_sinr - 4.0 * hn * hn).abs() < 1e-12 * r.analytic_sinr);
    }

    #[test]
    fn zf_orthogonal_paths_keep_full_gain() {
        let ch = MultipathChannel::from_vectors(vec![
            (0, vec![c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
            (2, vec![c(0.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]),
        ])
        .unwrap();
        let r = zf_beamformer(&ch, &unit_budget()).unwrap();
        assert!((r.analytic_sinr - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zf_two_by_two_hand_example() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let ch = MultipathChannel::from_vectors(vec![
            (0, vec![c(1.0, 0.0), c(0.0, 0.0)]),
            (1, vec![c(s, 0.0), c(s, 0.0)]),
        ])
        .unwrap();
        let q = zf_projections(&ch).unwrap();
        assert!((q[0][0] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((q[0][1] - c(-0.5, 0.0)).norm() < 1e-15);
        assert!((norm_sqr(&q[1]) - 0.5).abs() < 1e-15);
        let r = zf_beamformer(&ch, &unit_budget()).unwrap();
        assert!((r.analytic_sinr - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zf_rejects_underdetermined_and_rank_deficient() {
        let ch = sample_channel(
            1,
            &ChannelParams {
                num_antennas: 3,
                num_paths: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(matches!(
            zf_beamformer(&ch, &unit_budget()),
            Err(Error::InfeasibleZf(_))
        ));
        let h = vec![c(1.0, 0.0), c(0.0, 1.0), c(1.0, 1.0)];
        let h2: Vec<Complex64> = h.iter().map(|x| x * c(0.0, 3.0)).collect();
        let ch = MultipathChannel::from_vectors(vec![
            (0, h.clone()),
            (1, h2),
            (2, vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
        ])
        .unwrap();
        assert!(matches!(
            zf_beamformer(&ch, &unit_budget()),
            Err(Error::InfeasibleZf(_))
        ));
    }

    #[test]
    fn schemes_coincide_for_single_path() {
        let h = vec![c(0.3, 0.1), c(-1.0, 0.2)];
        let ch = MultipathChannel::from_vectors(vec![(2, h.clone())]).unwrap();
        let budget = LinkBudget::new(3.0, 0.7).unwrap();
        let expect = budget.p_bar() * norm_sqr(&h);
        for scheme in Scheme::ALL {
            let r = design(scheme, &ch, &budget).unwrap();
            assert!(
                (r.analytic_sinr - expect).abs() < 1e-12 * expect,
                "{scheme}"
            );
            assert!((r.precoder.transmit_power() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mrt_orthogonal_cross_products_have_no_isi() {
        let ch = MultipathChannel::from_vectors(vec![
            (0, vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
            (1, vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
            (3, vec![c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]),
        ])
        .unwrap();
        let r = mrt_beamformer(&ch, &unit_budget()).unwrap();
        assert!((r.analytic_sinr - 6.0).abs() < 1e-12);
    }

    #[test]
    fn mmse_direction_tends_to_mrt_when_noise_dominates() {
        let ch = sample_channel(
            8,
            &ChannelParams {
                num_antennas: 4,
                num_paths: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let scale_gain = ch.total_gain();
        let budget = LinkBudget::new(1.0, 1e8 * scale_gain).unwrap();
        let mmse = mmse_beamformer(&ch, &budget).unwrap().precoder.stacked();
        let mrt = mrt_beamformer(&ch, &budget).unwrap().precoder.stacked();
        let cos = inner(&mmse, &mrt).norm() / (norm(&mmse) * norm(&mrt));
        assert!(1.0 - cos < 1e-7, "1 - cos = {}", 1.0 - cos);
    }

    #[test]
    fn sinr_of_single_active_path_counts_cross_terms() {
        let h1 = vec![c(1.0, 0.0), c(0.5, 0.5)];
        let h2 = vec![c(0.2, -0.1), c(1.0, 0.0)];
        let h3 = vec![c(-0.4, 0.0), c(0.3, 0.9)];
        let ch =
            MultipathChannel::from_vectors(vec![(1, h1.clone()), (3, h2.clone()), (5, h3.clone())])
                .unwrap();
        let budget = LinkBudget::new(2.0, 0.1).unwrap();
        let n1 = norm(&h1);
        let f1: Vec<Complex64> = h1.iter().map(|x| x * (2f64.sqrt() / n1)).collect();
        let mut f_bar = f1.clone();
        f_bar.extend(vec![c(0.0, 0.0); 4]);
        // Only block 1 is active, so each ḡ[i] with a nonzero block 1 carries
        // exactly one cross term h_lᴴ f_1 at i = n_1 − n_l.
        let expect =
            2.0 * n1 * n1 / (inner(&h2, &f1).norm_sqr() + inner(&h3, &f1).norm_sqr() + 0.1);
        let got = sinr_of(&f_bar, &ch, &budget).unwrap();
        assert!((got - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn sinr_of_rejects_overpowered_beamformer() {
        let ch = MultipathChannel::from_vectors(vec![(0, vec![c(1.0, 0.0)])]).unwrap();
        assert!(matches!(
            sinr_of(&[c(1.1, 0.0)], &ch, &unit_budget()),
            Err(Error::PowerViolation { .. })
        ));
    }

    #[test]
    fn link_budget_validates() {
        assert!(LinkBudget::new(1.0, 0.0).is_err());
        assert!(LinkBudget::new(-1.0, 1.0).is_err());
        let b = LinkBudget::from_dbm(30.0, -85.0).unwrap();
        assert!((b.tx_power() - 1.0).abs() < 1e-15);
        assert!((10.0 * b.p_bar().log10() - 115.0).abs() < 1e-9);
    }

    #[test]
    fn record_round_trip() {
        let ch = sample_channel(
            2,
            &ChannelParams {
                num_antennas: 8,
                ..Default::default()
            },
        )
        .unwrap();
        let r = zf_beamformer(&ch, &unit_budget()).unwrap();
        let text = serde_json::to_string(&r.to_record()).unwrap();
        let back: BeamformerRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_result().unwrap(), r);
    }
}
