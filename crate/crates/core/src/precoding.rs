//! Delay pre-compensation and the delay-difference effective channels.
//!
//! With per-path beamformers `f_l` and pre-delays `κ_l = n_max − n_l`, the
//! transmit signal `x[n] = Σ_l f_l s[n − κ_l]` makes every path's own
//! contribution land at the common delay `n_max`. What is left is residual
//! ISI at offsets `i = n_{l'} − n_l ≠ 0`, which [`EffectiveChannels`] groups
//! by offset.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::channel::MultipathChannel;
use crate::error::{Error, Result};
use crate::linalg::{inner, norm_sqr};

/// Relative slack allowed on the transmit power constraint.
pub const POWER_SLACK: f64 = 1e-9;

/// Pre-compensation delays `κ_l = n_max − n_l`, in path order.
pub fn comp_delays(ch: &MultipathChannel) -> Vec<usize> {
    let n_max = ch.max_delay();
    ch.paths().iter().map(|p| n_max - p.delay()).collect()
}

/// Per-path beamformers and pre-delays.
#[derive(Debug, Clone, PartialEq)]
pub struct DamPrecoder {
    beamformers: Vec<Vec<Complex64>>,
    comp_delays: Vec<usize>,
    power_budget: f64,
}

impl DamPrecoder {
    pub fn new(
        beamformers: Vec<Vec<Complex64>>,
        comp_delays: Vec<usize>,
        power_budget: f64,
    ) -> Result<Self> {
        if beamformers.is_empty() || beamformers.len() != comp_delays.len() {
            return Err(Error::invalid(
                "beamformers",
                "need one beamformer per pre-compensation delay",
            ));
        }
        let m = beamformers[0].len();
        if m == 0 || beamformers.iter().any(|f| f.len() != m) {
            return Err(Error::invalid(
                "beamformers",
                "all beamformers need the same length",
            ));
        }
        let mut sorted = comp_delays.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(
                "comp_delays",
                "delays must be pairwise distinct",
            ));
        }
        if !(power_budget >= 0.0) {
            return Err(Error::invalid("power_budget", "must be non-negative"));
        }
        let pre = DamPrecoder {
            beamformers,
            comp_delays,
            power_budget,
        };
        let power = pre.transmit_power();
        if power > power_budget * (1.0 + POWER_SLACK) {
            return Err(Error::PowerViolation {
                power,
                budget: power_budget,
            });
        }
        Ok(pre)
    }

    /// Binds beamformers to `ch`, deriving the pre-delays from its path delays.
    pub fn for_channel(
        ch: &MultipathChannel,
        beamformers: Vec<Vec<Complex64>>,
        power_budget: f64,
    ) -> Result<Self> {
        Self::new(beamformers, comp_delays(ch), power_budget)
    }

    /// Splits a stacked `f̄` into `L` blocks of `M`.
    pub fn from_stacked(
        ch: &MultipathChannel,
        f_bar: &[Complex64],
        power_budget: f64,
    ) -> Result<Self> {
        let m = ch.num_antennas();
        if f_bar.len() != m * ch.num_paths() {
            return Err(Error::invalid("f_bar", "length must be M·L"));
        }
        let blocks = f_bar.chunks(m).map(|c| c.to_vec()).collect();
        Self::for_channel(ch, blocks, power_budget)
    }

    pub fn beamformers(&self) -> &[Vec<Complex64>] {
        &self.beamformers
    }

    pub fn comp_delays(&self) -> &[usize] {
        &self.comp_delays
    }

    pub fn power_budget(&self) -> f64 {
        self.power_budget
    }

    pub fn num_antennas(&self) -> usize {
        self.beamformers[0].len()
    }

    /// `f̄ = [f_1ᵀ, …, f_Lᵀ]ᵀ`
    pub fn stacked(&self) -> Vec<Complex64> {
        self.beamformers.iter().flatten().copied().collect()
    }

    /// `Σ_l ‖f_l‖²`, which is `E‖x[n]‖²` for i.i.d. unit-power symbols.
    pub fn transmit_power(&self) -> f64 {
        self.beamformers.iter().map(|f| norm_sqr(f)).sum()
    }
}

/// Stacked channel `h̄` and the sparse family `ḡ[i]`, `i ∈ {±1, …, ±n_span}`.
///
/// Block `l'` of `ḡ[i]` is `h_m` for the unique path `m ≠ l'` with
/// `n_{l'} − n_m = i`, and zero otherwise. Only the nonzero blocks are kept,
/// as `(block l', source path m)` pairs.
#[derive(Debug, Clone)]
pub struct EffectiveChannels {
    num_antennas: usize,
    h_bar: Vec<Complex64>,
    groups: BTreeMap<i64, Vec<(usize, usize)>>,
}

impl EffectiveChannels {
    pub fn new(ch: &MultipathChannel) -> Self {
        let delays = ch.delays();
        let mut groups: BTreeMap<i64, Vec<(usize, usize)>> = BTreeMap::new();
        for (block, &nb) in delays.iter().enumerate() {
            for (src, &ns) in delays.iter().enumerate() {
                if block == src {
                    continue;
                }
                let i = nb as i64 - ns as i64;
                let entry = groups.entry(i).or_default();
                assert!(
                    entry.iter().all(|&(b, _)| b != block),
                    "block {block} of ḡ[{i}] has two sources; delays must be distinct"
                );
                entry.push((block, src));
            }
        }
        let h_bar = ch
            .paths()
            .iter()
            .flat_map(|p| p.gain_vector().iter().copied())
            .collect();
        EffectiveChannels {
            num_antennas: ch.num_antennas(),
            h_bar,
            groups,
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_paths(&self) -> usize {
        self.h_bar.len() / self.num_antennas
    }

    pub fn h_bar(&self) -> &[Complex64] {
        &self.h_bar
    }

    /// `h_l` as a slice of `h̄`.
    pub fn path(&self, l: usize) -> &[Complex64] {
        &self.h_bar[l * self.num_antennas..(l + 1) * self.num_antennas]
    }

    /// Delay differences with at least one nonzero block, ascending.
    pub fn delay_differences(&self) -> impl Iterator<Item = i64> + '_ {
        self.groups.keys().copied()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// `(block, source path)` pairs of `ḡ[i]`; empty when `ḡ[i] = 0`.
    pub fn blocks(&self, i: i64) -> &[(usize, usize)] {
        self.groups.get(&i).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn groups(&self) -> impl Iterator<Item = (i64, &[(usize, usize)])> {
        self.groups.iter().map(|(&i, v)| (i, v.as_slice()))
    }

    pub fn nonzero_block_count(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    /// Dense `ḡ[i]` of length `M·L`.
    pub fn g_bar(&self, i: i64) -> Vec<Complex64> {
        let m = self.num_antennas;
        let mut g = vec![Complex64::new(0.0, 0.0); self.h_bar.len()];
        for &(block, src) in self.blocks(i) {
            g[block * m..(block + 1) * m].copy_from_slice(self.path(src));
        }
        g
    }

    /// `ḡᴴ[i] v` for a stacked vector `v`, touching only nonzero blocks.
    pub fn g_bar_dot(&self, i: i64, v: &[Complex64]) -> Complex64 {
        let m = self.num_antennas;
        self.blocks(i)
            .iter()
            .map(|&(block, src)| inner(self.path(src), &v[block * m..(block + 1) * m]))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel, ChannelParams};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn fig3_channel() -> MultipathChannel {
        MultipathChannel::from_vectors(vec![
            (1, vec![c(1.0, 0.0), c(0.0, 0.0)]),
            (3, vec![c(0.0, 1.0), c(1.0, 0.0)]),
            (5, vec![c(2.0, 0.0), c(0.0, -1.0)]),
        ])
        .unwrap()
    }

    #[test]
    fn comp_delays_align_paths() {
        assert_eq!(comp_delays(&fig3_channel()), vec![4, 2, 0]);
        let single = MultipathChannel::from_vectors(vec![(7, vec![c(1.0, 0.0)])]).unwrap();
        assert_eq!(comp_delays(&single), vec![0]);
        let wide =
            MultipathChannel::from_vectors(vec![(0, vec![c(1.0, 0.0)]), (40, vec![c(0.5, 0.0)])])
                .unwrap();
        assert_eq!(comp_delays(&wide), vec![40, 0]);
    }

    #[test]
    fn fig3_effective_channels() {
        let ch = fig3_channel();
        let eff = EffectiveChannels::new(&ch);
        let h = |l: usize| ch.paths()[l].gain_vector().to_vec();
        let g = eff.g_bar(-2);
        assert_eq!(&g[0..2], h(1).as_slice());
        assert_eq!(&g[2..4], h(2).as_slice());
        assert_eq!(&g[4..6], &[c(0.0, 0.0); 2]);
        let g = eff.g_bar(-4);
        assert_eq!(&g[0..2], h(2).as_slice());
        assert_eq!(eff.nonzero_block_count(), 6);
        assert_eq!(
            eff.delay_differences().collect::<Vec<_>>(),
            vec![-4, -2, 2, 4]
        );
        assert!(eff.blocks(0).is_empty());
        assert!(eff.blocks(5).is_empty());
    }

    #[test]
    fn single_path_has_no_interference_groups() {
        let ch = MultipathChannel::from_vectors(vec![(3, vec![c(1.0, 0.0)])]).unwrap();
        assert_eq!(EffectiveChannels::new(&ch).num_groups(), 0);
    }

    #[test]
    fn g_bar_dot_matches_dense_product() {
        let ch = sample_channel(
            4,
            &ChannelParams {
                num_antennas: 6,
                ..Default::default()
            },
        )
        .unwrap();
        let eff = EffectiveChannels::new(&ch);
        let v: Vec<Complex64> = (0..eff.h_bar().len())
            .map(|k| c((k as f64).sin(), (k as f64 * 0.7).cos()))
            .collect();
        for i in eff.delay_differences() {
            let dense = inner(&eff.g_bar(i), &v);
            assert!((dense - eff.g_bar_dot(i, &v)).norm() < 1e-12 * (1.0 + dense.norm()));
        }
    }

    #[test]
    fn precoder_power_and_validation() {
        let p: f64 = 2.0;
        let f1 = vec![c(p.sqrt(), 0.0), c(0.0, 0.0)];
        let zero = vec![c(0.0, 0.0); 2];
        let pre = DamPrecoder::for_channel(
            &fig3_channel(),
            vec![f1.clone(), zero.clone(), zero.clone()],
            p,
        )
        .unwrap();
        assert!((pre.transmit_power() - p).abs() < 1e-15);
        assert_eq!(pre.stacked().len(), 6);

        let over = vec![c(2.0, 0.0), c(0.0, 0.0)];
        assert!(matches!(
            DamPrecoder::for_channel(&fig3_channel(), vec![over, zero.clone(), zero.clone()], p),
            Err(Error::PowerViolation { .. })
        ));
        assert!(DamPrecoder::new(vec![f1.clone(), zero.clone()], vec![1, 1], p).is_err());
        assert!(DamPrecoder::new(vec![f1, zero], vec![1], p).is_err());
    }
}
