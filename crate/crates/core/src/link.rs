//! Waveform-level link simulation.
//!
//! Builds the DAM transmit waveform `x[n] = Σ_l f_l s[n − κ_l]` block by block
//! with a zero guard between coherence blocks, runs it through the sparse FIR
//! channel `y[n] = Σ_l h_lᴴ x[n − n_l] + z[n]`, and measures what arrives at
//! the genie-synchronized receiver.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::MultipathChannel;
use crate::error::{Error, Result};
use crate::precoding::DamPrecoder;

/// Fewest steady-state symbols [`measure_sinr`] accepts.
pub const MIN_MEASUREMENT_SYMBOLS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    Qpsk,
    Qam16,
    Gaussian,
}

impl Constellation {
    fn draw<R: Rng>(self, rng: &mut R) -> Complex64 {
        match self {
            Constellation::Qpsk => {
                let a = std::f64::consts::FRAC_1_SQRT_2;
                let re = if rng.random::<bool>() { a } else { -a };
                let im = if rng.random::<bool>() { a } else { -a };
                Complex64::new(re, im)
            }
            Constellation::Qam16 => {
                const LEVELS: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];
                let s = 1.0 / 10f64.sqrt();
                Complex64::new(
                    LEVELS[rng.random_range(0..4)] * s,
                    LEVELS[rng.random_range(0..4)] * s,
                )
            }
            Constellation::Gaussian => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re * s, im * s)
            }
        }
    }
}

/// i.i.d. unit-power information symbols `s[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolStream {
    symbols: Vec<Complex64>,
    constellation: Constellation,
}

impl SymbolStream {
    pub fn generate(constellation: Constellation, len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let symbols = (0..len).map(|_| constellation.draw(&mut rng)).collect();
        SymbolStream {
            symbols,
            constellation,
        }
    }

    pub fn from_symbols(symbols: Vec<Complex64>, constellation: Constellation) -> Self {
        SymbolStream {
            symbols,
            constellation,
        }
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    pub fn constellation(&self) -> Constellation {
        self.constellation
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        self.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.symbols.len().max(1) as f64
    }
}

/// Multi-antenna baseband samples at rate `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    antennas: Vec<Vec<Complex64>>,
    sample_rate_hz: f64,
}

impl Waveform {
    pub fn new(antennas: Vec<Vec<Complex64>>, sample_rate_hz: f64) -> Result<Self> {
        let len = antennas.first().map(Vec::len).unwrap_or(0);
        if antennas.is_empty() || antennas.iter().any(|a| a.len() != len) {
            return Err(Error::invalid("antennas", "need equal-length streams"));
        }
        Ok(Waveform {
            antennas,
            sample_rate_hz,
        })
    }

    pub fn antennas(&self) -> &[Vec<Complex64>] {
        &self.antennas
    }

    pub fn num_antennas(&self) -> usize {
        self.antennas.len()
    }

    pub fn len(&self) -> usize {
        self.antennas[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// Time average of `‖x[n]‖²`.
    pub fn mean_power(&self) -> f64 {
        let total: f64 = self
            .antennas
            .iter()
            .flat_map(|a| a.iter())
            .map(|x| x.norm_sqr())
            .sum();
        total / self.len().max(1) as f64
    }

    /// Writes `<stem>.cf32` (little-endian interleaved `f32` I/Q, antenna after
    /// antenna) and a `<stem>.hdr` text sidecar.
    pub fn write_raw(&self, stem: &Path, seed: u64) -> Result<(PathBuf, PathBuf)> {
        let data_path = stem.with_extension("cf32");
        let hdr_path = stem.with_extension("hdr");
        let file = File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
        let mut w = BufWriter::new(file);
        for ant in &self.antennas {
            for x in ant {
                let z = Complex32::new(x.re as f32, x.im as f32);
                w.write_all(&z.re.to_le_bytes())
                    .and_then(|_| w.write_all(&z.im.to_le_bytes()))
                    .map_err(|e| Error::io(&data_path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(&data_path, e))?;
        let header = format!(
            "format=cf32_le\nlayout=antenna_major\nantennas={}\nsample_rate_hz={}\nlength={}\nseed={}\n",
            self.num_antennas(),
            self.sample_rate_hz,
            self.len(),
            seed
        );
        std::fs::write(&hdr_path, header).map_err(|e| Error::io(&hdr_path, e))?;
        Ok((data_path, hdr_path))
    }

    /// Reads back a dump written by [`Waveform::write_raw`]; returns the seed too.
    pub fn read_raw(stem: &Path) -> Result<(Self, u64)> {
        let hdr_path = stem.with_extension("hdr");
        let data_path = stem.with_extension("cf32");
        let hdr = File::open(&hdr_path).map_err(|e| Error::io(&hdr_path, e))?;
        let mut fields = std::collections::HashMap::new();
        for line in BufReader::new(hdr).lines() {
            let line = line.map_err(|e| Error::io(&hdr_path, e))?;
            if let Some((k, v)) = line.split_once('=') {
                fields.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Serde(format!("{}: missing `{k}`", hdr_path.display())))
        };
        let parse_err = |k: &str| Error::Serde(format!("{}: bad `{k}`", hdr_path.display()));
        let m: usize = get("antennas")?
            .parse()
            .map_err(|_| parse_err("antennas"))?;
        let len: usize = get("length")?.parse().map_err(|_| parse_err("length"))?;
        let rate: f64 = get("sample_rate_hz")?
            .parse()
            .map_err(|_| parse_err("sample_rate_hz"))?;
        let seed: u64 = get("seed")?.parse().map_err(|_| parse_err("seed"))?;

        let mut bytes = Vec::new();
        File::open(&data_path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(&data_path, e))?;
        if bytes.len() != m * len * 8 {
            return Err(Error::Serde(format!(
                "{}: expected {} bytes, found {}",
                data_path.display(),
                m * len * 8,
                bytes.len()
            )));
        }
        let samples: Vec<Complex64> = bytes
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        let antennas = samples
            .chunks(len.max(1))
            .take(m)
            .map(|c| c.to_vec())
            .collect();
        Ok((Waveform::new(antennas, rate)?, seed))
    }
}

/// Coherence-block framing of a DAM transmission: `block_len` samples per
/// block, the last `guard` of which carry no new symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub block_len: usize,
    pub guard: usize,
}

impl BlockLayout {
    pub fn new(block_len: usize, guard: usize) -> Result<Self> {
        if block_len <= guard {
            return Err(Error::invalid(
                "block_len",
                "must exceed the guard interval",
            ));
        }
        Ok(BlockLayout { block_len, guard })
    }

    pub fn data_per_block(&self) -> usize {
        self.block_len - self.guard
    }

    pub fn num_blocks(&self, symbols: usize) -> usize {
        symbols.div_ceil(self.data_per_block())
    }
}

fn check_guard(layout: &BlockLayout, precoder: &DamPrecoder) -> Result<()> {
    let spread = precoder.comp_delays().iter().copied().max().unwrap_or(0);
    if layout.guard < 2 * spread {
        return Err(Error::GuardTooSmall {
            guard: layout.guard,
            required: 2 * spread,
        });
    }
    Ok(())
}

/// One block of `x[n]` for `symbols` (at most `data_per_block` of them).
fn dam_block(
    symbols: &[Complex64],
    precoder: &DamPrecoder,
    block_len: usize,
) -> Vec<Vec<Complex64>> {
    let m_count = precoder.num_antennas();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); block_len]; m_count];
    for (f, &kappa) in precoder.beamformers().iter().zip(precoder.comp_delays()) {
        for (m, x) in out.iter_mut().enumerate() {
            let w = f[m];
            if w == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (xn, s) in x[kappa..kappa + symbols.len()].iter_mut().zip(symbols) {
                *xn += w * s;
            }
        }
    }
    out
}

/// DAM transmit waveform. Symbols are split into blocks of
/// `layout.data_per_block()`; each block occupies `layout.block_len` samples.
pub fn dam_waveform(
    stream: &SymbolStream,
    precoder: &DamPrecoder,
    layout: BlockLayout,
    sample_rate_hz: f64,
) -> Result<Waveform> {
    check_guard(&layout, precoder)?;
    let data = layout.data_per_block();
    let blocks = layout.num_blocks(stream.len());
    let m_count = precoder.num_antennas();
    let mut antennas = vec![Vec::with_capacity(blocks * layout.block_len); m_count];
    for chunk in stream.symbols().chunks(data) {
        for (ant, block) in antennas
            .iter_mut()
            .zip(dam_block(chunk, precoder, layout.block_len))
        {
            ant.extend(block);
        }
    }
    Waveform::new(antennas, sample_rate_hz)
}

/// Conventional single-carrier transmission `x[n] = f·s[n]`.
pub fn single_carrier_waveform(
    stream: &SymbolStream,
    f: &[Complex64],
    sample_rate_hz: f64,
) -> Result<Waveform> {
    let antennas = f
        .iter()
        .map(|w| stream.symbols().iter().map(|s| w * s).collect())
        .collect();
    Waveform::new(antennas, sample_rate_hz)
}

/// Noise-free sparse FIR output added into `out` starting at `offset`.
fn convolve_into(
    antennas: &[Vec<Complex64>],
    ch: &MultipathChannel,
    out: &mut [Complex64],
    offset: usize,
) {
    for p in ch.paths() {
        let base = offset + p.delay();
        for (x, h) in antennas.iter().zip(p.gain_vector()) {
            let hc = h.conj();
            if hc == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (y, xn) in out[base..base + x.len()].iter_mut().zip(x) {
                *y += hc * xn;
            }
        }
    }
}

/// Adds i.i.d. `CN(0, σ²)` samples.
pub fn add_noise(y: &mut [Complex64], sigma2: f64, seed: u64) {
    if sigma2 <= 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (sigma2 / 2.0).sqrt()).expect("finite std");
    for v in y.iter_mut() {
        *v += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
    }
}

/// `y[n] = Σ_l h_lᴴ x[n − n_l] + z[n]`, length `len(x) + n_max`.
pub fn propagate(
    wave: &Waveform,
    ch: &MultipathChannel,
    sigma2: f64,
    seed: u64,
) -> Result<Vec<Complex64>> {
    if wave.num_antennas() != ch.num_antennas() {
        return Err(Error::invalid(
            "waveform",
            "antenna count differs from the channel",
        ));
    }
    let mut y = vec![Complex64::new(0.0, 0.0); wave.len() + ch.max_delay()];
    convolve_into(wave.antennas(), ch, &mut y, 0);
    add_noise(&mut y, sigma2, seed);
    Ok(y)
}

/// Least-squares link measurement against the known symbols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrMeasurement {
    /// `ĝ = Σ y s* / Σ |s|²`
    pub gain: Complex64,
    pub signal_power: f64,
    pub interference_plus_noise: f64,
    /// Linear SINR; `0` when nothing was received.
    pub measured_sinr: f64,
    pub residual_isi_power: f64,
    pub evm: f64,
    pub samples: usize,
}

impl SinrMeasurement {
    pub fn sinr_db(&self) -> f64 {
        10.0 * self.measured_sinr.log10()
    }
}

/// Measures SINR on the steady-state part of every block.
///
/// Symbol `j` of block `b` is expected at `b·block_len + j + sync_delay`;
/// only `j ∈ [n_span, D − n_span)` is used so every interfering symbol is
/// from the same block. With `noise_power` known, the residual ISI is the
/// interference-plus-noise power minus `σ²`, clamped at zero.
pub fn measure_sinr(
    y: &[Complex64],
    stream: &SymbolStream,
    layout: BlockLayout,
    sync_delay: usize,
    delay_spread: usize,
    noise_power: Option<f64>,
) -> Result<SinrMeasurement> {
    let data = layout.data_per_block();
    let pairs = || {
        stream
            .symbols()
            .chunks(data)
            .enumerate()
            .flat_map(move |(b, chunk)| {
                let lo = delay_spread.min(chunk.len());
                let hi = chunk.len().saturating_sub(delay_spread).max(lo);
                (lo..hi).map(move |j| (b * layout.block_len + j + sync_delay, chunk[j]))
            })
            .filter(|&(n, _)| n < y.len())
            .map(|(n, s)| (y[n], s))
    };
    let samples = pairs().count();
    if samples < MIN_MEASUREMENT_SYMBOLS {
        return Err(Error::InsufficientSamples {
            got: samples,
            need: MIN_MEASUREMENT_SYMBOLS,
        });
    }
    let (cross, energy) = pairs().fold((Complex64::new(0.0, 0.0), 0.0), |(c, e), (yn, s)| {
        (c + yn * s.conj(), e + s.norm_sqr())
    });
    let gain = if energy > 0.0 {
        cross / energy
    } else {
        Complex64::new(0.0, 0.0)
    };
    let err: f64 = pairs().map(|(yn, s)| (yn - gain * s).norm_sqr()).sum();
    let n = samples as f64;
    let signal_power = gain.norm_sqr() * energy / n;
    let interference_plus_noise = err / n;
    let measured_sinr = if signal_power == 0.0 {
        0.0
    } else if interference_plus_noise == 0.0 {
        f64::INFINITY
    } else {
        signal_power / interference_plus_noise
    };
    let residual_isi_power = match noise_power {
        Some(s2) => (interference_plus_noise - s2).max(0.0),
        None => interference_plus_noise,
    };
    let evm = if signal_power > 0.0 {
        (interference_plus_noise / signal_power).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(SinrMeasurement {
        gain,
        signal_power,
        interference_plus_noise,
        measured_sinr,
        residual_isi_power,
        evm,
        samples,
    })
}

/// Settings for an end-to-end DAM link run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSettings {
    pub symbols: usize,
    pub block_len: usize,
    pub constellation: Constellation,
}

impl Default for LinkSettings {
    fn default() -> Self {
        LinkSettings {
            symbols: 200_000,
            block_len: 16_384,
            constellation: Constellation::Qpsk,
        }
    }
}

/// Transmits `settings.symbols` symbols through `ch` with `precoder` and
/// measures the result. The waveform is generated and propagated one block at
/// a time so memory stays at one block of `M` streams.
pub fn simulate_dam_link(
    ch: &MultipathChannel,
    precoder: &DamPrecoder,
    guard: usize,
    sigma2: f64,
    settings: &LinkSettings,
    seed: u64,
) -> Result<(SymbolStream, Vec<Complex64>, SinrMeasurement)> {
    let layout = BlockLayout::new(settings.block_len, guard)?;
    check_guard(&layout, precoder)?;
    if precoder.num_antennas() != ch.num_antennas()
        || precoder.beamformers().len() != ch.num_paths()
    {
        return Err(Error::invalid(
            "precoder",
            "shape does not match the channel",
        ));
    }
    let stream = SymbolStream::generate(settings.constellation, settings.symbols, seed);
    let blocks = layout.num_blocks(stream.len());
    let mut y = vec![Complex64::new(0.0, 0.0); blocks * layout.block_len + ch.max_delay()];
    for (b, chunk) in stream.symbols().chunks(layout.data_per_block()).enumerate() {
        let block = dam_block(chunk, precoder, layout.block_len);
        convolve_into(&block, ch, &mut y, b * layout.block_len);
    }
    add_noise(&mut y, sigma2, seed ^ 0x9E37_79B9_7F4A_7C15);
    let m = measure_sinr(
        &y,
        &stream,
        layout,
        ch.max_delay(),
        ch.delay_spread(),
        Some(sigma2),
    )?;
    Ok((stream, y, m))
}

/// Band-limited interpolation by zero-padding the spectrum.
pub fn oversample(samples: &[Complex64], factor: usize) -> Vec<Complex64> {
    let n = samples.len();
    if factor <= 1 || n == 0 {
        return samples.to_vec();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut freq = samples.to_vec();
    planner.plan_fft_forward(n).process(&mut freq);
    let big = n * factor;
    let mut padded = vec![Complex64::new(0.0, 0.0); big];
    let half = n / 2;
    padded[..n - half].copy_from_slice(&freq[..n - half]);
    padded[big - half..].copy_from_slice(&freq[n - half..]);
    if n.is_multiple_of(2) {
        // split the Nyquist bin between both edges
        let nyq = freq[n / 2] * 0.5;
        padded[n / 2] = nyq;
        padded[big - n / 2] = nyq;
    }
    planner.plan_fft_inverse(big).process(&mut padded);
    let s = 1.0 / n as f64;
    padded.iter().map(|x| x * s).collect()
}

/// Empirical PAPR distribution.
///
/// Each antenna stream is cut into windows of `window` samples; a window's
/// PAPR is its peak instantaneous power over that antenna's mean power.
#[derive(Debug, Clone, PartialEq)]
pub struct PaprCcdf {
    /// Per-window PAPR in dB, sorted descending.
    values_db: Vec<f64>,
}

impl PaprCcdf {
    pub fn from_waveform(wave: &Waveform, window: usize, oversample_factor: usize) -> Self {
        let window = window.max(1);
        let mut values_db = Vec::new();
        for ant in wave.antennas() {
            let upsampled;
            let x: &[Complex64] = if oversample_factor > 1 {
                upsampled = oversample(ant, oversample_factor);
                &upsampled
            } else {
                ant
            };
            let mean = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len().max(1) as f64;
            if !(mean > 0.0) {
                continue;
            }
            let w = window * oversample_factor.max(1);
            values_db.extend(x.chunks(w).map(|c| {
                let peak = c.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
                10.0 * (peak / mean).log10()
            }));
        }
        values_db.sort_by(|a, b| b.total_cmp(a));
        PaprCcdf { values_db }
    }

    pub fn len(&self) -> usize {
        self.values_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_db.is_empty()
    }

    pub fn max_db(&self) -> f64 {
        self.values_db.first().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// `Pr(PAPR > threshold_db)`.
    pub fn ccdf(&self, threshold_db: f64) -> f64 {
        if self.values_db.is_empty() {
            return 0.0;
        }
        let above = self.values_db.partition_point(|&v| v > threshold_db);
        above as f64 / self.values_db.len() as f64
    }

    /// PAPR level exceeded with probability `prob`.
    pub fn quantile_db(&self, prob: f64) -> f64 {
        if self.values_db.is_empty() {
            return f64::NEG_INFINITY;
        }
        let idx =
            ((prob * self.values_db.len() as f64).floor() as usize).min(self.values_db.len() - 1);
        self.values_db[idx]
    }

    pub fn table(&self, thresholds_db: &[f64]) -> Vec<(f64, f64)> {
        thresholds_db.iter().map(|&t| (t, self.ccdf(t))).collect()
    }
}

/// Single-antenna OFDM comparison waveform: i.i.d. unit-power subcarrier
/// symbols, unitary inverse DFT per OFDM symbol, cyclic prefix prepended.
pub fn ofdm_waveform(
    num_subcarriers: usize,
    cp_length: usize,
    num_symbols: usize,
    constellation: Constellation,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<Waveform> {
    if num_subcarriers == 0 || cp_length >= num_subcarriers {
        return Err(Error::invalid(
            "num_subcarriers",
            "need K > cp_length > = 0",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(num_subcarriers);
    let scale = 1.0 / (num_subcarriers as f64).sqrt();
    let mut out = Vec::with_capacity(num_symbols * (num_subcarriers + cp_length));
    let mut buf = vec![Complex64::new(0.0, 0.0); num_subcarriers];
    for _ in 0..num_symbols {
        for v in buf.iter_mut() {
            *v = constellation.draw(&mut rng);
        }
        ifft.process(&mut buf);
        for v in buf.iter_mut() {
            *v *= scale;
        }
        out.extend_from_slice(&buf[num_subcarriers - cp_length..]);
        out.extend_from_slice(&buf);
    }
    Waveform::new(vec![out], sample_rate_hz)
}

/// Measurement summary for one link run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkReport {
    pub measured_sinr_db: f64,
    pub residual_isi_power: f64,
    pub evm: f64,
    pub papr_ccdf: Vec<(f64, f64)>,
}

impl LinkReport {
    pub fn new(m: &SinrMeasurement, papr: &PaprCcdf, thresholds_db: &[f64]) -> Self {
        LinkReport {
            measured_sinr_db: m.sinr_db(),
            residual_isi_power: m.residual_isi_power,
            evm: m.evm,
            papr_ccdf: papr.table(thresholds_db),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamforming::{zf_beamformer, LinkBudget};
    use crate::channel::{sample_channel, ChannelParams};
    use crate::linalg::inner;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn constellations_have_unit_power() {
        for k in [
            Constellation::Qpsk,
            Constellation::Qam16,
            Constellation::Gaussian,
        ] {
            let s = SymbolStream::generate(k, 100_000, 5);
            assert!((s.mean_power() - 1.0).abs() < 0.01, "{k:?}");
        }
        let q = SymbolStream::generate(Constellation::Qpsk, 100, 1);
        assert!(q.symbols().iter().all(|s| (s.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn single_path_waveform_is_plain_beamforming() {
        let ch = MultipathChannel::from_vectors(vec![(3, vec![c(1.0, 0.0), c(0.0, 1.0)])]).unwrap();
        let f = vec![c(0.5, 0.0), c(0.0, -0.5)];
        let pre = DamPrecoder::for_channel(&ch, vec![f.clone()], 1.0).unwrap();
        let s = SymbolStream::generate(Constellation::Qpsk, 50, 2);
        let w = dam_waveform(&s, &pre, BlockLayout::new(60, 0).unwrap(), 1.0).unwrap();
        for (n, sym) in s.symbols().iter().enumerate() {
            assert_eq!(w.antennas()[0][n], f[0] * sym);
            assert_eq!(w.antennas()[1][n], f[1] * sym);
        }
    }

    #[test]
    fn constant_symbols_sum_all_beamformers() {
        let ch = MultipathChannel::from_vectors(vec![
            (1, vec![c(1.0, 0.0)]),
            (3, vec![c(0.5, 0.0)]),
            (5, vec![c(0.25, 0.0)]),
        ])
        .unwrap();
        let fs = vec![vec![c(0.1, 0.0)], vec![c(0.0, 0.2)], vec![c(-0.3, 0.1)]];
        let pre = DamPrecoder::for_channel(&ch, fs, 1.0).unwrap();
        let s = SymbolStream::from_symbols(vec![c(1.0, 0.0); 40], Constellation::Qpsk);
        let w = dam_waveform(&s, &pre, BlockLayout::new(48, 8).unwrap(), 1.0).unwrap();
        let expect = c(0.1, 0.0) + c(0.0, 0.2) + c(-0.3, 0.1);
        for n in 4..40 {
            assert!((w.antennas()[0][n] - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn guard_must_cover_twice_the_spread() {
        let ch =
            MultipathChannel::from_vectors(vec![(0, vec![c(1.0, 0.0)]), (6, vec![c(1.0, 0.0)])])
                .unwrap();
        let pre = DamPrecoder::for_channel(&ch, vec![vec![c(0.1, 0.0)]; 2], 1.0).unwrap();
        let s = SymbolStream::generate(Constellation::Qpsk, 10, 0);
        assert!(matches!(
            dam_waveform(&s, &pre, BlockLayout::new(30, 11).unwrap(), 1.0),
            Err(Error::GuardTooSmall {
                guard: 11,
                required: 12
            })
        ));
        assert!(BlockLayout::new(10, 10).is_err());
    }

    #[test]
    fn single_tap_propagation_is_inner_product() {
        let h = vec![c(1.0, 2.0), c(-0.5, 0.0)];
        let ch = MultipathChannel::from_vectors(vec![(0, h.clone())]).unwrap();
        let s = SymbolStream::generate(Constellation::Gaussian, 20, 1);
        let f = vec![c(0.3, 0.1), c(0.2, -0.4)];
        let w = single_carrier_waveform(&s, &f, 1.0).unwrap();
        let y = propagate(&w, &ch, 0.0, 0).unwrap();
        for (n, yn) in y.iter().take(20).enumerate() {
            let x = [w.antennas()[0][n], w.antennas()[1][n]];
            assert!((yn - inner(&h, &x)).norm() < 1e-15);
        }
    }

    #[test]
    fn propagation_is_linear() {
        let ch = sample_channel(
            3,
            &ChannelParams {
                num_antennas: 4,
                ..Default::default()
            },
        )
        .unwrap();
        let mk = |seed| {
            let s = SymbolStream::generate(Constellation::Gaussian, 64, seed);
            single_carrier_waveform(
                &s,
                &[c(1.0, 0.0), c(0.0, 1.0), c(0.5, 0.5), c(-1.0, 0.0)],
                1.0,
            )
            .unwrap()
        };
        let (w1, w2) = (mk(1), mk(2));
        let (a, b) = (c(0.7, -0.2), c(-1.5, 0.3));
        let combo = Waveform::new(
            w1.antennas()
                .iter()
                .zip(w2.antennas())
                .map(|(x1, x2)| x1.iter().zip(x2).map(|(u, v)| a * u + b * v).collect())
                .collect(),
            1.0,
        )
        .unwrap();
        let y1 = propagate(&w1, &ch, 0.0, 0).unwrap();
        let y2 = propagate(&w2, &ch, 0.0, 0).unwrap();
        let y = propagate(&combo, &ch, 0.0, 0).unwrap();
        for n in 0..y.len() {
            assert!((y[n] - (a * y1[n] + b * y2[n])).norm() < 1e-12 * (1.0 + y[n].norm()));
        }
    }

    #[test]
    fn zf_noise_free_is_isi_free() {
        let ch = sample_channel(
            21,
            &ChannelParams {
                num_antennas: 16,
                ..Default::default()
            },
        )
        .unwrap();
        let budget = LinkBudget::new(1.0, 1e-3).unwrap();
        let zf = zf_beamformer(&ch, &budget).unwrap();
        let settings = LinkSettings {
            symbols: 120_000,
            block_len: 8192,
            constellation: Constellation::Qpsk,
        };
        let (_, _, m) = simulate_dam_link(&ch, &zf.precoder, 80, 0.0, &settings, 4).unwrap();
        assert!(m.residual_isi_power <= 1e-18 * m.signal_power);
        let g: Complex64 = ch
            .paths()
            .iter()
            .zip(zf.precoder.beamformers())
            .map(|(p, f)| inner(p.gain_vector(), f))
            .sum();
        assert!((m.gain - g).norm() < 1e-12 * g.norm());
    }

    #[test]
    fn zero_precoder_reads_minus_infinity() {
        let ch =
            MultipathChannel::from_vectors(vec![(0, vec![c(1.0, 0.0)]), (2, vec![c(0.5, 0.0)])])
                .unwrap();
        let pre = DamPrecoder::for_channel(&ch, vec![vec![c(0.0, 0.0)]; 2], 1.0).unwrap();
        let settings = LinkSettings {
            symbols: 110_000,
            block_len: 4096,
            constellation: Constellation::Qpsk,
        };
        let (_, _, m) = simulate_dam_link(&ch, &pre, 4, 0.0, &settings, 9).unwrap();
        assert_eq!(m.measured_sinr, 0.0);
        assert_eq!(m.sinr_db(), f64::NEG_INFINITY);
        let (_, _, noisy) = simulate_dam_link(&ch, &pre, 4, 1.0, &settings, 9).unwrap();
        assert!(noisy.measured_sinr < 1e-4);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let s = SymbolStream::generate(Constellation::Qpsk, 1000, 0);
        let y = vec![c(0.0, 0.0); 2000];
        assert!(matches!(
            measure_sinr(&y, &s, BlockLayout::new(1000, 0).unwrap(), 0, 0, None),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn constant_envelope_has_zero_papr() {
        let ch = MultipathChannel::from_vectors(vec![(0, vec![c(1.0, 0.0), c(0.0, 1.0)])]).unwrap();
        let pre = DamPrecoder::for_channel(&ch, vec![vec![c(0.6, 0.0), c(0.0, 0.8)]], 1.0).unwrap();
        let s = SymbolStream::generate(Constellation::Qpsk, 5000, 3);
        let w = dam_waveform(&s, &pre, BlockLayout::new(5000, 0).unwrap(), 1.0).unwrap();
        let papr = PaprCcdf::from_waveform(&w, 1, 1);
        assert!(papr.max_db().abs() < 1e-12);
        assert_eq!(papr.ccdf(0.01), 0.0);
    }

    #[test]
    fn ccdf_is_non_increasing() {
        let w = ofdm_waveform(64, 8, 200, Constellation::Qpsk, 1.0, 1).unwrap();
        let papr = PaprCcdf::from_waveform(&w, 1, 1);
        let table = papr.table(&[0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert!(table.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!((w.mean_power() - 1.0).abs() < 0.05);
    }

    #[test]
    fn ofdm_papr_follows_gaussian_envelope() {
        // K = 512 outputs are close to i.i.d. CN(0, 1), so Pr(|x|² > t) = e^{-t}
        let w = ofdm_waveform(512, 40, 2000, Constellation::Qpsk, 1.0, 7).unwrap();
        let t = 10f64.powf(0.8);
        let per_sample = PaprCcdf::from_waveform(&w, 1, 1).ccdf(8.0);
        assert!((per_sample / (-t).exp() - 1.0).abs() < 0.15, "{per_sample}");
        let per_symbol = PaprCcdf::from_waveform(&w, 552, 1).ccdf(8.0);
        let expect = 1.0 - (1.0 - (-t).exp()).powi(512);
        assert!(
            (per_symbol - expect).abs() < 0.03,
            "{per_symbol} vs {expect}"
        );
    }

    #[test]
    fn oversampling_preserves_original_samples() {
        let s = SymbolStream::generate(Constellation::Gaussian, 257, 4);
        let up = oversample(s.symbols(), 4);
        assert_eq!(up.len(), 4 * 257);
        for (n, x) in s.symbols().iter().enumerate() {
            assert!((up[4 * n] - x).norm() < 1e-10);
        }
    }

    #[test]
    fn raw_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let w = ofdm_waveform(16, 4, 3, Constellation::Qpsk, 128e6, 1).unwrap();
        let two = Waveform::new(
            vec![w.antennas()[0].clone(), w.antennas()[0].clone()],
            128e6,
        )
        .unwrap();
        let stem = dir.path().join("dump");
        two.write_raw(&stem, 77).unwrap();
        let (back, seed) = Waveform::read_raw(&stem).unwrap();
        assert_eq!(seed, 77);
        assert_eq!(back.num_antennas(), 2);
        assert_eq!(back.len(), two.len());
        for (a, b) in back.antennas()[1].iter().zip(&two.antennas()[1]) {
            assert!((a - b).norm() < 1e-6);
        }
    }
}
