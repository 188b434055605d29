//! Configuration-driven Monte Carlo sweeps of spectral efficiency versus the
//! antenna count or the number of resolvable paths.

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beamforming::{design, LinkBudget, Scheme};
use crate::channel::{sample_channel, ChannelParams, GainModel, MultipathChannel};
use crate::error::{Error, Result};
use crate::linalg::compensated_sum;
use crate::link::{
    dam_waveform, ofdm_waveform, simulate_dam_link, BlockLayout, Constellation, LinkSettings,
    PaprCcdf, SymbolStream,
};
use crate::ofdm::{dam_spectral_efficiency, ofdm_spectral_efficiency, FrameConfig, OfdmConfig};
use crate::plot;

pub const CSV_HEADER: [&str; 8] = [
    "sweep_var",
    "value",
    "scheme",
    "mean_se_bps_hz",
    "stderr_se",
    "trials",
    "overhead_fraction",
    "infeasible_zf_count",
];

/// One curve of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "DAM-ZF")]
    DamZf,
    #[serde(rename = "DAM-MRT")]
    DamMrt,
    #[serde(rename = "DAM-MMSE")]
    DamMmse,
    #[serde(rename = "OFDM-WF")]
    OfdmWf,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::DamZf, Arm::DamMrt, Arm::DamMmse, Arm::OfdmWf];

    pub fn dam_scheme(self) -> Option<Scheme> {
        match self {
            Arm::DamZf => Some(Scheme::Zf),
            Arm::DamMrt => Some(Scheme::Mrt),
            Arm::DamMmse => Some(Scheme::Mmse),
            Arm::OfdmWf => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Arm::DamZf => "DAM-ZF",
            Arm::DamMrt => "DAM-MRT",
            Arm::DamMmse => "DAM-MMSE",
            Arm::OfdmWf => "OFDM-WF",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    Antennas,
    Paths,
}

impl SweepVariable {
    pub fn column(self) -> &'static str {
        match self {
            SweepVariable::Antennas => "M",
            SweepVariable::Paths => "L",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub values: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub schemes: Vec<Arm>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            variable: SweepVariable::Antennas,
            values: vec![32, 64, 128, 256],
            trials: 500,
            base_seed: 2022,
            schemes: Arm::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkBudgetSection {
    pub tx_power_dbm: f64,
    pub noise_power_dbm: f64,
}

impl Default for LinkBudgetSection {
    fn default() -> Self {
        LinkBudgetSection {
            tx_power_dbm: 30.0,
            noise_power_dbm: -85.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSection {
    pub bandwidth_hz: f64,
    pub coherence_time_s: f64,
    /// Recorded in the manifest only; nothing in the model depends on it.
    pub carrier_hz: f64,
}

impl Default for FrameSection {
    fn default() -> Self {
        FrameSection {
            bandwidth_hz: 128e6,
            coherence_time_s: 1e-3,
            carrier_hz: 28e9,
        }
    }
}

/// Channel parameters; the swept dimension overrides `num_antennas` or
/// `num_paths`, and the bandwidth comes from `[frame]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub num_antennas: usize,
    pub num_paths: usize,
    pub element_spacing: f64,
    pub tau_max_s: f64,
    pub mu_max: usize,
    pub aod_min_deg: f64,
    pub aod_max_deg: f64,
    pub gain_model: GainModel,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let p = ChannelParams::default();
        ChannelSection {
            num_antennas: p.num_antennas,
            num_paths: p.num_paths,
            element_spacing: p.element_spacing,
            tau_max_s: p.tau_max_s,
            mu_max: p.mu_max,
            aod_min_deg: p.aod_min_deg,
            aod_max_deg: p.aod_max_deg,
            gain_model: p.gain_model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkLevelSection {
    pub enabled: bool,
    /// Channels per sweep point that also get a waveform-level run.
    pub channels_per_point: usize,
    pub link: LinkSettings,
    /// Samples in each PAPR waveform, pooled over antennas.
    pub papr_samples: usize,
    pub papr_window: usize,
    pub papr_oversample: usize,
    pub papr_thresholds_db: Vec<f64>,
    pub dump_waveform: bool,
}

impl Default for LinkLevelSection {
    fn default() -> Self {
        LinkLevelSection {
            enabled: false,
            channels_per_point: 1,
            link: LinkSettings::default(),
            papr_samples: 1_000_000,
            papr_window: 1,
            papr_oversample: 1,
            papr_thresholds_db: (0..=24).map(|k| k as f64 * 0.5).collect(),
            dump_waveform: false,
        }
    }
}

/// A full sweep description. Every field has a default, so an empty file is
/// a valid config for the M sweep.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sweep: SweepSection,
    pub link_budget: LinkBudgetSection,
    pub frame: FrameSection,
    pub ofdm: OfdmConfig,
    pub channel: ChannelSection,
    pub link_level: LinkLevelSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {}", path.display(), e)]))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn link_budget(&self) -> Result<LinkBudget> {
        LinkBudget::from_dbm(
            self.link_budget.tx_power_dbm,
            self.link_budget.noise_power_dbm,
        )
    }

    pub fn frame(&self) -> Result<FrameConfig> {
        FrameConfig::new(self.frame.bandwidth_hz, self.frame.coherence_time_s)
    }

    /// Channel parameters at one sweep value.
    pub fn channel_params(&self, value: usize) -> ChannelParams {
        let c = &self.channel;
        let mut p = ChannelParams {
            num_antennas: c.num_antennas,
            element_spacing: c.element_spacing,
            num_paths: c.num_paths,
            bandwidth_hz: self.frame.bandwidth_hz,
            tau_max_s: c.tau_max_s,
            mu_max: c.mu_max,
            aod_min_deg: c.aod_min_deg,
            aod_max_deg: c.aod_max_deg,
            gain_model: c.gain_model,
        };
        match self.sweep.variable {
            SweepVariable::Antennas => p.num_antennas = value,
            SweepVariable::Paths => p.num_paths = value,
        }
        p
    }

    /// Checks every section and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut push = |field: &str, e: String| problems.push(format!("{field}: {e}"));
        if self.sweep.trials == 0 {
            push("sweep.trials", "must be at least 1".into());
        }
        if self.sweep.values.is_empty() {
            push("sweep.values", "need at least one sweep point".into());
        }
        let mut seen = Vec::new();
        for a in &self.sweep.schemes {
            if seen.contains(a) {
                push("sweep.schemes", format!("{a} listed twice"));
            }
            seen.push(*a);
        }
        if let Err(e) = self.link_budget() {
            push("link_budget", e.to_string());
        }
        let frame = match self.frame() {
            Ok(f) => Some(f),
            Err(e) => {
                push("frame", e.to_string());
                None
            }
        };
        if let Err(e) = self.ofdm.validate() {
            push("ofdm", e.to_string());
        }
        if let Some(frame) = frame {
            if frame.n_c() <= 2 * self.ofdm.cp_length {
                push(
                    "frame.coherence_time_s",
                    "block cannot hold the DAM guard".into(),
                );
            }
            if self.ofdm.symbols_per_block(&frame) == 0 {
                push(
                    "frame.coherence_time_s",
                    "block shorter than one OFDM symbol".into(),
                );
            }
        }
        for &v in &self.sweep.values {
            let p = self.channel_params(v);
            if let Err(e) = p.validate() {
                push("channel", format!("at sweep value {v}: {e}"));
            } else if p.delay_bins() - 1 > self.ofdm.cp_length {
                push(
                    "ofdm.cp_length",
                    format!(
                        "{} does not cover delays up to {}",
                        self.ofdm.cp_length,
                        p.delay_bins() - 1
                    ),
                );
            }
        }
        let ll = &self.link_level;
        if ll.enabled {
            if ll.link.block_len <= 2 * self.ofdm.cp_length {
                push(
                    "link_level.link.block_len",
                    "must exceed the guard interval".into(),
                );
            }
            if ll.papr_window == 0 {
                push("link_level.papr_window", "must be at least 1".into());
            }
            if ll.papr_oversample == 0 {
                push("link_level.papr_oversample", "must be at least 1".into());
            }
        }
        problems.dedup();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// SHA-256 of the canonical JSON rendering, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Seed for trial `trial` at sweep point `point`.
pub fn trial_seed(base_seed: u64, point: usize, trial: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(base_seed) ^ point as u64) ^ trial as u64)
}

/// What one channel realization produced. `None` marks a skipped arm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub se: Vec<Option<f64>>,
    /// Analytic SINR per arm (DAM arms only).
    pub sinr: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub mean_se: f64,
    pub stderr_se: f64,
    pub trials: usize,
    pub overhead_fraction: f64,
    pub infeasible_zf_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub value: usize,
    pub arms: Vec<ArmSummary>,
    pub outcomes: Vec<TrialOutcome>,
}

impl PointResult {
    pub fn arm(&self, arm: Arm) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

/// One waveform-level check in link-level mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkRow {
    pub value: usize,
    pub trial: usize,
    pub scheme: Arm,
    pub analytic_sinr_db: f64,
    pub measured_sinr_db: f64,
    pub residual_isi_power: f64,
    pub evm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaprComparison {
    pub dam: PaprCcdf,
    pub ofdm: PaprCcdf,
    pub thresholds_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variable: SweepVariable,
    pub schemes: Vec<Arm>,
    pub points: Vec<PointResult>,
    pub trials: usize,
    pub base_seed: u64,
    pub config_hash: String,
    pub link_rows: Vec<LinkRow>,
    pub papr: Option<PaprComparison>,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, (ss / (n - 1) as f64 / n as f64).sqrt())
}

fn run_trial(
    ch: &MultipathChannel,
    schemes: &[Arm],
    budget: &LinkBudget,
    frame: &FrameConfig,
    ofdm: &OfdmConfig,
    seed: u64,
) -> Result<TrialOutcome> {
    let mut se = Vec::with_capacity(schemes.len());
    let mut sinr = Vec::with_capacity(schemes.len());
    for &arm in schemes {
        match arm.dam_scheme() {
            Some(scheme) => match design(scheme, ch, budget) {
                Ok(r) => {
                    se.push(Some(dam_spectral_efficiency(
                        r.analytic_sinr,
                        frame,
                        ofdm.cp_length,
                    )?));
                    sinr.push(Some(r.analytic_sinr));
                }
                Err(Error::InfeasibleZf(_)) => {
                    se.push(None);
                    sinr.push(None);
                }
                Err(e) => return Err(e),
            },
            None => {
                se.push(Some(ofdm_spectral_efficiency(ch, frame, ofdm, budget)?));
                sinr.push(None);
            }
        }
    }
    Ok(TrialOutcome { seed, se, sinr })
}

/// Runs every (point, trial) pair on the rayon pool. Each trial draws one
/// channel that all arms share.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let budget = cfg.link_budget()?;
    let frame = cfg.frame()?;
    let ofdm = cfg.ofdm;
    let schemes = cfg.sweep.schemes.clone();
    let trials = cfg.sweep.trials;

    let jobs: Vec<(usize, usize)> = (0..cfg.sweep.values.len())
        .flat_map(|p| (0..trials).map(move |t| (p, t)))
        .collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(p, t)| {
            let seed = trial_seed(cfg.sweep.base_seed, p, t);
            let ch = sample_channel(seed, &cfg.channel_params(cfg.sweep.values[p]))?;
            run_trial(&ch, &schemes, &budget, &frame, &ofdm, seed)
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(cfg.sweep.values.len());
    for (p, chunk) in outcomes.chunks(trials).enumerate() {
        let arms = schemes
            .iter()
            .enumerate()
            .map(|(k, &arm)| {
                let values: Vec<f64> = chunk.iter().filter_map(|o| o.se[k]).collect();
                let (mean_se, stderr_se) = mean_and_stderr(&values);
                let overhead_fraction = match arm {
                    Arm::OfdmWf => ofdm.cp_overhead(&frame),
                    _ => frame.dam_guard_overhead(ofdm.cp_length),
                };
                ArmSummary {
                    arm,
                    mean_se,
                    stderr_se,
                    trials: values.len(),
                    overhead_fraction,
                    infeasible_zf_count: chunk.len() - values.len(),
                }
            })
            .collect();
        points.push(PointResult {
            value: cfg.sweep.values[p],
            arms,
            outcomes: chunk.to_vec(),
        });
    }

    let (link_rows, papr) = if cfg.link_level.enabled {
        (
            link_level_rows(cfg, &budget)?,
            Some(papr_comparison(cfg, 0)?),
        )
    } else {
        (Vec::new(), None)
    };

    Ok(SweepResult {
        variable: cfg.sweep.variable,
        schemes,
        points,
        trials,
        base_seed: cfg.sweep.base_seed,
        config_hash: cfg.hash(),
        link_rows,
        papr,
    })
}

fn link_level_rows(cfg: &ExperimentConfig, budget: &LinkBudget) -> Result<Vec<LinkRow>> {
    let guard = 2 * cfg.ofdm.cp_length;
    let per_point = cfg.link_level.channels_per_point.min(cfg.sweep.trials);
    let jobs: Vec<(usize, usize, Arm)> = (0..cfg.sweep.values.len())
        .flat_map(|p| {
            (0..per_point).flat_map(move |t| {
                cfg.sweep
                    .schemes
                    .iter()
                    .filter(|a| a.dam_scheme().is_some())
                    .map(move |&a| (p, t, a))
            })
        })
        .collect();
    let rows: Vec<Option<LinkRow>> = jobs
        .par_iter()
        .map(|&(p, t, arm)| {
            let seed = trial_seed(cfg.sweep.base_seed, p, t);
            let ch = sample_channel(seed, &cfg.channel_params(cfg.sweep.values[p]))?;
            let scheme = arm.dam_scheme().expect("DAM arm");
            let r = match design(scheme, &ch, budget) {
                Ok(r) => r,
                Err(Error::InfeasibleZf(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let (_, _, m) = simulate_dam_link(
                &ch,
                &r.precoder,
                guard,
                budget.noise_power(),
                &cfg.link_level.link,
                seed,
            )?;
            Ok(Some(LinkRow {
                value: cfg.sweep.values[p],
                trial: t,
                scheme: arm,
                analytic_sinr_db: 10.0 * r.analytic_sinr.log10(),
                measured_sinr_db: m.sinr_db(),
                residual_isi_power: m.residual_isi_power,
                evm: m.evm,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// DAM-MMSE waveform against the OFDM comparison waveform on the first
/// channel of sweep point `point`.
pub fn papr_comparison(cfg: &ExperimentConfig, point: usize) -> Result<PaprComparison> {
    let (dam_wave, ofdm_wave) = papr_waveforms(cfg, point)?;
    let ll = &cfg.link_level;
    Ok(PaprComparison {
        dam: PaprCcdf::from_waveform(&dam_wave, ll.papr_window, ll.papr_oversample),
        ofdm: PaprCcdf::from_waveform(&ofdm_wave, ll.papr_window, ll.papr_oversample),
        thresholds_db: ll.papr_thresholds_db.clone(),
    })
}

fn papr_waveforms(
    cfg: &ExperimentConfig,
    point: usize,
) -> Result<(crate::link::Waveform, crate::link::Waveform)> {
    cfg.validate()?;
    let budget = cfg.link_budget()?;
    let ll = &cfg.link_level;
    let value = *cfg
        .sweep
        .values
        .get(point)
        .ok_or_else(|| Error::invalid("point", "outside the sweep"))?;
    let seed = trial_seed(cfg.sweep.base_seed, point, 0);
    let ch = sample_channel(seed, &cfg.channel_params(value))?;
    let r = design(Scheme::Mmse, &ch, &budget)?;
    let m = ch.num_antennas();
    let symbols = ll.papr_samples.div_ceil(m);
    let guard = 2 * cfg.ofdm.cp_length;
    let stream = SymbolStream::generate(Constellation::Qpsk, symbols, seed);
    let dam = dam_waveform(
        &stream,
        &r.precoder,
        BlockLayout::new(symbols + guard, guard)?,
        cfg.frame.bandwidth_hz,
    )?;
    let k = cfg.ofdm.num_subcarriers;
    let ofdm_symbols = ll.papr_samples.div_ceil(k + cfg.ofdm.cp_length);
    let ofdm = ofdm_waveform(
        k,
        cfg.ofdm.cp_length,
        ofdm_symbols,
        Constellation::Qpsk,
        cfg.frame.bandwidth_hz,
        seed ^ 1,
    )?;
    Ok((dam, ofdm))
}

/// Writes the sweep CSV to any writer.
pub fn write_csv<W: std::io::Write>(res: &SweepResult, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let ser = |e: csv::Error| Error::Serde(e.to_string());
    out.write_record(CSV_HEADER).map_err(ser)?;
    for p in &res.points {
        for a in &p.arms {
            out.write_record([
                res.variable.column().to_string(),
                p.value.to_string(),
                a.arm.to_string(),
                a.mean_se.to_string(),
                a.stderr_se.to_string(),
                a.trials.to_string(),
                a.overhead_fraction.to_string(),
                a.infeasible_zf_count.to_string(),
            ])
            .map_err(ser)?;
        }
    }
    out.flush().map_err(|e| Error::Serde(e.to_string()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config_hash: &'a str,
    base_seed: u64,
    trials: usize,
    config: &'a ExperimentConfig,
    files: Vec<String>,
}

/// Writes `sweep.csv`, `manifest.json`, `se.svg` and, in link-level mode,
/// `link_level.csv`, `papr.csv` and `papr.svg`. Returns the written paths.
pub fn emit_outputs(
    res: &SweepResult,
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();

    let csv_path = out_dir.join("sweep.csv");
    let f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_csv(res, f)?;
    files.push(csv_path);

    let se_path = out_dir.join("se.svg");
    plot::se_plot(res, &se_path)?;
    files.push(se_path);

    if !res.link_rows.is_empty() {
        let path = out_dir.join("link_level.csv");
        let mut w = csv::Writer::from_path(&path)
            .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        for row in &res.link_rows {
            w.serialize(row).map_err(|e| Error::Serde(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        files.push(path);
    }

    if let Some(papr) = &res.papr {
        let path = out_dir.join("papr.csv");
        let mut w = csv::Writer::from_path(&path)
            .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        w.write_record(["threshold_db", "ccdf_dam", "ccdf_ofdm"])
            .map_err(|e| Error::Serde(e.to_string()))?;
        for &t in &papr.thresholds_db {
            w.write_record([
                t.to_string(),
                papr.dam.ccdf(t).to_string(),
                papr.ofdm.ccdf(t).to_string(),
            ])
            .map_err(|e| Error::Serde(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        files.push(path);
        let svg = out_dir.join("papr.svg");
        plot::papr_plot(papr, &svg)?;
        files.push(svg);
    }

    if cfg.link_level.enabled && cfg.link_level.dump_waveform {
        let (dam, ofdm) = papr_waveforms(cfg, 0)?;
        let seed = trial_seed(cfg.sweep.base_seed, 0, 0);
        let (a, b) = dam.write_raw(&out_dir.join("dam_waveform"), seed)?;
        let (c, d) = ofdm.write_raw(&out_dir.join("ofdm_waveform"), seed ^ 1)?;
        files.extend([a, b, c, d]);
    }

    let manifest_path = out_dir.join("manifest.json");
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config_hash: &res.config_hash,
        base_seed: res.base_seed,
        trials: res.trials,
        config: cfg,
        files: files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    files.push(manifest_path);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(trials: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.values = vec![8, 16, 32];
        cfg.sweep.trials = trials;
        cfg
    }

    #[test]
    fn empty_config_is_the_default_sweep() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.sweep.values, vec![32, 64, 128, 256]);
        assert_eq!(cfg.sweep.trials, 500);
        cfg.validate().unwrap();
        let frame = cfg.frame().unwrap();
        assert_eq!(frame.n_c(), 128_000);
        assert_eq!(cfg.ofdm.symbols_per_block(&frame), 231);
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = small(3);
        cfg.sweep.variable = SweepVariable::Paths;
        cfg.sweep.values = vec![1, 5];
        cfg.sweep.schemes = vec![Arm::DamMmse, Arm::OfdmWf];
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert!(text.contains("\"DAM-MMSE\""));
    }

    #[test]
    fn validation_names_fields() {
        let mut cfg = small(0);
        cfg.ofdm.cp_length = 10;
        cfg.sweep.schemes = vec![Arm::DamZf, Arm::DamZf];
        let Err(Error::Config(list)) = cfg.validate() else {
            panic!("expected config error")
        };
        assert!(list.iter().any(|s| s.starts_with("sweep.trials")));
        assert!(list.iter().any(|s| s.starts_with("ofdm.cp_length")));
        assert!(list.iter().any(|s| s.starts_with("sweep.schemes")));
        assert!(ExperimentConfig::from_toml("[sweep]\nbogus = 1\n").is_err());
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for p in 0..8 {
            for t in 0..500 {
                assert!(seen.insert(trial_seed(7, p, t)));
            }
        }
        assert_ne!(trial_seed(1, 0, 0), trial_seed(2, 0, 0));
    }

    #[test]
    fn stderr_conventions() {
        assert_eq!(mean_and_stderr(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(mean_and_stderr(&[]).0.is_nan());
    }

    #[test]
    fn rows_are_points_times_schemes() {
        let res = run_sweep(&small(2)).unwrap();
        let mut buf = Vec::new();
        write_csv(&res, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(lines.len(), 1 + 3 * 4);
        assert!(lines[1].starts_with("M,8,DAM-ZF,"));
    }

    #[test]
    fn empty_scheme_list_gives_header_only() {
        let mut cfg = small(1);
        cfg.sweep.schemes.clear();
        let res = run_sweep(&cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&res, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().trim_end(),
            CSV_HEADER.join(",")
        );
    }

    #[test]
    fn zf_infeasible_points_are_counted() {
        let mut cfg = small(4);
        cfg.sweep.values = vec![2, 8];
        let res = run_sweep(&cfg).unwrap();
        let zf = res.points[0].arm(Arm::DamZf).unwrap();
        assert_eq!(zf.infeasible_zf_count, 4);
        assert_eq!(zf.trials, 0);
        assert_eq!(
            res.points[1].arm(Arm::DamZf).unwrap().infeasible_zf_count,
            0
        );
        assert_eq!(res.points[0].arm(Arm::DamMmse).unwrap().trials, 4);
    }

    #[test]
    fn sweep_is_deterministic() {
        let cfg = small(3);
        let a = run_sweep(&cfg).unwrap();
        let b = run_sweep(&cfg).unwrap();
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.sweep.base_seed += 1;
        assert_ne!(run_sweep(&other).unwrap().points, a.points);
    }

    #[test]
    fn emitted_files() {
        let mut cfg = small(2);
        cfg.link_level.enabled = true;
        cfg.link_level.link.symbols = 110_000;
        cfg.link_level.papr_samples = 20_000;
        cfg.link_level.dump_waveform = true;
        let res = run_sweep(&cfg).unwrap();
        assert_eq!(res.link_rows.len(), 3 * 3);
        let dir = tempfile::tempdir().unwrap();
        let files = emit_outputs(&res, &cfg, dir.path()).unwrap();
        for name in [
            "sweep.csv",
            "se.svg",
            "papr.svg",
            "papr.csv",
            "link_level.csv",
            "manifest.json",
            "dam_waveform.hdr",
        ] {
            assert!(files.iter().any(|f| f.ends_with(name)), "{name}");
        }
        let svg = std::fs::read_to_string(dir.path().join("se.svg")).unwrap();
        assert!(svg.contains("<svg") && svg.contains("DAM-MMSE"));
        let manifest: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest["config_hash"], res.config_hash.as_str());
        assert_eq!(manifest["config"]["frame"]["carrier_hz"], 28e9);
    }

    #[test]
    fn mmse_dominates_per_trial() {
        let res = run_sweep(&small(10)).unwrap();
        let idx = |a: Arm| res.schemes.iter().position(|&s| s == a).unwrap();
        for p in &res.points {
            for o in &p.outcomes {
                let mmse = o.sinr[idx(Arm::DamMmse)].unwrap();
                assert!(mmse >= o.sinr[idx(Arm::DamMrt)].unwrap() * (1.0 - 1e-9));
                assert!(mmse >= o.sinr[idx(Arm::DamZf)].unwrap() * (1.0 - 1e-9));
            }
        }
    }
}
