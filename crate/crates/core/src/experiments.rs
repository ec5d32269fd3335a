//! Monte-Carlo harness: scenario draws, per-trial execution of both methods,
//! tone matching, and aggregation into summary rows.
//!
//! Everything here is a pure function of [`ExperimentConfig`]; the std
//! crate adds parallel execution and file output on top.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bounds::freq_rmse_rel_bound;
use crate::error::{invalid, Error, Result};
use crate::omp::{build_dictionary, omp_recover, OmpConfig};
use crate::signal::{
    add_noise, phase_difference, synthesize, NoiseConfig, NoiseConvention, SamplingScheme,
    Scenario, ToneParams,
};
use crate::sngem::{self, EstimatorConfig, ModelOrder};

/// SNR in dB; `"inf"` in JSON means noiseless.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SnrDb(pub f64);

impl SnrDb {
    pub fn linear(self) -> f64 {
        if self.0.is_infinite() {
            f64::INFINITY
        } else {
            10f64.powf(self.0 / 10.0)
        }
    }

    pub fn is_noiseless(self) -> bool {
        self.0 == f64::INFINITY
    }
}

impl fmt::Display for SnrDb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl Serialize for SnrDb {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for SnrDb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v.is_finite() => Ok(SnrDb(v)),
            Raw::Text(t) if matches!(t.as_str(), "inf" | "+inf" | "Infinity") => {
                Ok(SnrDb(f64::INFINITY))
            }
            _ => Err(serde::de::Error::custom(
                "snr_db must be a finite number or \"inf\"",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sngem,
    Omp,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sngem => "sngem",
            Method::Omp => "omp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeVariant {
    Uniform,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SngemOrder {
    /// Model order set to the drawn tone count.
    TrueCount,
    Auto,
}

/// Which SNGEM frequency enters the error metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencySource {
    /// Amplitude-ratio estimate `1/(2πR̂)`.
    Ratio,
    /// Fold-resolved, refined frequency.
    Unfolded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SngemSettings {
    pub order: SngemOrder,
    pub frequency_source: FrequencySource,
    pub pencil_ratio: f64,
    pub sv_threshold: f64,
    pub min_gap_ratio: f64,
    pub refine_iters: usize,
}

impl Default for SngemSettings {
    fn default() -> Self {
        let e = EstimatorConfig::default();
        Self {
            order: SngemOrder::TrueCount,
            frequency_source: FrequencySource::Ratio,
            pencil_ratio: e.pencil_ratio,
            sv_threshold: e.sv_threshold,
            min_gap_ratio: e.min_gap_ratio,
            refine_iters: e.refine_iters,
        }
    }
}

impl SngemSettings {
    pub fn estimator(&self, true_count: usize) -> EstimatorConfig {
        EstimatorConfig {
            model_order: match self.order {
                SngemOrder::TrueCount => ModelOrder::Fixed(true_count),
                SngemOrder::Auto => ModelOrder::Auto,
            },
            pencil_ratio: self.pencil_ratio,
            sv_threshold: self.sv_threshold,
            min_gap_ratio: self.min_gap_ratio,
            refine_iters: self.refine_iters,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmpSettings {
    pub grid_size: usize,
    /// `None` runs as many iterations as there are true tones.
    pub max_iters: Option<usize>,
    pub residual_tol: f64,
    pub use_derivative_channel: bool,
}

impl Default for OmpSettings {
    fn default() -> Self {
        let o = OmpConfig::default();
        Self {
            grid_size: o.grid_size,
            max_iters: None,
            residual_tol: o.residual_tol,
            use_derivative_channel: o.use_derivative_channel,
        }
    }
}

impl OmpSettings {
    pub fn config(&self, true_count: usize) -> OmpConfig {
        OmpConfig {
            grid_size: self.grid_size,
            max_iters: self.max_iters.unwrap_or(true_count).min(self.grid_size),
            residual_tol: self.residual_tol,
            use_derivative_channel: self.use_derivative_channel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Inclusive tone-count interval.
    pub tone_count_range: [usize; 2],
    /// Fixed tone frequencies; overrides the count range and random draws.
    pub tone_frequencies: Option<Vec<f64>>,
    /// Uniform amplitude interval; `None` gives unit amplitudes.
    pub amplitude_range: Option<[f64; 2]>,
    /// Compression drawn per trial from this interval when no grid is set.
    pub compression_range: [f64; 2],
    pub compression_grid: Option<Vec<f64>>,
    /// Uniform sample rates; compression is `2·band_limit/fs`.
    pub sample_rate_grid: Option<Vec<f64>>,
    pub snr_db_grid: Vec<SnrDb>,
    pub trials_per_point: usize,
    pub band_limit: f64,
    pub n_samples: usize,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub noise_convention: NoiseConvention,
    pub reference_frequency: Option<f64>,
    pub scheme_variant: SchemeVariant,
    pub sngem: SngemSettings,
    pub omp: OmpSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            tone_count_range: [5, 15],
            tone_frequencies: None,
            amplitude_range: None,
            compression_range: [8.0, 20.0],
            compression_grid: None,
            sample_rate_grid: None,
            snr_db_grid: vec![SnrDb(30.0)],
            trials_per_point: 500,
            band_limit: 1e9,
            n_samples: 1024,
            master_seed: 0,
            methods: vec![Method::Sngem, Method::Omp],
            noise_convention: NoiseConvention::EqualSnr,
            reference_frequency: None,
            scheme_variant: SchemeVariant::Uniform,
            sngem: SngemSettings::default(),
            omp: OmpSettings::default(),
        }
    }
}

/// Minimum tone separation in units of `1/duration`.
pub const SEPARATION_CYCLES: f64 = 4.0;
/// Tones are drawn from `(LO, HI)·band_limit`.
pub const BAND_FRACTION: (f64, f64) = (0.02, 0.98);

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let [klo, khi] = self.tone_count_range;
        if klo == 0 || klo > khi {
            return Err(invalid("tone_count_range must satisfy 1 <= lo <= hi"));
        }
        if !(self.band_limit > 0.0 && self.band_limit.is_finite()) {
            return Err(invalid("band_limit must be positive"));
        }
        if let Some(fs) = &self.tone_frequencies {
            if fs.is_empty() {
                return Err(invalid("tone_frequencies must not be empty"));
            }
            if let Some(&f) = fs.iter().find(|&&f| !(f > 0.0 && f < self.band_limit)) {
                return Err(Error::ToneOutOfBand {
                    frequency: f,
                    band_limit: self.band_limit,
                });
            }
        }
        if let Some([lo, hi]) = self.amplitude_range {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(invalid("amplitude_range must satisfy 0 < lo <= hi"));
            }
        }
        let [clo, chi] = self.compression_range;
        if !(clo > 0.0 && clo <= chi && chi.is_finite()) {
            return Err(invalid("compression_range must satisfy 0 < lo <= hi"));
        }
        if self.compression_grid.is_some() && self.sample_rate_grid.is_some() {
            return Err(invalid(
                "set at most one of compression_grid and sample_rate_grid",
            ));
        }
        for grid in [&self.compression_grid, &self.sample_rate_grid]
            .into_iter()
            .flatten()
        {
            if grid.is_empty() || grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(invalid("sweep grids must be nonempty and positive"));
            }
        }
        if self.sample_rate_grid.is_some() && self.scheme_variant == SchemeVariant::Random {
            return Err(invalid("sample_rate_grid applies to the uniform scheme only"));
        }
        if self.snr_db_grid.is_empty() {
            return Err(invalid("snr_db_grid must not be empty"));
        }
        if self.trials_per_point == 0 {
            return Err(invalid("trials_per_point must be at least 1"));
        }
        if self.n_samples < SamplingScheme::MIN_SAMPLES {
            return Err(invalid("n_samples must be at least 8"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods must not be empty"));
        }
        if let Some(f) = self.reference_frequency {
            if !(f > 0.0 && f.is_finite()) {
                return Err(invalid("reference_frequency must be positive"));
            }
        }
        self.sngem.estimator(1).validate()?;
        self.omp.config(1).validate()?;
        Ok(())
    }
}

/// Compression at a sweep point: fixed, or drawn per trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionPoint {
    Fixed(f64),
    Drawn { lo: f64, hi: f64 },
}

impl fmt::Display for CompressionPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompressionPoint::Fixed(c) => write!(f, "{c}"),
            CompressionPoint::Drawn { lo, hi } => write!(f, "{lo}:{hi}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub snr_db: SnrDb,
    pub compression: CompressionPoint,
}

/// SNR-major ordering of all `(snr, compression)` pairs.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let comps: Vec<CompressionPoint> = match (&cfg.compression_grid, &cfg.sample_rate_grid) {
        (Some(g), _) => g.iter().map(|&c| CompressionPoint::Fixed(c)).collect(),
        (None, Some(r)) => r
            .iter()
            .map(|&fs| CompressionPoint::Fixed(2.0 * cfg.band_limit / fs))
            .collect(),
        (None, None) => vec![CompressionPoint::Drawn {
            lo: cfg.compression_range[0],
            hi: cfg.compression_range[1],
        }],
    };
    let mut out = Vec::with_capacity(cfg.snr_db_grid.len() * comps.len());
    for &snr in &cfg.snr_db_grid {
        for &c in &comps {
            out.push(SweepPoint {
                index: out.len(),
                snr_db: snr,
                compression: c,
            });
        }
    }
    out
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `mix(mix(mix(master) ⊕ point) ⊕ trial)`. The finalizer is a bijection,
/// so seeds within one point are pairwise distinct.
pub fn trial_seed(master_seed: u64, point: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ point as u64) ^ trial as u64)
}

const NOISE_SALT: u64 = 0x6e6f_6973_6500_0001;
const SCHEME_SALT: u64 = 0x7363_6865_6d65_0002;

/// One trial's realized scenario and sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSetup {
    pub scenario: Scenario,
    pub scheme: SamplingScheme,
    pub compression: f64,
    pub noise: NoiseConfig,
    pub noise_seed: u64,
}

fn scheme_for(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    compression: f64,
    seed: u64,
) -> SamplingScheme {
    let uniform_rate = match (&cfg.sample_rate_grid, point.compression) {
        (Some(_), CompressionPoint::Fixed(c)) | (None, CompressionPoint::Fixed(c)) => {
            2.0 * cfg.band_limit / c
        }
        _ => 2.0 * cfg.band_limit / compression,
    };
    match cfg.scheme_variant {
        SchemeVariant::Uniform => SamplingScheme::UniformSubNyquist {
            sample_rate: uniform_rate,
            num_samples: cfg.n_samples,
        },
        SchemeVariant::Random => SamplingScheme::RandomUndersampling {
            base_rate: 2.0 * cfg.band_limit,
            decimation: compression.max(1.0),
            num_samples: cfg.n_samples,
            seed: splitmix64(seed ^ SCHEME_SALT),
        },
    }
}

/// Draws the trial scenario and sampling for `(point, trial)`.
///
/// Random frequencies are uniform in `(0.02, 0.98)·band_limit` with
/// separation `4/duration`. Under uniform sampling the aliases must also
/// be `4/duration` apart and at least `2/duration` from 0 and `fs/2`.
pub fn draw_setup(cfg: &ExperimentConfig, point: &SweepPoint, trial: usize) -> Result<TrialSetup> {
    cfg.validate()?;
    let seed = trial_seed(cfg.master_seed, point.index, trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let compression = match point.compression {
        CompressionPoint::Fixed(c) => c,
        CompressionPoint::Drawn { lo, hi } if hi > lo => rng.random_range(lo..hi),
        CompressionPoint::Drawn { lo, .. } => lo,
    };
    let scheme = scheme_for(cfg, point, compression, seed);
    scheme.validate()?;
    let duration = scheme.duration();
    let sep = SEPARATION_CYCLES / duration;
    let fs = match scheme {
        SamplingScheme::UniformSubNyquist { sample_rate, .. } => Some(sample_rate),
        SamplingScheme::RandomUndersampling { .. } => None,
    };

    let freqs: Vec<f64> = match &cfg.tone_frequencies {
        Some(f) => f.clone(),
        None => {
            let [klo, khi] = cfg.tone_count_range;
            let k = rng.random_range(klo..=khi);
            draw_frequencies(&mut rng, k, cfg.band_limit, sep, fs)?
        }
    };
    let tones = freqs
        .iter()
        .map(|&f| {
            let amplitude = match cfg.amplitude_range {
                Some([lo, hi]) if hi > lo => rng.random_range(lo..hi),
                Some([lo, _]) => lo,
                None => 1.0,
            };
            let phase = rng.random_range(-PI..PI);
            ToneParams::new(amplitude, f, phase)
        })
        .collect::<Result<Vec<_>>>()?;
    let min_sep = if cfg.tone_frequencies.is_some() { 0.0 } else { sep };
    let scenario = Scenario::new(tones, cfg.band_limit, min_sep)?;

    // Per-tone SNR A²/(2σ²) averaged over tones equals the point SNR.
    let snr = point.snr_db.linear();
    let mean_power =
        scenario.tones.iter().map(|t| t.amplitude * t.amplitude).sum::<f64>() / scenario.tones.len() as f64;
    let sigma_x = if snr.is_infinite() {
        0.0
    } else {
        (mean_power / (2.0 * snr)).sqrt()
    };
    Ok(TrialSetup {
        scenario,
        scheme,
        compression,
        noise: NoiseConfig {
            sigma_x,
            convention: cfg.noise_convention,
            reference_frequency: cfg.reference_frequency,
        },
        noise_seed: splitmix64(seed ^ NOISE_SALT),
    })
}

fn draw_frequencies(
    rng: &mut ChaCha8Rng,
    k: usize,
    band: f64,
    sep: f64,
    fs: Option<f64>,
) -> Result<Vec<f64>> {
    const ATTEMPTS: usize = 20_000;
    let (lo, hi) = (BAND_FRACTION.0 * band, BAND_FRACTION.1 * band);
    let mut freqs: Vec<f64> = Vec::with_capacity(k);
    let mut aliases: Vec<f64> = Vec::with_capacity(k);
    let mut attempts = 0;
    while freqs.len() < k {
        attempts += 1;
        if attempts > ATTEMPTS {
            return Err(Error::ScenarioDraw(format!(
                "could not place {k} tones with separation {sep:.3e} Hz"
            )));
        }
        let f = rng.random_range(lo..hi);
        if freqs.iter().any(|&g| (g - f).abs() < sep) {
            continue;
        }
        if let Some(fs) = fs {
            let alias = sngem::fold(f, fs).0;
            if alias < 0.5 * sep || alias > 0.5 * fs - 0.5 * sep {
                continue;
            }
            if aliases.iter().any(|&a| (a - alias).abs() < sep) {
                continue;
            }
            aliases.push(alias);
        }
        freqs.push(f);
    }
    freqs.sort_by(f64::total_cmp);
    Ok(freqs)
}

/// Ground truth paired with its matched estimate, if any.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneOutcome {
    pub f_true: f64,
    pub a_true: f64,
    pub phi_true: f64,
    pub f_hat: Option<f64>,
    pub a_hat: Option<f64>,
    pub phi_hat: Option<f64>,
}

impl ToneOutcome {
    pub fn matched(&self) -> bool {
        self.f_hat.is_some()
    }

    pub fn freq_rel_error(&self) -> Option<f64> {
        self.f_hat.map(|f| (f - self.f_true) / self.f_true)
    }

    pub fn amp_rel_error(&self) -> Option<f64> {
        self.a_hat.map(|a| (a - self.a_true) / self.a_true)
    }

    /// Wrapped into `[-π, π)`.
    pub fn phase_error(&self) -> Option<f64> {
        self.phi_hat.map(|p| phase_difference(p, self.phi_true))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub point: usize,
    pub snr_db: SnrDb,
    /// Realized compression of this trial.
    pub compression: f64,
    pub method: Method,
    pub trial: usize,
    pub seed: u64,
    pub tones: Vec<ToneOutcome>,
    /// Estimates left over after matching.
    pub extra_estimates: usize,
    /// Estimator failure message; the tones count as misses.
    pub error: Option<String>,
    /// Filled in by callers that have a clock.
    pub wall_time_s: Option<f64>,
}

/// `(frequency, amplitude, phase)` estimate used for matching.
pub type Estimate = (f64, f64, f64);

/// Greedy one-to-one nearest-frequency assignment.
///
/// Pairs are taken in order of increasing `|f_true − f_hat|`; ties are
/// broken by the frequency values, so relabeling the inputs does not change
/// the result. Returns, per true tone, the index of its estimate.
pub fn match_tones(truth: &[f64], estimates: &[f64]) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, f64, f64, usize, usize)> = Vec::new();
    for (i, &t) in truth.iter().enumerate() {
        for (j, &e) in estimates.iter().enumerate() {
            pairs.push(((t - e).abs(), t, e, i, j));
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
    });
    let mut truth_used = vec![None; truth.len()];
    let mut est_used = vec![false; estimates.len()];
    for (_, _, _, i, j) in pairs {
        if truth_used[i].is_none() && !est_used[j] {
            truth_used[i] = Some(j);
            est_used[j] = true;
        }
    }
    truth_used
}

fn outcomes(scenario: &Scenario, estimates: &[Estimate]) -> (Vec<ToneOutcome>, usize) {
    let truth: Vec<f64> = scenario.tones.iter().map(|t| t.frequency).collect();
    let est_f: Vec<f64> = estimates.iter().map(|e| e.0).collect();
    let assignment = match_tones(&truth, &est_f);
    let matched = assignment.iter().flatten().count();
    let tones = scenario
        .tones
        .iter()
        .zip(&assignment)
        .map(|(t, m)| {
            let e = m.map(|j| estimates[j]);
            ToneOutcome {
                f_true: t.frequency,
                a_true: t.amplitude,
                phi_true: t.phase,
                f_hat: e.map(|e| e.0),
                a_hat: e.map(|e| e.1),
                phi_hat: e.map(|e| e.2),
            }
        })
        .collect();
    (tones, estimates.len() - matched)
}

/// Runs one method on an observation and returns its tone estimates.
pub fn run_method(
    cfg: &ExperimentConfig,
    method: Method,
    obs: &crate::signal::DualChannelObservation,
    true_count: usize,
) -> Result<Vec<Estimate>> {
    match method {
        Method::Sngem => {
            let est = sngem::estimate(obs, &cfg.sngem.estimator(true_count), cfg.band_limit)?;
            if est.tones.is_empty() {
                if let Some(fail) = est.failures.into_iter().next() {
                    return Err(fail.error);
                }
            }
            Ok(est
                .tones
                .iter()
                .map(|t| {
                    let f = match cfg.sngem.frequency_source {
                        FrequencySource::Ratio => t.f_ratio,
                        FrequencySource::Unfolded => t.frequency,
                    };
                    (f, t.amplitude, t.phase)
                })
                .collect())
        }
        Method::Omp => {
            let ocfg = cfg.omp.config(true_count);
            let dict = build_dictionary(&obs.times, cfg.band_limit, ocfg.grid_size)?;
            let res = omp_recover(obs, &dict, &ocfg)?;
            Ok(res
                .components
                .iter()
                .map(|c| (c.frequency, c.amplitude, c.phase))
                .collect())
        }
    }
}

/// One record per configured method, in configuration order.
pub fn run_trial(cfg: &ExperimentConfig, point: &SweepPoint, trial: usize) -> Result<Vec<TrialRecord>> {
    let setup = draw_setup(cfg, point, trial)?;
    let clean = synthesize(&setup.scenario, &setup.scheme)?;
    let obs = add_noise(&clean, &setup.noise, setup.noise_seed)?;
    let k = setup.scenario.tones.len();
    let seed = trial_seed(cfg.master_seed, point.index, trial);
    Ok(cfg
        .methods
        .iter()
        .map(|&method| {
            let (tones, extra, error) = match run_method(cfg, method, &obs, k) {
                Ok(est) => {
                    let (tones, extra) = outcomes(&setup.scenario, &est);
                    (tones, extra, None)
                }
                Err(e) => {
                    let (tones, _) = outcomes(&setup.scenario, &[]);
                    (tones, 0, Some(e.to_string()))
                }
            };
            TrialRecord {
                point: point.index,
                snr_db: point.snr_db,
                compression: setup.compression,
                method,
                trial,
                seed,
                tones,
                extra_estimates: extra,
                error,
                wall_time_s: None,
            }
        })
        .collect())
}

/// All trials of one point, in trial order.
pub fn run_point(cfg: &ExperimentConfig, point: &SweepPoint) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::with_capacity(cfg.trials_per_point * cfg.methods.len());
    for trial in 0..cfg.trials_per_point {
        out.extend(run_trial(cfg, point, trial)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub point: usize,
    pub snr_db: SnrDb,
    pub compression: CompressionPoint,
    pub method: Method,
    pub trials: usize,
    pub matched_tones: usize,
    pub rmse_f_rel: f64,
    pub rmse_a_rel: f64,
    pub rmse_phi_rad: f64,
    pub miss_rate: f64,
    /// `sqrt(2/(N·SNR))`; zero for noiseless points.
    pub crb_rel: f64,
    pub rmse_over_crb: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SummaryRow>,
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v * v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Aggregates the records of one point and method.
pub fn summarize_point(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    method: Method,
    records: &[TrialRecord],
) -> SummaryRow {
    let rel: Vec<&TrialRecord> = records
        .iter()
        .filter(|r| r.point == point.index && r.method == method)
        .collect();
    let tones = || rel.iter().flat_map(|r| r.tones.iter());
    let total = tones().count();
    let matched = tones().filter(|t| t.matched()).count();
    let snr = point.snr_db.linear();
    let crb_rel = if snr.is_infinite() {
        0.0
    } else {
        freq_rmse_rel_bound(cfg.n_samples, snr)
    };
    let rmse_f_rel = rms(tones().filter_map(|t| t.freq_rel_error()));
    SummaryRow {
        point: point.index,
        snr_db: point.snr_db,
        compression: point.compression,
        method,
        trials: rel.len(),
        matched_tones: matched,
        rmse_f_rel,
        rmse_a_rel: rms(tones().filter_map(|t| t.amp_rel_error())),
        rmse_phi_rad: rms(tones().filter_map(|t| t.phase_error())),
        miss_rate: if total == 0 {
            f64::NAN
        } else {
            (total - matched) as f64 / total as f64
        },
        crb_rel,
        rmse_over_crb: if crb_rel > 0.0 {
            rmse_f_rel / crb_rel
        } else {
            f64::NAN
        },
    }
}

/// Rows ordered by point, then by configured method order.
pub fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord]) -> SweepSummary {
    let mut rows = Vec::new();
    for point in sweep_points(cfg) {
        for &method in &cfg.methods {
            rows.push(summarize_point(cfg, &point, method, records));
        }
    }
    SweepSummary { rows }
}

/// Sequential sweep; the std crate has a parallel equivalent.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<(SweepSummary, Vec<TrialRecord>)> {
    cfg.validate()?;
    let mut records = Vec::new();
    for point in sweep_points(cfg) {
        records.extend(run_point(cfg, &point)?);
    }
    Ok((summarize(cfg, &records), records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparePoint {
    pub snr_db: SnrDb,
    pub compression: CompressionPoint,
    pub sngem_rmse_f_rel: Option<f64>,
    pub omp_rmse_f_rel: Option<f64>,
    /// OMP over SNGEM.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorFlag {
    pub method: Method,
    pub compression: CompressionPoint,
    /// `(max − min)/max` of rmse_f_rel over the top 20 dB of SNR.
    pub relative_change: f64,
    pub floored: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CompareReport {
    pub points: Vec<ComparePoint>,
    pub floors: Vec<FloorFlag>,
    pub notes: Vec<String>,
}

/// SNR span, in dB, inspected for an error floor.
pub const FLOOR_SPAN_DB: f64 = 20.0;
/// Relative rmse change below which a method counts as floored.
pub const FLOOR_TOLERANCE: f64 = 0.1;

fn same_compression(a: CompressionPoint, b: CompressionPoint) -> bool {
    match (a, b) {
        (CompressionPoint::Fixed(x), CompressionPoint::Fixed(y)) => x.to_bits() == y.to_bits(),
        _ => a == b,
    }
}

pub fn compare_report(summary: &SweepSummary) -> Result<CompareReport> {
    if summary.rows.is_empty() {
        return Err(Error::EmptySummary);
    }
    let mut report = CompareReport::default();
    for m in [Method::Sngem, Method::Omp] {
        if !summary.rows.iter().any(|r| r.method == m) {
            report
                .notes
                .push(format!("no {m} rows in summary; its section is omitted"));
        }
    }

    // Points in first-seen order.
    let mut keys: Vec<(SnrDb, CompressionPoint)> = Vec::new();
    for r in &summary.rows {
        if !keys
            .iter()
            .any(|(s, c)| s.0.to_bits() == r.snr_db.0.to_bits() && same_compression(*c, r.compression))
        {
            keys.push((r.snr_db, r.compression));
        }
    }
    let lookup = |s: SnrDb, c: CompressionPoint, m: Method| {
        summary
            .rows
            .iter()
            .find(|r| {
                r.method == m && r.snr_db.0.to_bits() == s.0.to_bits() && same_compression(r.compression, c)
            })
            .map(|r| r.rmse_f_rel)
    };
    for &(s, c) in &keys {
        let sn = lookup(s, c, Method::Sngem);
        let om = lookup(s, c, Method::Omp);
        report.points.push(ComparePoint {
            snr_db: s,
            compression: c,
            sngem_rmse_f_rel: sn,
            omp_rmse_f_rel: om,
            ratio: match (sn, om) {
                (Some(a), Some(b)) if a > 0.0 => Some(b / a),
                (Some(a), Some(b)) if a == 0.0 && b == 0.0 => Some(1.0),
                _ => None,
            },
        });
    }

    let mut comps: Vec<CompressionPoint> = Vec::new();
    for &(_, c) in &keys {
        if !comps.iter().any(|d| same_compression(*d, c)) {
            comps.push(c);
        }
    }
    for m in [Method::Sngem, Method::Omp] {
        for &c in &comps {
            let rows: Vec<&SummaryRow> = summary
                .rows
                .iter()
                .filter(|r| r.method == m && same_compression(r.compression, c) && !r.snr_db.is_noiseless())
                .collect();
            let Some(top) = rows.iter().map(|r| r.snr_db.0).reduce(f64::max) else {
                continue;
            };
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.snr_db.0 >= top - FLOOR_SPAN_DB)
                .map(|r| r.rmse_f_rel)
                .filter(|v| v.is_finite())
                .collect();
            if vals.len() < 2 {
                report.notes.push(format!(
                    "{m} at compression {c}: fewer than two finite points in the top {FLOOR_SPAN_DB} dB"
                ));
                continue;
            }
            let max = vals.iter().copied().fold(f64::MIN, f64::max);
            let min = vals.iter().copied().fold(f64::MAX, f64::min);
            let change = if max > 0.0 { (max - min) / max } else { 0.0 };
            report.floors.push(FloorFlag {
                method: m,
                compression: c,
                relative_change: change,
                floored: change < FLOOR_TOLERANCE,
            });
        }
    }
    Ok(report)
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4e}"));
        writeln!(
            f,
            "{:>8} {:>20} {:>14} {:>14} {:>10}",
            "snr_db", "compression", "sngem_rmse_f", "omp_rmse_f", "omp/sngem"
        )?;
        for p in &self.points {
            writeln!(
                f,
                "{:>8} {:>20} {:>14} {:>14} {:>10}",
                p.snr_db.to_string(),
                p.compression.to_string(),
                opt(p.sngem_rmse_f_rel),
                opt(p.omp_rmse_f_rel),
                p.ratio.map_or_else(|| "-".to_string(), |r| format!("{r:.3}")),
            )?;
        }
        for fl in &self.floors {
            writeln!(
                f,
                "{} @ {}: change over top {} dB = {:.3} -> {}",
                fl.method,
                fl.compression,
                FLOOR_SPAN_DB,
                fl.relative_change,
                if fl.floored { "FLOOR" } else { "no floor" }
            )?;
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}
