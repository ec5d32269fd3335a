//! Multi-tone ground truth, sampling schemes, and dual-channel observations.
//!
//! A scenario is a sum of real tones `A cos(2π f t + φ)`. The derivative
//! channel is produced analytically as `−2π f A sin(2π f t + φ)`, i.e. an
//! ideal differentiator; no discrete filter is involved anywhere.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand::{seq::index, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Wraps a phase into `[-π, π)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let mut wrapped = phase - TAU * ((phase + PI) / TAU).floor();
    if wrapped >= PI {
        wrapped -= TAU;
    }
    if wrapped < -PI {
        wrapped += TAU;
    }
    wrapped
}

/// Signed wrapped difference `a − b` in `[-π, π)`.
pub fn phase_difference(a: f64, b: f64) -> f64 {
    wrap_phase(a - b)
}

/// One real sinusoid `A cos(2π f t + φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneParams {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl ToneParams {
    /// Validates the triplet and canonicalizes the phase.
    pub fn new(amplitude: f64, frequency: f64, phase: f64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(invalid("tone amplitude must be positive and finite"));
        }
        if !(frequency > 0.0 && frequency.is_finite()) {
            return Err(invalid("tone frequency must be positive and finite"));
        }
        if !phase.is_finite() {
            return Err(invalid("tone phase must be finite"));
        }
        Ok(Self {
            amplitude,
            frequency,
            phase: wrap_phase(phase),
        })
    }

    /// Amplitude seen by an ideal differentiator, `B = 2π f A`.
    pub fn derivative_amplitude(&self) -> f64 {
        TAU * self.frequency * self.amplitude
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.amplitude * (TAU * self.frequency * t + self.phase).cos()
    }

    pub fn derivative_at(&self, t: f64) -> f64 {
        -self.derivative_amplitude() * (TAU * self.frequency * t + self.phase).sin()
    }
}

/// Ground-truth multi-tone scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub tones: Vec<ToneParams>,
    /// Highest representable frequency, half the reference Nyquist rate.
    pub band_limit: f64,
    #[serde(default)]
    pub min_separation: f64,
}

impl Scenario {
    pub fn new(tones: Vec<ToneParams>, band_limit: f64, min_separation: f64) -> Result<Self> {
        let scenario = Self {
            tones,
            band_limit,
            min_separation,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tones.is_empty() {
            return Err(Error::EmptyScenario);
        }
        if !(self.band_limit > 0.0 && self.band_limit.is_finite()) {
            return Err(invalid("band_limit must be positive and finite"));
        }
        if !(self.min_separation >= 0.0) {
            return Err(invalid("min_separation must be nonnegative"));
        }
        for tone in &self.tones {
            ToneParams::new(tone.amplitude, tone.frequency, tone.phase)?;
            if tone.frequency >= self.band_limit {
                return Err(Error::ToneOutOfBand {
                    frequency: tone.frequency,
                    band_limit: self.band_limit,
                });
            }
        }
        if self.min_separation > 0.0 {
            for (i, a) in self.tones.iter().enumerate() {
                for b in &self.tones[i + 1..] {
                    if (a.frequency - b.frequency).abs() < self.min_separation {
                        return Err(invalid("tones closer than min_separation"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Power-weighted RMS tone frequency, `sqrt(Σ A²f² / Σ A²)`.
    pub fn rms_frequency(&self) -> f64 {
        let (num, den) = self.tones.iter().fold((0.0, 0.0), |(n, d), t| {
            let p = t.amplitude * t.amplitude;
            (n + p * t.frequency * t.frequency, d + p)
        });
        (num / den).sqrt()
    }

    pub fn clean_signal(&self, t: f64) -> f64 {
        self.tones.iter().map(|tone| tone.value_at(t)).sum()
    }

    pub fn clean_derivative(&self, t: f64) -> f64 {
        self.tones.iter().map(|tone| tone.derivative_at(t)).sum()
    }
}

/// How the two synchronized channels are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingScheme {
    /// `t_n = n / sample_rate`.
    UniformSubNyquist { sample_rate: f64, num_samples: usize },
    /// `num_samples` sorted distinct indices drawn from a window of
    /// `⌈num_samples · decimation⌉` points of the grid `n / base_rate`.
    RandomUndersampling {
        base_rate: f64,
        decimation: f64,
        num_samples: usize,
        seed: u64,
    },
}

impl SamplingScheme {
    pub const MIN_SAMPLES: usize = 8;

    pub fn num_samples(&self) -> usize {
        match *self {
            Self::UniformSubNyquist { num_samples, .. }
            | Self::RandomUndersampling { num_samples, .. } => num_samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_samples() < Self::MIN_SAMPLES {
            return Err(invalid("num_samples must be at least 8"));
        }
        match *self {
            Self::UniformSubNyquist { sample_rate, .. } => {
                if !(sample_rate > 0.0 && sample_rate.is_finite()) {
                    return Err(invalid("sample_rate must be positive and finite"));
                }
            }
            Self::RandomUndersampling {
                base_rate,
                decimation,
                ..
            } => {
                if !(base_rate > 0.0 && base_rate.is_finite()) {
                    return Err(invalid("base_rate must be positive and finite"));
                }
                if !(decimation >= 1.0 && decimation.is_finite()) {
                    return Err(invalid("decimation must be at least 1"));
                }
            }
        }
        Ok(())
    }

    fn window_len(num_samples: usize, decimation: f64) -> usize {
        ((num_samples as f64 * decimation).ceil() as usize).max(num_samples)
    }

    /// Observation window length in seconds.
    pub fn duration(&self) -> f64 {
        match *self {
            Self::UniformSubNyquist {
                sample_rate,
                num_samples,
            } => num_samples as f64 / sample_rate,
            Self::RandomUndersampling {
                base_rate,
                decimation,
                num_samples,
                ..
            } => Self::window_len(num_samples, decimation) as f64 / base_rate,
        }
    }

    pub fn average_rate(&self) -> f64 {
        self.num_samples() as f64 / self.duration()
    }

    /// `2·band_limit / average_rate`.
    pub fn compression_ratio(&self, band_limit: f64) -> f64 {
        2.0 * band_limit / self.average_rate()
    }

    pub fn sample_times(&self) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match *self {
            Self::UniformSubNyquist {
                sample_rate,
                num_samples,
            } => (0..num_samples).map(|n| n as f64 / sample_rate).collect(),
            Self::RandomUndersampling {
                base_rate,
                decimation,
                num_samples,
                seed,
            } => {
                let window = Self::window_len(num_samples, decimation);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picks = index::sample(&mut rng, window, num_samples).into_vec();
                picks.sort_unstable();
                picks.into_iter().map(|n| n as f64 / base_rate).collect()
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseConvention {
    /// `σ_ẋ = σ_x`.
    EqualVariance,
    /// `σ_ẋ = 2π f_ref σ_x`, matching per-tone SNR at `f_ref`.
    EqualSnr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_x: f64,
    pub convention: NoiseConvention,
    /// Defaults to the scenario's power-weighted RMS frequency.
    #[serde(default)]
    pub reference_frequency: Option<f64>,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_x >= 0.0 && self.sigma_x.is_finite()) {
            return Err(invalid("sigma_x must be nonnegative and finite"));
        }
        if let Some(f) = self.reference_frequency {
            if !(f > 0.0 && f.is_finite()) {
                return Err(invalid("reference_frequency must be positive"));
            }
        }
        Ok(())
    }

    pub fn resolved_reference_frequency(&self, scenario: Option<&Scenario>) -> Result<f64> {
        match (self.reference_frequency, scenario) {
            (Some(f), _) => Ok(f),
            (None, Some(s)) => Ok(s.rms_frequency()),
            (None, None) => Err(invalid(
                "equal_snr needs a reference_frequency when no scenario is attached",
            )),
        }
    }

    /// Derivative-channel noise std under the configured convention.
    pub fn sigma_xdot(&self, scenario: Option<&Scenario>) -> Result<f64> {
        self.validate()?;
        match self.convention {
            NoiseConvention::EqualVariance => Ok(self.sigma_x),
            NoiseConvention::EqualSnr => {
                Ok(TAU * self.resolved_reference_frequency(scenario)? * self.sigma_x)
            }
        }
    }
}

/// Synchronized samples of a signal and its time derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualChannelObservation {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub xdot: Vec<f64>,
    pub sigma_x: f64,
    pub sigma_xdot: f64,
    #[serde(default)]
    pub scenario: Option<Scenario>,
}

impl DualChannelObservation {
    /// Wraps externally acquired data.
    pub fn from_samples(times: Vec<f64>, x: Vec<f64>, xdot: Vec<f64>) -> Result<Self> {
        let obs = Self {
            times,
            x,
            xdot,
            sigma_x: 0.0,
            sigma_xdot: 0.0,
            scenario: None,
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if self.x.len() != n || self.xdot.len() != n {
            return Err(invalid("times, x and xdot must have equal length"));
        }
        if n < 2 {
            return Err(invalid("observation needs at least two samples"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("sample times must be strictly increasing"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `N` times the mean sample spacing.
    pub fn duration(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        (self.times[n - 1] - self.times[0]) * n as f64 / (n - 1) as f64
    }

    /// Sample rate when the times are equally spaced (to 1e-9 relative).
    pub fn uniform_rate(&self) -> Option<f64> {
        let n = self.len();
        if n < 2 {
            return None;
        }
        let span = self.times[n - 1] - self.times[0];
        let dt = span / (n - 1) as f64;
        let tol = 1e-9 * dt;
        let uniform = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= tol);
        uniform.then(|| (n - 1) as f64 / span)
    }
}

/// Noiseless dual-channel samples of `scenario` under `scheme`.
pub fn synthesize(scenario: &Scenario, scheme: &SamplingScheme) -> Result<DualChannelObservation> {
    scenario.validate()?;
    let times = scheme.sample_times()?;
    let x = times.iter().map(|&t| scenario.clean_signal(t)).collect();
    let xdot = times.iter().map(|&t| scenario.clean_derivative(t)).collect();
    Ok(DualChannelObservation {
        times,
        x,
        xdot,
        sigma_x: 0.0,
        sigma_xdot: 0.0,
        scenario: Some(scenario.clone()),
    })
}

/// Adds independent white Gaussian noise to both channels.
///
/// The x and ẋ streams come from two ChaCha streams of the same seed, so
/// they are independent and reproducible. Noise on an already noisy
/// observation accumulates in quadrature.
pub fn add_noise(
    obs: &DualChannelObservation,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<DualChannelObservation> {
    let sigma_xdot = noise.sigma_xdot(obs.scenario.as_ref())?;
    let mut out = obs.clone();
    if noise.sigma_x > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        for v in &mut out.x {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += noise.sigma_x * z;
        }
    }
    if sigma_xdot > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        for v in &mut out.xdot {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma_xdot * z;
        }
    }
    out.sigma_x = obs.sigma_x.hypot(noise.sigma_x);
    out.sigma_xdot = obs.sigma_xdot.hypot(sigma_xdot);
    Ok(out)
}

/// Per-tone linear SNR on each channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSnr {
    pub snr_x: f64,
    pub snr_xdot: f64,
}

/// `SNR_x = A²/(2σ_x²)`, `SNR_ẋ = (2πfA)²/(2σ_ẋ²)` for every tone.
pub fn snr_linear(scenario: &Scenario, noise: &NoiseConfig) -> Result<Vec<ChannelSnr>> {
    if noise.sigma_x == 0.0 {
        return Err(Error::ZeroNoise);
    }
    let sigma_xdot = noise.sigma_xdot(Some(scenario))?;
    let vx = 2.0 * noise.sigma_x * noise.sigma_x;
    let vd = 2.0 * sigma_xdot * sigma_xdot;
    Ok(scenario
        .tones
        .iter()
        .map(|t| {
            let b = t.derivative_amplitude();
            ChannelSnr {
                snr_x: t.amplitude * t.amplitude / vx,
                snr_xdot: b * b / vd,
            }
        })
        .collect())
}

/// Relative row weights for fitting both channels in one system.
///
/// With known noise the weights whiten each channel (`1/σ`), normalized so
/// the signal channel has weight 1. Noiseless data falls back to scaling
/// the derivative channel by `1/(2π f_fallback)` so both channels carry
/// comparable magnitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelWeights {
    pub x: f64,
    pub xdot: f64,
}

impl ChannelWeights {
    pub fn for_observation(obs: &DualChannelObservation, fallback_frequency: f64) -> Self {
        let (sx, sd) = (obs.sigma_x, obs.sigma_xdot);
        if sd.is_infinite() {
            return Self { x: 1.0, xdot: 0.0 };
        }
        if sx > 0.0 && sd > 0.0 {
            return Self {
                x: 1.0,
                xdot: sx / sd,
            };
        }
        Self {
            x: 1.0,
            xdot: 1.0 / (TAU * fallback_frequency),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tone(a: f64, f: f64, p: f64) -> ToneParams {
        ToneParams::new(a, f, p).unwrap()
    }

    #[test]
    fn wrap_phase_range() {
        for k in -20..20 {
            let p = wrap_phase(0.3 + k as f64 * TAU);
            assert!((p - 0.3).abs() < 1e-12);
        }
        assert_eq!(wrap_phase(PI), -PI);
        assert_eq!(wrap_phase(-PI), -PI);
    }

    #[test]
    fn synthesize_cos_zero_phase() {
        let s = Scenario::new(vec![tone(1.0, 100e6, 0.0)], 1e9, 0.0).unwrap();
        let scheme = SamplingScheme::UniformSubNyquist {
            sample_rate: 133e6,
            num_samples: 16,
        };
        let obs = synthesize(&s, &scheme).unwrap();
        assert_eq!(obs.x[0], 1.0);
        assert_eq!(obs.xdot[0], 0.0);
    }

    #[test]
    fn synthesize_quadrature_phase() {
        let f = 37.5e6;
        let s = Scenario::new(vec![tone(2.0, f, PI / 2.0)], 1e9, 0.0).unwrap();
        let scheme = SamplingScheme::UniformSubNyquist {
            sample_rate: 133e6,
            num_samples: 16,
        };
        let obs = synthesize(&s, &scheme).unwrap();
        assert!(obs.x[0].abs() < 1e-15);
        let expect = -2.0 * TAU * f;
        assert!((obs.xdot[0] - expect).abs() <= 1e-15 * expect.abs());
    }

    #[test]
    fn synthesize_rejects_bad_scenarios() {
        let empty = Scenario {
            tones: vec![],
            band_limit: 1e9,
            min_separation: 0.0,
        };
        let scheme = SamplingScheme::UniformSubNyquist {
            sample_rate: 1e8,
            num_samples: 16,
        };
        assert_eq!(synthesize(&empty, &scheme), Err(Error::EmptyScenario));
        let above = Scenario {
            tones: vec![tone(1.0, 1e9, 0.0)],
            band_limit: 1e9,
            min_separation: 0.0,
        };
        assert!(matches!(
            synthesize(&above, &scheme),
            Err(Error::ToneOutOfBand { .. })
        ));
    }

    #[test]
    fn random_undersampling_is_reproducible_subset() {
        let tones = (1..=5)
            .map(|k| tone(1.0, k as f64 * 130e6 + 7e6, 0.1 * k as f64))
            .collect();
        let s = Scenario::new(tones, 1e9, 0.0).unwrap();
        let scheme = SamplingScheme::RandomUndersampling {
            base_rate: 2e9,
            decimation: 10.0,
            num_samples: 256,
            seed: 7,
        };
        let a = synthesize(&s, &scheme).unwrap();
        let b = synthesize(&s, &scheme).unwrap();
        assert_eq!(a, b);
        assert!(a.times.windows(2).all(|w| w[1] > w[0]));
        for &t in &a.times {
            let idx = t * 2e9;
            assert!((idx - idx.round()).abs() < 1e-6);
            assert!(idx.round() < 2560.0);
        }
        assert!((scheme.compression_ratio(1e9) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_is_identity() {
        let s = Scenario::new(vec![tone(1.0, 10e6, 0.2)], 1e9, 0.0).unwrap();
        let scheme = SamplingScheme::UniformSubNyquist {
            sample_rate: 50e6,
            num_samples: 64,
        };
        let obs = synthesize(&s, &scheme).unwrap();
        let cfg = NoiseConfig {
            sigma_x: 0.0,
            convention: NoiseConvention::EqualSnr,
            reference_frequency: None,
        };
        let noisy = add_noise(&obs, &cfg, 99).unwrap();
        assert_eq!(noisy.x, obs.x);
        assert_eq!(noisy.xdot, obs.xdot);
    }

    #[test]
    fn equal_snr_sigma_xdot() {
        let cfg = NoiseConfig {
            sigma_x: 0.1,
            convention: NoiseConvention::EqualSnr,
            reference_frequency: Some(100e6),
        };
        let sd = cfg.sigma_xdot(None).unwrap();
        assert!((sd - TAU * 1e8 * 0.1).abs() < 1e-6);
        assert!((sd - 6.2832e7).abs() / 6.2832e7 < 1e-4);
    }

    #[test]
    fn snr_examples() {
        let s = Scenario::new(vec![tone(1.0, 100e6, 0.0)], 1e9, 0.0).unwrap();
        let unit = NoiseConfig {
            sigma_x: 1.0,
            convention: NoiseConvention::EqualVariance,
            reference_frequency: None,
        };
        assert_eq!(snr_linear(&s, &unit).unwrap()[0].snr_x, 0.5);

        let eq_snr = NoiseConfig {
            sigma_x: 0.1,
            convention: NoiseConvention::EqualSnr,
            reference_frequency: Some(100e6),
        };
        let v = snr_linear(&s, &eq_snr).unwrap()[0];
        assert!((v.snr_x - 50.0).abs() < 1e-9);
        assert!((v.snr_xdot - 50.0).abs() < 1e-9);

        let eq_var = NoiseConfig {
            convention: NoiseConvention::EqualVariance,
            ..eq_snr
        };
        let v = snr_linear(&s, &eq_var).unwrap()[0];
        let ratio = v.snr_xdot / v.snr_x;
        assert!((ratio - (TAU * 1e8).powi(2)).abs() / ratio < 1e-12);
        assert!((ratio - 3.948e17).abs() / 3.948e17 < 1e-3);

        let silent = NoiseConfig {
            sigma_x: 0.0,
            ..unit
        };
        assert_eq!(snr_linear(&s, &silent), Err(Error::ZeroNoise));
    }

    #[test]
    fn default_reference_frequency_single_tone() {
        let s = Scenario::new(vec![tone(3.0, 42e6, 0.0)], 1e9, 0.0).unwrap();
        let cfg = NoiseConfig {
            sigma_x: 1.0,
            convention: NoiseConvention::EqualSnr,
            reference_frequency: None,
        };
        assert!((cfg.resolved_reference_frequency(Some(&s)).unwrap() - 42e6).abs() < 1e-6);
    }

    #[test]
    fn uniform_rate_detection() {
        let obs = DualChannelObservation::from_samples(
            (0..32).map(|n| n as f64 / 133e6).collect(),
            vec![0.0; 32],
            vec![0.0; 32],
        )
        .unwrap();
        assert!((obs.uniform_rate().unwrap() - 133e6).abs() < 1e-3);
        let mut t: Vec<f64> = (0..32).map(|n| n as f64).collect();
        t[5] = 5.5;
        let obs = DualChannelObservation::from_samples(t, vec![0.0; 32], vec![0.0; 32]).unwrap();
        assert!(obs.uniform_rate().is_none());
    }
}
