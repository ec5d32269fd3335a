//! Dual-channel amplitude-ratio estimator.
//!
//! Uniform sub-Nyquist route:
//!
//! 1. Matrix pencil on the signal channel: Hankel matrix, truncated SVD to
//!    rank `2K`, shift-invariance eigenproblem. Root angles give aliased
//!    frequencies in `(0, fs/2)`.
//! 2. Shared support: both channels are fit by linear least squares on the
//!    same aliased frequencies, giving `Â` and `B̂` per component.
//! 3. `R̂ = Â/B̂` and the coarse frequency `1/(2πR̂)` select the Nyquist fold.
//! 4. Optional Gauss-Newton refinement of `(A, f, φ)` for all tones jointly
//!    over both channels.
//!
//! Random undersampling has no fold ambiguity; a greedy periodogram and
//! deflation route is used instead (see [`estimate_nonuniform`]).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::channel_mean_gradients;
use crate::error::{invalid, Error, Result};
use crate::linalg::{
    coeffs_to_amp_phase, dominant_subspace, full_subspace, least_squares, least_squares_multi,
    tone_basis,
};
use crate::signal::{wrap_phase, ChannelWeights, DualChannelObservation, ToneParams};

const SKETCH_OVERSAMPLE: usize = 8;
const SKETCH_POWER_ITERS: usize = 2;
const FIT_RCOND: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOrder {
    /// Number of real tones.
    Fixed(usize),
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub model_order: ModelOrder,
    /// Hankel rows as a fraction of `N`.
    pub pencil_ratio: f64,
    /// Singular values below `sv_threshold · s₀` count as zero.
    pub sv_threshold: f64,
    /// Auto order needs `s_{2K−1}/s_{2K}` at least this large.
    pub min_gap_ratio: f64,
    pub refine_iters: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            model_order: ModelOrder::Auto,
            pencil_ratio: 1.0 / 3.0,
            sv_threshold: 1e-8,
            min_gap_ratio: 4.0,
            refine_iters: 3,
        }
    }
}

impl EstimatorConfig {
    pub fn with_order(tones: usize) -> Self {
        Self {
            model_order: ModelOrder::Fixed(tones),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pencil_ratio > 0.0 && self.pencil_ratio < 1.0) {
            return Err(invalid("pencil_ratio must lie in (0, 1)"));
        }
        if !(self.sv_threshold >= 0.0 && self.sv_threshold < 1.0) {
            return Err(invalid("sv_threshold must lie in [0, 1)"));
        }
        if !(self.min_gap_ratio >= 1.0) {
            return Err(invalid("min_gap_ratio must be at least 1"));
        }
        if self.model_order == ModelOrder::Fixed(0) {
            return Err(invalid("model order must be positive"));
        }
        Ok(())
    }
}

/// One aliased line fit on both channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AliasedComponent {
    pub alias_frequency: f64,
    pub amp_x: f64,
    pub amp_xdot: f64,
    pub phase_x: f64,
    pub phase_xdot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedTone {
    pub frequency: f64,
    pub amplitude: f64,
    pub phase: f64,
    /// `Â/B̂` in seconds per radian.
    pub ratio: f64,
    /// Coarse frequency `1/(2πR̂)`.
    pub f_ratio: f64,
    pub alias_frequency: f64,
    pub fold_index: u32,
    pub mirror: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToneFailure {
    pub alias_frequency: f64,
    pub error: Error,
}

/// Successful tones plus per-component failures.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SngemEstimate {
    pub tones: Vec<EstimatedTone>,
    pub failures: Vec<ToneFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub ratio: f64,
    pub f_ratio: f64,
}

/// `R̂ = Â/B̂` and `f = 1/(2πR̂)`.
pub fn ratio_frequency(comp: &AliasedComponent) -> Result<RatioEstimate> {
    ratio_from_amplitudes(comp.amp_x, comp.amp_xdot)
}

fn ratio_from_amplitudes(amp_x: f64, amp_xdot: f64) -> Result<RatioEstimate> {
    if !(amp_xdot >= 1e3 * f64::EPSILON * amp_x) || !(amp_x > 0.0) {
        return Err(Error::DegenerateFit { amp_x, amp_xdot });
    }
    let ratio = amp_x / amp_xdot;
    Ok(RatioEstimate {
        ratio,
        f_ratio: 1.0 / (TAU * ratio),
    })
}

/// Position of a frequency relative to the uniform sampling folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Unfolded {
    pub frequency: f64,
    pub fold_index: u32,
    pub mirror: bool,
}

/// Alias of `frequency` in `[0, fs/2]` with its fold index and mirror flag.
pub fn fold(frequency: f64, fs: f64) -> (f64, Unfolded) {
    let m = (frequency / fs).round();
    let alias = (frequency - m * fs).abs();
    (
        alias,
        Unfolded {
            frequency,
            fold_index: m as u32,
            mirror: frequency < m * fs,
        },
    )
}

/// Picks the fold candidate `m·fs ± f_alias` in `(0, band_limit]` nearest to
/// the coarse estimate `f_ratio`; ties go to the smaller frequency.
///
/// With `coarse_sigma > 0`, fails when the nearest candidates below and
/// above `f_ratio` both sit within `3·coarse_sigma` of it.
pub fn unfold(
    f_ratio: f64,
    alias_frequency: f64,
    fs: f64,
    band_limit: f64,
    coarse_sigma: f64,
) -> Result<Unfolded> {
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(invalid("sample rate must be positive"));
    }
    if !(f_ratio > 0.0 && f_ratio.is_finite()) {
        return Err(invalid("coarse frequency must be positive"));
    }
    let half = 0.5 * fs;
    if !(alias_frequency >= 0.0 && alias_frequency <= half * (1.0 + 1e-12)) {
        return Err(invalid("alias frequency must lie in [0, fs/2]"));
    }
    let alias = alias_frequency.min(half);
    let m_max = (band_limit / fs).floor() as u32 + 1;
    let mut candidates: Vec<Unfolded> = Vec::new();
    for m in 0..=m_max {
        let base = m as f64 * fs;
        let up = base + alias;
        if up > 0.0 && up <= band_limit {
            candidates.push(Unfolded {
                frequency: up,
                fold_index: m,
                mirror: false,
            });
        }
        if m > 0 {
            let down = base - alias;
            if down > 0.0 && down <= band_limit && down != up {
                candidates.push(Unfolded {
                    frequency: down,
                    fold_index: m,
                    mirror: true,
                });
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::NoFoldCandidate);
    }
    candidates.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    candidates.dedup_by(|b, a| a.frequency == b.frequency);

    let mut best = candidates[0];
    for c in &candidates[1..] {
        // Strict comparison keeps the smaller frequency on ties.
        if (c.frequency - f_ratio).abs() < (best.frequency - f_ratio).abs() {
            best = *c;
        }
    }

    if coarse_sigma > 0.0 {
        let band = 3.0 * coarse_sigma;
        let below = candidates.iter().rev().find(|c| c.frequency <= f_ratio);
        let above = candidates.iter().find(|c| c.frequency > f_ratio);
        if let (Some(lo), Some(hi)) = (below, above) {
            if f_ratio - lo.frequency <= band && hi.frequency - f_ratio <= band {
                return Err(Error::FoldAmbiguity {
                    f_ratio,
                    below: lo.frequency,
                    above: hi.frequency,
                });
            }
        }
    }
    Ok(best)
}

struct AliasedFit {
    fs: f64,
    components: Vec<AliasedComponent>,
    /// Residual variance of the signal-channel fit.
    noise_var_x: f64,
}

/// Largest even-index singular-value gap above the floor.
fn auto_order(sv: &[f64], max_rank: usize, cfg: &EstimatorConfig) -> Result<usize> {
    let s0 = sv.first().copied().unwrap_or(0.0);
    if !(s0 > 0.0) {
        return Err(Error::OrderEstimation(format!("signal is identically zero")));
    }
    let mut best: Option<(usize, f64)> = None;
    let mut k = 1;
    while 2 * k < sv.len() && 2 * k <= max_rank {
        let r = 2 * k;
        if sv[r - 1] < cfg.sv_threshold * s0 {
            break;
        }
        let gap = if sv[r] > 0.0 {
            sv[r - 1] / sv[r]
        } else {
            f64::INFINITY
        };
        if best.map_or(true, |(_, g)| gap > g) {
            best = Some((k, gap));
        }
        k += 1;
    }
    let (k, gap) = best.ok_or_else(|| {
        Error::OrderEstimation(format!("no singular values above the threshold"))
    })?;
    if gap < cfg.min_gap_ratio {
        return Err(Error::OrderEstimation(format!(
            "largest singular-value gap {gap:.3} is below {}",
            cfg.min_gap_ratio
        )));
    }
    Ok(k)
}

fn aliased_fit(obs: &DualChannelObservation, cfg: &EstimatorConfig) -> Result<AliasedFit> {
    obs.validate()?;
    cfg.validate()?;
    let fs = obs.uniform_rate().ok_or(Error::NonUniformInput)?;
    let n = obs.len();
    let l = (cfg.pencil_ratio * n as f64).round() as usize;
    if l < 3 || l + 2 > n {
        return Err(invalid("pencil_ratio gives a degenerate Hankel matrix"));
    }
    let h = DMatrix::from_fn(l, n - l + 1, |i, j| obs.x[i + j]);

    let (basis, k) = match cfg.model_order {
        ModelOrder::Fixed(k) => {
            if l < 2 * k + 1 || n < 4 * k + 2 {
                return Err(invalid(format!(
                    "N = {n} with {l} pencil rows cannot resolve {k} tones"
                )));
            }
            let sub = dominant_subspace(&h, 2 * k, SKETCH_OVERSAMPLE, SKETCH_POWER_ITERS);
            let sv = &sub.singular_values;
            if !(sv[0] > 0.0) {
                return Err(Error::OrderEstimation(format!("signal is identically zero")));
            }
            if sv[2 * k - 1] <= cfg.sv_threshold * sv[0] {
                return Err(Error::AliasCollision(format!(
                    "signal subspace rank is below {} (coincident aliases)",
                    2 * k
                )));
            }
            (sub.basis, k)
        }
        ModelOrder::Auto => {
            let sub = full_subspace(&h);
            let k = auto_order(&sub.singular_values, (l - 1).min(n / 2 - 1), cfg)?;
            (sub.basis.columns(0, 2 * k).into_owned(), k)
        }
    };

    let u1 = basis.rows(0, l - 1).into_owned();
    let u2 = basis.rows(1, l - 1).into_owned();
    let phi = least_squares_multi(&u1, &u2, 1e-12).ok_or_else(|| {
        Error::AliasCollision(format!("shift-invariance system is rank deficient"))
    })?;
    let roots = phi.complex_eigenvalues();
    let mut aliases: Vec<f64> = roots
        .iter()
        .filter(|z| z.im > 0.0)
        .map(|z| z.im.atan2(z.re) * fs / TAU)
        .collect();
    if aliases.len() != k {
        return Err(Error::AliasCollision(format!(
            "{} of {k} pencil roots off the real axis (component at 0 or fs/2)",
            aliases.len()
        )));
    }
    aliases.sort_by(f64::total_cmp);

    let a = tone_basis(&obs.times, &aliases);
    let mut rhs = DMatrix::zeros(n, 2);
    rhs.column_mut(0).copy_from_slice(&obs.x);
    rhs.column_mut(1).copy_from_slice(&obs.xdot);
    let coef = least_squares_multi(&a, &rhs, FIT_RCOND).ok_or_else(|| {
        Error::AliasCollision(format!("aliased frequencies too close to separate"))
    })?;
    let fitted = &a * &coef;
    let rss: f64 = (0..n).map(|i| (obs.x[i] - fitted[(i, 0)]).powi(2)).sum();
    let dof = n.saturating_sub(2 * k).max(1);

    let components = aliases
        .iter()
        .enumerate()
        .map(|(j, &alias_frequency)| {
            let (amp_x, phase_x) = coeffs_to_amp_phase(coef[(2 * j, 0)], coef[(2 * j + 1, 0)]);
            let (amp_xdot, phase_xdot) =
                coeffs_to_amp_phase(coef[(2 * j, 1)], coef[(2 * j + 1, 1)]);
            AliasedComponent {
                alias_frequency,
                amp_x,
                amp_xdot,
                phase_x,
                phase_xdot,
            }
        })
        .collect();
    Ok(AliasedFit {
        fs,
        components,
        noise_var_x: rss / dof as f64,
    })
}

/// Aliased line spectrum of a uniformly sampled observation, fit on both
/// channels over a shared support. Sorted by alias frequency.
pub fn estimate_aliased_spectrum(
    obs: &DualChannelObservation,
    cfg: &EstimatorConfig,
) -> Result<Vec<AliasedComponent>> {
    aliased_fit(obs, cfg).map(|fit| fit.components)
}

fn coarse_sigma(f_ratio: f64, amp_x: f64, noise_var: f64, n: usize) -> f64 {
    if noise_var > 0.0 {
        let snr = amp_x * amp_x / (2.0 * noise_var);
        f_ratio * (2.0 / (n as f64 * snr)).sqrt()
    } else {
        0.0
    }
}

/// Full pipeline: line spectrum, amplitude ratio, fold selection, joint
/// refinement. Output is sorted by frequency.
pub fn estimate(
    obs: &DualChannelObservation,
    cfg: &EstimatorConfig,
    band_limit: f64,
) -> Result<SngemEstimate> {
    if !(band_limit > 0.0 && band_limit.is_finite()) {
        return Err(invalid("band_limit must be positive"));
    }
    obs.validate()?;
    match obs.uniform_rate() {
        Some(_) => estimate_uniform(obs, cfg, band_limit),
        None => {
            let direct = estimate_nonuniform(obs, cfg, band_limit)?;
            let tones = direct
                .components
                .into_iter()
                .map(|c| EstimatedTone {
                    frequency: c.frequency,
                    amplitude: c.amp_x,
                    phase: c.phase_x,
                    ratio: c.ratio,
                    f_ratio: c.f_ratio,
                    alias_frequency: c.frequency,
                    fold_index: 0,
                    mirror: false,
                })
                .collect();
            Ok(SngemEstimate {
                tones,
                failures: Vec::new(),
            })
        }
    }
}

fn estimate_uniform(
    obs: &DualChannelObservation,
    cfg: &EstimatorConfig,
    band_limit: f64,
) -> Result<SngemEstimate> {
    let fit = aliased_fit(obs, cfg)?;
    let n = obs.len();
    let mut failures = Vec::new();
    let mut folds: Vec<Unfolded> = Vec::new();
    for comp in &fit.components {
        let attempt = ratio_frequency(comp).and_then(|r| {
            let sigma = coarse_sigma(r.f_ratio, comp.amp_x, fit.noise_var_x, n);
            unfold(r.f_ratio, comp.alias_frequency, fit.fs, band_limit, sigma)
        });
        match attempt {
            Ok(u) => folds.push(u),
            Err(error) => failures.push(ToneFailure {
                alias_frequency: comp.alias_frequency,
                error,
            }),
        }
    }
    if folds.is_empty() {
        return Ok(SngemEstimate {
            tones: Vec::new(),
            failures,
        });
    }

    // Amplitudes and phases at the unfolded frequencies. On the sampling
    // grid these columns equal the aliased ones up to sign.
    let freqs: Vec<f64> = folds.iter().map(|u| u.frequency).collect();
    let mut tones = fit_channels(obs, &freqs)
        .ok_or_else(|| Error::AliasCollision(format!("unfolded tones are not separable")))?
        .into_iter()
        .zip(&freqs)
        .map(|(ch, &f)| ToneParams {
            amplitude: ch.amp_x.max(f64::MIN_POSITIVE),
            frequency: f,
            phase: ch.phase_x,
        })
        .collect::<Vec<_>>();

    if cfg.refine_iters > 0 {
        let weights = ChannelWeights::for_observation(obs, rms(&freqs));
        refine_joint(
            &obs.times,
            &obs.x,
            &obs.xdot,
            weights,
            &mut tones,
            cfg.refine_iters,
        );
    }

    let refined: Vec<f64> = tones.iter().map(|t| t.frequency).collect();
    let channels = fit_channels(obs, &refined)
        .ok_or_else(|| Error::AliasCollision(format!("refined tones are not separable")))?;

    let mut out = Vec::with_capacity(tones.len());
    for ((tone, fold_info), ch) in tones.iter().zip(&folds).zip(&channels) {
        match ratio_from_amplitudes(ch.amp_x, ch.amp_xdot) {
            Ok(r) => {
                let base = fold_info.fold_index as f64 * fit.fs;
                let alias = if fold_info.mirror {
                    base - tone.frequency
                } else {
                    tone.frequency - base
                };
                out.push(EstimatedTone {
                    frequency: tone.frequency,
                    amplitude: tone.amplitude,
                    phase: wrap_phase(tone.phase),
                    ratio: r.ratio,
                    f_ratio: r.f_ratio,
                    alias_frequency: alias.abs(),
                    fold_index: fold_info.fold_index,
                    mirror: fold_info.mirror,
                })
            }
            Err(error) => failures.push(ToneFailure {
                alias_frequency: fold(tone.frequency, fit.fs).0,
                error,
            }),
        }
    }
    out.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    Ok(SngemEstimate {
        tones: out,
        failures,
    })
}

fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Per-channel amplitude and phase at known frequencies.
#[derive(Debug, Clone, Copy)]
struct ChannelFit {
    amp_x: f64,
    phase_x: f64,
    amp_xdot: f64,
    phase_xdot: f64,
}

fn fit_channels(obs: &DualChannelObservation, freqs: &[f64]) -> Option<Vec<ChannelFit>> {
    let n = obs.len();
    let a = tone_basis(&obs.times, freqs);
    let mut rhs = DMatrix::zeros(n, 2);
    rhs.column_mut(0).copy_from_slice(&obs.x);
    rhs.column_mut(1).copy_from_slice(&obs.xdot);
    let coef = least_squares_multi(&a, &rhs, FIT_RCOND)?;
    Some(
        (0..freqs.len())
            .map(|j| {
                let (amp_x, phase_x) = coeffs_to_amp_phase(coef[(2 * j, 0)], coef[(2 * j + 1, 0)]);
                let (amp_xdot, phase_xdot) =
                    coeffs_to_amp_phase(coef[(2 * j, 1)], coef[(2 * j + 1, 1)]);
                ChannelFit {
                    amp_x,
                    phase_x,
                    amp_xdot,
                    phase_xdot,
                }
            })
            .collect(),
    )
}

fn weighted_cost(
    times: &[f64],
    x: &[f64],
    xdot: &[f64],
    w: ChannelWeights,
    tones: &[ToneParams],
) -> f64 {
    let mut cost = 0.0;
    for (i, &t) in times.iter().enumerate() {
        let (mut mx, mut md) = (0.0, 0.0);
        for tone in tones {
            mx += tone.value_at(t);
            md += tone.derivative_at(t);
        }
        cost += (w.x * (x[i] - mx)).powi(2) + (w.xdot * (xdot[i] - md)).powi(2);
    }
    cost
}

/// Damped Gauss-Newton on `(A, f, φ)` of every tone over both channels.
///
/// Steps that do not lower the weighted residual are halved up to eight
/// times; refinement stops at the first rejected step.
pub(crate) fn refine_joint(
    times: &[f64],
    x: &[f64],
    xdot: &[f64],
    w: ChannelWeights,
    tones: &mut [ToneParams],
    iters: usize,
) {
    let n = times.len();
    let p = 3 * tones.len();
    let mut cost = weighted_cost(times, x, xdot, w, tones);
    for _ in 0..iters {
        let mut jac = DMatrix::zeros(2 * n, p);
        let mut resid = DVector::zeros(2 * n);
        for (i, &t) in times.iter().enumerate() {
            let (mut mx, mut md) = (0.0, 0.0);
            for (k, tone) in tones.iter().enumerate() {
                mx += tone.value_at(t);
                md += tone.derivative_at(t);
                let (gx, gd) = channel_mean_gradients(tone, t);
                for q in 0..3 {
                    jac[(i, 3 * k + q)] = w.x * gx[q];
                    jac[(n + i, 3 * k + q)] = w.xdot * gd[q];
                }
            }
            resid[i] = w.x * (x[i] - mx);
            resid[n + i] = w.xdot * (xdot[i] - md);
        }
        let Some(delta) = least_squares(&jac, &resid, 1e-14) else {
            break;
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let candidate: Vec<ToneParams> = tones
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    let mut a = t.amplitude + step * delta[3 * k];
                    let mut phase = t.phase + step * delta[3 * k + 2];
                    if a < 0.0 {
                        a = -a;
                        phase += PI;
                    }
                    ToneParams {
                        amplitude: a,
                        frequency: t.frequency + step * delta[3 * k + 1],
                        phase: wrap_phase(phase),
                    }
                })
                .collect();
            if candidate.iter().any(|t| !(t.frequency > 0.0)) {
                step *= 0.5;
                continue;
            }
            let c = weighted_cost(times, x, xdot, w, &candidate);
            if c <= cost {
                tones.copy_from_slice(&candidate);
                cost = c;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || cost == 0.0 {
            break;
        }
    }
}

/// Tone found directly (no folding) from randomly undersampled data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectComponent {
    pub frequency: f64,
    pub amp_x: f64,
    pub amp_xdot: f64,
    pub phase_x: f64,
    pub phase_xdot: f64,
    /// `NaN` when the derivative-channel amplitude is degenerate.
    pub ratio: f64,
    pub f_ratio: f64,
    /// Coarse ratio frequency disagrees with `frequency` beyond 3σ.
    pub ratio_flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NonuniformEstimate {
    pub components: Vec<DirectComponent>,
    /// Extraction stopped at the noise floor before reaching the model order.
    pub below_noise_floor: bool,
}

/// `|Σ r_n e^{−i2π f_j t_n}|²` on `f_j = j·df`, `j = 1..=len`.
fn periodogram(times: &[f64], values: &[f64], df: f64, len: usize) -> Vec<f64> {
    const RESYNC: usize = 256;
    let mut re = vec![0.0; len];
    let mut im = vec![0.0; len];
    for (&t, &v) in times.iter().zip(values) {
        let w = TAU * df * t;
        let (rs, rc) = w.sin_cos();
        let (mut s, mut c) = (rs, rc);
        for j in 0..len {
            if j % RESYNC == 0 {
                let (ss, cc) = (w * (j + 1) as f64).sin_cos();
                s = ss;
                c = cc;
            }
            re[j] += v * c;
            im[j] -= v * s;
            let nc = c * rc - s * rs;
            s = s * rc + c * rs;
            c = nc;
        }
    }
    re.iter().zip(&im).map(|(a, b)| a * a + b * b).collect()
}

/// Greedy periodogram peak picking with Gauss-Newton refinement and
/// deflation, for randomly undersampled observations.
///
/// The fold-free frequency comes straight from the refined fit; the
/// amplitude ratio is kept only as a consistency diagnostic.
pub fn estimate_nonuniform(
    obs: &DualChannelObservation,
    cfg: &EstimatorConfig,
    band_limit: f64,
) -> Result<NonuniformEstimate> {
    obs.validate()?;
    cfg.validate()?;
    let n = obs.len();
    let duration = obs.duration();
    if !(duration > 0.0) {
        return Err(invalid("observation has zero duration"));
    }
    let df = 1.0 / (4.0 * duration);
    let grid_len = (band_limit / df).floor() as usize;
    if grid_len < 3 {
        return Err(Error::GridExhausted);
    }
    let max_tones = match cfg.model_order {
        ModelOrder::Fixed(k) => k,
        ModelOrder::Auto => (n / 4).max(1),
    };
    let weights = ChannelWeights::for_observation(obs, 0.5 * band_limit);
    let floor = (grid_len as f64).ln() + 6.0;
    let energy0: f64 = obs.x.iter().map(|v| v * v).sum();
    let noise_power = n as f64 * obs.sigma_x * obs.sigma_x;

    let mut tones: Vec<ToneParams> = Vec::new();
    let mut rx = obs.x.clone();
    let mut rd = obs.xdot.clone();
    let mut below_noise_floor = false;
    while tones.len() < max_tones {
        let residual_energy: f64 = rx.iter().map(|v| v * v).sum();
        if obs.sigma_x == 0.0 && residual_energy <= 1e-24 * energy0 {
            below_noise_floor = true;
            break;
        }
        let power = periodogram(&obs.times, &rx, df, grid_len);
        let peak = (0..grid_len)
            .filter(|&j| {
                let f = (j + 1) as f64 * df;
                tones.iter().all(|t| (t.frequency - f).abs() > df)
            })
            .max_by(|&a, &b| power[a].total_cmp(&power[b]));
        let Some(j) = peak else {
            return Err(Error::GridExhausted);
        };
        if noise_power > 0.0 && power[j] / noise_power < floor {
            below_noise_floor = true;
            break;
        }
        let mut f0 = (j + 1) as f64 * df;
        if j > 0 && j + 1 < grid_len {
            let (a, b, c) = (power[j - 1], power[j], power[j + 1]);
            let den = a - 2.0 * b + c;
            if den < 0.0 {
                f0 += df * (0.5 * (a - c) / den).clamp(-0.5, 0.5);
            }
        }
        let basis = tone_basis(&obs.times, &[f0]);
        let coef = least_squares(&basis, &DVector::from_column_slice(&rx), FIT_RCOND)
            .ok_or(Error::GridExhausted)?;
        let (a0, p0) = coeffs_to_amp_phase(coef[0], coef[1]);
        let mut single = [ToneParams {
            amplitude: a0.max(f64::MIN_POSITIVE),
            frequency: f0,
            phase: p0,
        }];
        refine_joint(
            &obs.times,
            &rx,
            &rd,
            weights,
            &mut single,
            cfg.refine_iters.max(8),
        );
        tones.push(single[0]);

        // Re-fit every found tone jointly so deflation does not accumulate
        // leakage from earlier picks.
        let freqs: Vec<f64> = tones.iter().map(|t| t.frequency).collect();
        if let Some(chs) = fit_channels(obs, &freqs) {
            for (t, ch) in tones.iter_mut().zip(&chs) {
                t.amplitude = ch.amp_x.max(f64::MIN_POSITIVE);
                t.phase = ch.phase_x;
            }
        }
        for (i, &t) in obs.times.iter().enumerate() {
            rx[i] = obs.x[i] - tones.iter().map(|tone| tone.value_at(t)).sum::<f64>();
            rd[i] = obs.xdot[i] - tones.iter().map(|tone| tone.derivative_at(t)).sum::<f64>();
        }
    }

    if tones.is_empty() {
        return Ok(NonuniformEstimate {
            components: Vec::new(),
            below_noise_floor,
        });
    }
    if cfg.refine_iters > 0 {
        refine_joint(
            &obs.times,
            &obs.x,
            &obs.xdot,
            weights,
            &mut tones,
            cfg.refine_iters,
        );
    }
    let freqs: Vec<f64> = tones.iter().map(|t| t.frequency).collect();
    let chs = fit_channels(obs, &freqs)
        .ok_or_else(|| Error::AliasCollision(format!("extracted tones are not separable")))?;
    let noise_var = {
        let rss: f64 = obs
            .times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let m: f64 = chs
                    .iter()
                    .zip(&freqs)
                    .map(|(ch, &f)| ch.amp_x * (TAU * f * t + ch.phase_x).cos())
                    .sum();
                (obs.x[i] - m).powi(2)
            })
            .sum();
        rss / n.saturating_sub(3 * tones.len()).max(1) as f64
    };
    let mut components: Vec<DirectComponent> = tones
        .iter()
        .zip(&chs)
        .map(|(tone, ch)| {
            let (ratio, f_ratio, flagged) = match ratio_from_amplitudes(ch.amp_x, ch.amp_xdot) {
                Ok(r) => {
                    let sigma = coarse_sigma(r.f_ratio, ch.amp_x, noise_var, n);
                    let off = (r.f_ratio - tone.frequency).abs();
                    let flagged = if sigma > 0.0 {
                        off > 3.0 * sigma
                    } else {
                        off > 1e-6 * tone.frequency
                    };
                    (r.ratio, r.f_ratio, flagged)
                }
                Err(_) => (f64::NAN, f64::NAN, true),
            };
            DirectComponent {
                frequency: tone.frequency,
                amp_x: ch.amp_x,
                amp_xdot: ch.amp_xdot,
                phase_x: ch.phase_x,
                phase_xdot: ch.phase_xdot,
                ratio,
                f_ratio,
                ratio_flagged: flagged,
            }
        })
        .collect();
    components.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    Ok(NonuniformEstimate {
        components,
        below_noise_floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synthesize, SamplingScheme, Scenario};

    fn uniform_obs(tones: &[(f64, f64, f64)], fs: f64, n: usize) -> DualChannelObservation {
        let tones = tones
            .iter()
            .map(|&(a, f, p)| ToneParams::new(a, f, p).unwrap())
            .collect();
        let s = Scenario::new(tones, 1e9, 0.0).unwrap();
        synthesize(
            &s,
            &SamplingScheme::UniformSubNyquist {
                sample_rate: fs,
                num_samples: n,
            },
        )
        .unwrap()
    }

    #[test]
    fn single_tone_alias_and_amplitudes() {
        let obs = uniform_obs(&[(1.0, 100e6, 0.4)], 133e6, 512);
        let comps = estimate_aliased_spectrum(&obs, &EstimatorConfig::with_order(1)).unwrap();
        assert_eq!(comps.len(), 1);
        let c = comps[0];
        assert!((c.alias_frequency - 33e6).abs() / 33e6 < 1e-10);
        assert!((c.amp_x - 1.0).abs() < 1e-10);
        assert!((c.amp_xdot - TAU * 1e8).abs() / (TAU * 1e8) < 1e-10);
        // Mirror fold: the derivative lags by a quarter period.
        let quad = wrap_phase(c.phase_xdot - c.phase_x + PI / 2.0);
        assert!(quad.abs() < 1e-9);
        let direct = estimate_aliased_spectrum(
            &uniform_obs(&[(1.0, 166e6, 0.4)], 133e6, 512),
            &EstimatorConfig::with_order(1),
        )
        .unwrap()[0];
        assert!(wrap_phase(direct.phase_xdot - direct.phase_x - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn coincident_aliases_are_a_collision() {
        let obs = uniform_obs(&[(1.0, 33e6, 0.1), (1.0, 166e6, 1.2)], 133e6, 512);
        let err = estimate_aliased_spectrum(&obs, &EstimatorConfig::with_order(2)).unwrap_err();
        assert!(matches!(err, Error::AliasCollision(_)), "{err:?}");
    }

    #[test]
    fn nonuniform_input_rejected_by_pencil() {
        let s = Scenario::new(vec![ToneParams::new(1.0, 1e8, 0.0).unwrap()], 1e9, 0.0).unwrap();
        let obs = synthesize(
            &s,
            &SamplingScheme::RandomUndersampling {
                base_rate: 2e9,
                decimation: 10.0,
                num_samples: 64,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(
            estimate_aliased_spectrum(&obs, &EstimatorConfig::with_order(1)),
            Err(Error::NonUniformInput)
        );
    }

    #[test]
    fn ratio_examples() {
        let c = AliasedComponent {
            alias_frequency: 0.0,
            amp_x: 1.0,
            amp_xdot: TAU * 1e8,
            phase_x: 0.0,
            phase_xdot: 0.0,
        };
        let r = ratio_frequency(&c).unwrap();
        assert!((r.ratio - 1.591549e-9).abs() < 1e-15);
        assert!((r.f_ratio - 1e8).abs() < 1e-6);
        let unit = AliasedComponent { amp_xdot: 1.0, ..c };
        assert!((ratio_frequency(&unit).unwrap().f_ratio - 1.0 / TAU).abs() < 1e-15);
        let flat = AliasedComponent { amp_xdot: 1e-14, ..c };
        assert!(matches!(
            ratio_frequency(&flat),
            Err(Error::DegenerateFit { .. })
        ));
    }

    #[test]
    fn unfold_examples() {
        let u = unfold(98e6, 33e6, 133e6, 1e9, 0.0).unwrap();
        assert_eq!(u.frequency, 100e6);
        assert_eq!(u.fold_index, 1);
        assert!(u.mirror);
        let u = unfold(33e6, 33e6, 133e6, 1e9, 0.0).unwrap();
        assert_eq!(u.frequency, 33e6);
        assert_eq!(u.fold_index, 0);
        assert!(!u.mirror);
    }

    #[test]
    fn unfold_ties_prefer_smaller_and_ambiguity_is_reported() {
        // Candidates 33 and 100 MHz; midpoint 66.5 MHz.
        let u = unfold(66.5e6, 33e6, 133e6, 1e9, 0.0).unwrap();
        assert_eq!(u.frequency, 33e6);
        assert!(matches!(
            unfold(66.5e6, 33e6, 133e6, 1e9, 20e6),
            Err(Error::FoldAmbiguity { .. })
        ));
        assert!(unfold(66.5e6, 33e6, 133e6, 1e9, 5e6).is_ok());
        assert_eq!(unfold(5e6, 40e6, 133e6, 10e6, 0.0), Err(Error::NoFoldCandidate));
    }

    #[test]
    fn fold_roundtrip() {
        let (alias, u) = fold(100e6, 133e6);
        assert!((alias - 33e6).abs() < 1e-6);
        assert_eq!((u.fold_index, u.mirror), (1, true));
        let back = unfold(101e6, alias, 133e6, 1e9, 0.0).unwrap();
        assert!((back.frequency - 100e6).abs() < 1e-6);
    }

    #[test]
    fn noise_only_auto_order_never_fabricates() {
        use crate::signal::{add_noise, NoiseConfig, NoiseConvention};
        let s = Scenario::new(vec![ToneParams::new(1.0, 1e8, 0.0).unwrap()], 1e9, 0.0).unwrap();
        let mut obs = synthesize(
            &s,
            &SamplingScheme::UniformSubNyquist {
                sample_rate: 133e6,
                num_samples: 256,
            },
        )
        .unwrap();
        obs.x.iter_mut().for_each(|v| *v = 0.0);
        obs.xdot.iter_mut().for_each(|v| *v = 0.0);
        let noisy = add_noise(
            &obs,
            &NoiseConfig {
                sigma_x: 1.0,
                convention: NoiseConvention::EqualVariance,
                reference_frequency: None,
            },
            5,
        )
        .unwrap();
        match estimate(&noisy, &EstimatorConfig::default(), 1e9) {
            Ok(est) => assert!(est.tones.is_empty()),
            Err(e) => assert!(matches!(e, Error::OrderEstimation(_)), "{e:?}"),
        }
    }

    #[test]
    fn auto_order_finds_noiseless_tones() {
        let obs = uniform_obs(&[(1.0, 100e6, 0.4), (0.5, 250e6, -1.0)], 133e6, 300);
        let est = estimate(&obs, &EstimatorConfig::default(), 1e9).unwrap();
        assert_eq!(est.tones.len(), 2);
        assert!((est.tones[0].frequency - 100e6).abs() / 100e6 < 1e-10);
        assert!((est.tones[1].frequency - 250e6).abs() / 250e6 < 1e-10);
    }

    #[test]
    fn estimated_tone_fold_invariant() {
        let obs = uniform_obs(&[(1.0, 100e6, 0.4), (0.7, 410e6, 2.0)], 133e6, 512);
        let est = estimate(&obs, &EstimatorConfig::with_order(2), 1e9).unwrap();
        let fs = obs.uniform_rate().unwrap();
        for t in &est.tones {
            let base = t.fold_index as f64 * fs;
            let rebuilt = if t.mirror {
                base - t.alias_frequency
            } else {
                base + t.alias_frequency
            };
            assert!((rebuilt - t.frequency).abs() <= 1e-6);
            assert!((t.f_ratio - t.frequency).abs() <= fs / 2.0);
        }
    }
}
