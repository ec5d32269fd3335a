//! Closed-form Cramér-Rao bounds for amplitude-ratio frequency estimation,
//! plus a numerical dual-channel Fisher-information audit.
//!
//! Chain of constants (all relative variances):
//!
//! * per-channel amplitude: `Var(Â)/A² ≥ 1/(N·SNR)`, from `Var(Â) ≥ 2σ²/N`
//!   and `SNR = A²/(2σ²)`;
//! * ratio `R = A/B = 1/(2πf)`, first-order delta method with independent
//!   channels: `Var(R̂)/R² = Var(Â)/A² + Var(B̂)/B² ≥ 2/(N·SNR)`;
//! * frequency, since `f = 1/(2πR)`: `Var(f̂)/f² ≥ 2/(N·SNR)`, twice the
//!   single-channel reference `1/(N·SNR)` (a 3 dB penalty).

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::{NoiseConfig, SamplingScheme, Scenario, ToneParams};

/// Explains the constant chain carried by every [`CrbReport`].
pub const CONSTANTS_NOTE: &str = "per-channel relative amplitude bound is 1/(N*SNR), consistent with \
Var(A) >= 2*sigma^2/N and SNR = A^2/(2*sigma^2); the constants 4/(N*SNR) (amplitude) and \
8/(N*SNR) (ratio) sometimes quoted for this chain are not consistent with it and are not used";

/// Equilibrated condition number above which the 3×3 FIM is treated as singular.
pub const FIM_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub n_samples: usize,
    /// Linear per-channel SNR, `A²/(2σ²)`.
    pub snr: f64,
    pub frequency: f64,
    pub amplitude: f64,
}

impl OperatingPoint {
    pub fn new(n_samples: usize, snr: f64, frequency: f64, amplitude: f64) -> Result<Self> {
        let op = Self {
            n_samples,
            snr,
            frequency,
            amplitude,
        };
        op.validate()?;
        Ok(op)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(invalid("n_samples must be at least 2"));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(invalid("snr must be positive and finite"));
        }
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(invalid("frequency must be positive"));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(invalid("amplitude must be positive"));
        }
        Ok(())
    }

    /// `N·SNR`.
    pub fn n_snr(&self) -> f64 {
        self.n_samples as f64 * self.snr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeCrb {
    pub absolute: f64,
    pub relative: f64,
}

/// `Var(Â) ≥ 2σ²/N`; the relative form divides by `A²`.
pub fn amplitude_crb(op: &OperatingPoint, sigma: f64) -> AmplitudeCrb {
    let absolute = 2.0 * sigma * sigma / op.n_samples as f64;
    AmplitudeCrb {
        absolute,
        relative: absolute / (op.amplitude * op.amplitude),
    }
}

/// Delta-method relative variance of a ratio of independent estimates.
pub fn ratio_relvar(relvar_a: f64, relvar_b: f64) -> f64 {
    relvar_a + relvar_b
}

/// Every closed-form bound at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    pub n_samples: usize,
    pub snr: f64,
    pub frequency: f64,
    pub amplitude: f64,
    pub amp_var_bound: f64,
    pub amp_relvar_bound: f64,
    pub ratio_relvar_bound: f64,
    pub ratio_var_bound: f64,
    pub freq_relvar_bound: f64,
    pub freq_relvar_single_channel: f64,
    pub penalty_db: f64,
    pub constants_note: String,
}

pub fn freq_crb_dual(op: &OperatingPoint) -> CrbReport {
    let n_snr = op.n_snr();
    let amp_relvar = 1.0 / n_snr;
    let ratio_relvar_bound = ratio_relvar(amp_relvar, amp_relvar);
    let r = 1.0 / (TAU * op.frequency);
    let single = 1.0 / n_snr;
    let dual = ratio_relvar_bound;
    CrbReport {
        n_samples: op.n_samples,
        snr: op.snr,
        frequency: op.frequency,
        amplitude: op.amplitude,
        amp_var_bound: op.amplitude * op.amplitude * amp_relvar,
        amp_relvar_bound: amp_relvar,
        ratio_relvar_bound,
        ratio_var_bound: ratio_relvar_bound * r * r,
        freq_relvar_bound: dual,
        freq_relvar_single_channel: single,
        penalty_db: 10.0 * (dual / single).log10(),
        constants_note: String::from(CONSTANTS_NOTE),
    }
}

/// Relative frequency RMSE bound `sqrt(2/(N·SNR))`.
pub fn freq_rmse_rel_bound(n_samples: usize, snr: f64) -> f64 {
    (2.0 / (n_samples as f64 * snr)).sqrt()
}

/// Noiseless channel means `(μ_x, μ_ẋ)` of one tone at time `t`.
pub fn channel_means(tone: &ToneParams, t: f64) -> (f64, f64) {
    (tone.value_at(t), tone.derivative_at(t))
}

/// Analytic `∂μ/∂(A, f, φ)` for the signal and derivative channels.
pub fn channel_mean_gradients(tone: &ToneParams, t: f64) -> ([f64; 3], [f64; 3]) {
    let (a, f) = (tone.amplitude, tone.frequency);
    let (s, c) = (TAU * f * t + tone.phase).sin_cos();
    let gx = [c, -a * TAU * t * s, -a * s];
    let gd = [
        -TAU * f * s,
        -TAU * a * s - TAU * f * a * TAU * t * c,
        -TAU * f * a * c,
    ];
    (gx, gd)
}

/// Central-difference gradients of the channel means, step `rel_step·|θ_i|`
/// (or `rel_step` when `θ_i = 0`).
pub fn finite_difference_gradients(
    tone: &ToneParams,
    t: f64,
    rel_step: f64,
) -> ([f64; 3], [f64; 3]) {
    let theta = [tone.amplitude, tone.frequency, tone.phase];
    let mut gx = [0.0; 3];
    let mut gd = [0.0; 3];
    for i in 0..3 {
        let h = rel_step * if theta[i] != 0.0 { theta[i].abs() } else { 1.0 };
        let eval = |delta: f64| {
            let mut p = theta;
            p[i] += delta;
            // Raw parameters: amplitude may transiently be anything here.
            let probe = ToneParams {
                amplitude: p[0],
                frequency: p[1],
                phase: p[2],
            };
            channel_means(&probe, t)
        };
        let (xp, dp) = eval(h);
        let (xm, dm) = eval(-h);
        gx[i] = (xp - xm) / (2.0 * h);
        gd[i] = (dp - dm) / (2.0 * h);
    }
    (gx, gd)
}

/// Worst disagreement between analytic and central-difference gradients.
///
/// For each (parameter, channel) pair the error is the max-abs difference
/// over the sample set divided by the max-abs analytic gradient over the
/// same set.
pub fn gradient_check(tone: &ToneParams, times: &[f64], rel_step: f64) -> f64 {
    let mut err = [[0.0f64; 3]; 2];
    let mut scale = [[0.0f64; 3]; 2];
    for &t in times {
        let (ax, ad) = channel_mean_gradients(tone, t);
        let (fx, fd) = finite_difference_gradients(tone, t, rel_step);
        for i in 0..3 {
            err[0][i] = err[0][i].max((ax[i] - fx[i]).abs());
            err[1][i] = err[1][i].max((ad[i] - fd[i]).abs());
            scale[0][i] = scale[0][i].max(ax[i].abs());
            scale[1][i] = scale[1][i].max(ad[i].abs());
        }
    }
    let mut worst: f64 = 0.0;
    for ch in 0..2 {
        for i in 0..3 {
            if scale[ch][i] > 0.0 {
                worst = worst.max(err[ch][i] / scale[ch][i]);
            }
        }
    }
    worst
}

/// Dual-channel Fisher information over `(A, f, φ)` and its inverse diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub matrix: [[f64; 3]; 3],
    /// `diag(I⁻¹)`: CRBs for `A`, `f`, `φ`.
    pub inverse_diagonal: [f64; 3],
    pub equilibrated_condition: f64,
    /// `CRB(f)/f²`.
    pub freq_relvar_crb: f64,
    /// Closed-form `2/(N·SNR)` with `SNR = A²/(2σ_x²)`.
    pub closed_form_freq_relvar: f64,
    /// `freq_relvar_crb / closed_form_freq_relvar`.
    pub fim_to_closed_form: f64,
}

/// Fisher information of one tone observed on both channels.
///
/// An infinite `sigma_xdot` removes the derivative channel.
pub fn fisher_information(
    tone: &ToneParams,
    times: &[f64],
    sigma_x: f64,
    sigma_xdot: f64,
) -> Result<FisherReport> {
    if !(sigma_x > 0.0 && sigma_x.is_finite()) {
        return Err(invalid("sigma_x must be positive and finite"));
    }
    if !(sigma_xdot > 0.0) {
        return Err(invalid("sigma_xdot must be positive (or infinite)"));
    }
    if times.is_empty() {
        return Err(invalid("no sample times"));
    }
    let wx = 1.0 / (sigma_x * sigma_x);
    let wd = if sigma_xdot.is_infinite() {
        0.0
    } else {
        1.0 / (sigma_xdot * sigma_xdot)
    };
    let mut fim = Matrix3::<f64>::zeros();
    for &t in times {
        let (gx, gd) = channel_mean_gradients(tone, t);
        for i in 0..3 {
            for j in 0..3 {
                fim[(i, j)] += wx * gx[i] * gx[j] + wd * gd[i] * gd[j];
            }
        }
    }
    // Symmetrize exactly; each entry is built from the same products.
    let fim = (fim + fim.transpose()) * 0.5;

    let d = Matrix3::from_diagonal(&fim.diagonal().map(|v| 1.0 / v.sqrt()));
    let scaled = d * fim * d;
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= FIM_CONDITION_LIMIT) {
        return Err(Error::SingularFisher(cond));
    }
    let scaled_inv = scaled
        .try_inverse()
        .ok_or(Error::SingularFisher(cond))?;
    let inv = d * scaled_inv * d;

    let mut matrix = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            matrix[i][j] = fim[(i, j)];
        }
    }
    let inverse_diagonal = [inv[(0, 0)], inv[(1, 1)], inv[(2, 2)]];
    let freq_relvar_crb = inverse_diagonal[1] / (tone.frequency * tone.frequency);
    let snr = tone.amplitude * tone.amplitude / (2.0 * sigma_x * sigma_x);
    let closed_form = 2.0 / (times.len() as f64 * snr);
    Ok(FisherReport {
        matrix,
        inverse_diagonal,
        equilibrated_condition: cond,
        freq_relvar_crb,
        closed_form_freq_relvar: closed_form,
        fim_to_closed_form: freq_relvar_crb / closed_form,
    })
}

/// Fisher information for a single-tone scenario under a sampling scheme
/// and noise convention.
pub fn numeric_fim(
    scenario: &Scenario,
    scheme: &SamplingScheme,
    noise: &NoiseConfig,
) -> Result<FisherReport> {
    scenario.validate()?;
    if scenario.tones.len() != 1 {
        return Err(invalid("numeric_fim supports single-tone scenarios only"));
    }
    let times: Vec<f64> = scheme.sample_times()?;
    let sigma_xdot = noise.sigma_xdot(Some(scenario))?;
    fisher_information(&scenario.tones[0], &times, noise.sigma_x, sigma_xdot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::NoiseConvention;
    use alloc::vec;

    #[test]
    fn amplitude_examples() {
        let op = OperatingPoint::new(1000, 0.5, 1e8, 1.0).unwrap();
        let crb = amplitude_crb(&op, 1.0);
        assert!((crb.absolute - 0.002).abs() < 1e-18);
        assert!((crb.relative - 1.0 / (1000.0 * 0.5)).abs() < 1e-18);
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(ratio_relvar(0.0, 0.0), 0.0);
        let v = ratio_relvar(0.01 / 1.0, 0.01 / 4.0);
        assert!((v - 0.0125).abs() < 1e-15);
    }

    #[test]
    fn dual_bound_examples() {
        let op = OperatingPoint::new(1000, 10.0, 1e8, 1.0).unwrap();
        let rep = freq_crb_dual(&op);
        assert!((rep.freq_relvar_bound - 2e-4).abs() < 1e-18);
        assert_eq!(rep.freq_relvar_bound / rep.freq_relvar_single_channel, 2.0);
        let r = 1.0 / (TAU * 1e8);
        assert!((r - 1.591549e-9).abs() < 1e-15);
        assert!((rep.ratio_var_bound - 2e-4 * r * r).abs() < 1e-30);
        assert!((rep.penalty_db - 3.0103).abs() < 1e-4);
        assert_eq!(rep.constants_note, CONSTANTS_NOTE);
    }

    #[test]
    fn scale_invariance_in_n_snr() {
        let a = freq_crb_dual(&OperatingPoint::new(1000, 10.0, 1e8, 1.0).unwrap());
        let b = freq_crb_dual(&OperatingPoint::new(2000, 5.0, 1e8, 1.0).unwrap());
        assert_eq!(a.freq_relvar_bound, b.freq_relvar_bound);
    }

    #[test]
    fn fim_is_symmetric_and_single_channel_limit() {
        let tone = ToneParams::new(1.0, 1e6, 0.3).unwrap();
        // 100 full periods at 32 samples per period.
        let times: Vec<f64> = (0..3200).map(|n| n as f64 / 32e6).collect();
        let rep = fisher_information(&tone, &times, 1.0, f64::INFINITY).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let a = rep.matrix[i][j];
                let b = rep.matrix[j][i];
                assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
            }
        }
        let expect = 2.0 / times.len() as f64;
        assert!((rep.inverse_diagonal[0] - expect).abs() / expect < 1e-3);
    }

    #[test]
    fn short_window_signal_only_fim_is_singular() {
        let tone = ToneParams::new(1.0, 1e3, 0.4).unwrap();
        let times: Vec<f64> = (0..8).map(|n| n as f64 * 1e-9).collect();
        assert!(matches!(
            fisher_information(&tone, &times, 0.1, f64::INFINITY),
            Err(Error::SingularFisher(_))
        ));
    }

    #[test]
    fn numeric_fim_single_tone_only() {
        let tones = vec![
            ToneParams::new(1.0, 1e6, 0.0).unwrap(),
            ToneParams::new(1.0, 2e6, 0.0).unwrap(),
        ];
        let s = Scenario::new(tones, 1e9, 0.0).unwrap();
        let scheme = SamplingScheme::UniformSubNyquist {
            sample_rate: 1e7,
            num_samples: 64,
        };
        let noise = NoiseConfig {
            sigma_x: 0.1,
            convention: NoiseConvention::EqualVariance,
            reference_frequency: None,
        };
        assert!(matches!(
            numeric_fim(&s, &scheme, &noise),
            Err(Error::InvalidInput(_))
        ));
    }
}
