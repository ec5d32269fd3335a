//! Block orthogonal matching pursuit over a uniform frequency grid.
//!
//! Each grid frequency contributes a real `(cos, sin)` pair that is selected
//! and solved as a two-column block. With the derivative channel enabled the
//! measurements of both channels are stacked and whitened by their noise
//! levels, so the derivative atoms `2πf_g·(−sin, cos)` carry the fold
//! information. Frequencies stay on the grid; there is no refinement step.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{coeffs_to_amp_phase, least_squares};
use crate::signal::{ChannelWeights, DualChannelObservation};

/// Uniform grid `f_g = g·band_limit/G`, `g = 1..=G`, with unit-norm atoms.
#[derive(Debug, Clone)]
pub struct DftDictionary {
    pub grid_frequencies: Vec<f64>,
    pub sample_times: Vec<f64>,
    /// `N × G`, normalized `cos(2πf_g t)` columns.
    cos: DMatrix<f64>,
    /// `N × G`, normalized `sin(2πf_g t)` columns.
    sin: DMatrix<f64>,
    /// Raw column norms. Zero marks a vanishing atom.
    cos_norm: Vec<f64>,
    sin_norm: Vec<f64>,
    /// `⟨ĉ_g, ŝ_g⟩`.
    cross: Vec<f64>,
}

impl DftDictionary {
    pub fn grid_size(&self) -> usize {
        self.grid_frequencies.len()
    }

    pub fn spacing(&self) -> f64 {
        self.grid_frequencies[0]
    }

    pub fn cos_atoms(&self) -> &DMatrix<f64> {
        &self.cos
    }

    pub fn sin_atoms(&self) -> &DMatrix<f64> {
        &self.sin
    }

    /// Index of the grid point nearest to `f` (ties to the lower one).
    pub fn nearest_index(&self, f: f64) -> usize {
        let g = (f / self.spacing()).round().max(1.0) as usize;
        g.min(self.grid_size()) - 1
    }
}

pub fn build_dictionary(times: &[f64], band_limit: f64, grid_size: usize) -> Result<DftDictionary> {
    if grid_size < 2 {
        return Err(invalid("grid_size must be at least 2"));
    }
    if times.is_empty() {
        return Err(invalid("dictionary needs at least one sample time"));
    }
    if !(band_limit > 0.0 && band_limit.is_finite()) {
        return Err(invalid("band_limit must be positive"));
    }
    const RESYNC: usize = 128;
    let n = times.len();
    let df = band_limit / grid_size as f64;
    let mut cos = DMatrix::zeros(n, grid_size);
    let mut sin = DMatrix::zeros(n, grid_size);
    for (i, &t) in times.iter().enumerate() {
        let w = TAU * df * t;
        let (rs, rc) = w.sin_cos();
        let (mut s, mut c) = (0.0, 1.0);
        for g in 0..grid_size {
            if g % RESYNC == 0 {
                (s, c) = (w * (g + 1) as f64).sin_cos();
            } else {
                let nc = c * rc - s * rs;
                s = s * rc + c * rs;
                c = nc;
            }
            cos[(i, g)] = c;
            sin[(i, g)] = s;
        }
    }
    let floor = 1e-12 * (n as f64).sqrt();
    let mut cos_norm = Vec::with_capacity(grid_size);
    let mut sin_norm = Vec::with_capacity(grid_size);
    let mut cross = Vec::with_capacity(grid_size);
    for g in 0..grid_size {
        let nc = normalize_column(&mut cos, g, floor);
        let ns = normalize_column(&mut sin, g, floor);
        cos_norm.push(nc);
        sin_norm.push(ns);
        cross.push(cos.column(g).dot(&sin.column(g)));
    }
    Ok(DftDictionary {
        grid_frequencies: (1..=grid_size).map(|g| g as f64 * df).collect(),
        sample_times: times.to_vec(),
        cos,
        sin,
        cos_norm,
        sin_norm,
        cross,
    })
}

fn normalize_column(m: &mut DMatrix<f64>, j: usize, floor: f64) -> f64 {
    let norm = m.column(j).norm();
    if norm > floor {
        m.column_mut(j).scale_mut(1.0 / norm);
        norm
    } else {
        m.column_mut(j).fill(0.0);
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmpConfig {
    pub grid_size: usize,
    pub max_iters: usize,
    /// Stop once `‖r‖/‖y‖` drops below this.
    pub residual_tol: f64,
    pub use_derivative_channel: bool,
}

impl Default for OmpConfig {
    fn default() -> Self {
        Self {
            grid_size: 1024,
            max_iters: 16,
            residual_tol: 1e-10,
            use_derivative_channel: true,
        }
    }
}

impl OmpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(invalid("grid_size must be at least 2"));
        }
        if self.max_iters == 0 || self.max_iters > self.grid_size {
            return Err(invalid("max_iters must lie in [1, grid_size]"));
        }
        if !(self.residual_tol >= 0.0) {
            return Err(invalid("residual_tol must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmpComponent {
    pub frequency: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub grid_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    /// In selection order.
    pub components: Vec<OmpComponent>,
    /// `‖r‖` before the first pick and after every accepted pick.
    pub residual_norms: Vec<f64>,
    /// The relative residual tolerance was reached.
    pub converged: bool,
}

/// Stacked, whitened measurement model.
struct Stacked<'a> {
    dict: &'a DftDictionary,
    wx: f64,
    /// `w_ẋ`, zero when the derivative channel is unused.
    wd: f64,
    y: DVector<f64>,
    n: usize,
}

impl Stacked<'_> {
    fn rows(&self) -> usize {
        if self.wd > 0.0 {
            2 * self.n
        } else {
            self.n
        }
    }

    fn kappa(&self, g: usize) -> f64 {
        self.wd * TAU * self.dict.grid_frequencies[g]
    }

    /// Raw (unnormalized) stacked columns for grid point `g`.
    fn block(&self, g: usize, out: &mut DMatrix<f64>, col: usize) {
        let d = self.dict;
        let (nc, ns) = (d.cos_norm[g], d.sin_norm[g]);
        let k = self.kappa(g);
        for i in 0..self.n {
            let c = d.cos[(i, g)] * nc;
            let s = d.sin[(i, g)] * ns;
            out[(i, col)] = self.wx * c;
            out[(i, col + 1)] = self.wx * s;
            if self.wd > 0.0 {
                out[(self.n + i, col)] = -k * s;
                out[(self.n + i, col + 1)] = k * c;
            }
        }
    }

    /// `pᵀ G⁻¹ p` for every grid block against residual `r`.
    fn energies(&self, r: &DVector<f64>) -> Vec<f64> {
        let d = self.dict;
        let rx = r.rows(0, self.n);
        let cx = d.cos.tr_mul(&rx);
        let sx = d.sin.tr_mul(&rx);
        let (cd, sd) = if self.wd > 0.0 {
            let rd = r.rows(self.n, self.n);
            (d.cos.tr_mul(&rd), d.sin.tr_mul(&rd))
        } else {
            (DVector::zeros(d.grid_size()), DVector::zeros(d.grid_size()))
        };
        let wx2 = self.wx * self.wx;
        (0..d.grid_size())
            .map(|g| {
                let (nc, ns, rho) = (d.cos_norm[g], d.sin_norm[g], d.cross[g]);
                let k = self.kappa(g);
                let pc = self.wx * nc * cx[g] - k * ns * sd[g];
                let ps = self.wx * ns * sx[g] + k * nc * cd[g];
                let gcc = wx2 * nc * nc + k * k * ns * ns;
                let gss = wx2 * ns * ns + k * k * nc * nc;
                let gcs = (wx2 - k * k) * nc * ns * rho;
                block_energy(pc, ps, gcc, gss, gcs)
            })
            .collect()
    }
}

fn block_energy(pc: f64, ps: f64, gcc: f64, gss: f64, gcs: f64) -> f64 {
    let det = gcc * gss - gcs * gcs;
    if det > 1e-12 * gcc * gss {
        (gss * pc * pc - 2.0 * gcs * pc * ps + gcc * ps * ps) / det
    } else if gcc >= gss {
        if gcc > 0.0 {
            pc * pc / gcc
        } else {
            0.0
        }
    } else {
        ps * ps / gss
    }
}

/// Runs block OMP on `obs` with a dictionary built over its sample times.
pub fn omp_recover(
    obs: &DualChannelObservation,
    dict: &DftDictionary,
    cfg: &OmpConfig,
) -> Result<OmpResult> {
    obs.validate()?;
    cfg.validate()?;
    if dict.sample_times.len() != obs.len()
        || dict
            .sample_times
            .iter()
            .zip(&obs.times)
            .any(|(a, b)| a != b)
    {
        return Err(invalid("dictionary was built over different sample times"));
    }
    let n = obs.len();
    let (wx, wd) = if cfg.use_derivative_channel {
        let w = ChannelWeights::for_observation(obs, 0.5 * dict.grid_frequencies[dict.grid_size() - 1]);
        (w.x, w.xdot)
    } else {
        (1.0, 0.0)
    };
    let mut y = DVector::zeros(if wd > 0.0 { 2 * n } else { n });
    for i in 0..n {
        y[i] = wx * obs.x[i];
        if wd > 0.0 {
            y[n + i] = wd * obs.xdot[i];
        }
    }
    let sys = Stacked {
        dict,
        wx,
        wd,
        y,
        n,
    };

    let y_norm = sys.y.norm();
    let mut residual = sys.y.clone();
    let mut residual_norms = vec![y_norm];
    let mut selected: Vec<usize> = Vec::new();
    let mut used = vec![false; dict.grid_size()];
    let mut coeffs: Option<DVector<f64>> = None;
    let mut converged = y_norm == 0.0;

    while !converged && selected.len() < cfg.max_iters.min(n / 2) {
        let energy = sys.energies(&residual);
        let pick = (0..dict.grid_size())
            .filter(|&g| !used[g])
            .max_by(|&a, &b| energy[a].total_cmp(&energy[b]).then(b.cmp(&a)));
        let Some(g) = pick else { break };
        used[g] = true;
        let mut trial = selected.clone();
        trial.push(g);

        let mut design = DMatrix::zeros(sys.rows(), 2 * trial.len());
        for (j, &idx) in trial.iter().enumerate() {
            sys.block(idx, &mut design, 2 * j);
        }
        // A pick that makes the block system singular is discarded; the
        // atom stays marked so it is never offered again.
        let Some(c) = least_squares(&design, &sys.y, 1e-10) else {
            continue;
        };
        let r = &sys.y - &design * &c;
        let r_norm = r.norm();
        if r_norm > *residual_norms.last().unwrap() {
            continue;
        }
        selected = trial;
        residual = r;
        residual_norms.push(r_norm);
        coeffs = Some(c);
        converged = r_norm <= cfg.residual_tol * y_norm;
    }

    let components = match coeffs {
        Some(c) => selected
            .iter()
            .enumerate()
            .map(|(j, &g)| {
                let (amplitude, phase) = coeffs_to_amp_phase(c[2 * j], c[2 * j + 1]);
                OmpComponent {
                    frequency: dict.grid_frequencies[g],
                    amplitude,
                    phase,
                    grid_index: g,
                }
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(OmpResult {
        components,
        residual_norms,
        converged,
    })
}
