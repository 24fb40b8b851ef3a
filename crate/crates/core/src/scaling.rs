// SPDX-License-Identifier: Apache-2.0
//! Infidelity sweeps over the time-bin width and qubit T1, optimal-width
//! search and log-log power-law fits.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fidelity::{haar_average_fidelity, Estimator, GateProcess};
use crate::lindblad::{GateConfig, GateModel};

pub const DEFAULT_KAPPA_TAU_GRID: [f64; 6] = [8.0, 12.0, 16.0, 24.0, 32.0, 48.0];
/// Seconds.
pub const DEFAULT_T1_GRID: [f64; 5] = [10e-6, 30e-6, 100e-6, 300e-6, 1000e-6];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FidelitySettings {
    pub n_samples: usize,
    pub seed: u64,
    pub estimator: Estimator,
}

impl Default for FidelitySettings {
    fn default() -> Self {
        Self { n_samples: 256, seed: 7, estimator: Estimator::MonteCarlo }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub kappa_tau: f64,
    /// Seconds; `None` for no qubit decoherence.
    pub t1: Option<f64>,
    pub epsilon: f64,
    pub stderr: f64,
    pub p_f: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.kappa_tau, r.epsilon)).collect()
    }
}

/// Configuration at a given κτ, keeping κ, dt/τ, guards and truncation of `base`.
pub fn config_at(base: &GateConfig, kappa_tau: f64, t1: Option<f64>) -> Result<GateConfig> {
    let mut cfg = GateConfig::from_kappa_tau(base.kappa, kappa_tau)?;
    cfg.dt = cfg.tau * (base.dt / base.tau);
    cfg.n_max = base.n_max;
    cfg.omega_cap = base.omega_cap;
    cfg.eps_floor = base.eps_floor;
    cfg.total_time = cfg.tau * (base.total_time / base.tau);
    cfg = cfg.with_t1(t1)?;
    cfg.validate()?;
    Ok(cfg)
}

/// One Haar-averaged infidelity evaluation.
pub fn evaluate_point(base: &GateConfig, kappa_tau: f64, t1: Option<f64>, fid: &FidelitySettings) -> Result<SweepRow> {
    let cfg = config_at(base, kappa_tau, t1)?;
    let process = GateProcess::from_model(&GateModel::new(cfg)?)?;
    let est = haar_average_fidelity(&process, fid.n_samples, fid.seed, fid.estimator)?;
    Ok(SweepRow {
        kappa_tau,
        t1,
        epsilon: (1.0 - est.mean).clamp(0.0, 1.0),
        stderr: est.stderr,
        p_f: est.mean_p_f,
    })
}

/// Infidelity over a κτ grid at fixed T1; rows sorted by κτ.
pub fn sweep_tau(t1: Option<f64>, kappa_tau_grid: &[f64], base: &GateConfig, fid: &FidelitySettings) -> Result<SweepResult> {
    if let Some(&bad) = kappa_tau_grid.iter().find(|&&k| !(k >= 5.0)) {
        return Err(Error::InvalidParameter(format!("kappa*tau grid value {bad} < 5")));
    }
    let mut grid = kappa_tau_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let rows = grid
        .par_iter()
        .map(|&kt| evaluate_point(base, kt, t1, fid))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { rows })
}

/// Golden-section minimization on [a, b] until (b − a) ≤ rel_tol·x.
pub fn golden_section_min<Fo>(mut f: Fo, mut a: f64, mut b: f64, rel_tol: f64) -> Result<(f64, f64)>
where
    Fo: FnMut(f64) -> Result<f64>,
{
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if (b - a) <= rel_tol * mid.abs() {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimum {
    pub x: f64,
    pub value: f64,
    /// Every (x, f(x)) evaluated, grid first.
    pub evaluations: Vec<(f64, f64)>,
}

/// Grid scan for an interior minimum, then golden-section refinement on the
/// two neighbouring intervals.
pub fn minimize_bracketed<Fo>(mut f: Fo, grid: &[f64], rel_tol: f64) -> Result<Optimum>
where
    Fo: FnMut(f64) -> Result<f64>,
{
    if grid.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: grid.len() });
    }
    let mut evaluations = Vec::new();
    for &x in grid {
        evaluations.push((x, f(x)?));
    }
    refine(f, evaluations, rel_tol)
}

fn refine<Fo>(mut f: Fo, mut evaluations: Vec<(f64, f64)>, rel_tol: f64) -> Result<Optimum>
where
    Fo: FnMut(f64) -> Result<f64>,
{
    evaluations.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (imin, _) = evaluations
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty grid");
    if imin == 0 || imin == evaluations.len() - 1 {
        return Err(Error::NoInteriorMinimum(imin));
    }
    let (lo, hi) = (evaluations[imin - 1].0, evaluations[imin + 1].0);
    let mut extra = Vec::new();
    let (x, value) = golden_section_min(
        |x| {
            let v = f(x)?;
            extra.push((x, v));
            Ok(v)
        },
        lo,
        hi,
        rel_tol,
    )?;
    let (x, value) = if value <= evaluations[imin].1 { (x, value) } else { evaluations[imin] };
    evaluations.extend(extra);
    Ok(Optimum { x, value, evaluations })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TauOptimum {
    pub tau_opt: f64,
    pub kappa_tau_opt: f64,
    pub eps_min: f64,
    pub sweep: SweepResult,
}

/// Optimal time-bin width at fixed T1 (relative tolerance 1e-2 in τ).
pub fn find_tau_opt(t1: Option<f64>, kappa_tau_grid: &[f64], base: &GateConfig, fid: &FidelitySettings) -> Result<TauOptimum> {
    let sweep = sweep_tau(t1, kappa_tau_grid, base, fid)?;
    let grid_evals: Vec<(f64, f64)> = sweep.rows.iter().map(|r| (r.kappa_tau, r.epsilon)).collect();
    let mut extra_rows = Vec::new();
    let opt = refine(
        |kt| {
            let row = evaluate_point(base, kt, t1, fid)?;
            extra_rows.push(row);
            Ok(row.epsilon)
        },
        grid_evals,
        1e-2,
    )?;
    let mut rows = sweep.rows;
    rows.extend(extra_rows);
    rows.sort_by(|a, b| a.kappa_tau.total_cmp(&b.kappa_tau));
    Ok(TauOptimum {
        tau_opt: opt.x / base.kappa,
        kappa_tau_opt: opt.x,
        eps_min: opt.value,
        sweep: SweepResult { rows },
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLawFit {
    pub slope: f64,
    /// ln of the prefactor.
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    pub r_squared: f64,
    pub n: usize,
}

impl PowerLawFit {
    pub fn prefactor(&self) -> f64 {
        self.intercept.exp()
    }
}

/// Ordinary least squares of ln y on ln x.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 4 {
        return Err(Error::TooFewPoints { needed: 4, got: points.len() });
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::NonPositiveData(x, y));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all x values equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let s2 = sse / (n - 2.0);
    let slope_stderr = (s2 / sxx).sqrt();
    let intercept_stderr = (s2 * (1.0 / n + mx * mx / sxx)).sqrt();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(PowerLawFit { slope, intercept, slope_stderr, intercept_stderr, r_squared, n: points.len() })
}

/// κτ_opt = K(κT1)^ξ and ε_min = D(κT1)^ζ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingReport {
    pub xi: PowerLawFit,
    pub zeta: PowerLawFit,
}

impl ScalingReport {
    pub fn k(&self) -> f64 {
        self.xi.prefactor()
    }

    pub fn d(&self) -> f64 {
        self.zeta.prefactor()
    }
}

/// Fits the scaling exponents from (T1, optimum) pairs.
pub fn scaling_exponents(kappa: f64, optima: &[(f64, TauOptimum)]) -> Result<ScalingReport> {
    let xi_pts: Vec<(f64, f64)> = optima.iter().map(|(t1, o)| (kappa * t1, o.kappa_tau_opt)).collect();
    let zeta_pts: Vec<(f64, f64)> = optima.iter().map(|(t1, o)| (kappa * t1, o.eps_min)).collect();
    Ok(ScalingReport { xi: fit_power_law(&xi_pts)?, zeta: fit_power_law(&zeta_pts)? })
}
