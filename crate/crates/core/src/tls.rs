// SPDX-License-Identifier: Apache-2.0
//! Photon loss into a bath of two-level systems: loss probability q,
//! coherence factor C between early- and late-bin absorption, and the
//! resulting dephasing probability η = (1 − |C|)/2.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::protocol::loss_dephasing_channel;
use crate::quadrature::integrate;
use crate::tensor::{partial_trace, C64, ONE, ZERO};

/// Loss probability above which the single-absorption picture is suspect.
pub const BORN_WARNING_Q: f64 = 0.1;
const WINDOW_WIDTHS: f64 = 8.0;
const REL_TOL: f64 = 1e-9;

/// Bath spectral density J(ω), ω measured from the photon carrier.
#[derive(Clone, Debug, PartialEq)]
pub enum SpectralDensity {
    Flat { j0: f64 },
    /// √(2π)(g²/Λ) exp(−(ω − δω̄)²/2Λ²)
    Gaussian { g2: f64, lambda: f64, delta_omega_bar: f64 },
    /// Linearly interpolated; evaluation outside the grid is an error.
    Tabulated { omega: Vec<f64>, j: Vec<f64> },
}

impl SpectralDensity {
    pub fn tabulated(omega: Vec<f64>, j: Vec<f64>) -> Result<Self> {
        let s = SpectralDensity::Tabulated { omega, j };
        s.validate()?;
        Ok(s)
    }

    /// Reads two whitespace- or comma-separated columns (ω, J), `#` comments allowed.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let (mut omega, mut j) = (Vec::new(), Vec::new());
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            if cols.len() != 2 {
                return Err(Error::SpectralDensity(format!("line {}: expected two columns", n + 1)));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::SpectralDensity(format!("line {}: bad number {s:?}", n + 1)))
            };
            omega.push(parse(cols[0])?);
            j.push(parse(cols[1])?);
        }
        Self::tabulated(omega, j)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SpectralDensity::Flat { j0 } => {
                if !(j0.is_finite() && *j0 >= 0.0) {
                    return Err(Error::SpectralDensity(format!("flat J0 = {j0}")));
                }
            }
            SpectralDensity::Gaussian { g2, lambda, delta_omega_bar } => {
                if !(g2.is_finite() && *g2 >= 0.0) || !(lambda.is_finite() && *lambda >= 0.0) || !delta_omega_bar.is_finite() {
                    return Err(Error::SpectralDensity(format!(
                        "gaussian g² = {g2}, Λ = {lambda}, δω̄ = {delta_omega_bar}"
                    )));
                }
            }
            SpectralDensity::Tabulated { omega, j } => {
                if omega.len() != j.len() || omega.len() < 2 {
                    return Err(Error::SpectralDensity("tabulated J needs ≥ 2 matching (ω, J) rows".into()));
                }
                if omega.windows(2).any(|w| !(w[1] > w[0])) || omega.iter().any(|w| !w.is_finite()) {
                    return Err(Error::SpectralDensity("ω grid must be finite and strictly increasing".into()));
                }
                if let Some(v) = j.iter().find(|v| !v.is_finite() || **v < 0.0) {
                    return Err(Error::SpectralDensity(format!("tabulated J value {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, w: f64) -> Result<f64> {
        match self {
            SpectralDensity::Flat { j0 } => Ok(*j0),
            SpectralDensity::Gaussian { g2, lambda, delta_omega_bar } => {
                if *lambda <= 0.0 {
                    return Err(Error::SpectralDensity("zero-width gaussian has no pointwise value".into()));
                }
                let x = (w - delta_omega_bar) / lambda;
                Ok((2.0 * PI).sqrt() * g2 / lambda * (-0.5 * x * x).exp())
            }
            SpectralDensity::Tabulated { omega, j } => {
                let (lo, hi) = (omega[0], omega[omega.len() - 1]);
                if w < lo || w > hi {
                    return Err(Error::Extrapolation(w));
                }
                let k = omega.partition_point(|&x| x <= w).clamp(1, omega.len() - 1);
                let t = (w - omega[k - 1]) / (omega[k] - omega[k - 1]);
                Ok(j[k - 1] + t * (j[k] - j[k - 1]))
            }
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            SpectralDensity::Flat { j0 } => *j0 == 0.0,
            SpectralDensity::Gaussian { g2, .. } => *g2 == 0.0,
            SpectralDensity::Tabulated { j, .. } => j.iter().all(|v| *v == 0.0),
        }
    }
}

/// Photon power spectrum |u(ω)|², normalized so that ∫|u|² dω/2π = 1.
#[derive(Clone, Debug, PartialEq)]
pub enum PhotonSpectrum {
    /// 2√π τ e^{−τ²ω²}
    Gaussian { tau: f64 },
    /// Linearly interpolated power, zero outside the grid.
    Tabulated { tau: f64, omega: Vec<f64>, power: Vec<f64> },
}

impl PhotonSpectrum {
    pub fn gaussian(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParameter(format!("photon duration τ = {tau}")));
        }
        Ok(PhotonSpectrum::Gaussian { tau })
    }

    pub fn tau(&self) -> f64 {
        match self {
            PhotonSpectrum::Gaussian { tau } | PhotonSpectrum::Tabulated { tau, .. } => *tau,
        }
    }

    pub fn power(&self, w: f64) -> f64 {
        match self {
            PhotonSpectrum::Gaussian { tau } => 2.0 * PI.sqrt() * tau * (-(tau * w).powi(2)).exp(),
            PhotonSpectrum::Tabulated { omega, power, .. } => {
                if w < omega[0] || w > omega[omega.len() - 1] {
                    return 0.0;
                }
                let k = omega.partition_point(|&x| x <= w).clamp(1, omega.len() - 1);
                let t = (w - omega[k - 1]) / (omega[k] - omega[k - 1]);
                power[k - 1] + t * (power[k] - power[k - 1])
            }
        }
    }

    /// Real, non-negative amplitude √|u(ω)|².
    pub fn amplitude(&self, w: f64) -> f64 {
        self.power(w).sqrt()
    }

    /// (center, width) of the power spectrum, or the grid range for tabulated data.
    fn support(&self) -> (f64, f64) {
        match self {
            PhotonSpectrum::Gaussian { tau } => (0.0, 1.0 / (2f64.sqrt() * tau)),
            PhotonSpectrum::Tabulated { omega, .. } => {
                let (lo, hi) = (omega[0], omega[omega.len() - 1]);
                (0.5 * (lo + hi), 0.5 * (hi - lo) / WINDOW_WIDTHS)
            }
        }
    }

    /// ∫|u|² dω/2π; must equal 1.
    pub fn norm(&self) -> Result<f64> {
        match self {
            PhotonSpectrum::Gaussian { .. } => {
                let (c, s) = self.support();
                let r = integrate(|w| self.power(w), c - 10.0 * s, c + 10.0 * s, 1, 0.0, 1e-12)?;
                Ok(r.value / (2.0 * PI))
            }
            PhotonSpectrum::Tabulated { omega, power, tau } => {
                if omega.len() != power.len() || omega.len() < 2 || omega.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidParameter("tabulated photon spectrum grid".into()));
                }
                if power.iter().any(|p| !p.is_finite() || *p < 0.0) || !(*tau > 0.0) {
                    return Err(Error::InvalidParameter("tabulated photon spectrum values".into()));
                }
                // exact for piecewise-linear data
                let s: f64 = omega.windows(2).zip(power.windows(2)).map(|(w, p)| 0.5 * (w[1] - w[0]) * (p[0] + p[1])).sum();
                Ok(s / (2.0 * PI))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub q: f64,
    pub c: C64,
    pub eta: f64,
    pub phi: f64,
    /// q = 0: C is reported as 1 since no photon was absorbed.
    pub zero_loss: bool,
    pub born_warning: bool,
    pub born_breach: bool,
}

impl LossReport {
    pub fn from_q_c(q: f64, c: C64) -> Self {
        if q == 0.0 {
            return LossReport { q, c: ONE, eta: 0.0, phi: 0.0, zero_loss: true, born_warning: false, born_breach: false };
        }
        let abs_c = c.norm();
        LossReport {
            q,
            c,
            eta: (1.0 - abs_c) / 2.0,
            phi: if abs_c > 0.0 { c.arg() } else { 0.0 },
            zero_loss: false,
            born_warning: q > BORN_WARNING_Q,
            born_breach: q > 1.0,
        }
    }
}

fn integration_window(j: &SpectralDensity, u: &PhotonSpectrum) -> Result<(f64, f64)> {
    let (mu_u, s_u) = u.support();
    let (mu, s) = match (j, u) {
        (SpectralDensity::Gaussian { lambda, delta_omega_bar, .. }, PhotonSpectrum::Gaussian { .. }) => {
            if *lambda <= 0.0 {
                return Err(Error::SpectralDensity("quadrature needs Λ > 0".into()));
            }
            let (l2, u2) = (lambda * lambda, s_u * s_u);
            (delta_omega_bar * u2 / (l2 + u2), (l2 * u2 / (l2 + u2)).sqrt())
        }
        (SpectralDensity::Gaussian { lambda, .. }, _) if *lambda <= 0.0 => {
            return Err(Error::SpectralDensity("quadrature needs Λ > 0".into()));
        }
        _ => (mu_u, s_u),
    };
    let (lo, hi) = (mu - WINDOW_WIDTHS * s, mu + WINDOW_WIDTHS * s);
    if let SpectralDensity::Tabulated { omega, .. } = j {
        if lo < omega[0] {
            return Err(Error::Extrapolation(lo));
        }
        if hi > omega[omega.len() - 1] {
            return Err(Error::Extrapolation(hi));
        }
    }
    Ok((lo, hi))
}

/// q = τ∫J|u|² dω/2π and C = ∫J|u|²e^{−iωτ_sep}dω / ∫J|u|²dω by adaptive quadrature.
pub fn spectral_overlap_integrals(j: &SpectralDensity, u: &PhotonSpectrum, tau_sep: f64) -> Result<LossReport> {
    j.validate()?;
    if !(tau_sep.is_finite() && tau_sep >= 0.0) {
        return Err(Error::InvalidParameter(format!("τ_sep = {tau_sep}")));
    }
    let norm = u.norm()?;
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::SpectrumNotNormalized(norm));
    }
    if j.is_zero() {
        return Ok(LossReport::from_q_c(0.0, ONE));
    }
    let (lo, hi) = integration_window(j, u)?;
    // two panels per oscillation period of e^{−iωτ_sep}
    let panels = ((hi - lo) * tau_sep / PI).ceil().clamp(1.0, 10_000.0) as usize;
    // the window check above keeps tabulated lookups in range; NaN would
    // surface as a quadrature error
    let weight = |w: f64| j.eval(w).map_or(f64::NAN, |v| v * u.power(w));
    let i0 = integrate(weight, lo, hi, panels, 0.0, REL_TOL * 1e-1)?.value;
    if !(i0 > 0.0) {
        return Ok(LossReport::from_q_c(0.0, ONE));
    }
    let c = if tau_sep == 0.0 {
        ONE
    } else {
        let abs_tol = 1e-3 * REL_TOL * i0;
        let ic = integrate(|w| weight(w) * (w * tau_sep).cos(), lo, hi, panels, abs_tol, REL_TOL)?.value;
        let is = integrate(|w| weight(w) * (w * tau_sep).sin(), lo, hi, panels, abs_tol, REL_TOL)?.value;
        C64::new(ic, -is) / i0
    };
    Ok(LossReport::from_q_c(u.tau() * i0 / (2.0 * PI), c))
}

/// C = e^{−(τ_sep/2τ)²} for a frequency-independent J.
pub fn flat_band_coherence(tau: f64, tau_sep: f64) -> Result<C64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter(format!("photon duration τ = {tau}")));
    }
    Ok(C64::new((-(tau_sep / (2.0 * tau)).powi(2)).exp(), 0.0))
}

/// Closed-form q and C for a Gaussian J and the Gaussian photon spectrum.
/// The phase of C is taken as −δω̄τ_sep; the exact phase is smaller by a
/// factor 1 + 2Λ²τ², so the two agree only for δω̄ = 0 or Λτ ≪ 1.
pub fn gaussian_band_report(j: &SpectralDensity, tau: f64, tau_sep: f64) -> Result<LossReport> {
    let SpectralDensity::Gaussian { g2, lambda, delta_omega_bar } = *j else {
        return Err(Error::SpectralDensity("closed form needs a gaussian spectral density".into()));
    };
    j.validate()?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter(format!("photon duration τ = {tau}")));
    }
    let s = 1.0 + 2.0 * (lambda * tau).powi(2);
    let q = 2.0 * PI.sqrt() * g2 * tau * tau * (-(delta_omega_bar * tau).powi(2) / s).exp() / s.sqrt();
    let c = C64::from_polar((-(lambda * tau_sep).powi(2) / (2.0 * s)).exp(), -delta_omega_bar * tau_sep);
    Ok(LossReport::from_q_c(q, c))
}

/// Second-order |C| ≈ 1 − x²/2 and η ≈ x²/4 with x = Λτ_sep; error O(x⁴).
pub fn narrowband_expansion(lambda: f64, tau_sep: f64) -> Result<(f64, f64)> {
    let x = lambda * tau_sep;
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::InvalidParameter(format!("Λτ_sep = {x}")));
    }
    if x >= 1.0 {
        return Err(Error::RegimeViolation(x));
    }
    Ok((1.0 - 0.5 * x * x, 0.25 * x * x))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TlsSite {
    pub g: C64,
    pub delta_omega: f64,
    pub x: f64,
}

/// ᾱ_j = −i g_j √τ e^{iδω_j x_j/v} u(δω_j); Σ|ᾱ_j|² is the loss probability.
pub fn steadystate_amplitudes(sites: &[TlsSite], u: &PhotonSpectrum, v: f64) -> Result<Vec<C64>> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidParameter(format!("propagation speed {v}")));
    }
    let st = u.tau().sqrt();
    Ok(sites
        .iter()
        .map(|s| {
            -crate::tensor::I * s.g * st * C64::from_polar(1.0, s.delta_omega * s.x / v) * u.amplitude(s.delta_omega)
        })
        .collect())
}

/// Midpoint discretization: |g_j|² = J(ω_j)Δω/2π.
pub fn discretize(j: &SpectralDensity, omega_min: f64, omega_max: f64, n: usize) -> Result<Vec<TlsSite>> {
    if n == 0 || !(omega_max > omega_min) {
        return Err(Error::InvalidParameter(format!("discretization [{omega_min}, {omega_max}] with {n} sites")));
    }
    let dw = (omega_max - omega_min) / n as f64;
    (0..n)
        .map(|k| {
            let w = omega_min + (k as f64 + 0.5) * dw;
            Ok(TlsSite { g: C64::new((j.eval(w)? * dw / (2.0 * PI)).sqrt(), 0.0), delta_omega: w, x: 0.0 })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErasureEstimate {
    pub c_est: C64,
    /// 95% half-widths of the real and imaginary parts.
    pub ci_re: f64,
    pub ci_im: f64,
    pub expect_x: f64,
    pub expect_y: f64,
    pub n_shots: usize,
}

impl ErasureEstimate {
    pub fn contains(&self, c: C64) -> bool {
        (self.c_est.re - c.re).abs() <= self.ci_re && (self.c_est.im - c.im).abs() <= self.ci_im
    }
}

/// Prepares |+⟩⊗|g⟩, applies the heralded-loss branch with coherence
/// `c_true`, and samples `n_shots` X and `n_shots` Y measurements of Q1.
pub fn erasure_experiment_estimator(c_true: C64, n_shots: usize, seed: u64) -> Result<ErasureEstimate> {
    if n_shots < 100 {
        return Err(Error::InvalidParameter(format!("n_shots = {n_shots} (need ≥ 100)")));
    }
    let h = C64::new(0.5f64.sqrt(), 0.0);
    let out = loss_dephasing_channel([h, ZERO, h, ZERO], c_true)?;
    let q1 = partial_trace(&out.conditioned, &["Q1"])?;
    let rho: &DMatrix<C64> = q1.matrix();
    // |+x⟩ = (|g⟩+|e⟩)/√2, |+y⟩ = (|g⟩−i|e⟩)/√2
    let p_x = 0.5 + rho[(0, 1)].re;
    let p_y = 0.5 + rho[(0, 1)].im;
    let (p_x, p_y) = (p_x.clamp(0.0, 1.0), p_y.clamp(0.0, 1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_shots as f64;
    let kx = (0..n_shots).filter(|_| rng.gen_bool(p_x)).count() as f64;
    let ky = (0..n_shots).filter(|_| rng.gen_bool(p_y)).count() as f64;
    let (fx, fy) = (kx / n, ky / n);
    let z = 1.96;
    Ok(ErasureEstimate {
        c_est: C64::new(2.0 * fx - 1.0, 2.0 * fy - 1.0),
        ci_re: 2.0 * z * (fx * (1.0 - fx) / n).sqrt().max(1.0 / n),
        ci_im: 2.0 * z * (fy * (1.0 - fy) / n).sqrt().max(1.0 / n),
        expect_x: 2.0 * p_x - 1.0,
        expect_y: 2.0 * p_y - 1.0,
        n_shots,
    })
}
