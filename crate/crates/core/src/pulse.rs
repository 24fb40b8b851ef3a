// SPDX-License-Identifier: Apache-2.0
//! Time-bin waveforms, emission/absorption drive envelopes and a
//! single-emitter master-equation oracle.

use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::tensor::{C64, ZERO};

/// Uniform grid t_i = t_start + i·dt, i = 0..n.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    dt: f64,
    n: usize,
}

impl TimeGrid {
    /// Grid covering [t_start, t_end]; the end point is rounded onto the grid.
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_end > t_start) || !dt.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time grid [{t_start}, {t_end}] with dt {dt}"
            )));
        }
        let steps = ((t_end - t_start) / dt).round() as usize;
        Ok(Self { t_start, dt, n: steps.max(1) + 1 })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n - 1)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t_start + i as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.time(i))
    }

    pub fn matches(&self, other: &TimeGrid) -> bool {
        let tol = 1e-12 * self.dt;
        self.n == other.n
            && (self.t_start - other.t_start).abs() <= tol
            && (self.dt - other.dt).abs() <= tol
    }

    pub fn trapezoid(&self, f: &[f64]) -> f64 {
        let n = f.len();
        if n < 2 {
            return 0.0;
        }
        self.dt * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[n - 1]))
    }

    pub fn trapezoid_complex(&self, f: &[C64]) -> C64 {
        let n = f.len();
        if n < 2 {
            return ZERO;
        }
        (f.iter().sum::<C64>() - (f[0] + f[n - 1]) * 0.5) * self.dt
    }

    /// Running trapezoid integral, starting at 0 on the first node.
    pub fn cumulative_trapezoid(&self, f: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(f.len());
        let mut acc = 0.0;
        for i in 0..f.len() {
            if i > 0 {
                acc += 0.5 * self.dt * (f[i - 1] + f[i]);
            }
            out.push(acc);
        }
        out
    }

    /// Linear interpolation of sampled data; `None` outside the grid.
    fn interpolate(&self, samples: &[C64], t: f64) -> Option<C64> {
        let x = (t - self.t_start) / self.dt;
        let last = (self.n - 1) as f64;
        if x < -1e-9 || x > last + 1e-9 {
            return None;
        }
        let x = x.clamp(0.0, last);
        let k = x.round();
        if (x - k).abs() < 1e-9 {
            return Some(samples[k as usize]);
        }
        let i = (x.floor() as usize).min(self.n - 2);
        let w = x - i as f64;
        Some(samples[i] * (1.0 - w) + samples[i + 1] * w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinTag {
    Early,
    Late,
    Generic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<C64>,
    grid: TimeGrid,
    tag: BinTag,
    tau: f64,
    t_peak: f64,
}

impl Waveform {
    /// Tabulated waveform; must be normalized to 1e-6.
    pub fn from_samples(samples: Vec<C64>, grid: TimeGrid, tag: BinTag, tau: f64, t_peak: f64) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: samples.len() });
        }
        let w = Self { samples, grid, tag, tau, t_peak };
        let norm = w.norm_sqr();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidState(format!("waveform norm {norm} differs from 1")));
        }
        Ok(w)
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn tag(&self) -> BinTag {
        self.tag
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn t_peak(&self) -> f64 {
        self.t_peak
    }

    pub fn norm_sqr(&self) -> f64 {
        let p: Vec<f64> = self.samples.iter().map(|u| u.norm_sqr()).collect();
        self.grid.trapezoid(&p)
    }

    pub fn value_at(&self, t: f64) -> C64 {
        self.grid.interpolate(&self.samples, t).unwrap_or(ZERO)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvelopeKind {
    Emission,
    Absorption,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeGuards {
    pub omega_cap: f64,
    pub eps_floor: f64,
}

impl EnvelopeGuards {
    /// Clamp at κ/5, mass floor 1e-12.
    pub fn for_kappa(kappa: f64) -> Self {
        Self { omega_cap: kappa / 5.0, eps_floor: 1e-12 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriveEnvelope {
    samples: Vec<C64>,
    grid: TimeGrid,
    kind: EnvelopeKind,
    omega_cap: f64,
    clamped: Vec<bool>,
    tau: f64,
    t_peak: f64,
}

impl DriveEnvelope {
    /// Envelope identically zero on a grid.
    pub fn zero(grid: TimeGrid, kind: EnvelopeKind, omega_cap: f64) -> Self {
        Self {
            samples: vec![ZERO; grid.len()],
            grid,
            kind,
            omega_cap,
            clamped: vec![false; grid.len()],
            tau: 0.0,
            t_peak: 0.0,
        }
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn kind(&self) -> EnvelopeKind {
        self.kind
    }

    pub fn omega_cap(&self) -> f64 {
        self.omega_cap
    }

    pub fn clamped(&self) -> &[bool] {
        &self.clamped
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn t_peak(&self) -> f64 {
        self.t_peak
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Ω(t), linearly interpolated; zero outside the grid.
    pub fn value_at(&self, t: f64) -> C64 {
        self.grid.interpolate(&self.samples, t).unwrap_or(ZERO)
    }

    /// Distance c (in units of τ) between the peak and the nearest clamped
    /// sample on the divergent side. `None` if the clamp never engages there.
    pub fn clamp_onset_offset(&self) -> Option<f64> {
        let times = self.grid.times().zip(&self.clamped);
        let dist = match self.kind {
            EnvelopeKind::Absorption => times
                .filter(|(t, &c)| c && *t < self.t_peak)
                .map(|(t, _)| self.t_peak - t)
                .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d)))),
            EnvelopeKind::Emission => times
                .filter(|(t, &c)| c && *t > self.t_peak)
                .map(|(t, _)| t - self.t_peak)
                .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d)))),
        };
        dist.map(|d| d / self.tau)
    }
}

/// Gate timing. T = 16τ and τ_sep = T/2 unless overridden.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeBinConfig {
    pub tau: f64,
    pub tau_sep: f64,
    pub total_time: f64,
    pub kappa: f64,
}

impl TimeBinConfig {
    pub fn new(kappa: f64, tau: f64) -> Result<Self> {
        let cfg = Self { tau, tau_sep: 8.0 * tau, total_time: 16.0 * tau, kappa };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau", self.tau), ("tau_sep", self.tau_sep), ("T", self.total_time), ("kappa", self.kappa)] {
            if !(v.is_finite() && v >= 0.0) || (name != "tau_sep" && v == 0.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v}")));
            }
        }
        if self.kappa * self.tau < 1.0 {
            return Err(Error::RegimeViolation(self.kappa * self.tau));
        }
        Ok(())
    }

    pub fn early_peak(&self) -> f64 {
        self.total_time / 4.0
    }

    pub fn late_peak(&self) -> f64 {
        self.early_peak() + self.tau_sep
    }
}

/// |u|² mass of the continuum Gaussian lying outside the grid.
fn gaussian_deficit(tau: f64, t_peak: f64, grid: &TimeGrid) -> f64 {
    let a = (grid.t_start() - t_peak) / tau;
    let b = (grid.t_end() - t_peak) / tau;
    1.0 - 0.5 * (erf(b) - erf(a))
}

/// u(t) = exp(−(t−t_peak)²/2τ²)/(π^¼√τ), renormalized on the grid.
pub fn gaussian_waveform(tau: f64, t_peak: f64, grid: TimeGrid, tag: BinTag) -> Result<Waveform> {
    if !(tau > 0.0) || !tau.is_finite() || !t_peak.is_finite() {
        return Err(Error::InvalidParameter(format!("gaussian tau {tau}, t_peak {t_peak}")));
    }
    let deficit = gaussian_deficit(tau, t_peak, &grid);
    if deficit > 1e-6 {
        return Err(Error::GridTooShort(deficit));
    }
    let pref = 1.0 / (std::f64::consts::PI.powf(0.25) * tau.sqrt());
    let mut samples: Vec<C64> = grid
        .times()
        .map(|t| C64::new(pref * (-(t - t_peak).powi(2) / (2.0 * tau * tau)).exp(), 0.0))
        .collect();
    let p: Vec<f64> = samples.iter().map(|u| u.norm_sqr()).collect();
    let norm = grid.trapezoid(&p).sqrt();
    for u in &mut samples {
        *u /= norm;
    }
    Ok(Waveform { samples, grid, tag, tau, t_peak })
}

fn check_regime(u: &Waveform, kappa: f64) -> Result<()> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("kappa = {kappa}")));
    }
    if kappa * u.tau < 1.0 {
        return Err(Error::RegimeViolation(kappa * u.tau));
    }
    Ok(())
}

fn shaped_envelope(u: &Waveform, kappa: f64, guards: EnvelopeGuards, kind: EnvelopeKind) -> Result<DriveEnvelope> {
    check_regime(u, kappa)?;
    let grid = *u.grid();
    let p: Vec<f64> = u.samples().iter().map(|v| v.norm_sqr()).collect();
    let cum = grid.cumulative_trapezoid(&p);
    let total = *cum.last().unwrap_or(&0.0);
    let pref = kappa.sqrt() / 2.0;
    let mut samples = Vec::with_capacity(p.len());
    let mut clamped = Vec::with_capacity(p.len());
    for (i, &ui) in u.samples().iter().enumerate() {
        let mass = match kind {
            EnvelopeKind::Emission => total - cum[i],
            EnvelopeKind::Absorption => cum[i],
        };
        let mut omega = ui * (pref / mass.max(guards.eps_floor).sqrt());
        let mag = omega.norm();
        let hit = mag > guards.omega_cap;
        if hit {
            omega *= guards.omega_cap / mag;
        }
        samples.push(omega);
        clamped.push(hit);
    }
    Ok(DriveEnvelope {
        samples,
        grid,
        kind,
        omega_cap: guards.omega_cap,
        clamped,
        tau: u.tau(),
        t_peak: u.t_peak(),
    })
}

/// Ω_e(t) = (√κ/2)·u(t)/√(∫_t^∞|u|²) with default guards.
pub fn emission_envelope(u: &Waveform, kappa: f64) -> Result<DriveEnvelope> {
    emission_envelope_with(u, kappa, EnvelopeGuards::for_kappa(kappa))
}

pub fn emission_envelope_with(u: &Waveform, kappa: f64, guards: EnvelopeGuards) -> Result<DriveEnvelope> {
    shaped_envelope(u, kappa, guards, EnvelopeKind::Emission)
}

/// Ω_a(t) = (√κ/2)·u(t)/√(∫_{−∞}^t|u|²) with default guards.
pub fn absorption_envelope(u: &Waveform, kappa: f64) -> Result<DriveEnvelope> {
    absorption_envelope_with(u, kappa, EnvelopeGuards::for_kappa(kappa))
}

pub fn absorption_envelope_with(u: &Waveform, kappa: f64, guards: EnvelopeGuards) -> Result<DriveEnvelope> {
    shaped_envelope(u, kappa, guards, EnvelopeKind::Absorption)
}

/// ∫u1* u2 dt on a shared grid.
pub fn waveform_overlap(u1: &Waveform, u2: &Waveform) -> Result<C64> {
    if !u1.grid().matches(u2.grid()) {
        return Err(Error::GridMismatch);
    }
    let prod: Vec<C64> = u1.samples().iter().zip(u2.samples()).map(|(a, b)| a.conj() * b).collect();
    Ok(u1.grid().trapezoid_complex(&prod))
}

// Oracle basis: g0, g1, f0.
const G0: usize = 0;
const G1: usize = 1;
const F0: usize = 2;

type M3 = [[C64; 3]; 3];

fn oracle_rhs(rho: &M3, omega: C64, kappa: f64) -> M3 {
    // H = iΩ|g1⟩⟨f0| − iΩ*|f0⟩⟨g1|, L = √κ|g0⟩⟨g1|
    let mut h = [[ZERO; 3]; 3];
    h[G1][F0] = omega * C64::new(0.0, 1.0);
    h[F0][G1] = -omega.conj() * C64::new(0.0, 1.0);
    let mut out = [[ZERO; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let mut comm = ZERO;
            for k in 0..3 {
                comm += h[r][k] * rho[k][c] - rho[r][k] * h[k][c];
            }
            out[r][c] = comm * C64::new(0.0, -1.0);
        }
    }
    // κ(LρL† − ½{L†L, ρ}); L†L = |g1⟩⟨g1|
    out[G0][G0] += rho[G1][G1] * kappa;
    for k in 0..3 {
        out[G1][k] -= rho[G1][k] * (0.5 * kappa);
        out[k][G1] -= rho[k][G1] * (0.5 * kappa);
    }
    out
}

fn axpy(a: &M3, s: f64, b: &M3) -> M3 {
    let mut out = *a;
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] += b[r][c] * s;
        }
    }
    out
}

/// Replays a drive through the 3-state emitter+cavity master equation and
/// returns u_out(t) = √κ·ρ_{g1,g0}(t)/ρ_{f0,g0}(0).
pub fn emit_oracle(envelope: &DriveEnvelope, kappa: f64) -> Result<Waveform> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("kappa = {kappa}")));
    }
    let grid = *envelope.grid();
    let h = grid.dt();
    let half = C64::new(0.5, 0.0);
    let mut rho: M3 = [[ZERO; 3]; 3];
    for r in [G0, F0] {
        for c in [G0, F0] {
            rho[r][c] = half;
        }
    }
    let c0 = rho[F0][G0];
    let mut out = Vec::with_capacity(grid.len());
    out.push(rho[G1][G0] * kappa.sqrt() / c0);
    for i in 0..grid.len() - 1 {
        let t = grid.time(i);
        let w0 = envelope.samples()[i];
        let w1 = envelope.samples()[i + 1];
        let wm = envelope.value_at(t + 0.5 * h);
        let k1 = oracle_rhs(&rho, w0, kappa);
        let k2 = oracle_rhs(&axpy(&rho, 0.5 * h, &k1), wm, kappa);
        let k3 = oracle_rhs(&axpy(&rho, 0.5 * h, &k2), wm, kappa);
        let k4 = oracle_rhs(&axpy(&rho, h, &k3), w1, kappa);
        for r in 0..3 {
            for c in 0..3 {
                rho[r][c] += (k1[r][c] + (k2[r][c] + k3[r][c]) * 2.0 + k4[r][c]) * (h / 6.0);
            }
        }
        let blown = rho
            .iter()
            .flatten()
            .any(|v| !v.re.is_finite() || !v.im.is_finite() || v.norm() > 1.0 + 1e-6);
        if blown {
            return Err(Error::IntegrationUnstable(t + h));
        }
        out.push(rho[G1][G0] * kappa.sqrt() / c0);
    }
    Ok(Waveform {
        samples: out,
        grid,
        tag: BinTag::Generic,
        tau: envelope.tau(),
        t_peak: envelope.t_peak(),
    })
}

/// Round-trip check: target waveform → emission envelope → oracle output.
#[derive(Clone, Debug)]
pub struct EmitCheck {
    pub target: Waveform,
    pub envelope: DriveEnvelope,
    pub output: Waveform,
    /// |∫u*·u_out dt|²
    pub overlap_sqr: f64,
    /// 1 − ∫|u_out|² dt
    pub residual: f64,
}

/// Emission round trip for a Gaussian of width τ centred in a 16τ window.
pub fn emit_check(kappa: f64, tau: f64, dt: f64) -> Result<EmitCheck> {
    let total = 16.0 * tau;
    let grid = TimeGrid::new(0.0, total, dt)?;
    let target = gaussian_waveform(tau, total / 2.0, grid, BinTag::Generic)?;
    let envelope = emission_envelope(&target, kappa)?;
    let output = emit_oracle(&envelope, kappa)?;
    let overlap_sqr = waveform_overlap(&target, &output)?.norm_sqr();
    let residual = 1.0 - output.norm_sqr();
    Ok(EmitCheck { target, envelope, output, overlap_sqr, residual })
}


#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(tau: f64) -> TimeGrid {
        TimeGrid::new(0.0, 16.0 * tau, tau / 200.0).unwrap()
    }

    #[test]
    fn gaussian_peak_and_norm() {
        let u = gaussian_waveform(1.0, 8.0, grid(1.0), BinTag::Generic).unwrap();
        assert!((u.norm_sqr() - 1.0).abs() < 1e-12);
        assert!((u.value_at(8.0).re - PI.powf(-0.25)).abs() < 1e-9);
        assert!((u.value_at(8.0).re - 0.75113).abs() < 1e-5);
    }

    #[test]
    fn early_late_overlap_matches_closed_form() {
        let g = grid(1.0);
        let ue = gaussian_waveform(1.0, 4.0, g, BinTag::Early).unwrap();
        let ul = gaussian_waveform(1.0, 12.0, g, BinTag::Late).unwrap();
        let ov = waveform_overlap(&ue, &ul).unwrap();
        // ∫ Gaussian overlap at separation s: exp(−s²/4τ²)
        assert!((ov.re - (-16.0f64).exp()).abs() / (-16.0f64).exp() < 1e-6);
        assert!((waveform_overlap(&ue, &ue).unwrap().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_decreases_with_separation() {
        let g = grid(1.0);
        let u0 = gaussian_waveform(1.0, 8.0, g, BinTag::Generic).unwrap();
        let ovs: Vec<f64> = [0.0, 1.0, 2.0, 4.0]
            .iter()
            .map(|s| {
                let u = gaussian_waveform(1.0, 8.0 + s, g, BinTag::Generic).unwrap();
                waveform_overlap(&u0, &u).unwrap().norm_sqr()
            })
            .collect();
        assert!(ovs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn short_grid_rejected() {
        let g = TimeGrid::new(0.0, 4.0, 0.01).unwrap();
        assert!(matches!(gaussian_waveform(1.0, 1.0, g, BinTag::Generic), Err(Error::GridTooShort(_))));
        let g2 = TimeGrid::new(0.0, 4.0, 0.01).unwrap();
        let u = gaussian_waveform(0.2, 2.0, g2, BinTag::Generic).unwrap();
        let other = gaussian_waveform(0.2, 2.0, TimeGrid::new(0.0, 4.0, 0.02).unwrap(), BinTag::Generic).unwrap();
        assert!(matches!(waveform_overlap(&u, &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn emission_peak_value() {
        let tau = 1.0;
        let kappa = 20.0;
        let u = gaussian_waveform(tau, 8.0, grid(tau), BinTag::Generic).unwrap();
        let env = emission_envelope(&u, kappa).unwrap();
        let expect = 0.5 * kappa.sqrt() * PI.powf(-0.25) / (0.5f64).sqrt();
        assert!((env.value_at(8.0).re - expect).abs() / expect < 1e-4);
        assert!((expect / kappa.sqrt() - 0.5311).abs() < 1e-4);
        assert!(env.samples()[0].norm() < 1e-6);
        assert!(env.max_abs() <= env.omega_cap() * (1.0 + 1e-15));
    }

    #[test]
    fn absorption_is_time_reverse_of_emission() {
        let tau = 1.0;
        let g = TimeGrid::new(-8.0, 8.0, tau / 200.0).unwrap();
        let u = gaussian_waveform(tau, 0.0, g, BinTag::Generic).unwrap();
        let e = emission_envelope(&u, 20.0).unwrap();
        let a = absorption_envelope(&u, 20.0).unwrap();
        let n = g.len();
        for i in 0..n {
            assert!((a.samples()[i] - e.samples()[n - 1 - i]).norm() < 1e-10);
        }
        assert!((a.value_at(0.0) - e.value_at(0.0)).norm() < 1e-10);
    }

    #[test]
    fn regime_violation() {
        let u = gaussian_waveform(1.0, 8.0, grid(1.0), BinTag::Generic).unwrap();
        assert!(matches!(emission_envelope(&u, 0.5), Err(Error::RegimeViolation(_))));
    }

    #[test]
    fn absorption_clamp_onset_is_reported() {
        let u = gaussian_waveform(1.0, 8.0, grid(1.0), BinTag::Generic).unwrap();
        let c20 = absorption_envelope(&u, 20.0).unwrap().clamp_onset_offset().unwrap();
        let c40 = absorption_envelope(&u, 40.0).unwrap().clamp_onset_offset().unwrap();
        assert!(c20 > 1.0 && c20 < 2.0, "c = {c20}");
        assert!(c40 > c20);
    }

    #[test]
    fn zero_drive_emits_nothing() {
        let env = DriveEnvelope::zero(grid(1.0), EnvelopeKind::Emission, 4.0);
        let out = emit_oracle(&env, 20.0).unwrap();
        assert!(out.samples().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn oracle_round_trip_and_convergence() {
        let check = emit_check(20.0, 1.0, 1.0 / 200.0).unwrap();
        let fine = emit_check(20.0, 1.0, 1.0 / 400.0).unwrap();
        assert!((check.overlap_sqr - fine.overlap_sqr).abs() < 1e-6);
        assert!(check.overlap_sqr > 0.99);
        assert!(check.residual.abs() < 1e-3);
    }
}
