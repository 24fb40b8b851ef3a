// SPDX-License-Identifier: Apache-2.0
//! Time-dependent Lindblad integration of the cascaded three-cavity gate.
//!
//! The density matrix is propagated on the smallest set of basis kets that
//! contains its support and is closed under every generator, which is exact
//! and keeps the working dimension far below the full Hilbert space.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::pulse::{
    absorption_envelope_with, emission_envelope_with, gaussian_waveform, BinTag, DriveEnvelope, EnvelopeGuards, TimeGrid,
};
use crate::tensor::{
    destroy, embed, ket_bra, DensityMatrix, Operator, PureState, SparseMatrix, SubsystemLayout, C64, E, F, G, I, ZERO,
};

pub const QUBIT_LABELS: [&str; 3] = ["Q1", "Q2", "Q3"];
pub const CAVITY_LABELS: [&str; 3] = ["C1", "C2", "C3"];

/// Physical parameters of the gate simulation (SI units, angular frequencies).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateConfig {
    pub kappa: f64,
    pub tau: f64,
    pub total_time: f64,
    /// Common relaxation rate 1/T1.
    pub gamma: f64,
    pub n_max: usize,
    pub dt: f64,
    pub omega_cap: f64,
    pub eps_floor: f64,
}

impl GateConfig {
    /// T = 16τ, dt = τ/200, Γ = 0, n_max = 1, clamp κ/5, floor 1e-12.
    pub fn new(kappa: f64, tau: f64) -> Result<Self> {
        let guards = EnvelopeGuards::for_kappa(kappa);
        let cfg = Self {
            kappa,
            tau,
            total_time: 16.0 * tau,
            gamma: 0.0,
            n_max: 1,
            dt: tau / 200.0,
            omega_cap: guards.omega_cap,
            eps_floor: guards.eps_floor,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_kappa_tau(kappa: f64, kappa_tau: f64) -> Result<Self> {
        Self::new(kappa, kappa_tau / kappa)
    }

    /// Γ = 1/T1; `None` means no qubit decoherence.
    pub fn with_t1(mut self, t1: Option<f64>) -> Result<Self> {
        self.gamma = match t1 {
            None => 0.0,
            Some(t) if t > 0.0 && t.is_finite() => 1.0 / t,
            Some(t) => return Err(Error::InvalidParameter(format!("T1 = {t}"))),
        };
        Ok(self)
    }

    pub fn kappa_tau(&self) -> f64 {
        self.kappa * self.tau
    }

    pub fn guards(&self) -> EnvelopeGuards {
        EnvelopeGuards { omega_cap: self.omega_cap, eps_floor: self.eps_floor }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("kappa", self.kappa), ("tau", self.tau), ("T", self.total_time), ("dt", self.dt), ("omega_cap", self.omega_cap), ("eps_floor", self.eps_floor)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v}")));
            }
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("Gamma = {}", self.gamma)));
        }
        if self.n_max < 1 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        if self.dt > self.tau / 100.0 * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!("dt = {} exceeds tau/100", self.dt)));
        }
        if self.kappa_tau() < 1.0 {
            return Err(Error::RegimeViolation(self.kappa_tau()));
        }
        Ok(())
    }
}

/// Q1, C1, Q2, C2, Q3, C3 with dims 3, n+1, 2, n+1, 3, n+1.
pub fn gate_layout(n_max: usize) -> Result<SubsystemLayout> {
    let c = n_max + 1;
    SubsystemLayout::new(&[3, c, 2, c, 3, c], &["Q1", "C1", "Q2", "C2", "Q3", "C3"])
}

/// Time dependence of one Hamiltonian component.
#[derive(Clone, Debug)]
pub enum Coefficient {
    Constant(f64),
    EnvelopeRe(Arc<DriveEnvelope>),
    EnvelopeIm(Arc<DriveEnvelope>),
}

impl Coefficient {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::EnvelopeRe(e) => e.value_at(t).re,
            Coefficient::EnvelopeIm(e) => e.value_at(t).im,
        }
    }
}

/// H(t) = H₀ + Σ_k c_k(t) H_k with static collapse operators.
#[derive(Clone, Debug)]
pub struct Generator {
    layout: SubsystemLayout,
    h_static: SparseMatrix,
    terms: Vec<(SparseMatrix, Coefficient)>,
    collapse: Vec<SparseMatrix>,
}

impl Generator {
    pub fn new(layout: SubsystemLayout) -> Self {
        let d = layout.total_dim();
        Self { layout, h_static: SparseMatrix::zeros(d), terms: Vec::new(), collapse: Vec::new() }
    }

    fn check(&self, op: &Operator) -> Result<()> {
        if op.layout() != &self.layout {
            return Err(Error::LayoutMismatch);
        }
        Ok(())
    }

    pub fn with_static(mut self, h: &Operator) -> Result<Self> {
        self.check(h)?;
        self.h_static = self.h_static.add(h.matrix());
        Ok(self)
    }

    /// Adds c(t)·H_k; H_k must be Hermitian.
    pub fn with_term(mut self, h: &Operator, coeff: Coefficient) -> Result<Self> {
        self.check(h)?;
        let dev = h.matrix().hermitian_deviation();
        if dev > 1e-12 {
            return Err(Error::NotHermitian(dev));
        }
        self.terms.push((h.matrix().clone(), coeff));
        Ok(self)
    }

    pub fn with_collapse(mut self, l: &Operator) -> Result<Self> {
        self.check(l)?;
        self.collapse.push(l.matrix().clone());
        Ok(self)
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn collapse_ops(&self) -> &[SparseMatrix] {
        &self.collapse
    }

    pub fn hamiltonian(&self, t: f64) -> Operator {
        let mut h = self.h_static.clone();
        for (op, c) in &self.terms {
            let v = c.at(t);
            if v != 0.0 {
                h = h.add(&op.scale(C64::new(v, 0.0)));
            }
        }
        Operator::new(h, self.layout.clone()).expect("generator dimensions are consistent")
    }

    /// Kets reachable from `seed` under every generator.
    fn closure(&self, seed: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let d = self.layout.total_dim();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); d];
        let k: SparseMatrix = self
            .collapse
            .iter()
            .fold(SparseMatrix::zeros(d), |acc, l| acc.add(&l.adjoint().matmul(l)));
        let mats = std::iter::once(&self.h_static)
            .chain(self.terms.iter().map(|(m, _)| m))
            .chain(self.collapse.iter())
            .chain(std::iter::once(&k));
        for m in mats {
            for (r, c, _) in m.triplets() {
                adj[c].push(r);
            }
        }
        let mut seen = vec![false; d];
        let mut stack: Vec<usize> = Vec::new();
        for s in seed {
            if !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
        while let Some(k) = stack.pop() {
            for &r in &adj[k] {
                if !seen[r] {
                    seen[r] = true;
                    stack.push(r);
                }
            }
        }
        (0..d).filter(|&i| seen[i]).collect()
    }
}

/// CSR restricted to a support, stored with a shared pattern.
#[derive(Clone, Debug)]
struct Csr {
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<C64>,
}

impl Csr {
    fn from_sparse(m: &SparseMatrix) -> Self {
        let d = m.dim();
        let mut row_ptr = vec![0];
        let mut col = Vec::new();
        let mut val = Vec::new();
        for r in 0..d {
            for (c, v) in m.row(r) {
                col.push(c);
                val.push(v);
            }
            row_ptr.push(col.len());
        }
        Self { row_ptr, col, val }
    }
}

/// Effective non-Hermitian generator G(t) = −iH(t) − ½ΣL†L on a fixed pattern.
struct ReducedGenerator {
    d: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    base: Vec<C64>,
    parts: Vec<(Vec<C64>, Coefficient)>,
    lops: Vec<Csr>,
}

impl ReducedGenerator {
    fn new(gen: &Generator, support: &[usize]) -> Self {
        let d = support.len();
        let h0 = gen.h_static.restrict(support);
        let terms: Vec<(SparseMatrix, Coefficient)> =
            gen.terms.iter().map(|(m, c)| (m.restrict(support), c.clone())).collect();
        // K restricted from the full product, not the product of restrictions
        let full_d = gen.layout.total_dim();
        let k = gen
            .collapse
            .iter()
            .fold(SparseMatrix::zeros(full_d), |acc, l| acc.add(&l.adjoint().matmul(l)))
            .restrict(support);
        let mut pattern: BTreeSet<(usize, usize)> = BTreeSet::new();
        for m in std::iter::once(&h0).chain(terms.iter().map(|(m, _)| m)).chain(std::iter::once(&k)) {
            pattern.extend(m.triplets().map(|(r, c, _)| (r, c)));
        }
        let mut row_ptr = vec![0; d + 1];
        let mut col = Vec::with_capacity(pattern.len());
        let mut pos: HashMap<(usize, usize), usize> = HashMap::new();
        for (p, &(r, c)) in pattern.iter().enumerate() {
            row_ptr[r + 1] += 1;
            col.push(c);
            pos.insert((r, c), p);
        }
        for r in 0..d {
            row_ptr[r + 1] += row_ptr[r];
        }
        let scatter = |m: &SparseMatrix, s: C64| -> Vec<C64> {
            let mut v = vec![ZERO; pattern.len()];
            for (r, c, x) in m.triplets() {
                v[pos[&(r, c)]] += x * s;
            }
            v
        };
        let mut base = scatter(&h0, -I);
        for (b, x) in base.iter_mut().zip(scatter(&k, C64::new(-0.5, 0.0))) {
            *b += x;
        }
        let parts = terms.iter().map(|(m, c)| (scatter(m, -I), c.clone())).collect();
        let lops = gen
            .collapse
            .iter()
            .map(|l| Csr::from_sparse(&l.restrict(support)))
            .filter(|l| !l.val.is_empty())
            .collect();
        Self { d, row_ptr, col, base, parts, lops }
    }

    fn values_at(&self, t: f64, out: &mut Vec<C64>) {
        out.clear();
        out.extend_from_slice(&self.base);
        for (vals, c) in &self.parts {
            let s = c.at(t);
            if s != 0.0 {
                for (o, v) in out.iter_mut().zip(vals) {
                    *o += v * s;
                }
            }
        }
    }
}

struct Workspace {
    gvals: Vec<C64>,
    y: Vec<C64>,
    t1: Vec<C64>,
    t2: Vec<C64>,
    k: [Vec<C64>; 4],
    stage: Vec<C64>,
}

impl Workspace {
    fn new(d: usize) -> Self {
        let z = vec![ZERO; d * d];
        Self {
            gvals: Vec::new(),
            y: z.clone(),
            t1: z.clone(),
            t2: z.clone(),
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            stage: z,
        }
    }
}

/// out = Gρ + (Gρ)† + Σ LρL†, all row-major d×d.
fn rhs(rg: &ReducedGenerator, gvals: &[C64], rho: &[C64], out: &mut [C64], y: &mut [C64], t1: &mut [C64], t2: &mut [C64]) {
    let d = rg.d;
    y.fill(ZERO);
    for r in 0..d {
        let yr = &mut y[r * d..(r + 1) * d];
        for p in rg.row_ptr[r]..rg.row_ptr[r + 1] {
            let v = gvals[p];
            let src = &rho[rg.col[p] * d..(rg.col[p] + 1) * d];
            for (a, b) in yr.iter_mut().zip(src) {
                *a += v * b;
            }
        }
    }
    for r in 0..d {
        for c in 0..d {
            out[r * d + c] = y[r * d + c] + y[c * d + r].conj();
        }
    }
    for l in &rg.lops {
        // t1 = Lρ
        t1.fill(ZERO);
        for r in 0..d {
            for p in l.row_ptr[r]..l.row_ptr[r + 1] {
                let v = l.val[p];
                let src = &rho[l.col[p] * d..(l.col[p] + 1) * d];
                let dst = &mut t1[r * d..(r + 1) * d];
                for (a, b) in dst.iter_mut().zip(src) {
                    *a += v * b;
                }
            }
        }
        // t2 = t1†
        for r in 0..d {
            for c in 0..d {
                t2[r * d + c] = t1[c * d + r].conj();
            }
        }
        // out += L t2
        for r in 0..d {
            for p in l.row_ptr[r]..l.row_ptr[r + 1] {
                let v = l.val[p];
                let k = l.col[p];
                for c in 0..d {
                    out[r * d + c] += v * t2[k * d + c];
                }
            }
        }
    }
}

/// Receives the reduced state after every integration step.
pub trait StepObserver {
    /// `rho` is row-major over the kets listed in `support`.
    fn observe(&mut self, t: f64, support: &[usize], rho: &[C64]);
}

impl StepObserver for () {
    fn observe(&mut self, _: f64, _: &[usize], _: &[C64]) {}
}

#[derive(Clone, Debug)]
pub struct SegmentResult {
    pub rho: DensityMatrix,
    /// |Tr ρ(t1) − Tr ρ(t0)|
    pub trace_drift: f64,
    pub dt_used: f64,
    pub support_size: usize,
    /// Minimum eigenvalue of the final state.
    pub min_eigenvalue: f64,
}

fn rk4_run(
    rg: &ReducedGenerator,
    rho0: &[C64],
    t0: f64,
    t1: f64,
    dt: f64,
    support: &[usize],
    obs: &mut dyn StepObserver,
) -> Result<Vec<C64>> {
    let d = rg.d;
    let n = ((t1 - t0) / dt).round().max(1.0) as usize;
    let h = (t1 - t0) / n as f64;
    let mut ws = Workspace::new(d);
    let mut rho = rho0.to_vec();
    for step in 0..n {
        let t = t0 + step as f64 * h;
        let times = [t, t + 0.5 * h, t + 0.5 * h, t + h];
        let weights = [0.0, 0.5 * h, 0.5 * h, h];
        for s in 0..4 {
            if s == 0 {
                ws.stage.copy_from_slice(&rho);
            } else {
                let prev = &ws.k[s - 1];
                for ((a, b), c) in ws.stage.iter_mut().zip(&rho).zip(prev) {
                    *a = b + c * weights[s];
                }
            }
            let mut gvals = std::mem::take(&mut ws.gvals);
            rg.values_at(times[s], &mut gvals);
            let mut out = std::mem::take(&mut ws.k[s]);
            rhs(rg, &gvals, &ws.stage, &mut out, &mut ws.y, &mut ws.t1, &mut ws.t2);
            ws.k[s] = out;
            ws.gvals = gvals;
        }
        for (i, x) in rho.iter_mut().enumerate().take(d * d) {
            *x += (ws.k[0][i] + (ws.k[1][i] + ws.k[2][i]) * 2.0 + ws.k[3][i]) * (h / 6.0);
        }
        for r in 0..d {
            for c in r..d {
                let a = rho[r * d + c];
                let b = rho[c * d + r].conj();
                let m = (a + b) * 0.5;
                rho[r * d + c] = m;
                rho[c * d + r] = m.conj();
            }
        }
        if rho.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::IntegrationUnstable(t + h));
        }
        obs.observe(t + h, support, &rho);
    }
    Ok(rho)
}

fn reduced_trace(rho: &[C64], d: usize) -> f64 {
    (0..d).map(|i| rho[i * d + i].re).sum()
}

/// Fixed-step RK4 from t0 to t1. A trace drift above 1e-6 halves the step,
/// at most four times.
pub fn integrate(
    gen: &Generator,
    rho: &DensityMatrix,
    t0: f64,
    t1: f64,
    dt: f64,
    obs: &mut dyn StepObserver,
) -> Result<SegmentResult> {
    if rho.layout() != gen.layout() {
        return Err(Error::LayoutMismatch);
    }
    if !(t1 > t0) || !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("segment [{t0}, {t1}] with dt {dt}")));
    }
    let full = rho.matrix();
    let dfull = full.nrows();
    let seed = (0..dfull).filter(|&i| (0..dfull).any(|j| full[(i, j)] != ZERO || full[(j, i)] != ZERO));
    let support = gen.closure(seed);
    let d = support.len();
    let rg = ReducedGenerator::new(gen, &support);
    let mut rho0 = vec![ZERO; d * d];
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            rho0[a * d + b] = full[(i, j)];
        }
    }
    let tr0 = reduced_trace(&rho0, d);
    let mut step = dt;
    let mut halvings = 0;
    let (out, drift) = loop {
        let out = rk4_run(&rg, &rho0, t0, t1, step, &support, obs)?;
        let drift = (reduced_trace(&out, d) - tr0).abs();
        if drift <= 1e-6 {
            break (out, drift);
        }
        if halvings == 4 {
            return Err(Error::StepInstability { drift, halvings });
        }
        halvings += 1;
        step /= 2.0;
    };
    let mut m = DMatrix::zeros(dfull, dfull);
    let mut red = DMatrix::zeros(d, d);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            m[(i, j)] = out[a * d + b];
            red[(a, b)] = out[a * d + b];
        }
    }
    let min_eigenvalue = if d > 0 {
        red.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        0.0
    };
    Ok(SegmentResult {
        rho: DensityMatrix::from_parts(m, rho.layout().clone())?,
        trace_drift: drift,
        dt_used: step,
        support_size: d,
        min_eigenvalue,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PulseLevels {
    /// swaps |e⟩ and |g⟩
    Eg,
    /// swaps |f⟩ and |e⟩
    Fe,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiPulse {
    pub levels: PulseLevels,
    pub target: String,
}

impl PiPulse {
    pub fn eg(target: &str) -> Self {
        Self { levels: PulseLevels::Eg, target: target.to_string() }
    }

    pub fn fe(target: &str) -> Self {
        Self { levels: PulseLevels::Fe, target: target.to_string() }
    }
}

/// Applies ideal instantaneous π pulses in list order.
pub fn apply_pi_pulses(rho: &DensityMatrix, which: &[PiPulse]) -> Result<DensityMatrix> {
    let layout = rho.layout();
    let d = layout.total_dim();
    let mut perm: Vec<usize> = (0..d).collect();
    for p in which {
        if p.target != "Q1" && p.target != "Q3" {
            return Err(Error::InvalidPulse(format!("pi pulse on `{}` (only Q1 and Q3 carry |f⟩)", p.target)));
        }
        let pos = layout.position(&p.target)?;
        if layout.dims()[pos] != 3 {
            return Err(Error::InvalidPulse(format!("`{}` is not a qutrit", p.target)));
        }
        let (a, b) = match p.levels {
            PulseLevels::Eg => (E, G),
            PulseLevels::Fe => (F, E),
        };
        for x in perm.iter_mut() {
            let mut digits = layout.digits(*x);
            if digits[pos] == a {
                digits[pos] = b;
            } else if digits[pos] == b {
                digits[pos] = a;
            }
            *x = layout.index(&digits);
        }
    }
    let m = rho.matrix();
    let mut out = DMatrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            out[(perm[r], perm[c])] = m[(r, c)];
        }
    }
    let mut res = DensityMatrix::from_parts(out, layout.clone())?;
    if rho.is_normalized() {
        res = DensityMatrix::new(res.into_matrix(), layout.clone())?;
    }
    Ok(res)
}

/// Named collapse operators.
#[derive(Clone, Debug)]
pub struct CollapseSet {
    pub ops: Vec<(String, Operator)>,
}

impl CollapseSet {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// Collective cavity decay plus relaxation and dephasing of each qubit.
pub fn build_collapse_ops(cfg: &GateConfig) -> Result<CollapseSet> {
    let layout = gate_layout(cfg.n_max)?;
    let c = cfg.n_max + 1;
    let mut ops = Vec::new();
    let mut l0 = Operator::zeros(&layout);
    for cav in CAVITY_LABELS {
        l0 = &l0 + &embed(&destroy(c), cav, &layout)?;
    }
    ops.push(("L0".to_string(), l0.scale(C64::new(cfg.kappa.sqrt(), 0.0))));
    let g = C64::new(cfg.gamma.sqrt(), 0.0);
    let gh = C64::new((cfg.gamma / 2.0).sqrt(), 0.0);
    for q in QUBIT_LABELS {
        let d = layout.dim_of(q)?;
        ops.push((format!("relax_eg_{q}"), embed(&(ket_bra(d, G, E) * g), q, &layout)?));
        ops.push((format!("dephase_eg_{q}"), embed(&((ket_bra(d, E, E) - ket_bra(d, G, G)) * gh), q, &layout)?));
        if d == 3 {
            ops.push((format!("relax_fe_{q}"), embed(&(ket_bra(d, E, F) * g), q, &layout)?));
            ops.push((format!("dephase_fe_{q}"), embed(&((ket_bra(d, F, F) - ket_bra(d, E, E)) * gh), q, &layout)?));
        }
    }
    Ok(CollapseSet { ops })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    /// [0, T/2): early-bin drives, χ = 0
    Early,
    /// [T/2, T]: late-bin drives, χ = κ/2
    Late,
}

#[derive(Clone, Debug)]
pub struct SegmentSpec {
    pub t_start: f64,
    pub t_end: f64,
    pub segment: Segment,
}

/// Contiguous segments over [0, T] and the π-pulse events at their boundaries.
#[derive(Clone, Debug)]
pub struct GeneratorSchedule {
    pub segments: Vec<SegmentSpec>,
    pub instant_events: Vec<(f64, Vec<PiPulse>)>,
}

impl GeneratorSchedule {
    pub fn for_config(cfg: &GateConfig) -> Self {
        let t = cfg.total_time;
        Self {
            segments: vec![
                SegmentSpec { t_start: 0.0, t_end: t / 2.0, segment: Segment::Early },
                SegmentSpec { t_start: t / 2.0, t_end: t, segment: Segment::Late },
            ],
            instant_events: vec![
                (0.0, vec![PiPulse::fe("Q1"), PiPulse::eg("Q1")]),
                (t / 2.0, vec![PiPulse::fe("Q1"), PiPulse::eg("Q1"), PiPulse::fe("Q3")]),
                (t, vec![PiPulse::eg("Q3"), PiPulse::fe("Q3"), PiPulse::eg("Q3")]),
            ],
        }
    }
}

/// Envelopes and generators for one configuration.
#[derive(Clone, Debug)]
pub struct GateModel {
    cfg: GateConfig,
    layout: SubsystemLayout,
    early: Generator,
    late: Generator,
    envelopes: [Arc<DriveEnvelope>; 4],
}

/// Hermitian components X = A + A†, Y = i(A − A†) of Ω A + Ω* A†.
fn drive_components(qubit: &str, cavity: &str, layout: &SubsystemLayout, c: usize) -> Result<(Operator, Operator)> {
    // A = i|g⟩⟨f| a†
    let sigma = embed(&ket_bra(3, G, F), qubit, layout)?;
    let ad = embed(&destroy(c).adjoint(), cavity, layout)?;
    let a = (&sigma * &ad).scale(I);
    let x = &a + &a.adjoint();
    let y = (&a - &a.adjoint()).scale(I);
    let mut x = x;
    let mut y = y;
    x.mark_hermitian()?;
    y.mark_hermitian()?;
    Ok((x, y))
}

impl GateModel {
    pub fn new(cfg: GateConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = gate_layout(cfg.n_max)?;
        let c = cfg.n_max + 1;
        let t = cfg.total_time;
        let grid = TimeGrid::new(0.0, t, cfg.dt / 2.0)?;
        let tau_sep = t / 2.0;
        let u_e = gaussian_waveform(cfg.tau, t / 4.0, grid, BinTag::Early)?;
        let u_l = gaussian_waveform(cfg.tau, t / 4.0 + tau_sep, grid, BinTag::Late)?;
        let g = cfg.guards();
        let envelopes = [
            Arc::new(emission_envelope_with(&u_e, cfg.kappa, g)?),
            Arc::new(emission_envelope_with(&u_l, cfg.kappa, g)?),
            Arc::new(absorption_envelope_with(&u_e, cfg.kappa, g)?),
            Arc::new(absorption_envelope_with(&u_l, cfg.kappa, g)?),
        ];

        let a: Vec<Operator> = CAVITY_LABELS
            .iter()
            .map(|cav| embed(&destroy(c), cav, &layout))
            .collect::<Result<_>>()?;
        // (i/2)κ Σ_{i<j} (a_i† a_j − a_j† a_i)
        let mut cascade = Operator::zeros(&layout);
        for i in 0..3 {
            for j in i + 1..3 {
                let hop = &a[i].adjoint() * &a[j];
                cascade = &cascade + &(&hop - &hop.adjoint()).scale(C64::new(0.0, cfg.kappa / 2.0));
            }
        }
        cascade.mark_hermitian()?;
        let (x1, y1) = drive_components("Q1", "C1", &layout, c)?;
        let (x3, y3) = drive_components("Q3", "C3", &layout, c)?;
        let z2 = &embed(&ket_bra(2, E, E), "Q2", &layout)? - &embed(&ket_bra(2, G, G), "Q2", &layout)?;
        let mut disp = &z2 * &(&a[1].adjoint() * &a[1]);
        disp.mark_hermitian()?;
        let collapse = build_collapse_ops(&cfg)?;

        let build = |em: &Arc<DriveEnvelope>, ab: &Arc<DriveEnvelope>, chi: f64| -> Result<Generator> {
            let mut gen = Generator::new(layout.clone())
                .with_static(&cascade)?
                .with_term(&x1, Coefficient::EnvelopeRe(em.clone()))?
                .with_term(&y1, Coefficient::EnvelopeIm(em.clone()))?
                .with_term(&x3, Coefficient::EnvelopeRe(ab.clone()))?
                .with_term(&y3, Coefficient::EnvelopeIm(ab.clone()))?;
            if chi != 0.0 {
                gen = gen.with_term(&disp, Coefficient::Constant(chi))?;
            }
            for (_, l) in &collapse.ops {
                if l.matrix().nnz() > 0 {
                    gen = gen.with_collapse(l)?;
                }
            }
            Ok(gen)
        };
        let early = build(&envelopes[0], &envelopes[2], 0.0)?;
        let late = build(&envelopes[1], &envelopes[3], cfg.kappa / 2.0)?;
        Ok(Self { cfg, layout, early, late, envelopes })
    }

    pub fn config(&self) -> &GateConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn generator(&self, segment: Segment) -> &Generator {
        match segment {
            Segment::Early => &self.early,
            Segment::Late => &self.late,
        }
    }

    /// Emission E, emission L, absorption E, absorption L.
    pub fn envelopes(&self) -> [&DriveEnvelope; 4] {
        [&self.envelopes[0], &self.envelopes[1], &self.envelopes[2], &self.envelopes[3]]
    }

    pub fn segment_at(&self, t: f64) -> Result<Segment> {
        let tt = self.cfg.total_time;
        if !(0.0..=tt).contains(&t) {
            return Err(Error::TimeOutOfWindow(t));
        }
        Ok(if t < tt / 2.0 { Segment::Early } else { Segment::Late })
    }

    pub fn hamiltonian(&self, t: f64) -> Result<Operator> {
        let seg = self.segment_at(t)?;
        let mut h = self.generator(seg).hamiltonian(t);
        h.mark_hermitian()?;
        Ok(h)
    }

    /// Propagates within one drive window; the window is chosen from t0.
    pub fn integrate_segment(&self, rho: &DensityMatrix, t0: f64, t1: f64, obs: &mut dyn StepObserver) -> Result<SegmentResult> {
        let seg = self.segment_at(t0)?;
        self.segment_at(t1)?;
        let half = self.cfg.total_time / 2.0;
        if seg == Segment::Early && t1 > half * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter("segment crosses T/2".into()));
        }
        integrate(self.generator(seg), rho, t0, t1, self.cfg.dt, obs)
    }

    /// |ψ⟩ on (Q1, Q2) embedded with vacuum cavities and Q3 in |g⟩.
    pub fn embed_input(&self, psi_in: &PureState) -> Result<DensityMatrix> {
        if psi_in.layout().dims() != [2, 2] {
            return Err(Error::InvalidState("gate input must be a two-qubit state".into()));
        }
        let d = self.layout.total_dim();
        let mut v = nalgebra::DVector::zeros(d);
        for (k, &(q1, q2)) in [(G, G), (G, E), (E, G), (E, E)].iter().enumerate() {
            v[self.layout.index(&[q1, 0, q2, 0, G, 0])] = psi_in.vector()[k];
        }
        Ok(DensityMatrix::from_pure(&PureState::new(v, self.layout.clone())?))
    }

    pub fn run(&self, psi_in: &PureState) -> Result<GateRun> {
        self.run_observed(psi_in, &mut ())
    }

    /// ρ(T) = P_final·Λ(T,T/2)·L_π·Λ(T/2,0)·P_prelude ρ(0).
    pub fn run_observed(&self, psi_in: &PureState, obs: &mut dyn StepObserver) -> Result<GateRun> {
        let sched = GeneratorSchedule::for_config(&self.cfg);
        let mut rho = self.embed_input(psi_in)?;
        let mut drift: f64 = 0.0;
        let mut min_eig = f64::INFINITY;
        let mut dt_used = self.cfg.dt;
        let mut after_l_pi = None;
        let mut support = 0;
        let events_at = |t: f64| sched.instant_events.iter().filter(move |(te, _)| (te - t).abs() <= 1e-12 * self.cfg.total_time);
        for seg in &sched.segments {
            for (_, pulses) in events_at(seg.t_start) {
                rho = apply_pi_pulses(&rho, pulses)?;
            }
            if seg.segment == Segment::Late {
                after_l_pi = Some(rho.clone());
            }
            let res = integrate(self.generator(seg.segment), &rho, seg.t_start, seg.t_end, self.cfg.dt, obs)?;
            drift += res.trace_drift;
            min_eig = min_eig.min(res.min_eigenvalue);
            dt_used = dt_used.min(res.dt_used);
            support = support.max(res.support_size);
            rho = res.rho;
        }
        for (_, pulses) in events_at(self.cfg.total_time) {
            rho = apply_pi_pulses(&rho, pulses)?;
        }
        Ok(GateRun {
            rho,
            after_l_pi: after_l_pi.expect("schedule has a late segment"),
            trace_drift: drift,
            min_eigenvalue: min_eig,
            dt_used,
            max_support: support,
        })
    }
}

#[derive(Clone, Debug)]
pub struct GateRun {
    /// Full state at T after the final Q3 pulses.
    pub rho: DensityMatrix,
    /// State right after the π pulses at T/2.
    pub after_l_pi: DensityMatrix,
    pub trace_drift: f64,
    pub min_eigenvalue: f64,
    pub dt_used: f64,
    pub max_support: usize,
}

pub fn build_hamiltonian(t: f64, cfg: &GateConfig) -> Result<Operator> {
    GateModel::new(*cfg)?.hamiltonian(t)
}

pub fn run_gate_evolution(psi_in: &PureState, cfg: &GateConfig) -> Result<GateRun> {
    GateModel::new(*cfg)?.run(psi_in)
}

/// Two-qubit input (α, β, γ, δ) on |gg⟩, |ge⟩, |eg⟩, |ee⟩.
pub fn two_qubit_state(amps: [C64; 4]) -> Result<PureState> {
    PureState::new(nalgebra::DVector::from_vec(amps.to_vec()), SubsystemLayout::qubit_pair())
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{expectation, ONE};

    fn cfg(kt: f64) -> GateConfig {
        let kappa = 2.0 * std::f64::consts::PI * 50e6;
        GateConfig::from_kappa_tau(kappa, kt).unwrap()
    }

    #[test]
    fn config_validation() {
        let c = cfg(20.0);
        assert_eq!(c.total_time, 16.0 * c.tau);
        let mut bad = c;
        bad.dt = c.tau / 50.0;
        assert!(bad.validate().is_err());
        assert!(c.with_t1(Some(-1.0)).is_err());
        assert!(GateConfig::from_kappa_tau(1.0, 0.5).is_err());
    }

    #[test]
    fn collapse_set() {
        let c = cfg(20.0);
        let set = build_collapse_ops(&c).unwrap();
        assert_eq!(set.len(), 11);
        let nonzero = set.ops.iter().filter(|(_, l)| l.matrix().nnz() > 0).count();
        assert_eq!(nonzero, 1);
        let l0 = &set.ops[0].1;
        let layout = gate_layout(1).unwrap();
        let vac = DensityMatrix::from_pure(&PureState::basis(&layout, &[G, 0, G, 0, G, 0]).unwrap());
        let n = &l0.adjoint() * l0;
        assert_eq!(expectation(&n, &vac).unwrap(), ZERO);
        let with_t1 = build_collapse_ops(&c.with_t1(Some(1e-4)).unwrap()).unwrap();
        assert!(with_t1.ops.iter().all(|(_, l)| l.matrix().nnz() > 0));
    }

    #[test]
    fn hamiltonian_structure() {
        let c = cfg(20.0);
        let model = GateModel::new(c).unwrap();
        let layout = model.layout().clone();
        let h = model.hamiltonian(0.1 * c.total_time).unwrap();
        // ⟨C1=1|H|C2=1⟩ = iκ/2
        let r = layout.index(&[G, 1, G, 0, G, 0]);
        let col = layout.index(&[G, 0, G, 1, G, 0]);
        assert!((h.matrix().get(r, col) - C64::new(0.0, c.kappa / 2.0)).norm() < 1e-6);
        // no dispersive shift in the early window
        let occ = layout.index(&[G, 0, E, 1, G, 0]);
        assert_eq!(h.matrix().get(occ, occ), ZERO);
        let late = model.hamiltonian(0.75 * c.total_time).unwrap();
        assert!((late.matrix().get(occ, occ).re - c.kappa / 2.0).abs() < 1e-6);
        assert!(model.hamiltonian(1.1 * c.total_time).is_err());
    }

    #[test]
    fn pi_pulses() {
        let layout = gate_layout(1).unwrap();
        let rho = DensityMatrix::from_pure(&PureState::basis(&layout, &[E, 0, G, 0, F, 0]).unwrap());
        let twice = apply_pi_pulses(&rho, &[PiPulse::eg("Q1"), PiPulse::eg("Q1")]).unwrap();
        assert_eq!(twice, rho);
        let moved = apply_pi_pulses(&rho, &[PiPulse::fe("Q3")]).unwrap();
        assert_eq!(moved.matrix()[(layout.index(&[E, 0, G, 0, E, 0]), layout.index(&[E, 0, G, 0, E, 0]))], ONE);
        assert!(apply_pi_pulses(&rho, &[PiPulse::eg("Q2")]).is_err());
    }

    #[test]
    fn static_state_is_unchanged() {
        let layout = SubsystemLayout::new(&[2, 3], &["A", "B"]).unwrap();
        let gen = Generator::new(layout.clone());
        let psi = PureState::normalized(
            nalgebra::DVector::from_fn(6, |i, _| C64::new(i as f64, 1.0)),
            layout,
        )
        .unwrap();
        let rho = DensityMatrix::from_pure(&psi);
        let out = integrate(&gen, &rho, 0.0, 1.0, 0.01, &mut ()).unwrap();
        assert!((out.rho.matrix() - rho.matrix()).iter().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn single_qubit_decay() {
        let layout = SubsystemLayout::new(&[2], &["Q"]).unwrap();
        let gamma: f64 = 2.0;
        let l = embed(&(ket_bra(2, G, E) * C64::new(gamma.sqrt(), 0.0)), "Q", &layout).unwrap();
        let gen = Generator::new(layout.clone()).with_collapse(&l).unwrap();
        let rho = DensityMatrix::from_pure(&PureState::basis(&layout, &[E]).unwrap());
        let out = integrate(&gen, &rho, 0.0, 1.0 / gamma, 1e-3, &mut ()).unwrap();
        let pe = out.rho.matrix()[(E, E)].re;
        assert!((pe / (-1.0f64).exp() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cascade_has_no_back_action() {
        let layout = SubsystemLayout::new(&[2, 2], &["C1", "C2"]).unwrap();
        let kappa: f64 = 3.0;
        let a1 = embed(&destroy(2), "C1", &layout).unwrap();
        let a2 = embed(&destroy(2), "C2", &layout).unwrap();
        let hop = &a1.adjoint() * &a2;
        let h = (&hop - &hop.adjoint()).scale(C64::new(0.0, kappa / 2.0));
        let l0 = (&a1 + &a2).scale(C64::new(kappa.sqrt(), 0.0));
        let gen = Generator::new(layout.clone()).with_static(&h).unwrap().with_collapse(&l0).unwrap();
        let rho = DensityMatrix::from_pure(&PureState::basis(&layout, &[1, 0]).unwrap());
        let t = 0.7;
        let out = integrate(&gen, &rho, 0.0, t, 1e-3, &mut ()).unwrap();
        let n1 = out.rho.matrix()[(layout.index(&[1, 0]), layout.index(&[1, 0]))].re;
        let n2 = out.rho.matrix()[(layout.index(&[0, 1]), layout.index(&[0, 1]))].re;
        assert!((n1 - (-kappa * t).exp()).abs() < 1e-9);
        // C2 driven by C1's output: n2 = (κt)² e^{−κt}
        assert!((n2 - (kappa * t).powi(2) * (-kappa * t).exp()).abs() < 1e-9);
    }
}
