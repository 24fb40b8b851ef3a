// SPDX-License-Identifier: Apache-2.0
//! Operator algebra over tensor products of small subsystems.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Qutrit level indices.
pub const G: usize = 0;
pub const E: usize = 1;
pub const F: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsystemLayout {
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl SubsystemLayout {
    pub fn new<S: AsRef<str>>(dims: &[usize], labels: &[S]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidLayout("no subsystems".into()));
        }
        if dims.len() != labels.len() {
            return Err(Error::InvalidLayout(format!(
                "{} dims but {} labels",
                dims.len(),
                labels.len()
            )));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidLayout(format!("subsystem dimension {d} < 2")));
        }
        let labels: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidLayout(format!("duplicate label `{l}`")));
            }
        }
        Ok(Self { dims: dims.to_vec(), labels })
    }

    /// Two qubits labelled Q1, Q2.
    pub fn qubit_pair() -> Self {
        Self::new(&[2, 2], &["Q1", "Q2"]).expect("static layout")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.dims[self.position(label)?])
    }

    /// Per-subsystem digits of a flat index (first subsystem most significant).
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (k, &d) in self.dims.iter().enumerate().rev() {
            out[k] = index % d;
            index /= d;
        }
        out
    }

    pub fn index(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&x, &d)| acc * d + x)
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseMatrix {
    /// Duplicates are summed; exact zeros are dropped.
    pub fn from_triplets(dim: usize, mut trip: Vec<(usize, usize, C64)>) -> Self {
        trip.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, C64)> = Vec::with_capacity(trip.len());
        for (r, c, v) in trip {
            assert!(r < dim && c < dim, "triplet ({r},{c}) outside dimension {dim}");
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|t| t.2 != ZERO);
        let mut row_ptr = vec![0; dim + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            dim,
            row_ptr,
            col_idx: merged.iter().map(|t| t.1).collect(),
            vals: merged.iter().map(|t| t.2).collect(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_triplets(dim, Vec::new())
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, ONE)).collect())
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "square matrix required");
        let mut trip = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != ZERO {
                    trip.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), trip)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(ZERO, |(_, v)| v)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (r, c, v * s)).collect())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(
            self.dim,
            self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_triplets(self.dim, self.triplets().chain(other.triplets()).collect())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut trip = Vec::new();
        for r in 0..self.dim {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    trip.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.dim, trip)
    }

    pub fn kron(&self, other: &Self) -> Self {
        let d = self.dim * other.dim;
        let mut trip = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                trip.push((r1 * other.dim + r2, c1 * other.dim + c2, v1 * v2));
            }
        }
        Self::from_triplets(d, trip)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.add(&other.scale(-ONE))
            .vals
            .iter()
            .fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn hermitian_deviation(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Submatrix on the given (sorted, distinct) indices.
    pub fn restrict(&self, indices: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.dim];
        for (k, &i) in indices.iter().enumerate() {
            pos[i] = k;
        }
        let mut trip = Vec::new();
        for (k, &r) in indices.iter().enumerate() {
            for (c, v) in self.row(r) {
                if pos[c] != usize::MAX {
                    trip.push((k, pos[c], v));
                }
            }
        }
        Self::from_triplets(indices.len(), trip)
    }
}

/// Sparse operator tagged with its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    matrix: SparseMatrix,
    layout: SubsystemLayout,
    hermitian: bool,
}

impl Operator {
    pub fn new(matrix: SparseMatrix, layout: SubsystemLayout) -> Result<Self> {
        if matrix.dim() != layout.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.total_dim(),
                found: matrix.dim(),
            });
        }
        Ok(Self { matrix, layout, hermitian: false })
    }

    /// Builds an operator flagged Hermitian; the flag is verified to 1e-12.
    pub fn hermitian(matrix: SparseMatrix, layout: SubsystemLayout) -> Result<Self> {
        let mut op = Self::new(matrix, layout)?;
        op.mark_hermitian()?;
        Ok(op)
    }

    pub fn mark_hermitian(&mut self) -> Result<()> {
        let dev = self.matrix.hermitian_deviation();
        if dev > 1e-12 {
            return Err(Error::NotHermitian(dev));
        }
        self.hermitian = true;
        Ok(())
    }

    pub fn identity(layout: &SubsystemLayout) -> Self {
        Self {
            matrix: SparseMatrix::identity(layout.total_dim()),
            layout: layout.clone(),
            hermitian: true,
        }
    }

    pub fn zeros(layout: &SubsystemLayout) -> Self {
        Self {
            matrix: SparseMatrix::zeros(layout.total_dim()),
            layout: layout.clone(),
            hermitian: true,
        }
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        self.matrix.to_dense()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            layout: self.layout.clone(),
            hermitian: self.hermitian,
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            matrix: self.matrix.scale(s),
            layout: self.layout.clone(),
            hermitian: self.hermitian && s.im == 0.0,
        }
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.layout, rhs.layout, "layout mismatch in operator sum");
        Operator {
            matrix: self.matrix.add(&rhs.matrix),
            layout: self.layout.clone(),
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self + &rhs.scale(-ONE)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.layout, rhs.layout, "layout mismatch in operator product");
        Operator {
            matrix: self.matrix.matmul(&rhs.matrix),
            layout: self.layout.clone(),
            hermitian: false,
        }
    }
}

/// identity ⊗ … ⊗ op_local ⊗ … ⊗ identity in layout order.
pub fn embed(op_local: &DMatrix<C64>, target: &str, layout: &SubsystemLayout) -> Result<Operator> {
    let pos = layout.position(target)?;
    let d = layout.dims()[pos];
    if op_local.nrows() != d || op_local.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: op_local.nrows() });
    }
    let left: usize = layout.dims()[..pos].iter().product();
    let right: usize = layout.dims()[pos + 1..].iter().product();
    let m = SparseMatrix::identity(left)
        .kron(&SparseMatrix::from_dense(op_local))
        .kron(&SparseMatrix::identity(right));
    let mut op = Operator::new(m, layout.clone())?;
    if (op_local - op_local.adjoint()).iter().all(|v| v.norm() <= 1e-12) {
        op.hermitian = true;
    }
    Ok(op)
}

/// |a⟩⟨b| on a d-level system.
pub fn ket_bra(d: usize, a: usize, b: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(d, d);
    m[(a, b)] = ONE;
    m
}

/// Truncated annihilation operator on Fock levels 0..dim.
pub fn destroy(dim: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        m[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    m
}

pub fn kron_dense(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    vector: DVector<C64>,
    layout: SubsystemLayout,
}

impl PureState {
    pub fn new(vector: DVector<C64>, layout: SubsystemLayout) -> Result<Self> {
        if vector.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.total_dim(),
                found: vector.len(),
            });
        }
        let norm = vector.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!("norm {norm} differs from 1")));
        }
        Ok(Self { vector, layout })
    }

    /// Rescales to unit norm.
    pub fn normalized(vector: DVector<C64>, layout: SubsystemLayout) -> Result<Self> {
        let norm = vector.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite vector".into()));
        }
        Self::new(vector.unscale(norm), layout)
    }

    pub fn basis(layout: &SubsystemLayout, digits: &[usize]) -> Result<Self> {
        if digits.len() != layout.len() || digits.iter().zip(layout.dims()).any(|(x, d)| x >= d) {
            return Err(Error::InvalidState(format!("basis digits {digits:?} outside layout")));
        }
        let mut v = DVector::zeros(layout.total_dim());
        v[layout.index(digits)] = ONE;
        Self::new(v, layout.clone())
    }

    /// No norm check; for intermediate branch states.
    pub(crate) fn from_parts_unchecked(vector: DVector<C64>, layout: SubsystemLayout) -> Self {
        Self { vector, layout }
    }

    pub fn vector(&self) -> &DVector<C64> {
        &self.vector
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn amplitude(&self, digits: &[usize]) -> C64 {
        self.vector[self.layout.index(digits)]
    }

    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch);
        }
        Ok(self.vector.dotc(&other.vector))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
    layout: SubsystemLayout,
    normalized: bool,
}

impl DensityMatrix {
    /// Validated normalized state: trace 1 ± 1e-9, Hermitian to 1e-12, min eigenvalue ≥ −1e-9.
    pub fn new(matrix: DMatrix<C64>, layout: SubsystemLayout) -> Result<Self> {
        let rho = Self::unnormalized(matrix, layout)?;
        let tr = rho.trace();
        if (tr - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        Ok(Self { normalized: true, ..rho })
    }

    /// Conditional branch state with arbitrary nonnegative trace.
    pub fn unnormalized(matrix: DMatrix<C64>, layout: SubsystemLayout) -> Result<Self> {
        let rho = Self::from_parts(matrix, layout)?;
        let dev = rho.hermitian_deviation();
        if dev > 1e-12 {
            return Err(Error::NotHermitian(dev));
        }
        let min = rho.min_eigenvalue();
        if min < -1e-9 {
            return Err(Error::InvalidState(format!("min eigenvalue {min:e} < -1e-9")));
        }
        Ok(rho)
    }

    /// Shape check only. Numerical diagnostics are the caller's business.
    pub fn from_parts(matrix: DMatrix<C64>, layout: SubsystemLayout) -> Result<Self> {
        let d = layout.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: matrix.nrows() });
        }
        Ok(Self { matrix, layout, normalized: false })
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let v = psi.vector();
        Self {
            matrix: v * v.adjoint(),
            layout: psi.layout().clone(),
            normalized: true,
        }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn hermitian_deviation(&self) -> f64 {
        let m = &self.matrix;
        let mut dev: f64 = 0.0;
        for r in 0..m.nrows() {
            for c in r..m.ncols() {
                dev = dev.max((m[(r, c)] - m[(c, r)].conj()).norm());
            }
        }
        dev
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.matrix + self.matrix.adjoint()).scale(0.5);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// ⟨ψ|ρ|ψ⟩ for a state on the same layout.
    pub fn overlap(&self, psi: &PureState) -> Result<f64> {
        if psi.layout() != &self.layout {
            return Err(Error::LayoutMismatch);
        }
        let v = psi.vector();
        Ok(v.dotc(&(&self.matrix * v)).re)
    }
}

/// Reduced state over the kept subsystems, in layout order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[&str]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::EmptyKeepSet);
    }
    let layout = rho.layout();
    let mut kept: Vec<usize> = keep
        .iter()
        .map(|l| layout.position(l))
        .collect::<Result<_>>()?;
    kept.sort_unstable();
    kept.dedup();
    let dims: Vec<usize> = kept.iter().map(|&k| layout.dims()[k]).collect();
    let labels: Vec<&str> = kept.iter().map(|&k| layout.labels()[k].as_str()).collect();
    let out_layout = SubsystemLayout::new(&dims, &labels)?;
    let d = layout.total_dim();
    let is_kept: Vec<bool> = (0..layout.len()).map(|k| kept.contains(&k)).collect();

    let split = |i: usize| -> (usize, usize) {
        let digits = layout.digits(i);
        let (mut keep_i, mut drop_i) = (0usize, 0usize);
        for (k, &x) in digits.iter().enumerate() {
            if is_kept[k] {
                keep_i = keep_i * layout.dims()[k] + x;
            } else {
                drop_i = drop_i * layout.dims()[k] + x;
            }
        }
        (keep_i, drop_i)
    };
    let parts: Vec<(usize, usize)> = (0..d).map(split).collect();
    let mut out = DMatrix::zeros(out_layout.total_dim(), out_layout.total_dim());
    let m = rho.matrix();
    for r in 0..d {
        for c in 0..d {
            if parts[r].1 == parts[c].1 {
                out[(parts[r].0, parts[c].0)] += m[(r, c)];
            }
        }
    }
    Ok(DensityMatrix {
        matrix: out,
        layout: out_layout,
        normalized: rho.normalized,
    })
}

/// Tr{O ρ}.
pub fn expectation(op: &Operator, rho: &DensityMatrix) -> Result<C64> {
    if op.layout() != rho.layout() {
        return Err(Error::LayoutMismatch);
    }
    let m = rho.matrix();
    Ok(op.matrix().triplets().map(|(r, c, v)| v * m[(c, r)]).sum())
}

/// ½‖a − b‖₁ for Hermitian matrices of equal size.
pub fn trace_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let diff = a - b;
    let h = (&diff + diff.adjoint()).scale(0.5);
    0.5 * h.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout_32() -> SubsystemLayout {
        SubsystemLayout::new(&[3, 2], &["Q", "C"]).unwrap()
    }

    #[test]
    fn layout_rejects_bad_input() {
        assert!(SubsystemLayout::new(&[1, 2], &["a", "b"]).is_err());
        assert!(SubsystemLayout::new(&[2, 2], &["a", "a"]).is_err());
        assert!(SubsystemLayout::new(&[2], &["a", "b"]).is_err());
    }

    #[test]
    fn digits_round_trip() {
        let l = SubsystemLayout::new(&[3, 2, 2, 2, 3, 2], &["Q1", "C1", "Q2", "C2", "Q3", "C3"]).unwrap();
        assert_eq!(l.total_dim(), 144);
        for i in 0..144 {
            assert_eq!(l.index(&l.digits(i)), i);
        }
    }

    #[test]
    fn embed_identity_is_identity() {
        let l = layout_32();
        let id = embed(&DMatrix::identity(3, 3), "Q", &l).unwrap();
        assert_eq!(id.matrix(), &SparseMatrix::identity(6));
        assert!(id.is_hermitian());
    }

    #[test]
    fn embed_product_trace() {
        let l = layout_32();
        let a = embed(&ket_bra(3, E, G), "Q", &l).unwrap();
        let b = embed(&ket_bra(3, G, E), "Q", &l).unwrap();
        // brute-force Kronecker product oracle
        let brute = kron_dense(&(ket_bra(3, E, G) * ket_bra(3, G, E)), &DMatrix::identity(2, 2));
        let prod = &a * &b;
        assert!((prod.to_dense() - &brute).iter().all(|v| v.norm() < 1e-15));
        assert!((prod.matrix().trace() - C64::new(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn embed_commutator_is_local() {
        let l = layout_32();
        let a = embed(&destroy(2), "C", &l).unwrap();
        let ad = a.adjoint();
        let comm = &(&a * &ad) - &(&ad * &a);
        let local = destroy(2) * destroy(2).adjoint() - destroy(2).adjoint() * destroy(2);
        let expected = embed(&local, "C", &l).unwrap();
        assert!(comm.matrix().max_abs_diff(expected.matrix()) < 1e-15);
    }

    #[test]
    fn embed_errors() {
        let l = layout_32();
        assert!(matches!(embed(&DMatrix::identity(2, 2), "Q", &l), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(embed(&DMatrix::identity(2, 2), "X", &l), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn partial_trace_of_bell_pair_is_mixed() {
        let l = SubsystemLayout::qubit_pair();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = DVector::from_vec(vec![C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)]);
        let rho = DensityMatrix::from_pure(&PureState::new(v, l).unwrap());
        let red = partial_trace(&rho, &["Q2"]).unwrap();
        let half = DMatrix::<C64>::identity(2, 2).scale(0.5);
        assert!(trace_distance(red.matrix(), &half) < 1e-12);
        assert_eq!(red.layout().labels(), &["Q2".to_string()]);
    }

    #[test]
    fn partial_trace_product_state() {
        let l = layout_32();
        let mut v = DVector::zeros(6);
        // (|g⟩ + i|f⟩)/√2 ⊗ |0⟩
        v[l.index(&[G, 0])] = C64::new(0.5f64.sqrt(), 0.0);
        v[l.index(&[F, 0])] = C64::new(0.0, 0.5f64.sqrt());
        let rho = DensityMatrix::from_pure(&PureState::new(v, l).unwrap());
        let red = partial_trace(&rho, &["Q"]).unwrap();
        assert!((red.matrix()[(G, F)] - C64::new(0.0, -0.5)).norm() < 1e-15);
        assert!((red.trace() - 1.0).abs() < 1e-15);
        assert!(matches!(partial_trace(&rho, &[]), Err(Error::EmptyKeepSet)));
    }

    #[test]
    fn expectation_basics() {
        let l = layout_32();
        let rho = DensityMatrix::from_pure(&PureState::basis(&l, &[F, 0]).unwrap());
        let id = Operator::identity(&l);
        assert!((expectation(&id, &rho).unwrap() - ONE).norm() < 1e-15);
        let a = embed(&destroy(2), "C", &l).unwrap();
        let n = &a.adjoint() * &a;
        assert_eq!(expectation(&n, &rho).unwrap(), ZERO);
        let pf = embed(&ket_bra(3, F, F), "Q", &l).unwrap();
        assert!((expectation(&pf, &rho).unwrap() - ONE).norm() < 1e-15);
    }

    #[test]
    fn density_matrix_validation() {
        let l = SubsystemLayout::qubit_pair();
        assert!(DensityMatrix::new(DMatrix::identity(4, 4), l.clone()).is_err());
        assert!(DensityMatrix::new(DMatrix::identity(4, 4).scale(0.25), l.clone()).is_ok());
        let mut bad = DMatrix::<C64>::zeros(4, 4);
        bad[(0, 0)] = C64::new(1.5, 0.0);
        bad[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(DensityMatrix::new(bad, l).is_err());
    }

    #[test]
    fn restrict_and_kron() {
        let a = SparseMatrix::from_dense(&destroy(3));
        let k = a.kron(&SparseMatrix::identity(2));
        assert_eq!(k.to_dense(), kron_dense(&destroy(3), &DMatrix::identity(2, 2)));
        let r = k.restrict(&[0, 2, 4]);
        assert_eq!(r.get(0, 1), C64::new(1.0, 0.0));
        assert_eq!(r.get(1, 2), C64::new(2f64.sqrt(), 0.0));
    }
}
