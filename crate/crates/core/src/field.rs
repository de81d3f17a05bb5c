//! Periodic fields sampled on the lattice nodes, and their Fourier spectra.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CiwError, Result};
use crate::grid::{sym_index, Space};

/// Tensor rank of a field; fixes the number of stored components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Scalar,
    Vector,
    /// Packed upper triangle, `d(d+1)/2` components.
    SymTensor,
    /// Full `d x d` matrix, row-major.
    Matrix,
}

impl FieldKind {
    pub fn components(self, dim: usize) -> usize {
        match self {
            FieldKind::Scalar => 1,
            FieldKind::Vector => dim,
            FieldKind::SymTensor => dim * (dim + 1) / 2,
            FieldKind::Matrix => dim * dim,
        }
    }
}

/// Real field stored as nodal samples, component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    space: Space,
    kind: FieldKind,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(space: Space, kind: FieldKind) -> Self {
        let len = space.len() * kind.components(space.dim);
        Self { space, kind, data: vec![0.0; len] }
    }

    pub fn from_data(space: Space, kind: FieldKind, data: Vec<f64>) -> Result<Self> {
        let expected = space.len() * kind.components(space.dim);
        if data.len() != expected {
            return Err(CiwError::Shape(format!("expected {expected} samples for {kind:?}, got {}", data.len())));
        }
        Ok(Self { space, kind, data })
    }

    pub fn from_components(space: Space, kind: FieldKind, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != kind.components(space.dim) {
            return Err(CiwError::Shape(format!(
                "{kind:?} needs {} components, got {}",
                kind.components(space.dim),
                comps.len()
            )));
        }
        let mut data = Vec::with_capacity(space.len() * comps.len());
        for c in comps {
            if c.len() != space.len() {
                return Err(CiwError::Shape("component length mismatch".into()));
            }
            data.extend(c);
        }
        Ok(Self { space, kind, data })
    }

    /// Scalar field from a function of the node coordinates.
    pub fn scalar_fn(space: Space, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        let data = (0..space.len()).map(|i| f(&space.point(i))).collect();
        Self { space, kind: FieldKind::Scalar, data }
    }

    /// Vector field from a function of the node coordinates.
    pub fn vector_fn(space: Space, f: impl Fn(&[f64; 3]) -> [f64; 3]) -> Self {
        let len = space.len();
        let mut data = vec![0.0; len * space.dim];
        for i in 0..len {
            let v = f(&space.point(i));
            for a in 0..space.dim {
                data[a * len + i] = v[a];
            }
        }
        Self { space, kind: FieldKind::Vector, data }
    }

    /// Constant scalar field.
    pub fn constant(space: Space, value: f64) -> Self {
        Self { space, kind: FieldKind::Scalar, data: vec![value; space.len()] }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn ncomp(&self) -> usize {
        self.kind.components(self.space.dim)
    }

    pub fn nodes(&self) -> usize {
        self.space.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        let len = self.space.len();
        &self.data[c * len..(c + 1) * len]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        let len = self.space.len();
        &mut self.data[c * len..(c + 1) * len]
    }

    pub fn components(&self) -> Vec<&[f64]> {
        (0..self.ncomp()).map(|c| self.comp(c)).collect()
    }

    /// Entry (i, j) of a symmetric tensor field at node `idx`.
    pub fn sym(&self, i: usize, j: usize, idx: usize) -> f64 {
        debug_assert_eq!(self.kind, FieldKind::SymTensor);
        self.comp(sym_index(i, j, self.space.dim))[idx]
    }

    pub fn check_same_shape(&self, other: &Field) -> Result<()> {
        if self.space != other.space || self.kind != other.kind {
            return Err(CiwError::Shape(format!(
                "{:?}/{:?} vs {:?}/{:?}",
                self.space, self.kind, other.space, other.kind
            )));
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Field) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sub_assign(&mut self, other: &Field) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Field) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.data.iter_mut() {
            *a *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn sum(&self, other: &Field) -> Field {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn diff(&self, other: &Field) -> Field {
        let mut out = self.clone();
        out.sub_assign(other);
        out
    }

    /// Pointwise Euclidean (vectors) or Frobenius (tensors) norm at a node.
    pub fn pointwise_norm(&self, idx: usize) -> f64 {
        let len = self.space.len();
        match self.kind {
            FieldKind::SymTensor => {
                let d = self.space.dim;
                let mut acc = 0.0;
                for i in 0..d {
                    for j in i..d {
                        let v = self.data[sym_index(i, j, d) * len + idx];
                        acc += if i == j { v * v } else { 2.0 * v * v };
                    }
                }
                acc.sqrt()
            }
            _ => (0..self.ncomp())
                .map(|c| {
                    let v = self.data[c * len + idx];
                    v * v
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Grid maximum of the pointwise norm.
    pub fn sup_norm(&self) -> f64 {
        (0..self.space.len()).fold(0.0, |m, i| f64::max(m, self.pointwise_norm(i)))
    }

    /// Largest absolute value of any stored component.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
    }

    pub fn mean(&self, c: usize) -> f64 {
        let comp = self.comp(c);
        comp.iter().sum::<f64>() / comp.len() as f64
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Pointwise map of a scalar field.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { space: self.space, kind: self.kind, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Trace of a symmetric tensor field.
    pub fn trace(&self) -> Field {
        let d = self.space.dim;
        let mut out = Field::zeros(self.space, FieldKind::Scalar);
        for i in 0..d {
            let c = self.comp(sym_index(i, i, d));
            for (o, v) in out.data.iter_mut().zip(c) {
                *o += v;
            }
        }
        out
    }

    /// Trace-free part of a symmetric tensor field.
    pub fn trace_free(&self) -> Field {
        let d = self.space.dim;
        let tr = self.trace();
        let mut out = self.clone();
        for i in 0..d {
            let c = out.comp_mut(sym_index(i, i, d));
            for (o, t) in c.iter_mut().zip(tr.data()) {
                *o -= t / d as f64;
            }
        }
        out
    }

    /// Adds `s * Id` to a symmetric tensor field, with `s` a scalar field.
    pub fn add_identity(&mut self, s: &[f64]) {
        let d = self.space.dim;
        for i in 0..d {
            let c = self.comp_mut(sym_index(i, i, d));
            for (o, v) in c.iter_mut().zip(s) {
                *o += v;
            }
        }
    }
}

/// Fourier coefficients of a real field, component-major, FFT slot order.
///
/// Coefficients refer to the lattice DFT; the true torus coefficient of
/// `exp(i xi . x)` differs by the sign `(-1)^{xi_1 + ... + xi_d}` because
/// nodes start at `-pi`. Spectral multipliers are insensitive to that sign.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    space: Space,
    kind: FieldKind,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(space: Space, kind: FieldKind) -> Self {
        let len = space.len() * kind.components(space.dim);
        Self { space, kind, data: vec![Complex64::new(0.0, 0.0); len] }
    }

    pub fn from_components(space: Space, kind: FieldKind, comps: Vec<Vec<Complex64>>) -> Self {
        debug_assert_eq!(comps.len(), kind.components(space.dim));
        let mut data = Vec::with_capacity(space.len() * comps.len());
        for c in comps {
            debug_assert_eq!(c.len(), space.len());
            data.extend(c);
        }
        Self { space, kind, data }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn ncomp(&self) -> usize {
        self.kind.components(self.space.dim)
    }

    pub fn comp(&self, c: usize) -> &[Complex64] {
        let len = self.space.len();
        &self.data[c * len..(c + 1) * len]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [Complex64] {
        let len = self.space.len();
        &mut self.data[c * len..(c + 1) * len]
    }

    pub fn components(&self) -> Vec<&[Complex64]> {
        (0..self.ncomp()).map(|c| self.comp(c)).collect()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn add_assign(&mut self, other: &Spectrum) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &Spectrum) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.data.iter_mut() {
            *a *= alpha;
        }
    }

    /// Magnitude of the zero-mode coefficient of component `c`.
    pub fn mean_magnitude(&self, c: usize) -> f64 {
        self.comp(c)[0].norm()
    }

    pub fn zero_mean(&mut self) {
        for c in 0..self.ncomp() {
            self.comp_mut(c)[0] = Complex64::new(0.0, 0.0);
        }
    }
}
