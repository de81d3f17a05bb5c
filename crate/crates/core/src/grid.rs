use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{CiwError, Result};

/// Spatial lattice on the torus [-pi, pi]^d with `n` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Space {
    pub dim: usize,
    pub n: usize,
}

impl Space {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(CiwError::Grid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(CiwError::Grid(format!("points per axis must be a power of two >= 8, got {n}")));
        }
        Ok(Self { dim, n })
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Lebesgue measure of the torus.
    pub fn volume(&self) -> f64 {
        (2.0 * PI).powi(self.dim as i32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Coordinate of node `j` along one axis.
    pub fn node(&self, j: usize) -> f64 {
        -PI + 2.0 * PI * j as f64 / self.n as f64
    }

    /// Per-axis indices of a flat (row-major, last axis fastest) index.
    pub fn unflatten(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn flatten(&self, ix: &[usize]) -> usize {
        ix.iter().take(self.dim).fold(0, |acc, &i| acc * self.n + i)
    }

    /// Physical coordinates of a flat node index.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let ix = self.unflatten(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.node(ix[a]);
        }
        x
    }

    /// Signed wavenumber of FFT slot `k` (Nyquist reported as +n/2).
    pub fn wavenumber(&self, k: usize) -> i64 {
        if k <= self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    /// FFT slot of a signed wavenumber.
    pub fn slot(&self, xi: i64) -> usize {
        xi.rem_euclid(self.n as i64) as usize
    }

    /// Signed wavenumber vector of a flat spectral index.
    pub fn xi_of(&self, idx: usize) -> [i64; 3] {
        let ix = self.unflatten(idx);
        let mut xi = [0i64; 3];
        for a in 0..self.dim {
            xi[a] = self.wavenumber(ix[a]);
        }
        xi
    }

    /// Number of independent components of a symmetric d x d tensor.
    pub fn sym_len(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }
}

/// Index of entry (i, j) in packed upper-triangular storage of a symmetric tensor.
pub fn sym_index(i: usize, j: usize, dim: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim - i * (i + 1) / 2 + j
}

/// Space-time grid: spatial lattice plus `n_t` uniform samples on [0, T].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub space: Space,
    pub n_t: usize,
    pub horizon: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, n_t: usize, horizon: f64) -> Result<Self> {
        let space = Space::new(dim, n)?;
        if n_t < 2 {
            return Err(CiwError::Grid(format!("need at least two time samples, got {n_t}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(CiwError::Grid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { space, n_t, horizon })
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    pub fn n(&self) -> usize {
        self.space.n
    }

    pub fn dt(&self) -> f64 {
        self.horizon / (self.n_t - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.horizon / (self.n_t - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_t).map(|i| self.time(i)).collect()
    }
}
