//! Spectral engine: transforms, Fourier multipliers and dealiased products.
//!
//! Every derivative-type multiplier uses the same wavevector table in which
//! the Nyquist component of each axis is replaced by zero. Composite
//! operators (divergence of the inverse divergence, Leray projection, ...)
//! therefore compose exactly at the symbol level.

use num_complex::Complex64;

use crate::error::{CiwError, Result};
use crate::fft::FftNd;
use crate::field::{Field, FieldKind, Spectrum};
use crate::grid::{sym_index, Space};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const NO_SLOT: u32 = u32::MAX;

pub struct Engine {
    space: Space,
    fft: FftNd,
    padded: FftNd,
    xi: Vec<[f64; 3]>,
    k2: Vec<f64>,
    nyquist: Vec<bool>,
    pad_map: Vec<u32>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("space", &self.space).finish()
    }
}

impl Engine {
    pub fn new(space: Space) -> Self {
        let n = space.n;
        let dim = space.dim;
        let m = 3 * n / 2;
        let fft = FftNd::new(dim, n);
        let padded = FftNd::new(dim, m);
        let len = space.len();
        let mut xi = vec![[0.0; 3]; len];
        let mut k2 = vec![0.0; len];
        let mut nyquist = vec![false; len];
        let mut pad_map = vec![NO_SLOT; len];
        for idx in 0..len {
            let ix = space.unflatten(idx);
            let mut w = [0.0; 3];
            let mut nyq = false;
            let mut pidx = 0usize;
            for a in 0..dim {
                let k = ix[a];
                if k == n / 2 {
                    nyq = true;
                } else {
                    w[a] = space.wavenumber(k) as f64;
                }
                let pk = if k < n / 2 { k } else { k + m - n };
                pidx = pidx * m + pk;
            }
            xi[idx] = w;
            k2[idx] = w.iter().map(|v| v * v).sum();
            nyquist[idx] = nyq;
            if !nyq {
                pad_map[idx] = pidx as u32;
            }
        }
        Self { space, fft, padded, xi, k2, nyquist, pad_map }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn fft(&self) -> &FftNd {
        &self.fft
    }

    /// Wavevector used by derivative multipliers at a flat spectral index.
    pub fn xi(&self, idx: usize) -> &[f64; 3] {
        &self.xi[idx]
    }

    /// Squared length of [`Engine::xi`].
    pub fn k2(&self, idx: usize) -> f64 {
        self.k2[idx]
    }

    /// Whether any axis of this slot sits at the Nyquist wavenumber.
    pub fn is_nyquist(&self, idx: usize) -> bool {
        self.nyquist[idx]
    }

    /// Nodes per axis of the dealiasing grid.
    pub fn padded_n(&self) -> usize {
        self.padded.n()
    }

    pub fn padded_len(&self) -> usize {
        self.padded.len()
    }

    // ----- transforms -------------------------------------------------

    pub fn forward(&self, f: &Field) -> Spectrum {
        let mut s = Spectrum::zeros(self.space, f.kind());
        self.fft.forward_into(&f.components(), s.data_mut());
        s
    }

    pub fn inverse(&self, s: &Spectrum) -> Field {
        let mut f = Field::zeros(self.space, s.kind());
        self.fft.inverse_into(&s.components(), f.data_mut());
        f
    }

    pub fn forward_scalar(&self, x: &[f64]) -> Vec<Complex64> {
        self.fft.forward_real(x)
    }

    pub fn inverse_scalar(&self, s: &[Complex64]) -> Vec<f64> {
        self.fft.inverse_real(s)
    }

    // ----- multipliers ------------------------------------------------

    /// Multiplies a scalar spectrum by `m(xi)` in place.
    pub fn apply_multiplier(&self, s: &mut [Complex64], m: impl Fn(&[f64; 3], f64) -> Complex64) {
        for (idx, v) in s.iter_mut().enumerate() {
            *v *= m(&self.xi[idx], self.k2[idx]);
        }
    }

    /// Symbol of the multi-index derivative at one slot.
    pub fn derivative_symbol(&self, idx: usize, zeta: &[usize]) -> Complex64 {
        let mut out = Complex64::new(1.0, 0.0);
        for (a, &z) in zeta.iter().enumerate() {
            let ik = Complex64::new(0.0, self.xi[idx][a]);
            for _ in 0..z {
                out *= ik;
            }
        }
        out
    }

    /// Partial derivative of every component by the multi-index `zeta`.
    pub fn derivative(&self, f: &Field, zeta: &[usize]) -> Result<Field> {
        if zeta.len() != self.space.dim {
            return Err(CiwError::InvalidArgument(format!(
                "multi-index needs {} entries, got {}",
                self.space.dim,
                zeta.len()
            )));
        }
        let order: usize = zeta.iter().sum();
        if order > 6 {
            return Err(CiwError::InvalidArgument(format!("derivative order {order} exceeds 6")));
        }
        let mut s = self.forward(f);
        for c in 0..s.ncomp() {
            for (idx, v) in s.comp_mut(c).iter_mut().enumerate() {
                *v *= self.derivative_symbol(idx, zeta);
            }
        }
        Ok(self.inverse(&s))
    }

    pub fn partial_spec(&self, s: &[Complex64], axis: usize) -> Vec<Complex64> {
        s.iter().enumerate().map(|(idx, v)| v * Complex64::new(0.0, self.xi[idx][axis])).collect()
    }

    /// Directional derivative `(k . grad)` of a scalar spectrum.
    pub fn directional_spec(&self, s: &[Complex64], k: &[f64]) -> Vec<Complex64> {
        s.iter()
            .enumerate()
            .map(|(idx, v)| {
                let w = &self.xi[idx];
                let kx: f64 = k.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
                v * Complex64::new(0.0, kx)
            })
            .collect()
    }

    pub fn grad_spec(&self, s: &[Complex64]) -> Spectrum {
        let comps = (0..self.space.dim).map(|a| self.partial_spec(s, a)).collect();
        Spectrum::from_components(self.space, FieldKind::Vector, comps)
    }

    pub fn div_spec(&self, v: &Spectrum) -> Vec<Complex64> {
        let d = self.space.dim;
        let mut out = vec![ZERO; self.space.len()];
        for a in 0..d {
            for (idx, (o, x)) in out.iter_mut().zip(v.comp(a)).enumerate() {
                *o += x * Complex64::new(0.0, self.xi[idx][a]);
            }
        }
        out
    }

    /// Row divergence `(div A)_i = sum_j d_j A_ij` of a symmetric tensor spectrum.
    pub fn div_sym_spec(&self, t: &Spectrum) -> Spectrum {
        let d = self.space.dim;
        let mut out = Spectrum::zeros(self.space, FieldKind::Vector);
        for i in 0..d {
            let dst = out.comp_mut(i);
            for j in 0..d {
                let src = t.comp(sym_index(i, j, d));
                for ((o, x), xi) in dst.iter_mut().zip(src).zip(&self.xi) {
                    *o += x * Complex64::new(0.0, xi[j]);
                }
            }
        }
        out
    }

    /// Row divergence of a full matrix spectrum.
    pub fn div_matrix_spec(&self, t: &Spectrum) -> Spectrum {
        let d = self.space.dim;
        let mut comps = vec![vec![ZERO; self.space.len()]; d];
        for i in 0..d {
            for j in 0..d {
                let src = t.comp(i * d + j);
                for (idx, (o, x)) in comps[i].iter_mut().zip(src).enumerate() {
                    *o += x * Complex64::new(0.0, self.xi[idx][j]);
                }
            }
        }
        Spectrum::from_components(self.space, FieldKind::Vector, comps)
    }

    pub fn grad(&self, f: &Field) -> Field {
        let s = self.forward_scalar(f.comp(0));
        self.inverse(&self.grad_spec(&s))
    }

    pub fn div(&self, v: &Field) -> Field {
        let s = self.forward(v);
        let d = self.div_spec(&s);
        Field::from_data(self.space, FieldKind::Scalar, self.inverse_scalar(&d)).expect("scalar")
    }

    pub fn div_sym(&self, t: &Field) -> Field {
        let s = self.forward(t);
        self.inverse(&self.div_sym_spec(&s))
    }

    pub fn div_matrix(&self, t: &Field) -> Field {
        let s = self.forward(t);
        self.inverse(&self.div_matrix_spec(&s))
    }

    pub fn laplacian(&self, f: &Field) -> Field {
        let mut s = self.forward(f);
        for c in 0..s.ncomp() {
            for (idx, v) in s.comp_mut(c).iter_mut().enumerate() {
                *v *= -self.k2[idx];
            }
        }
        self.inverse(&s)
    }

    /// Multiplies a spectrum by `|xi|^{2 alpha}`; the zero mode is annihilated.
    pub fn fractional_laplacian_spec(&self, s: &mut Spectrum, alpha: f64) -> Result<()> {
        if !(alpha > 0.0) {
            return Err(CiwError::InvalidArgument(format!("fractional order must be positive, got {alpha}")));
        }
        for c in 0..s.ncomp() {
            for (idx, v) in s.comp_mut(c).iter_mut().enumerate() {
                let k2 = self.k2[idx];
                *v *= if k2 > 0.0 { k2.powf(alpha) } else { 0.0 };
            }
        }
        Ok(())
    }

    pub fn fractional_laplacian(&self, f: &Field, alpha: f64) -> Result<Field> {
        let mut s = self.forward(f);
        self.fractional_laplacian_spec(&mut s, alpha)?;
        Ok(self.inverse(&s))
    }

    /// Solves `Delta u = f` on the mean-free subspace.
    pub fn inverse_laplacian_spec(&self, s: &[Complex64]) -> Vec<Complex64> {
        s.iter().enumerate().map(|(idx, v)| if self.k2[idx] > 0.0 { -v / self.k2[idx] } else { ZERO }).collect()
    }

    // ----- dealiased products -----------------------------------------

    fn embed(&self, s: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.padded.len()];
        for (idx, v) in s.iter().enumerate() {
            let p = self.pad_map[idx];
            if p != NO_SLOT {
                out[p as usize] = *v;
            }
        }
        out
    }

    fn truncate(&self, p: &[Complex64]) -> Vec<Complex64> {
        self.pad_map.iter().map(|&slot| if slot != NO_SLOT { p[slot as usize] } else { ZERO }).collect()
    }

    /// Evaluates native spectra on the 3/2-padded lattice, Nyquist modes dropped.
    pub fn lift_spectra(&self, spectra: &[&[Complex64]]) -> Vec<Vec<f64>> {
        let embedded: Vec<Vec<Complex64>> = spectra.iter().map(|s| self.embed(s)).collect();
        let refs: Vec<&[Complex64]> = embedded.iter().map(|v| v.as_slice()).collect();
        self.padded.inverse_many(&refs)
    }

    /// Evaluates native nodal arrays on the padded lattice.
    pub fn lift(&self, arrays: &[&[f64]]) -> Vec<Vec<f64>> {
        let spectra = self.fft.forward_many(arrays);
        let refs: Vec<&[Complex64]> = spectra.iter().map(|v| v.as_slice()).collect();
        self.lift_spectra(&refs)
    }

    /// Projects padded nodal arrays back to native spectra, keeping |xi_i| < n/2.
    pub fn lower_spectra(&self, arrays: &[&[f64]]) -> Vec<Vec<Complex64>> {
        self.padded.forward_many(arrays).into_iter().map(|p| self.truncate(&p)).collect()
    }

    /// Projects padded nodal arrays back to native nodal arrays.
    pub fn lower(&self, arrays: &[&[f64]]) -> Vec<Vec<f64>> {
        let spectra = self.lower_spectra(arrays);
        let refs: Vec<&[Complex64]> = spectra.iter().map(|v| v.as_slice()).collect();
        self.fft.inverse_many(&refs)
    }

    /// Dealiased product of a scalar field with a field of any kind.
    pub fn product(&self, a: &Field, b: &Field) -> Field {
        debug_assert_eq!(a.kind(), FieldKind::Scalar);
        let mut inputs: Vec<&[f64]> = vec![a.comp(0)];
        inputs.extend(b.components());
        let lifted = self.lift(&inputs);
        let prods: Vec<Vec<f64>> =
            lifted[1..].iter().map(|bc| bc.iter().zip(&lifted[0]).map(|(x, y)| x * y).collect()).collect();
        let refs: Vec<&[f64]> = prods.iter().map(|v| v.as_slice()).collect();
        let comps = self.lower(&refs);
        Field::from_components(self.space, b.kind(), comps).expect("shape preserved")
    }

    /// Dealiased symmetric outer product `s * (u (x) v + v (x) u) / 2`, with optional scalar weight.
    pub fn weighted_outer(&self, weight: Option<&Field>, u: &Field, v: &Field) -> Field {
        let d = self.space.dim;
        let mut inputs: Vec<&[f64]> = u.components();
        inputs.extend(v.components());
        if let Some(w) = weight {
            inputs.push(w.comp(0));
        }
        let lifted = self.lift(&inputs);
        let mut prods = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            for j in i..d {
                let p: Vec<f64> = (0..self.padded.len())
                    .map(|x| {
                        let sym = 0.5 * (lifted[i][x] * lifted[d + j][x] + lifted[j][x] * lifted[d + i][x]);
                        if weight.is_some() {
                            sym * lifted[2 * d][x]
                        } else {
                            sym
                        }
                    })
                    .collect();
                prods.push(p);
            }
        }
        let refs: Vec<&[f64]> = prods.iter().map(|v| v.as_slice()).collect();
        let comps = self.lower(&refs);
        Field::from_components(self.space, FieldKind::SymTensor, comps).expect("sym")
    }

    /// Largest nodal deviation between the dealiased product and the raw nodal product,
    /// relative to the raw product's maximum.
    pub fn aliasing_defect(&self, a: &Field, b: &Field) -> f64 {
        let dealiased = self.product(a, b);
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for c in 0..b.ncomp() {
            for ((x, y), p) in a.comp(0).iter().zip(b.comp(c)).zip(dealiased.comp(c)) {
                worst = worst.max((x * y - p).abs());
                scale = scale.max((x * y).abs());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }
}
