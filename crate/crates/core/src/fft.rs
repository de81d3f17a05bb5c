//! Multi-dimensional FFT on cubic lattices, built axis by axis on `rustfft`.
//!
//! Forward transforms are normalized by `1/len` so that the output holds the
//! discrete Fourier coefficients; inverse transforms are unnormalized sums.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const TILE: usize = 16;

thread_local! {
    /// Work array reused across transforms on this thread.
    static WORK: RefCell<Vec<Complex64>> = const { RefCell::new(Vec::new()) };
}

/// Runs `f` on a work array of `len` entries with unspecified contents.
fn with_work<R>(len: usize, f: impl FnOnce(&mut [Complex64]) -> R) -> R {
    WORK.with(|cell| match cell.try_borrow_mut() {
        Ok(mut buf) => {
            if buf.len() < len {
                buf.resize(len, ZERO);
            }
            f(&mut buf[..len])
        }
        Err(_) => f(&mut vec![ZERO; len]),
    })
}

pub struct FftNd {
    dim: usize,
    n: usize,
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    negated: Vec<u32>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("dim", &self.dim).field("n", &self.n).finish()
    }
}

impl FftNd {
    pub fn new(dim: usize, n: usize) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = n.pow(dim as u32);
        let negated = (0..len)
            .map(|idx| {
                let mut rest = idx;
                let mut out = 0usize;
                let mut scale = 1usize;
                for _ in 0..dim {
                    let k = rest % n;
                    rest /= n;
                    out += ((n - k) % n) * scale;
                    scale *= n;
                }
                out as u32
            })
            .collect();
        Self { dim, n, len, forward, inverse, negated }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Flat index of the wavevector `-xi` for the slot holding `xi`.
    pub fn negated(&self, idx: usize) -> usize {
        self.negated[idx] as usize
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len);
        let n = self.n;
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        if self.dim == 1 {
            return;
        }
        // Strided axes are handled a tile of adjacent columns at a time so the
        // gather and scatter stay within cache.
        let mut tile = vec![ZERO; TILE * n];
        for axis in 0..self.dim - 1 {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            for base in (0..self.len).step_by(n * stride) {
                for s0 in (0..stride).step_by(TILE) {
                    let width = TILE.min(stride - s0);
                    let lines = &mut tile[..width * n];
                    for j in 0..n {
                        let src = &data[base + j * stride + s0..][..width];
                        for (b, v) in src.iter().enumerate() {
                            lines[b * n + j] = *v;
                        }
                    }
                    plan.process_with_scratch(lines, &mut scratch);
                    for j in 0..n {
                        let dst = &mut data[base + j * stride + s0..][..width];
                        for (b, v) in dst.iter_mut().enumerate() {
                            *v = lines[b * n + j];
                        }
                    }
                }
            }
        }
    }

    /// In-place forward transform, normalized to Fourier coefficients.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
        let scale = 1.0 / self.len as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// In-place inverse transform (synthesis from coefficients).
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Transforms two real arrays with one complex FFT.
    pub fn forward_real_pair(&self, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
        self.forward(&mut buf);
        let mut fa = vec![ZERO; self.len];
        let mut fb = vec![ZERO; self.len];
        for idx in 0..self.len {
            let z = buf[idx];
            let zc = buf[self.negated(idx)].conj();
            fa[idx] = (z + zc) * 0.5;
            let d = (z - zc) * 0.5;
            fb[idx] = Complex64::new(d.im, -d.re);
        }
        (fa, fb)
    }

    /// Synthesizes a real array from Hermitian coefficients.
    pub fn inverse_real(&self, spec: &[Complex64]) -> Vec<f64> {
        let mut buf = spec.to_vec();
        self.inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Synthesizes two real arrays with one complex FFT.
    pub fn inverse_real_pair(&self, a: &[Complex64], b: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| x + Complex64::new(-y.im, y.re)).collect();
        self.inverse(&mut buf);
        let re = buf.iter().map(|z| z.re).collect();
        let im = buf.iter().map(|z| z.im).collect();
        (re, im)
    }

    /// Forward transforms of many real arrays, paired two per FFT, written
    /// consecutively into `out` (`arrays.len() * len` coefficients).
    pub fn forward_into(&self, arrays: &[&[f64]], out: &mut [Complex64]) {
        let len = self.len;
        assert_eq!(out.len(), arrays.len() * len);
        let scale = 1.0 / len as f64;
        with_work(len, |buf| {
            for (dst, chunk) in out.chunks_mut(2 * len).zip(arrays.chunks(2)) {
                if let [a, b] = chunk {
                    for ((z, &x), &y) in buf.iter_mut().zip(*a).zip(*b) {
                        *z = Complex64::new(x, y);
                    }
                    self.transform(buf, &self.forward);
                    let (fa, fb) = dst.split_at_mut(len);
                    let half = 0.5 * scale;
                    for idx in 0..len {
                        let z = buf[idx];
                        let zc = buf[self.negated(idx)].conj();
                        fa[idx] = (z + zc) * half;
                        let d = (z - zc) * half;
                        fb[idx] = Complex64::new(d.im, -d.re);
                    }
                } else {
                    for (z, &x) in buf.iter_mut().zip(chunk[0]) {
                        *z = Complex64::new(x, 0.0);
                    }
                    self.transform(buf, &self.forward);
                    for (o, z) in dst.iter_mut().zip(buf.iter()) {
                        *o = z * scale;
                    }
                }
            }
        });
    }

    /// Inverse transforms of many Hermitian spectra, paired two per FFT,
    /// written consecutively into `out`.
    pub fn inverse_into(&self, spectra: &[&[Complex64]], out: &mut [f64]) {
        let len = self.len;
        assert_eq!(out.len(), spectra.len() * len);
        with_work(len, |buf| {
            for (dst, chunk) in out.chunks_mut(2 * len).zip(spectra.chunks(2)) {
                if let [a, b] = chunk {
                    for ((z, x), y) in buf.iter_mut().zip(*a).zip(*b) {
                        *z = x + Complex64::new(-y.im, y.re);
                    }
                    self.transform(buf, &self.inverse);
                    let (ra, rb) = dst.split_at_mut(len);
                    for ((x, y), z) in ra.iter_mut().zip(rb.iter_mut()).zip(buf.iter()) {
                        *x = z.re;
                        *y = z.im;
                    }
                } else {
                    buf.copy_from_slice(chunk[0]);
                    self.transform(buf, &self.inverse);
                    for (x, z) in dst.iter_mut().zip(buf.iter()) {
                        *x = z.re;
                    }
                }
            }
        });
    }

    /// Forward transforms of many real arrays, paired two per FFT.
    pub fn forward_many(&self, arrays: &[&[f64]]) -> Vec<Vec<Complex64>> {
        let mut out = vec![ZERO; arrays.len() * self.len];
        self.forward_into(arrays, &mut out);
        out.chunks(self.len).map(|c| c.to_vec()).collect()
    }

    /// Inverse transforms of many Hermitian spectra, paired two per FFT.
    pub fn inverse_many(&self, spectra: &[&[Complex64]]) -> Vec<Vec<f64>> {
        let mut out = vec![0.0; spectra.len() * self.len];
        self.inverse_into(spectra, &mut out);
        out.chunks(self.len).map(|c| c.to_vec()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn naive_dft(dim: usize, n: usize, x: &[f64]) -> Vec<Complex64> {
        let len = n.pow(dim as u32);
        let idx = |mut i: usize| {
            let mut v = vec![0usize; dim];
            for a in (0..dim).rev() {
                v[a] = i % n;
                i /= n;
            }
            v
        };
        (0..len)
            .map(|k| {
                let kv = idx(k);
                let mut acc = ZERO;
                for (j, &xj) in x.iter().enumerate() {
                    let jv = idx(j);
                    let phase: f64 = kv.iter().zip(&jv).map(|(&a, &b)| (a * b) as f64).sum();
                    acc += Complex64::from_polar(xj, -2.0 * PI * phase / n as f64);
                }
                acc / len as f64
            })
            .collect()
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dim in [2, 3] {
            let n = 8;
            let fft = FftNd::new(dim, n);
            let x: Vec<f64> = (0..fft.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast = fft.forward_real(&x);
            let slow = naive_dft(dim, n, &x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn paired_transforms_match_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fft = FftNd::new(2, 16);
        let a: Vec<f64> = (0..fft.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..fft.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (fa, fb) = fft.forward_real_pair(&a, &b);
        let sa = fft.forward_real(&a);
        let sb = fft.forward_real(&b);
        for i in 0..fft.len() {
            assert!((fa[i] - sa[i]).norm() < 1e-14);
            assert!((fb[i] - sb[i]).norm() < 1e-14);
        }
        let (ra, rb) = fft.inverse_real_pair(&fa, &fb);
        for i in 0..fft.len() {
            assert!((ra[i] - a[i]).abs() < 1e-13);
            assert!((rb[i] - b[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn non_power_of_two_lengths_work_for_padding() {
        let fft = FftNd::new(2, 12);
        let x: Vec<f64> = (0..fft.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = fft.inverse_real(&fft.forward_real(&x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
