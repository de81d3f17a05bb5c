//! Space-time mollification with compactly supported bumps.
//!
//! The spatial mollifier is the tensor product of one-dimensional bumps of
//! radius `ell_x`; its action on a trigonometric polynomial is the exact
//! Fourier multiplier `prod_a psi_hat(ell_x xi_a)`. The temporal mollifier is
//! a discrete convolution of the samples with a bump of radius `ell_t`; the
//! samples are extended beyond [0, T] by their boundary values.

use num_complex::Complex64;

use crate::error::{CiwError, Result};
use crate::field::{Field, Spectrum};
use crate::grid::Grid;
use crate::quad::{bump, bump_deriv, bump_fourier};
use crate::spectral::Engine;
use crate::timefield::TimeField;

type Weights = Vec<Vec<(usize, f64)>>;

#[derive(Debug, Clone)]
pub struct Mollifier {
    grid: Grid,
    ell_x: f64,
    ell_t: f64,
    axis_symbol: Vec<f64>,
    value_weights: Weights,
    rate_weights: Weights,
    warnings: Vec<String>,
}

impl Mollifier {
    pub fn new(grid: Grid, ell_x: f64, ell_t: f64) -> Result<Self> {
        if !(ell_x > 0.0) || !(ell_t >= 0.0) {
            return Err(CiwError::InvalidArgument(format!(
                "mollification lengths must satisfy ell_x > 0, ell_t >= 0 (got {ell_x}, {ell_t})"
            )));
        }
        let space = grid.space;
        let mut warnings = Vec::new();
        let min_x = 4.0 * space.spacing();
        if ell_x < min_x {
            warnings.push(format!("spatial mollifier radius {ell_x:.4} is below four grid cells ({min_x:.4})"));
        }
        let dt = grid.dt();
        if ell_t > 0.0 && ell_t <= dt {
            warnings.push(format!("temporal mollifier radius {ell_t:.4} does not exceed the sample spacing {dt:.4}"));
        }
        let axis_symbol = (0..space.n)
            .map(|k| match space.wavenumber(k) {
                0 => 1.0,
                w => bump_fourier(ell_x * w.abs() as f64),
            })
            .collect();
        let (value_weights, rate_weights) = temporal_weights(grid, ell_t);
        Ok(Self { grid, ell_x, ell_t, axis_symbol, value_weights, rate_weights, warnings })
    }

    pub fn ell_x(&self) -> f64 {
        self.ell_x
    }

    pub fn ell_t(&self) -> f64 {
        self.ell_t
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Fourier multiplier of the spatial mollifier at a flat spectral index.
    pub fn symbol(&self, idx: usize) -> f64 {
        let ix = self.grid.space.unflatten(idx);
        (0..self.grid.space.dim).map(|a| self.axis_symbol[ix[a]]).product()
    }

    pub fn spatial_spec(&self, s: &mut Spectrum) {
        let len = self.grid.space.len();
        let symbols: Vec<f64> = (0..len).map(|idx| self.symbol(idx)).collect();
        for c in 0..s.ncomp() {
            for (v, m) in s.comp_mut(c).iter_mut().zip(&symbols) {
                *v *= *m;
            }
        }
    }

    pub fn spatial_scalar_spec(&self, s: &mut [Complex64]) {
        for (idx, v) in s.iter_mut().enumerate() {
            *v *= self.symbol(idx);
        }
    }

    pub fn spatial(&self, engine: &Engine, f: &Field) -> Field {
        let mut s = engine.forward(f);
        self.spatial_spec(&mut s);
        engine.inverse(&s)
    }

    /// Weights `(j, w_ij)` of the value at output sample `i`.
    pub fn value_weights(&self, i: usize) -> &[(usize, f64)] {
        &self.value_weights[i]
    }

    /// Weights of the time derivative at output sample `i`, applied to values.
    pub fn rate_weights(&self, i: usize) -> &[(usize, f64)] {
        &self.rate_weights[i]
    }

    /// Temporal convolution of samples at output index `i`.
    pub fn combine(weights: &[(usize, f64)], samples: &[Field]) -> Field {
        let mut out = Field::zeros(samples[0].space(), samples[0].kind());
        for &(j, w) in weights {
            if w != 0.0 {
                out.axpy(w, &samples[j]);
            }
        }
        out
    }

    /// Value and rate weights of the temporal mollifier at an arbitrary time
    /// `t` in [0, T]; on sample times they agree with the tabulated weights.
    pub fn weights_at(&self, t: f64) -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
        let n_t = self.grid.n_t;
        let dt = self.grid.dt();
        let last = n_t as i64 - 1;
        if self.ell_t <= 0.0 {
            let pos = (t / dt).clamp(0.0, last as f64);
            let j = (pos.floor() as i64).min(last - 1).max(0) as usize;
            let s = pos - j as f64;
            let mut wv = Vec::new();
            accumulate(&mut wv, j, 1.0 - s);
            accumulate(&mut wv, j + 1, s);
            return (wv, vec![(j, -1.0 / dt), (j + 1, 1.0 / dt)]);
        }
        let ell = self.ell_t;
        let lo = ((t - ell) / dt).floor() as i64;
        let hi = ((t + ell) / dt).ceil() as i64;
        let mut raw = Vec::new();
        let (mut total, mut total_d) = (0.0, 0.0);
        for j in lo..=hi {
            let arg = (t - j as f64 * dt) / ell;
            let (b, bd) = (bump(arg), bump_deriv(arg) / ell);
            total += b;
            total_d += bd;
            raw.push((j.clamp(0, last) as usize, b, bd));
        }
        let mut wv = Vec::new();
        let mut wr = Vec::new();
        for (j, b, bd) in raw {
            accumulate(&mut wv, j, b / total);
            accumulate(&mut wr, j, (bd * total - b * total_d) / (total * total));
        }
        (wv, wr)
    }

    /// Mollified value and rate of a time field at an arbitrary time.
    pub fn sample_at(&self, engine: &Engine, tf: &TimeField, t: f64) -> (Field, Field) {
        let (wv, wr) = self.weights_at(t);
        let value = self.spatial(engine, &Self::combine(&wv, tf.values()));
        let rate = match tf.rates() {
            Some(r) => Self::combine(&wv, r),
            None => Self::combine(&wr, tf.values()),
        };
        (value, self.spatial(engine, &rate))
    }

    /// Temporal convolution of samples that are already spatially mollified.
    pub fn temporal(&self, values: &[Field], rates: Option<&[Field]>) -> (Vec<Field>, Vec<Field>) {
        let n_t = self.grid.n_t;
        let mut out_v = Vec::with_capacity(n_t);
        let mut out_r = Vec::with_capacity(n_t);
        for i in 0..n_t {
            out_v.push(Self::combine(&self.value_weights[i], values));
            out_r.push(match rates {
                Some(r) => Self::combine(&self.value_weights[i], r),
                None => Self::combine(&self.rate_weights[i], values),
            });
        }
        (out_v, out_r)
    }

    /// Full space-time mollification; the result always carries a rate channel.
    ///
    /// When the input carries rates they are mollified with the same weights
    /// (boundary extension applied to the rates as well), which keeps linear
    /// evolution equations satisfied exactly by the mollified fields.
    pub fn mollify(&self, engine: &Engine, tf: &TimeField) -> Result<TimeField> {
        let values: Vec<Field> = tf.values().iter().map(|f| self.spatial(engine, f)).collect();
        let rates: Option<Vec<Field>> = tf.rates().map(|r| r.iter().map(|f| self.spatial(engine, f)).collect());
        let (v, r) = self.temporal(&values, rates.as_deref());
        TimeField::new(self.grid, tf.kind(), v, Some(r))
    }
}

fn temporal_weights(grid: Grid, ell_t: f64) -> (Weights, Weights) {
    let n_t = grid.n_t;
    let dt = grid.dt();
    let identity: Weights = (0..n_t).map(|i| vec![(i, 1.0)]).collect();
    if ell_t <= 0.0 {
        return (identity, (0..n_t).map(|_| Vec::new()).collect());
    }
    let reach = (ell_t / dt).ceil() as i64;
    let offsets: Vec<i64> = (-reach..=reach).collect();
    let raw: Vec<f64> = offsets.iter().map(|&o| bump(o as f64 * dt / ell_t)).collect();
    let raw_d: Vec<f64> = offsets.iter().map(|&o| bump_deriv(o as f64 * dt / ell_t) / ell_t).collect();
    let total: f64 = raw.iter().sum();
    let mut values = Vec::with_capacity(n_t);
    let mut rates = Vec::with_capacity(n_t);
    for i in 0..n_t as i64 {
        let mut wv: Vec<(usize, f64)> = Vec::new();
        let mut wr: Vec<(usize, f64)> = Vec::new();
        for ((&o, &r), &rd) in offsets.iter().zip(&raw).zip(&raw_d) {
            // Kernel argument is t_i - t_j with j = i - o.
            let j = (i - o).clamp(0, n_t as i64 - 1) as usize;
            accumulate(&mut wv, j, r / total);
            accumulate(&mut wr, j, rd / total);
        }
        values.push(wv);
        rates.push(wr);
    }
    (values, rates)
}

fn accumulate(w: &mut Vec<(usize, f64)>, j: usize, v: f64) {
    if v == 0.0 {
        return;
    }
    if let Some(entry) = w.iter_mut().find(|(k, _)| *k == j) {
        entry.1 += v;
    } else {
        w.push((j, v));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldKind;
    use crate::quad::integrate;

    #[test]
    fn constants_are_reproduced() {
        let grid = Grid::new(2, 16, 17, 1.0).unwrap();
        let engine = Engine::new(grid.space);
        let m = Mollifier::new(grid, 0.3, 0.2).unwrap();
        let tf = TimeField::stationary(grid, Field::constant(grid.space, 1.7));
        let out = m.mollify(&engine, &tf).unwrap();
        for i in 0..grid.n_t {
            assert!(out.value(i).diff(tf.value(i)).max_abs() < 1e-14);
            assert!(out.rate(i).unwrap().max_abs() < 1e-14);
        }
    }

    #[test]
    fn single_mode_damped_by_quadrature_symbol() {
        let grid = Grid::new(2, 32, 3, 1.0).unwrap();
        let engine = Engine::new(grid.space);
        let ell = 0.4;
        let m = Mollifier::new(grid, ell, 0.0).unwrap();
        let f = Field::scalar_fn(grid.space, |x| (3.0 * x[0]).cos());
        let g = m.spatial(&engine, &f);
        // Independent oracle: one-dimensional quadrature of the scaled bump.
        let mass = integrate(bump, -1.0, 1.0, 400);
        let damp = integrate(|s| bump(s / ell) / ell * (3.0 * s).cos(), -ell, ell, 400) / mass;
        assert!(g.diff(&f.scaled(damp)).max_abs() < 1e-12);
    }

    #[test]
    fn spatial_mean_is_preserved() {
        let grid = Grid::new(2, 16, 3, 1.0).unwrap();
        let engine = Engine::new(grid.space);
        let m = Mollifier::new(grid, 0.5, 0.0).unwrap();
        let f = Field::scalar_fn(grid.space, |x| 2.0 + x[0].sin() * x[1].cos() + (3.0 * x[1]).cos());
        let g = m.spatial(&engine, &f);
        assert!((g.mean(0) - f.mean(0)).abs() < 1e-14);
    }

    #[test]
    fn temporal_weights_sum_to_one_and_rates_to_zero() {
        let grid = Grid::new(2, 8, 41, 1.0).unwrap();
        let m = Mollifier::new(grid, 0.5, 0.1).unwrap();
        for i in 0..grid.n_t {
            let s: f64 = m.value_weights(i).iter().map(|w| w.1).sum();
            assert!((s - 1.0).abs() < 1e-14);
            let r: f64 = m.rate_weights(i).iter().map(|w| w.1).sum();
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn rate_weights_differentiate_smooth_signals() {
        let grid = Grid::new(2, 8, 401, 1.0).unwrap();
        let m = Mollifier::new(grid, 0.5, 0.1).unwrap();
        let space = grid.space;
        let samples: Vec<Field> = grid.times().iter().map(|&t| Field::constant(space, (2.0 * t).sin())).collect();
        for i in [100, 200, 300] {
            let v = Mollifier::combine(m.value_weights(i), &samples).comp(0)[0];
            let r = Mollifier::combine(m.rate_weights(i), &samples).comp(0)[0];
            let t = grid.time(i);
            // Mollifying sin(2t) multiplies it by the kernel's Fourier symbol.
            let damp = bump_fourier(2.0 * 0.1);
            assert!((v - damp * (2.0 * t).sin()).abs() < 1e-6);
            assert!((r - damp * 2.0 * (2.0 * t).cos()).abs() < 1e-5);
        }
    }

    #[test]
    fn derivative_commutes_with_spatial_mollifier() {
        let grid = Grid::new(2, 32, 3, 1.0).unwrap();
        let engine = Engine::new(grid.space);
        let m = Mollifier::new(grid, 0.3, 0.0).unwrap();
        let f = Field::scalar_fn(grid.space, |x| (2.0 * x[0] + x[1]).sin() + (5.0 * x[1]).cos());
        let a = engine.derivative(&m.spatial(&engine, &f), &[1, 1]).unwrap();
        let b = m.spatial(&engine, &engine.derivative(&f, &[1, 1]).unwrap());
        assert!(a.diff(&b).max_abs() < 1e-10);
        assert_eq!(a.kind(), FieldKind::Scalar);
    }

    #[test]
    fn off_grid_weights_match_tables_on_samples() {
        let grid = Grid::new(2, 8, 41, 1.0).unwrap();
        let m = Mollifier::new(grid, 0.5, 0.1).unwrap();
        for i in [0, 3, 20, 40] {
            let (wv, wr) = m.weights_at(grid.time(i));
            let total = |w: &[(usize, f64)], j: usize| w.iter().filter(|e| e.0 == j).map(|e| e.1).sum::<f64>();
            for j in 0..grid.n_t {
                assert!((total(&wv, j) - total(m.value_weights(i), j)).abs() < 1e-13);
                assert!((total(&wr, j) - total(m.rate_weights(i), j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn off_grid_rate_weights_differentiate_value_weights() {
        let grid = Grid::new(2, 8, 41, 1.0).unwrap();
        let m = Mollifier::new(grid, 0.5, 0.13).unwrap();
        let series: Vec<f64> = grid.times().iter().map(|t| (3.0 * t).sin() + t * t).collect();
        let eval = |w: &[(usize, f64)]| w.iter().map(|(j, c)| c * series[*j]).sum::<f64>();
        let (t, e) = (0.4371, 1e-6);
        let fd = (eval(&m.weights_at(t + e).0) - eval(&m.weights_at(t - e).0)) / (2.0 * e);
        assert!((fd - eval(&m.weights_at(t).1)).abs() < 1e-6);
    }

    #[test]
    fn unresolved_radius_is_flagged() {
        let grid = Grid::new(2, 16, 5, 1.0).unwrap();
        let m = Mollifier::new(grid, 0.1, 0.1).unwrap();
        assert_eq!(m.warnings().len(), 2);
    }
}
