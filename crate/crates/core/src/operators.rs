//! Nonlocal Fourier-multiplier operators: inverse divergence, Leray projection
//! and mode filters.
//!
//! The inverse divergence acts on a mean-free vector field `v` by the symbol
//!
//! ```text
//! R_ijk(xi) = -i (2-d)/(d-1) xi_i xi_j xi_k / |xi|^4 + i/(d-1) delta_ij xi_k / |xi|^2
//!             - i delta_jk xi_i / |xi|^2 - i delta_ik xi_j / |xi|^2
//! ```
//!
//! which is symmetric and trace-free in `(i, j)` and satisfies
//! `sum_j i xi_j R_ijk = delta_ik`, i.e. `div R v = v`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CiwError, Result};
use crate::field::{Field, FieldKind, Spectrum};
use crate::grid::sym_index;
use crate::spectral::Engine;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative size of the zero mode tolerated by [`inverse_divergence`].
pub const MEAN_FREE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum OperatorTag {
    InverseDivergence,
    Leray,
    NonzeroModes,
    HighPass { cutoff: f64 },
}

/// Symbol entry `R_ijk` at wavevector `xi` with `k2 = |xi|^2 > 0`.
#[cfg(test)]
fn r_symbol(xi: &[f64; 3], k2: f64, dim: usize, i: usize, j: usize, k: usize) -> Complex64 {
    let d = dim as f64;
    let mut v = -(2.0 - d) / (d - 1.0) * xi[i] * xi[j] * xi[k] / (k2 * k2);
    if i == j {
        v += xi[k] / ((d - 1.0) * k2);
    }
    if j == k {
        v -= xi[i] / k2;
    }
    if i == k {
        v -= xi[j] / k2;
    }
    I * v
}

/// Applies the inverse-divergence symbol to the spectra of the `d` components
/// of a vector field; the zero mode is discarded.
pub fn inverse_divergence_spec(engine: &Engine, v: &[&[Complex64]]) -> Spectrum {
    let space = engine.space();
    let d = space.dim;
    debug_assert_eq!(v.len(), d);
    let mut out = Spectrum::zeros(space, FieldKind::SymTensor);
    let len = space.len();
    let data = out.data_mut();
    let df = d as f64;
    let cubic = -(2.0 - df) / (df - 1.0);
    for idx in 0..len {
        let k2 = engine.k2(idx);
        if k2 == 0.0 {
            continue;
        }
        // Contracted symbol: with s = xi . v,
        // (R v)_ij = i [c xi_i xi_j s / |xi|^4 + delta_ij s / ((d-1)|xi|^2) - (xi_i v_j + xi_j v_i) / |xi|^2].
        let xi = engine.xi(idx);
        let mut vi = [ZERO; 3];
        let mut dot = ZERO;
        for (k, vk) in v.iter().enumerate() {
            vi[k] = vk[idx];
            dot += vk[idx] * xi[k];
        }
        let inv = 1.0 / k2;
        let outer = dot * (cubic * inv * inv);
        let diag = dot * (inv / (df - 1.0));
        for i in 0..d {
            for j in i..d {
                let mut acc = outer * (xi[i] * xi[j]) - (vi[j] * xi[i] + vi[i] * xi[j]) * inv;
                if i == j {
                    acc += diag;
                }
                data[sym_index(i, j, d) * len + idx] = I * acc;
            }
        }
    }
    out
}

/// Largest zero-mode magnitude of a vector field relative to its sup norm.
fn check_mean_free(v: &Field, spec: &Spectrum) -> Result<()> {
    let mean = (0..spec.ncomp()).map(|c| spec.mean_magnitude(c)).fold(0.0, f64::max);
    let limit = MEAN_FREE_TOL * v.sup_norm();
    if mean > limit {
        return Err(CiwError::NotMeanFree { mean, limit });
    }
    Ok(())
}

/// Inverse divergence of a mean-free vector field.
pub fn inverse_divergence(engine: &Engine, v: &Field) -> Result<Field> {
    if v.kind() != FieldKind::Vector {
        return Err(CiwError::Shape(format!("inverse divergence expects a vector field, got {:?}", v.kind())));
    }
    let spec = engine.forward(v);
    check_mean_free(v, &spec)?;
    Ok(engine.inverse(&inverse_divergence_spec(engine, &spec.components())))
}

/// Inverse divergence that silently discards the zero mode; returns the
/// discarded mean magnitude alongside the result.
pub fn inverse_divergence_lossy(engine: &Engine, v: &Field) -> (Field, f64) {
    let spec = engine.forward(v);
    let mean = (0..spec.ncomp()).map(|c| spec.mean_magnitude(c)).fold(0.0, f64::max);
    (engine.inverse(&inverse_divergence_spec(engine, &spec.components())), mean)
}

/// `R div T` for a symmetric tensor spectrum.
pub fn r_div_spec(engine: &Engine, t: &Spectrum) -> Spectrum {
    let div = engine.div_sym_spec(t);
    inverse_divergence_spec(engine, &div.components())
}

/// `R div T` for a symmetric tensor field.
pub fn r_div(engine: &Engine, t: &Field) -> Field {
    engine.inverse(&r_div_spec(engine, &engine.forward(t)))
}

/// `R grad p` for a scalar spectrum.
pub fn r_grad_spec(engine: &Engine, p: &[Complex64]) -> Spectrum {
    let grad = engine.grad_spec(p);
    inverse_divergence_spec(engine, &grad.components())
}

/// `R grad p` for a scalar field.
pub fn r_grad(engine: &Engine, p: &Field) -> Field {
    engine.inverse(&r_grad_spec(engine, &engine.forward_scalar(p.comp(0))))
}

/// Helmholtz-Leray projection onto divergence-free fields (zero mode kept).
pub fn leray_spec(engine: &Engine, v: &mut Spectrum) {
    let d = engine.space().dim;
    for idx in 0..engine.space().len() {
        let k2 = engine.k2(idx);
        if k2 == 0.0 {
            continue;
        }
        let xi = engine.xi(idx);
        let mut dot = ZERO;
        for a in 0..d {
            dot += xi[a] * v.comp(a)[idx];
        }
        for a in 0..d {
            v.comp_mut(a)[idx] -= xi[a] * dot / k2;
        }
    }
}

pub fn leray_project(engine: &Engine, v: &Field) -> Field {
    let mut s = engine.forward(v);
    leray_spec(engine, &mut s);
    engine.inverse(&s)
}

/// Zeroes the mean of every component.
pub fn nonzero_modes(engine: &Engine, f: &Field) -> Field {
    let mut s = engine.forward(f);
    s.zero_mean();
    engine.inverse(&s)
}

/// Zeroes all modes with Euclidean `|xi| < cutoff`.
pub fn high_pass_spec(engine: &Engine, s: &mut Spectrum, cutoff: f64) {
    let space = engine.space();
    let c2 = cutoff * cutoff;
    for idx in 0..space.len() {
        let xi = space.xi_of(idx);
        let k2: f64 = xi.iter().map(|&k| (k * k) as f64).sum();
        if k2 < c2 {
            for c in 0..s.ncomp() {
                s.comp_mut(c)[idx] = ZERO;
            }
        }
    }
}

pub fn high_pass(engine: &Engine, f: &Field, cutoff: f64) -> Result<Field> {
    if !(cutoff >= 1.0) {
        return Err(CiwError::InvalidArgument(format!("high-pass cutoff {cutoff} below 1")));
    }
    let mut s = engine.forward(f);
    high_pass_spec(engine, &mut s, cutoff);
    Ok(engine.inverse(&s))
}

/// Dispatches an operator by tag.
pub fn apply(engine: &Engine, tag: OperatorTag, f: &Field) -> Result<Field> {
    match tag {
        OperatorTag::InverseDivergence => inverse_divergence(engine, f),
        OperatorTag::Leray => {
            if f.kind() != FieldKind::Vector {
                return Err(CiwError::Shape("Leray projection expects a vector field".into()));
            }
            Ok(leray_project(engine, f))
        }
        OperatorTag::NonzeroModes => Ok(nonzero_modes(engine, f)),
        OperatorTag::HighPass { cutoff } => high_pass(engine, f, cutoff),
    }
}

/// Largest `|A_ij - A_ji|` of a full-matrix field, or 0 for packed symmetric storage.
pub fn asymmetry(t: &Field) -> f64 {
    match t.kind() {
        FieldKind::Matrix => {
            let d = t.space().dim;
            let mut worst: f64 = 0.0;
            for i in 0..d {
                for j in (i + 1)..d {
                    for (a, b) in t.comp(i * d + j).iter().zip(t.comp(j * d + i)) {
                        worst = worst.max((a - b).abs());
                    }
                }
            }
            worst
        }
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Space;

    #[test]
    fn single_mode_closed_form() {
        // v = e^{i x_1} e_1 in d = 2: R_111 = -i (0) + i - i - i = -i, R_122 = i, R_112 = 0.
        let space = Space::new(2, 16).unwrap();
        let engine = Engine::new(space);
        let idx = space.flatten(&[1, 0]);
        let xi = engine.xi(idx);
        let k2 = engine.k2(idx);
        assert!((r_symbol(xi, k2, 2, 0, 0, 0) - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        assert!((r_symbol(xi, k2, 2, 1, 1, 0) - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!(r_symbol(xi, k2, 2, 0, 1, 0).norm() < 1e-15);
        let v = Field::vector_fn(space, |x| [x[0].cos(), 0.0, 0.0]);
        let r = inverse_divergence(&engine, &v).unwrap();
        assert!(engine.div_sym(&r).diff(&v).max_abs() < 1e-12);
        // R(cos x1 e1) = diag(sin x1, -sin x1).
        let expect = Field::scalar_fn(space, |x| x[0].sin());
        let r11 = r.comp(sym_index(0, 0, 2));
        let r22 = r.comp(sym_index(1, 1, 2));
        for i in 0..space.len() {
            assert!((r11[i] - expect.comp(0)[i]).abs() < 1e-12);
            assert!((r22[i] + expect.comp(0)[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn symbol_is_symmetric_trace_free_and_inverts_div() {
        for d in [2usize, 3] {
            let xi = [1.0, -2.0, 3.0];
            let k2: f64 = xi[..d].iter().map(|v| v * v).sum();
            for k in 0..d {
                let tr: Complex64 = (0..d).map(|i| r_symbol(&xi, k2, d, i, i, k)).sum();
                assert!(tr.norm() < 1e-14);
                for i in 0..d {
                    for j in 0..d {
                        assert!((r_symbol(&xi, k2, d, i, j, k) - r_symbol(&xi, k2, d, j, i, k)).norm() < 1e-15);
                    }
                    let div: Complex64 = (0..d).map(|j| I * xi[j] * r_symbol(&xi, k2, d, i, j, k)).sum();
                    let delta = if i == k { 1.0 } else { 0.0 };
                    assert!((div - delta).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn contracted_spectrum_matches_symbol() {
        for d in [2usize, 3] {
            let space = Space::new(d, 8).unwrap();
            let engine = Engine::new(space);
            let v: Vec<Vec<Complex64>> = (0..d)
                .map(|c| {
                    (0..space.len()).map(|i| Complex64::new((i * (c + 2)) as f64 % 7.0 - 3.0, (i % 5) as f64)).collect()
                })
                .collect();
            let refs: Vec<&[Complex64]> = v.iter().map(|c| c.as_slice()).collect();
            let out = inverse_divergence_spec(&engine, &refs);
            for idx in 1..space.len() {
                let (xi, k2) = (engine.xi(idx), engine.k2(idx));
                if k2 == 0.0 {
                    continue;
                }
                for i in 0..d {
                    for j in i..d {
                        let expect: Complex64 = (0..d).map(|k| r_symbol(xi, k2, d, i, j, k) * v[k][idx]).sum();
                        assert!((out.comp(sym_index(i, j, d))[idx] - expect).norm() < 1e-13 * (1.0 + expect.norm()));
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_mean() {
        let space = Space::new(2, 8).unwrap();
        let engine = Engine::new(space);
        let v = Field::vector_fn(space, |x| [1.0 + x[0].sin(), 0.0, 0.0]);
        match inverse_divergence(&engine, &v) {
            Err(CiwError::NotMeanFree { mean, .. }) => assert!((mean - 1.0).abs() < 1e-12),
            other => panic!("expected mean error, got {other:?}"),
        }
        let zero = Field::zeros(space, FieldKind::Vector);
        assert_eq!(inverse_divergence(&engine, &zero).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn leray_kills_gradients_and_keeps_solenoidal_modes() {
        let space = Space::new(2, 16).unwrap();
        let engine = Engine::new(space);
        let grad = Field::vector_fn(space, |x| [x[0].cos(), 0.0, 0.0]);
        assert!(leray_project(&engine, &grad).max_abs() < 1e-14);
        // (-xi_2, xi_1) e^{i xi.x} with xi = (1, 2): real part (-2, 1) cos(x1 + 2 x2).
        let sol = Field::vector_fn(space, |x| {
            let c = (x[0] + 2.0 * x[1]).cos();
            [-2.0 * c, c, 0.0]
        });
        assert!(leray_project(&engine, &sol).diff(&sol).max_abs() < 1e-13);
    }

    #[test]
    fn filters() {
        let space = Space::new(2, 16).unwrap();
        let engine = Engine::new(space);
        let f = Field::scalar_fn(space, |x| 2.0 + x[0].cos() + (3.0 * x[1]).sin());
        let nz = nonzero_modes(&engine, &f);
        assert!((nz.sum(&Field::constant(space, f.mean(0))).diff(&f)).max_abs() < 1e-14);
        let hp = high_pass(&engine, &f, 2.0).unwrap();
        let expect = Field::scalar_fn(space, |x| (3.0 * x[1]).sin());
        assert!(hp.diff(&expect).max_abs() < 1e-14);
        assert!(high_pass(&engine, &f, 0.5).is_err());
        assert!(nonzero_modes(&engine, &Field::constant(space, 4.0)).max_abs() < 1e-14);
    }
}
