//! Grid estimators of the Hölder, Lebesgue and Sobolev norms.
//!
//! Every estimator samples the field on the lattice only, so sup norms and
//! Hölder seminorms are biased low relative to the true torus norms. Hölder
//! quotients are taken over node pairs whose offset lies in a cube of
//! `window` cells per axis.

use rayon::prelude::*;

use crate::error::{CiwError, Result};
use crate::field::Field;
use crate::quad::simpson;
use crate::spectral::Engine;
use crate::timefield::TimeField;

/// Norm selector for [`estimate_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    /// `sup_t ||f(t)||_{C^N}`.
    C { order: usize },
    /// `sup_t ||f(t)||_{C^{N,eta}}`.
    Holder { order: usize, eta: f64 },
    /// `(int_0^T ||f(t)||_{C_x}^p dt)^{1/p}`, `p = inf` allowed.
    LpTCx { p: f64 },
    /// `sup_t ||f(t)||_{H^s}`.
    CtHs { s: f64 },
    /// Sum over `m + |zeta| <= N` of `||d_t^m grad^zeta f||_{L^p_{t,x}}`.
    W { order: usize, p: f64 },
}

impl NormKind {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CiwError::InvalidArgument(msg));
        match *self {
            NormKind::C { order } | NormKind::Holder { order, .. } | NormKind::W { order, .. } if order > 6 => {
                bad(format!("derivative order {order} exceeds 6"))
            }
            NormKind::Holder { eta, .. } if !(eta > 0.0 && eta < 1.0) => {
                bad(format!("Hölder exponent {eta} not in (0,1)"))
            }
            NormKind::LpTCx { p } | NormKind::W { p, .. } if !(p >= 1.0) => bad(format!("exponent p = {p} below 1")),
            NormKind::CtHs { s } if !(-2.0..=2.0).contains(&s) => bad(format!("Sobolev index {s} outside [-2, 2]")),
            _ => Ok(()),
        }
    }
}

/// All multi-indices of total order exactly `order` in `dim` variables.
pub fn multi_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == dim - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(dim, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, order, &mut Vec::new(), &mut out);
    out
}

/// `sum_{|zeta| <= N} sup_x |grad^zeta f|`.
pub fn c_norm(engine: &Engine, f: &Field, order: usize) -> Result<f64> {
    let mut total = f.sup_norm();
    for m in 1..=order {
        for zeta in multi_indices(f.space().dim, m) {
            total += engine.derivative(f, &zeta)?.sup_norm();
        }
    }
    Ok(total)
}

/// Hölder seminorm estimator: max of `|f(x+o) - f(x)| / |o|^eta` over nodes
/// `x` and lattice offsets `o` with `0 < |o|_inf <= window`.
pub fn holder_seminorm(f: &Field, eta: f64, window: usize) -> f64 {
    let space = f.space();
    let d = space.dim;
    let n = space.n as i64;
    let w = window.max(1) as i64;
    let h = space.spacing();
    let mut offsets = Vec::new();
    let range: Vec<i64> = (-w..=w).collect();
    for &a in &range {
        for &b in &range {
            for &c in if d == 3 { &range[..] } else { &[0][..] } {
                let o = [a, b, c];
                // Half of the offsets suffice: |f(x+o)-f(x)| is symmetric in o.
                let first = o.iter().copied().find(|&v| v != 0);
                if matches!(first, Some(v) if v > 0) {
                    offsets.push(o);
                }
            }
        }
    }
    let len = space.len();
    let ncomp = f.ncomp();
    let is_sym = f.kind() == crate::field::FieldKind::SymTensor;
    let weights: Vec<f64> = (0..ncomp)
        .map(|c| {
            if is_sym {
                let (i, j) = sym_pair(c, d);
                if i == j {
                    1.0
                } else {
                    2.0
                }
            } else {
                1.0
            }
        })
        .collect();
    offsets
        .par_iter()
        .map(|o| {
            let dist = ((o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64).sqrt() * h;
            let mut worst: f64 = 0.0;
            for idx in 0..len {
                let ix = space.unflatten(idx);
                let mut jx = [0usize; 3];
                for a in 0..d {
                    jx[a] = (ix[a] as i64 + o[a]).rem_euclid(n) as usize;
                }
                let jdx = space.flatten(&jx[..d]);
                let mut acc = 0.0;
                for (c, wgt) in weights.iter().enumerate() {
                    let comp = f.comp(c);
                    let diff = comp[jdx] - comp[idx];
                    acc += wgt * diff * diff;
                }
                worst = worst.max(acc);
            }
            worst.sqrt() / dist.powf(eta)
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max)
}

fn sym_pair(c: usize, d: usize) -> (usize, usize) {
    for i in 0..d {
        for j in i..d {
            if crate::grid::sym_index(i, j, d) == c {
                return (i, j);
            }
        }
    }
    unreachable!("component index out of range")
}

/// `||f||_{C^{N,eta}} = ||f||_{C^N} + max_{|zeta| = N} [grad^zeta f]_eta`.
pub fn holder_norm(engine: &Engine, f: &Field, order: usize, eta: f64, window: usize) -> Result<f64> {
    let base = c_norm(engine, f, order)?;
    let mut semi: f64 = 0.0;
    for zeta in multi_indices(f.space().dim, order) {
        let g = if order == 0 { f.clone() } else { engine.derivative(f, &zeta)? };
        semi = semi.max(holder_seminorm(&g, eta, window));
    }
    Ok(base + semi)
}

/// `H^s` norm with weight `(1 + |xi|^2)^s`, normalized so that `H^0 = L^2(T^d)`.
pub fn hs_norm(engine: &Engine, f: &Field, s: f64) -> f64 {
    let spec = engine.forward(f);
    let vol = f.space().volume();
    let mut acc = 0.0;
    for c in 0..spec.ncomp() {
        let wgt = if f.kind() == crate::field::FieldKind::SymTensor {
            let (i, j) = sym_pair(c, f.space().dim);
            if i == j {
                1.0
            } else {
                2.0
            }
        } else {
            1.0
        };
        for (idx, v) in spec.comp(c).iter().enumerate() {
            let ix = f.space().xi_of(idx);
            let k2: f64 = ix.iter().map(|&k| (k * k) as f64).sum();
            acc += wgt * (1.0 + k2).powf(s) * v.norm_sqr();
        }
    }
    (acc * vol).sqrt()
}

/// Spatial `L^p` norm of the pointwise norm; `p = inf` gives the sup.
pub fn lp_space(f: &Field, p: f64) -> f64 {
    if p.is_infinite() {
        return f.sup_norm();
    }
    let dv = f.space().cell_volume();
    let s: f64 = (0..f.nodes()).map(|i| f.pointwise_norm(i).powf(p)).sum();
    (s * dv).powf(1.0 / p)
}

/// `L^p` norm in time of a sampled nonnegative series (Simpson quadrature).
pub fn lp_time(values: &[f64], dt: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().copied().fold(0.0, f64::max);
    }
    let powered: Vec<f64> = values.iter().map(|v| v.abs().powf(p)).collect();
    simpson(&powered, dt).max(0.0).powf(1.0 / p)
}

/// Time derivatives of order `m` at every sample: rate channel for the first,
/// second-order differences beyond.
fn time_derivatives(tf: &TimeField, m: usize) -> Vec<Field> {
    if m == 0 {
        return tf.values().to_vec();
    }
    let first: Vec<Field> = (0..tf.len()).map(|i| tf.derivative_at(i)).collect();
    let mut cur = first;
    for _ in 1..m {
        let next = TimeField::new(tf.grid(), tf.kind(), cur, None).expect("same shape");
        cur = (0..next.len()).map(|i| next.derivative_at(i)).collect();
    }
    cur
}

/// Grid estimator of a space-time norm; lower-biased relative to the true norm.
pub fn estimate_norm(engine: &Engine, tf: &TimeField, kind: NormKind, window: usize) -> Result<f64> {
    kind.validate()?;
    let dt = tf.grid().dt();
    let per_sample = |g: &(dyn Fn(&Field) -> Result<f64> + Sync)| -> Result<Vec<f64>> {
        tf.values().par_iter().map(g).collect::<Result<Vec<f64>>>()
    };
    match kind {
        NormKind::C { order } => {
            let v = per_sample(&|f| c_norm(engine, f, order))?;
            Ok(v.into_iter().fold(0.0, f64::max))
        }
        NormKind::Holder { order, eta } => {
            let v = per_sample(&|f| holder_norm(engine, f, order, eta, window))?;
            Ok(v.into_iter().fold(0.0, f64::max))
        }
        NormKind::LpTCx { p } => Ok(lp_time(&tf.sup_norms(), dt, p)),
        NormKind::CtHs { s } => {
            let v = per_sample(&|f| Ok(hs_norm(engine, f, s)))?;
            Ok(v.into_iter().fold(0.0, f64::max))
        }
        NormKind::W { order, p } => {
            let mut total = 0.0;
            for m in 0..=order {
                let base = time_derivatives(tf, m);
                for k in 0..=(order - m) {
                    for zeta in multi_indices(tf.grid().dim(), k) {
                        let per_t: Vec<f64> = base
                            .par_iter()
                            .map(|f| {
                                let g = if k == 0 { f.clone() } else { engine.derivative(f, &zeta)? };
                                Ok(lp_space(&g, p))
                            })
                            .collect::<Result<Vec<f64>>>()?;
                        total += lp_time(&per_t, dt, p);
                    }
                }
            }
            Ok(total)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Space};

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(2, 3).len(), 4);
        assert_eq!(multi_indices(3, 2).len(), 6);
        assert!(multi_indices(3, 2).iter().all(|z| z.iter().sum::<usize>() == 2));
    }

    #[test]
    fn sup_of_sine() {
        let grid = Grid::new(2, 64, 3, 1.0).unwrap();
        let engine = Engine::new(grid.space);
        let f = Field::scalar_fn(grid.space, |x| x[0].sin());
        let tf = TimeField::stationary(grid, f);
        let c0 = estimate_norm(&engine, &tf, NormKind::C { order: 0 }, 1).unwrap();
        assert!((c0 - 1.0).abs() < 1e-3);
        let c1 = estimate_norm(&engine, &tf, NormKind::C { order: 1 }, 1).unwrap();
        assert!((c1 - 2.0).abs() < 1e-3);
    }

    #[test]
    fn holder_seminorm_of_sine() {
        let space = Space::new(2, 128).unwrap();
        let f = Field::scalar_fn(space, |x| x[0].sin());
        // Lipschitz constant 1; at eta close to 1 the quotient approaches it from below.
        let s = holder_seminorm(&f, 0.999, 2);
        assert!(s <= 1.0 + 1e-2 && s > 0.95, "{s}");
        // Closed form over axis offsets j*h: 2 sin(j h / 2) / (j h)^eta.
        let h = space.spacing();
        let eta = 0.3;
        let oracle = (1..=4).map(|j| 2.0 * (j as f64 * h / 2.0).sin() / (j as f64 * h).powf(eta)).fold(0.0, f64::max);
        let s_small = holder_seminorm(&f, eta, 4);
        assert!((s_small - oracle).abs() < 1e-3 * oracle, "{s_small} vs {oracle}");
    }

    #[test]
    fn l2_time_norm_of_constant() {
        let grid = Grid::new(2, 8, 33, 2.0).unwrap();
        let engine = Engine::new(grid.space);
        let tf = TimeField::stationary(grid, Field::constant(grid.space, 3.0));
        let v = estimate_norm(&engine, &tf, NormKind::LpTCx { p: 2.0 }, 1).unwrap();
        assert!((v - 3.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn h0_is_l2() {
        let space = Space::new(2, 32).unwrap();
        let engine = Engine::new(space);
        let f = Field::scalar_fn(space, |x| x[0].cos() + 0.5 * (2.0 * x[1]).sin());
        let l2 = lp_space(&f, 2.0);
        assert!((hs_norm(&engine, &f, 0.0) - l2).abs() < 1e-10 * l2);
        let h1 = hs_norm(&engine, &f, 1.0);
        let expected = (std::f64::consts::PI.powi(2) * 2.0 * (2.0 + 0.25 * 5.0)).sqrt();
        assert!((h1 - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn w1p_of_separable_field() {
        let grid = Grid::new(2, 32, 65, 1.0).unwrap();
        let engine = Engine::new(grid.space);
        let space = grid.space;
        let values: Vec<Field> = grid.times().iter().map(|&t| Field::scalar_fn(space, |x| t * x[0].sin())).collect();
        let rates: Vec<Field> = grid.times().iter().map(|_| Field::scalar_fn(space, |x| x[0].sin())).collect();
        let tf = TimeField::new(grid, crate::field::FieldKind::Scalar, values, Some(rates)).unwrap();
        let w = estimate_norm(&engine, &tf, NormKind::W { order: 1, p: 2.0 }, 1).unwrap();
        // ||t sin||_{L2} = (1/3)^{1/2} * sqrt(2 pi^2), same for d_x, and ||sin||_{L2} for d_t.
        let l2 = (2.0 * std::f64::consts::PI.powi(2)).sqrt();
        let expected = 2.0 * l2 / 3f64.sqrt() + l2;
        assert!((w - expected).abs() < 1e-8 * expected, "{w} vs {expected}");
    }

    #[test]
    fn invalid_parameters_rejected() {
        let grid = Grid::new(2, 8, 3, 1.0).unwrap();
        let engine = Engine::new(grid.space);
        let tf = TimeField::zeros(grid, crate::field::FieldKind::Scalar, false);
        assert!(estimate_norm(&engine, &tf, NormKind::C { order: 7 }, 1).is_err());
        assert!(estimate_norm(&engine, &tf, NormKind::Holder { order: 0, eta: 1.0 }, 1).is_err());
        assert!(estimate_norm(&engine, &tf, NormKind::LpTCx { p: 0.5 }, 1).is_err());
        assert!(estimate_norm(&engine, &tf, NormKind::CtHs { s: 3.0 }, 1).is_err());
    }
}
