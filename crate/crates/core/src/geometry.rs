//! Rational direction sets for the geometric decomposition
//! `S = sum_k gamma_k(S)^2 k (x) k` of symmetric matrices near the identity.
//!
//! Directions and their orthonormal frames are stored as integer vectors
//! over a common denominator per direction (`k = p / q` with `|p| = q`), so
//! orthonormality and integrality are checked exactly.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{CiwError, Result};
use crate::grid::sym_index;

/// Safety factor applied to the exact positivity radius.
pub const RADIUS_SAFETY: f64 = 0.9;

/// One unit direction `p / q` with its frame `(p, e_1, .., e_{d-1}) / q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Direction {
    pub numerator: Vec<i64>,
    pub denominator: i64,
    pub frame: Vec<Vec<i64>>,
}

impl Direction {
    pub fn unit(&self) -> Vec<f64> {
        self.numerator.iter().map(|&v| v as f64 / self.denominator as f64).collect()
    }

    pub fn frame_unit(&self, i: usize) -> Vec<f64> {
        self.frame[i].iter().map(|&v| v as f64 / self.denominator as f64).collect()
    }

    /// Largest absolute integer component among the frame vectors.
    pub fn max_frame_component(&self) -> i64 {
        self.frame.iter().flat_map(|e| e.iter().map(|v| v.abs())).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionSet {
    pub dim: usize,
    pub directions: Vec<Direction>,
    /// Common integer scale: lcm of the denominators.
    pub n_lambda: i64,
    /// Column `k` is the packed upper triangle of `k (x) k`.
    #[serde(skip)]
    pub m: DMatrix<f64>,
    #[serde(skip)]
    pub m_inv: DMatrix<f64>,
    pub c_identity: Vec<f64>,
    /// Largest Frobenius radius around `Id` with all coefficients positive.
    pub exact_radius: f64,
    /// `RADIUS_SAFETY * exact_radius`.
    pub eps_u: f64,
    pub condition_number: f64,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn dot(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Packed upper triangle of a full symmetric matrix given as a closure.
pub fn pack(dim: usize, s: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; dim * (dim + 1) / 2];
    for i in 0..dim {
        for j in i..dim {
            out[sym_index(i, j, dim)] = s(i, j);
        }
    }
    out
}

/// Frobenius norm of a packed symmetric matrix.
pub fn packed_frobenius(dim: usize, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..dim {
        for j in i..dim {
            let x = v[sym_index(i, j, dim)];
            acc += if i == j { x * x } else { 2.0 * x * x };
        }
    }
    acc.sqrt()
}

pub fn packed_identity(dim: usize) -> Vec<f64> {
    pack(dim, |i, j| if i == j { 1.0 } else { 0.0 })
}

/// Searches integer vectors of length `q` orthogonal to `p` and to each other,
/// preferring the smallest largest component. Deterministic.
fn find_frame(p: &[i64], q: i64) -> Option<Vec<Vec<i64>>> {
    let d = p.len();
    let mut candidates: Vec<Vec<i64>> = Vec::new();
    let range: Vec<i64> = (-q..=q).collect();
    let mut cur = vec![0i64; d];
    fn rec(pos: usize, range: &[i64], cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>, p: &[i64], q: i64) {
        if pos == cur.len() {
            if dot(cur, cur) == q * q && dot(cur, p) == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for &v in range {
            cur[pos] = v;
            rec(pos + 1, range, cur, out, p, q);
        }
    }
    rec(0, &range, &mut cur, &mut candidates, p, q);
    let size = |e: &Vec<i64>| e.iter().map(|v| v.abs()).max().unwrap_or(0);
    candidates.sort_by_key(|e| (size(e), std::cmp::Reverse(e.clone())));
    if d == 2 {
        return candidates.first().map(|e| vec![e.clone()]);
    }
    let mut best: Option<(i64, Vec<Vec<i64>>)> = None;
    for (a, e1) in candidates.iter().enumerate() {
        for e2 in &candidates[a + 1..] {
            if dot(e1, e2) == 0 {
                let s = size(e1).max(size(e2));
                if best.as_ref().is_none_or(|(b, _)| s < *b) {
                    best = Some((s, vec![e1.clone(), e2.clone()]));
                }
            }
        }
    }
    best.map(|(_, f)| f)
}

impl DirectionSet {
    /// Default set for `d = 2` or `d = 3`.
    pub fn build(dim: usize) -> Result<Self> {
        let list: Vec<(Vec<i64>, i64)> = match dim {
            2 => vec![(vec![1, 0], 1), (vec![3, 4], 5), (vec![3, -4], 5)],
            3 => vec![
                (vec![1, 2, -2], 3),
                (vec![1, 2, 2], 3),
                (vec![2, -2, -1], 3),
                (vec![2, -1, -2], 3),
                (vec![2, -1, 2], 3),
                (vec![2, 2, 1], 3),
            ],
            _ => return Err(CiwError::InvalidArgument(format!("dimension {dim} not supported"))),
        };
        Self::from_rational(dim, &list)
    }

    /// Builds a set from integer numerators and denominators.
    pub fn from_rational(dim: usize, list: &[(Vec<i64>, i64)]) -> Result<Self> {
        let sym = dim * (dim + 1) / 2;
        if list.len() != sym {
            return Err(CiwError::Degenerate(format!(
                "need exactly {sym} directions in d = {dim}, got {}",
                list.len()
            )));
        }
        let mut directions = Vec::with_capacity(sym);
        for (p, q) in list {
            if p.len() != dim || *q <= 0 || dot(p, p) != q * q {
                return Err(CiwError::Degenerate(format!("{p:?}/{q} is not a rational unit vector in d = {dim}")));
            }
            let frame = find_frame(p, *q)
                .ok_or_else(|| CiwError::Degenerate(format!("no integer orthonormal frame for {p:?}/{q}")))?;
            directions.push(Direction { numerator: p.clone(), denominator: *q, frame });
        }
        let n_lambda = directions.iter().fold(1i64, |acc, d| acc / gcd(acc, d.denominator) * d.denominator);

        let mut m = DMatrix::<f64>::zeros(sym, sym);
        for (col, dir) in directions.iter().enumerate() {
            let k = dir.unit();
            let v = pack(dim, |i, j| k[i] * k[j]);
            for (row, x) in v.iter().enumerate() {
                m[(row, col)] = *x;
            }
            // Incremental rank check names the first dependent direction.
            let sub = m.columns(0, col + 1).into_owned();
            let rank = sub.clone().svd(false, false).rank(1e-10);
            if rank < col + 1 {
                return Err(CiwError::Degenerate(format!(
                    "dyad of direction {:?}/{} is linearly dependent on the previous ones",
                    dir.numerator, dir.denominator
                )));
            }
        }
        let m_inv =
            m.clone().try_inverse().ok_or_else(|| CiwError::Degenerate("decomposition matrix is singular".into()))?;
        let id = packed_identity(dim);
        let c_identity: Vec<f64> = (0..sym).map(|k| (0..sym).map(|r| m_inv[(k, r)] * id[r]).sum()).collect();
        if let Some((k, c)) = c_identity.iter().enumerate().find(|(_, c)| **c <= 1e-12) {
            return Err(CiwError::Degenerate(format!(
                "coefficient of direction {:?}/{} at the identity is {c:.3e}, not positive",
                directions[k].numerator, directions[k].denominator
            )));
        }
        let mut exact_radius = f64::INFINITY;
        for (k, ck) in c_identity.iter().enumerate() {
            let mut dual = 0.0;
            for i in 0..dim {
                for j in i..dim {
                    let x = m_inv[(k, sym_index(i, j, dim))];
                    dual += if i == j { x * x } else { 0.5 * x * x };
                }
            }
            exact_radius = exact_radius.min(ck / dual.sqrt());
        }
        let sv = m.clone().svd(false, false).singular_values;
        let condition_number = sv.max() / sv.min();
        Ok(Self {
            dim,
            directions,
            n_lambda,
            m,
            m_inv,
            c_identity,
            exact_radius,
            eps_u: RADIUS_SAFETY * exact_radius,
            condition_number,
        })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// `c = M^{-1} vec(S)` without any precondition.
    pub fn coefficients_unchecked(&self, s: &[f64]) -> Vec<f64> {
        let sym = self.len();
        (0..sym).map(|k| (0..sym).map(|r| self.m_inv[(k, r)] * s[r]).sum()).collect()
    }

    /// `gamma_k(S) = sqrt(c_k(S))` for packed symmetric `S` in the ball `B_{eps_u}(Id)`.
    pub fn gamma(&self, s: &[f64]) -> Result<Vec<f64>> {
        let id = packed_identity(self.dim);
        let diff: Vec<f64> = s.iter().zip(&id).map(|(a, b)| a - b).collect();
        let distance = packed_frobenius(self.dim, &diff);
        if !(distance <= self.eps_u) {
            return Err(CiwError::OutsideBall { distance, radius: self.eps_u });
        }
        let c = self.coefficients_unchecked(s);
        if c.iter().any(|v| !(*v > 0.0)) {
            return Err(CiwError::Degenerate(format!("non-positive coefficient {c:?} inside the ball")));
        }
        Ok(c.into_iter().map(f64::sqrt).collect())
    }

    /// Directional derivative of `gamma_k` at `S` along packed `E`.
    pub fn gamma_derivative(&self, s: &[f64], e: &[f64]) -> Result<Vec<f64>> {
        let g = self.gamma(s)?;
        let dc = self.coefficients_unchecked(e);
        Ok(g.iter().zip(&dc).map(|(g, d)| d / (2.0 * g)).collect())
    }

    /// `sum_k w_k k (x) k` in packed form.
    pub fn reassemble(&self, weights: &[f64]) -> Vec<f64> {
        let sym = self.len();
        (0..sym).map(|r| (0..sym).map(|k| self.m[(r, k)] * weights[k]).sum()).collect()
    }

    /// Largest `|lambda * e_j|` over frame vectors of direction `k`.
    pub fn frequency_reach(&self, k: usize, lambda: f64) -> f64 {
        lambda * self.directions[k].max_frame_component() as f64
    }

    /// Smallest power-of-two `n` that resolves every Mikado flow at `lambda`
    /// (`lambda * max |N_k k_i| <= n / 4`).
    pub fn required_n(&self, lambda: f64) -> usize {
        let reach = (0..self.len()).map(|k| self.frequency_reach(k, lambda)).fold(0.0, f64::max);
        let need = (4.0 * reach).ceil().max(8.0) as usize;
        need.next_power_of_two()
    }

    /// Checks `N_Lambda k` and `N_Lambda k_i` are integral and the frames
    /// orthonormal, in integer arithmetic.
    pub fn verify_exact(&self) -> bool {
        self.directions.iter().all(|dir| {
            let q = dir.denominator;
            let scale = self.n_lambda / q;
            let ok_int = self.n_lambda % q == 0 && scale > 0;
            let mut vecs = vec![dir.numerator.clone()];
            vecs.extend(dir.frame.iter().cloned());
            let ortho = vecs
                .iter()
                .enumerate()
                .all(|(a, u)| vecs.iter().enumerate().all(|(b, v)| dot(u, v) == if a == b { q * q } else { 0 }));
            ok_int && ortho && vecs.len() == self.dim
        })
    }

    /// Monte-Carlo estimate of the positivity radius: the smallest Frobenius
    /// distance among sampled directions at which some coefficient vanishes.
    pub fn sampled_radius(&self, directions: &[Vec<f64>]) -> f64 {
        let c0 = &self.c_identity;
        let mut best = f64::INFINITY;
        for e in directions {
            let norm = packed_frobenius(self.dim, e);
            if norm == 0.0 {
                continue;
            }
            let dc = self.coefficients_unchecked(e);
            for (c, d) in c0.iter().zip(&dc) {
                if *d < 0.0 {
                    best = best.min(c / (-d) * norm);
                }
            }
        }
        best
    }
}

/// JSON summary printed by the geometry subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct GeometrySummary {
    pub dim: usize,
    pub directions: Vec<Direction>,
    pub directions_float: Vec<Vec<f64>>,
    pub n_lambda: i64,
    pub eps_u: f64,
    pub exact_radius: f64,
    pub condition_number: f64,
    pub c_identity: Vec<f64>,
    pub frames_exact: bool,
}

impl From<&DirectionSet> for GeometrySummary {
    fn from(ds: &DirectionSet) -> Self {
        Self {
            dim: ds.dim,
            directions: ds.directions.clone(),
            directions_float: ds.directions.iter().map(|d| d.unit()).collect(),
            n_lambda: ds.n_lambda,
            eps_u: ds.eps_u,
            exact_radius: ds.exact_radius,
            condition_number: ds.condition_number,
            c_identity: ds.c_identity.clone(),
            frames_exact: ds.verify_exact(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_reconstruction() {
        for d in [2, 3] {
            let ds = DirectionSet::build(d).unwrap();
            let g = ds.gamma(&packed_identity(d)).unwrap();
            let w: Vec<f64> = g.iter().map(|x| x * x).collect();
            let back = ds.reassemble(&w);
            let id = packed_identity(d);
            let err: Vec<f64> = back.iter().zip(&id).map(|(a, b)| a - b).collect();
            assert!(packed_frobenius(d, &err) < 1e-14);
            assert!(ds.verify_exact());
        }
    }

    #[test]
    fn planar_coefficients_at_identity() {
        // Solve by hand: a + 9(b+c)/25 = 1, 16(b+c)/25 = 1, 12(b-c)/25 = 0.
        let ds = DirectionSet::build(2).unwrap();
        let bc = 25.0 / 32.0;
        let a = 1.0 - 9.0 / 25.0 * 2.0 * bc;
        assert!((ds.c_identity[0] - a).abs() < 1e-14);
        assert!((ds.c_identity[1] - bc).abs() < 1e-14);
        assert!((ds.c_identity[2] - bc).abs() < 1e-14);
        assert_eq!(ds.n_lambda, 5);
    }

    #[test]
    fn axis_aligned_planar_set_is_rejected() {
        // (1,0), (0,1), (3,4)/5 spans Sym(2) but c(Id) has a zero entry.
        let err = DirectionSet::from_rational(2, &[(vec![1, 0], 1), (vec![0, 1], 1), (vec![3, 4], 5)]).unwrap_err();
        assert!(matches!(err, CiwError::Degenerate(_)));
        let dup = DirectionSet::from_rational(2, &[(vec![1, 0], 1), (vec![0, 1], 1), (vec![-1, 0], 1)]).unwrap_err();
        assert!(format!("{dup}").contains("[-1, 0]"));
    }

    #[test]
    fn outside_ball_is_rejected() {
        let ds = DirectionSet::build(2).unwrap();
        let mut s = packed_identity(2);
        s[sym_index(0, 0, 2)] += 2.0 * ds.eps_u;
        match ds.gamma(&s) {
            Err(CiwError::OutsideBall { distance, radius }) => {
                assert!((distance - 2.0 * ds.eps_u).abs() < 1e-14);
                assert_eq!(radius, ds.eps_u);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn off_diagonal_bump() {
        let ds = DirectionSet::build(3).unwrap();
        let mut s = packed_identity(3);
        // S = Id + 0.5 eps_u E12 with E12 symmetric of unit Frobenius norm.
        s[sym_index(0, 1, 3)] += 0.5 * ds.eps_u / 2f64.sqrt();
        let g = ds.gamma(&s).unwrap();
        assert!(g.iter().all(|x| *x > 0.0));
        let back = ds.reassemble(&g.iter().map(|x| x * x).collect::<Vec<_>>());
        let err: Vec<f64> = back.iter().zip(&s).map(|(a, b)| a - b).collect();
        assert!(packed_frobenius(3, &err) < 1e-12);
    }

    #[test]
    fn radius_is_sharp() {
        for d in [2, 3] {
            let ds = DirectionSet::build(d).unwrap();
            // Along the worst direction the coefficient vanishes at the exact radius.
            let sym = ds.len();
            let mut found = false;
            for k in 0..sym {
                let mut e = vec![0.0; sym];
                for i in 0..d {
                    for j in i..d {
                        let x = ds.m_inv[(k, sym_index(i, j, d))];
                        e[sym_index(i, j, d)] = if i == j { -x } else { -0.5 * x };
                    }
                }
                let norm = packed_frobenius(d, &e);
                let e: Vec<f64> = e.iter().map(|v| v / norm).collect();
                let c = ds.coefficients_unchecked(&e);
                let hit = ds.c_identity[k] + ds.exact_radius * c[k];
                if hit.abs() < 1e-12 {
                    found = true;
                }
            }
            assert!(found);
        }
    }
}
