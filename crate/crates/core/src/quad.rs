//! Quadrature rules and the smooth compactly supported bump used throughout.

use std::sync::OnceLock;

/// Standard bump `exp(-1/(1 - s^2))` on (-1, 1), zero outside.
pub fn bump(s: f64) -> f64 {
    let u = 1.0 - s * s;
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

/// Derivative of [`bump`].
pub fn bump_deriv(s: f64) -> f64 {
    let u = 1.0 - s * s;
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp() * (-2.0 * s / (u * u))
    }
}

/// Composite Simpson rule on uniformly spaced samples.
///
/// An even sample count (odd number of intervals) is closed with a
/// Simpson 3/8 panel on the last three intervals.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let m = values.len();
    match m {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        3 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        4 => 3.0 * h / 8.0 * (values[0] + 3.0 * values[1] + 3.0 * values[2] + values[3]),
        _ => {
            let intervals = m - 1;
            let (simpson_end, tail) = if intervals % 2 == 0 { (m - 1, false) } else { (m - 4, true) };
            let mut acc = values[0] + values[simpson_end];
            for (i, v) in values.iter().enumerate().take(simpson_end).skip(1) {
                acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = acc * h / 3.0;
            if tail {
                let v = &values[m - 4..];
                total += 3.0 * h / 8.0 * (v[0] + 3.0 * v[1] + 3.0 * v[2] + v[3]);
            }
            total
        }
    }
}

/// Composite Simpson rule for a function on [a, b] with `intervals` (rounded up to even) panels.
pub fn simpson_fn(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals.max(2) + intervals % 2;
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=order {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * x * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            dp = order as f64 * (x * p1 - p2) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl8() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(8))
}

/// Composite 8-point Gauss-Legendre rule with `panels` equal panels.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (x, w) = gl8();
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let mut acc = 0.0;
        for (xi, wi) in x.iter().zip(w) {
            acc += wi * f(mid + 0.5 * h * xi);
        }
        total += acc * 0.5 * h;
    }
    total
}

/// Cubic Hermite interpolation on [0, 1] from endpoint values and derivatives.
pub fn hermite(s: f64, y0: f64, d0: f64, y1: f64, d1: f64, h: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// The four cubic Hermite basis polynomials on [0, 1].
pub fn hermite_basis(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2]
}

/// Tabulated antiderivatives of the bump and of its square.
pub struct BumpTable {
    cells: usize,
    cdf: Vec<f64>,
    cdf_sq: Vec<f64>,
}

impl BumpTable {
    fn build(cells: usize) -> Self {
        let h = 2.0 / cells as f64;
        let mut cdf = vec![0.0; cells + 1];
        let mut cdf_sq = vec![0.0; cells + 1];
        for i in 0..cells {
            let a = -1.0 + i as f64 * h;
            let b = a + h;
            cdf[i + 1] = cdf[i] + integrate(bump, a, b, 1);
            cdf_sq[i + 1] = cdf_sq[i] + integrate(|s| bump(s).powi(2), a, b, 1);
        }
        Self { cells, cdf, cdf_sq }
    }

    pub fn shared() -> &'static BumpTable {
        static TABLE: OnceLock<BumpTable> = OnceLock::new();
        TABLE.get_or_init(|| BumpTable::build(1 << 14))
    }

    fn lookup(&self, table: &[f64], s: f64, deriv: impl Fn(f64) -> f64) -> f64 {
        if s <= -1.0 {
            return 0.0;
        }
        if s >= 1.0 {
            return table[self.cells];
        }
        let h = 2.0 / self.cells as f64;
        let pos = (s + 1.0) / h;
        let i = (pos.floor() as usize).min(self.cells - 1);
        let a = -1.0 + i as f64 * h;
        hermite(pos - i as f64, table[i], deriv(a), table[i + 1], deriv(a + h), h)
    }

    /// `int_{-1}^{s} bump`.
    pub fn integral(&self, s: f64) -> f64 {
        self.lookup(&self.cdf, s, bump)
    }

    /// `int_{-1}^{s} bump^2`.
    pub fn integral_sq(&self, s: f64) -> f64 {
        self.lookup(&self.cdf_sq, s, |x| bump(x).powi(2))
    }

    pub fn total(&self) -> f64 {
        self.cdf[self.cells]
    }

    pub fn total_sq(&self) -> f64 {
        self.cdf_sq[self.cells]
    }
}

/// Fourier transform of the unit-mass bump: `int psi(s) cos(w s) ds / int psi`.
pub fn bump_fourier(w: f64) -> f64 {
    let panels = 64 + (w.abs() * 2.0).ceil() as usize;
    integrate(|s| bump(s) * (w * s).cos(), -1.0, 1.0, panels) / BumpTable::shared().total()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        for m in [5usize, 6, 9, 10] {
            let h = 1.0 / (m - 1) as f64;
            let v: Vec<f64> = (0..m).map(|i| (i as f64 * h).powi(3)).collect();
            assert!((simpson(&v, h) - 0.25).abs() < 1e-14, "m = {m}");
        }
    }

    #[test]
    fn bump_table_matches_direct_quadrature() {
        let t = BumpTable::shared();
        for s in [-0.9, -0.3, 0.0, 0.41, 0.97] {
            let direct = integrate(bump, -1.0, s, 200);
            assert!((t.integral(s) - direct).abs() < 1e-13);
            let direct_sq = integrate(|x| bump(x).powi(2), -1.0, s, 200);
            assert!((t.integral_sq(s) - direct_sq).abs() < 1e-13);
        }
        assert!((t.integral(0.0) - 0.5 * t.total()).abs() < 1e-14);
    }

    #[test]
    fn bump_derivative_matches_finite_difference() {
        for s in [-0.7, -0.1, 0.3, 0.8] {
            let h = 1e-6;
            let fd = (bump(s + h) - bump(s - h)) / (2.0 * h);
            assert!((fd - bump_deriv(s)).abs() < 1e-8);
        }
    }

    #[test]
    fn bump_fourier_is_one_at_zero() {
        assert!((bump_fourier(0.0) - 1.0).abs() < 1e-14);
        assert!(bump_fourier(5.0).abs() < 1.0);
    }
}
