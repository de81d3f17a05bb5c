//! Spatial Mikado flows and intermittent temporal profiles.
//!
//! The planar/tubular cutoff `Phi` is a radial bump on `R^{d-1}`, periodized
//! on `T^{d-1}`; `phi = -Delta Phi`. On the lattice a Mikado flow is the
//! trigonometric polynomial obtained by keeping the Fourier harmonics of the
//! periodized profile with wavevector components at most `n/4`, so that
//! quadratic expressions in `phi_(k)` are still represented exactly, rescaled
//! so that the grid mean of `phi_(k)^2` is exactly one.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{CiwError, Result};
use crate::field::{Field, FieldKind};
use crate::geometry::DirectionSet;
use crate::quad::{bump, bump_deriv, integrate, BumpTable};
use crate::spectral::Engine;

/// Radial cutoff `Phi(y) = c exp(-1/(r0^2 - |y|^2))` on `R^{d-1}` and its
/// negative Laplacian, normalized so that `(2 pi)^{1-d} int phi^2 = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct SpatialProfile {
    pub dim: usize,
    pub r0: f64,
    pub amplitude: f64,
}

const RADIAL_PANELS: usize = 400;

impl SpatialProfile {
    pub fn new(dim: usize, r0: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(CiwError::InvalidArgument(format!("dimension {dim} not supported")));
        }
        if !(r0 > 0.0 && r0 <= 1.0) {
            return Err(CiwError::InvalidArgument(format!("profile radius {r0} not in (0, 1]")));
        }
        let mut p = Self { dim, r0, amplitude: 1.0 };
        let raw = p.normalization();
        p.amplitude = 1.0 / raw.sqrt();
        Ok(p)
    }

    fn cross_dim(&self) -> usize {
        self.dim - 1
    }

    /// `Phi` as a function of the radius.
    pub fn cutoff(&self, r: f64) -> f64 {
        let u = self.r0 * self.r0 - r * r;
        if u <= 0.0 {
            0.0
        } else {
            self.amplitude * (-1.0 / u).exp()
        }
    }

    /// `phi = -Delta Phi` as a function of the radius, in closed form.
    pub fn profile(&self, r: f64) -> f64 {
        let u = self.r0 * self.r0 - r * r;
        if u <= 0.0 {
            return 0.0;
        }
        let big = self.cutoff(r);
        if big == 0.0 {
            return 0.0;
        }
        let extra = (self.cross_dim() as f64 - 1.0) * 2.0 / (u * u);
        let r2 = r * r;
        let lap = big * (4.0 * r2 / u.powi(4) - 2.0 / (u * u) - 8.0 * r2 / u.powi(3) - extra);
        -lap
    }

    /// `(2 pi)^{1-d} int_{R^{d-1}} F(|y|) dy` for a radial integrand.
    fn radial_mean(&self, f: impl Fn(f64) -> f64) -> f64 {
        match self.cross_dim() {
            1 => 2.0 * integrate(&f, 0.0, self.r0, RADIAL_PANELS) / (2.0 * PI),
            _ => 2.0 * PI * integrate(|r| f(r) * r, 0.0, self.r0, RADIAL_PANELS) / (4.0 * PI * PI),
        }
    }

    /// `(2 pi)^{1-d} int phi^2`.
    pub fn normalization(&self) -> f64 {
        self.radial_mean(|r| self.profile(r).powi(2))
    }

    /// `int phi` over `R^{d-1}`, zero by the divergence theorem.
    pub fn profile_integral(&self) -> f64 {
        self.radial_mean(|r| self.profile(r)) * (2.0 * PI).powi(self.cross_dim() as i32)
    }

    /// Fourier coefficient of the periodized cutoff at a harmonic of squared length `m2`.
    pub fn cutoff_hat(&self, m2: f64) -> f64 {
        let m = m2.sqrt();
        let panels = RADIAL_PANELS + (m * self.r0 * 4.0).ceil() as usize;
        match self.cross_dim() {
            1 => integrate(|r| self.cutoff(r) * (m * r).cos(), 0.0, self.r0, panels) / PI,
            _ => integrate(|r| self.cutoff(r) * bessel_j0(m * r) * r, 0.0, self.r0, panels) / (2.0 * PI),
        }
    }

    /// Fourier coefficient of the periodized `phi`.
    pub fn profile_hat(&self, m2: f64) -> f64 {
        m2 * self.cutoff_hat(m2)
    }
}

/// Bessel function `J_0(x) = (1/pi) int_0^pi cos(x sin theta) d theta`.
pub fn bessel_j0(x: f64) -> f64 {
    let panels = 8 + (x.abs() / 2.0).ceil() as usize;
    integrate(|t| (x * t.sin()).cos(), 0.0, PI, panels) / PI
}

/// A Mikado flow on the lattice: `W_(k) = phi_(k) k`, together with the
/// gradient of its potential `Phi_(k)`, from which
/// `W^c_(k) = grad Phi_(k) (x) k - k (x) grad Phi_(k)`.
#[derive(Debug, Clone)]
pub struct Mikado {
    pub index: usize,
    pub lambda: f64,
    pub direction: Vec<f64>,
    /// Lattice-DFT spectrum of `phi_(k)`.
    pub phi_spec: Vec<Complex64>,
    pub phi: Field,
    pub grad_potential: Field,
    /// Fraction of the profile's `L^2` mass captured by the retained harmonics.
    pub retained_energy: f64,
    pub harmonics: usize,
    /// Normalization factor applied to the retained coefficients.
    pub kappa: f64,
}

impl Mikado {
    pub fn build(
        engine: &Engine,
        ds: &DirectionSet,
        k: usize,
        lambda: f64,
        profile: &SpatialProfile,
        harmonic_cap: Option<usize>,
    ) -> Result<Self> {
        let space = engine.space();
        let dim = space.dim;
        if profile.dim != dim || ds.dim != dim {
            return Err(CiwError::Shape("profile, direction set and grid dimensions differ".into()));
        }
        if lambda < 1.0 || lambda.fract() != 0.0 {
            return Err(CiwError::InvalidArgument(format!("frequency {lambda} must be a positive integer")));
        }
        let reach = ds.frequency_reach(k, lambda);
        if 4.0 * reach > space.n as f64 {
            return Err(CiwError::Unresolvable {
                what: format!("Mikado flow {k} at lambda = {lambda}"),
                required_n: ds.required_n(lambda),
                n: space.n,
            });
        }
        let dir = &ds.directions[k];
        let lam = lambda as i64;
        let quarter = space.n as i64 / 4;
        let cap = harmonic_cap.map(|c| c as i64).unwrap_or(i64::MAX);
        let bound = (quarter / lam).min(cap);
        let cross = dim - 1;
        let mut coeff_cache: BTreeMap<i64, f64> = BTreeMap::new();
        let mut terms: Vec<(Vec<i64>, i64)> = Vec::new();
        let mut m = vec![-bound; cross];
        loop {
            let m2: i64 = m.iter().map(|v| v * v).sum();
            if m2 > 0 && m.iter().all(|v| v.abs() <= cap) {
                let mut xi = vec![0i64; dim];
                for (mi, e) in m.iter().zip(&dir.frame) {
                    for a in 0..dim {
                        xi[a] += lam * mi * e[a];
                    }
                }
                if xi.iter().all(|v| v.abs() <= quarter) {
                    terms.push((xi, m2));
                }
            }
            let mut pos = 0;
            loop {
                if pos == cross {
                    break;
                }
                m[pos] += 1;
                if m[pos] > bound {
                    m[pos] = -bound;
                    pos += 1;
                } else {
                    break;
                }
            }
            if pos == cross {
                break;
            }
        }
        let mut energy = 0.0;
        for (_, m2) in &terms {
            let c = *coeff_cache.entry(*m2).or_insert_with(|| profile.profile_hat(*m2 as f64));
            energy += c * c;
        }
        if energy <= 0.0 {
            return Err(CiwError::Unresolvable {
                what: format!("Mikado flow {k} keeps no harmonics at lambda = {lambda}"),
                required_n: ds.required_n(lambda),
                n: space.n,
            });
        }
        let kappa = 1.0 / energy.sqrt();
        let len = space.len();
        let mut phi_spec = vec![Complex64::new(0.0, 0.0); len];
        let mut pot_spec = vec![Complex64::new(0.0, 0.0); len];
        let scale = lambda * dir.denominator as f64;
        for (xi, m2) in &terms {
            let c = coeff_cache[m2];
            let sign = if xi.iter().sum::<i64>().rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let slots: Vec<usize> = xi.iter().map(|&v| space.slot(v)).collect();
            let idx = space.flatten(&slots);
            phi_spec[idx] += Complex64::new(sign * kappa * c, 0.0);
            pot_spec[idx] += Complex64::new(sign * kappa * c / (scale * scale * *m2 as f64), 0.0);
        }
        let phi = Field::from_data(space, FieldKind::Scalar, engine.inverse_scalar(&phi_spec))?;
        let grad_potential = engine.inverse(&engine.grad_spec(&pot_spec));
        Ok(Self {
            index: k,
            lambda,
            direction: dir.unit(),
            phi_spec,
            phi,
            grad_potential,
            retained_energy: energy,
            harmonics: terms.len(),
            kappa,
        })
    }

    /// `W_(k) = phi_(k) k`.
    pub fn velocity(&self) -> Field {
        let space = self.phi.space();
        let comps = self.direction.iter().map(|&ka| self.phi.comp(0).iter().map(|v| v * ka).collect()).collect();
        Field::from_components(space, FieldKind::Vector, comps).expect("vector")
    }

    /// `W^c_(k)` as a full matrix field (row-major).
    pub fn potential_matrix(&self) -> Field {
        let space = self.phi.space();
        let d = space.dim;
        let mut comps = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let gi = self.grad_potential.comp(i);
                let gj = self.grad_potential.comp(j);
                let (ki, kj) = (self.direction[i], self.direction[j]);
                comps.push(gi.iter().zip(gj).map(|(a, b)| a * kj - ki * b).collect());
            }
        }
        Field::from_components(space, FieldKind::Matrix, comps).expect("matrix")
    }
}

/// Builds all Mikado flows of a direction set.
pub fn mikado_family(
    engine: &Engine,
    ds: &DirectionSet,
    lambda: f64,
    profile: &SpatialProfile,
    harmonic_cap: Option<usize>,
) -> Result<Vec<Mikado>> {
    (0..ds.len()).map(|k| Mikado::build(engine, ds, k, lambda, profile, harmonic_cap)).collect()
}

/// Shifted, concentrated and oscillating temporal profiles `g_(k)`, `h_(k)`.
#[derive(Debug, Clone, Serialize)]
pub struct TemporalProfile {
    pub horizon: f64,
    pub tau: f64,
    pub sigma: f64,
    /// Support length of the base cutoff.
    pub width: f64,
    pub shifts: Vec<f64>,
    /// Amplitude making `(1/T) int g_k^2 = 1`.
    pub amplitude: f64,
}

impl TemporalProfile {
    /// Default arrangement: width `T / (2 |Lambda|)`, shifts `idx T / |Lambda|`.
    pub fn new(count: usize, horizon: f64, tau: f64, sigma: f64) -> Result<Self> {
        let width = horizon / (2.0 * count as f64);
        let shifts = (0..count).map(|i| i as f64 * horizon / count as f64).collect();
        Self::with_layout(horizon, tau, sigma, width, shifts)
    }

    pub fn with_layout(horizon: f64, tau: f64, sigma: f64, width: f64, shifts: Vec<f64>) -> Result<Self> {
        if !(tau >= 1.0) {
            return Err(CiwError::InvalidArgument(format!("concentration tau = {tau} must be >= 1")));
        }
        if !(sigma >= 1.0) || sigma.fract() != 0.0 {
            return Err(CiwError::InvalidArgument(format!("oscillation sigma = {sigma} must be a positive integer")));
        }
        if !(width > 0.0) || !(horizon > 0.0) {
            return Err(CiwError::InvalidArgument("temporal width and horizon must be positive".into()));
        }
        let mut sorted = shifts.clone();
        sorted.sort_by(f64::total_cmp);
        let overflow = sorted.first().is_some_and(|s| *s < 0.0)
            || sorted.last().is_some_and(|s| s + width > horizon * (1.0 + 1e-12))
            || sorted.windows(2).any(|w| w[0] + width > w[1] * (1.0 + 1e-12));
        if overflow {
            return Err(CiwError::InvalidArgument(format!(
                "{} temporal cutoffs of width {width} do not fit disjointly in [0, {horizon}]",
                shifts.len()
            )));
        }
        let table = BumpTable::shared();
        let amplitude = (2.0 * horizon / (width * table.total_sq())).sqrt();
        Ok(Self { horizon, tau, sigma, width, shifts, amplitude })
    }

    pub fn count(&self) -> usize {
        self.shifts.len()
    }

    fn local(&self, k: usize, s: f64) -> f64 {
        2.0 * (s - self.shifts[k]) / self.width - 1.0
    }

    /// Unscaled cutoff `g_k(s)`.
    pub fn base(&self, k: usize, s: f64) -> f64 {
        self.amplitude * bump(self.local(k, s))
    }

    pub fn base_deriv(&self, k: usize, s: f64) -> f64 {
        self.amplitude * bump_deriv(self.local(k, s)) * 2.0 / self.width
    }

    /// `G_k(u) = int_0^u g_k^2`.
    pub fn base_sq_integral(&self, k: usize, u: f64) -> f64 {
        self.amplitude.powi(2) * 0.5 * self.width * BumpTable::shared().integral_sq(self.local(k, u))
    }

    fn wrap(&self, t: f64) -> f64 {
        t.rem_euclid(self.horizon)
    }

    /// Concentrated profile `g_{k,tau}(t) = tau^{1/2} g_k(tau t)`, periodic with period `T`.
    pub fn g_tau(&self, k: usize, t: f64) -> f64 {
        self.tau.sqrt() * self.base(k, self.tau * self.wrap(t))
    }

    pub fn g_tau_deriv(&self, k: usize, t: f64) -> f64 {
        self.tau.powf(1.5) * self.base_deriv(k, self.tau * self.wrap(t))
    }

    /// `h_{k,tau}(t) = int_0^t (g_{k,tau}^2 - 1)`, periodic with period `T`.
    pub fn h_tau(&self, k: usize, t: f64) -> f64 {
        let s = self.wrap(t);
        self.base_sq_integral(k, (self.tau * s).min(self.horizon)) - s
    }

    /// `g_(k)(t) = g_{k,tau}(sigma t)`.
    pub fn g(&self, k: usize, t: f64) -> f64 {
        self.g_tau(k, self.sigma * t)
    }

    pub fn g_dot(&self, k: usize, t: f64) -> f64 {
        self.sigma * self.g_tau_deriv(k, self.sigma * t)
    }

    /// `h_(k)(t) = h_{k,tau}(sigma t)`.
    pub fn h(&self, k: usize, t: f64) -> f64 {
        self.h_tau(k, self.sigma * t)
    }

    /// `d/dt h_(k) = sigma (g_(k)^2 - 1)`.
    pub fn h_dot(&self, k: usize, t: f64) -> f64 {
        self.sigma * (self.g(k, t).powi(2) - 1.0)
    }

    /// Support of `g_(k)` within one period `[0, T / sigma)`, as an interval.
    pub fn support_in_period(&self, k: usize) -> (f64, f64) {
        let a = self.shifts[k] / (self.tau * self.sigma);
        (a, a + self.width / (self.tau * self.sigma))
    }
}
