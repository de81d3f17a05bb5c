//! Relaxed states, the pressure law, smooth transport data and the residual
//! of the relaxed system.

use serde::{Deserialize, Serialize};

use crate::error::{CiwError, Result};
use crate::field::{Field, FieldKind, Spectrum};
use crate::grid::Grid;
use crate::ledger::Physics;
use crate::operators::{inverse_divergence, inverse_divergence_spec, leray_spec};
use crate::spectral::Engine;
use crate::timefield::TimeField;

/// Equation of state `P(rho)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase", deny_unknown_fields)]
pub enum PressureLaw {
    /// `P = A rho^gamma`.
    Polytropic {
        coefficient: f64,
        gamma: f64,
    },
    /// Natural cubic spline through `(density, pressure)` nodes, linear outside.
    Tabulated {
        density: Vec<f64>,
        pressure: Vec<f64>,
    },
    Constant {
        value: f64,
    },
}

impl Default for PressureLaw {
    fn default() -> Self {
        PressureLaw::Polytropic { coefficient: 1.0, gamma: 1.4 }
    }
}

impl PressureLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            PressureLaw::Polytropic { coefficient, gamma } => {
                if !(coefficient.is_finite() && *gamma >= 1.0) {
                    return Err(CiwError::Config(format!(
                        "polytropic law needs finite A and gamma >= 1 (got {coefficient}, {gamma})"
                    )));
                }
            }
            PressureLaw::Tabulated { density, pressure } => {
                if density.len() < 3 || density.len() != pressure.len() {
                    return Err(CiwError::Config(
                        "tabulated law needs at least 3 matching (density, pressure) nodes".into(),
                    ));
                }
                if density.windows(2).any(|w| w[1] <= w[0]) || density[0] <= 0.0 {
                    return Err(CiwError::Config(
                        "tabulated densities must be positive and strictly increasing".into(),
                    ));
                }
            }
            PressureLaw::Constant { value } => {
                if !value.is_finite() {
                    return Err(CiwError::Config("constant pressure must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            PressureLaw::Polytropic { coefficient, gamma } => coefficient * rho.powf(*gamma),
            PressureLaw::Tabulated { density, pressure } => spline_eval(density, pressure, rho),
            PressureLaw::Constant { value } => *value,
        }
    }

    pub fn apply(&self, rho: &Field) -> Field {
        rho.map(|r| self.eval(r))
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, PressureLaw::Constant { .. })
    }
}

/// Second derivatives of the natural cubic spline through `(x, y)`.
fn spline_moments(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations.
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let cc = h1 / 6.0;
        let rhs = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        let denom = b - a * c[i - 1];
        c[i] = cc / denom;
        d[i] = (rhs - a * d[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m
}

fn spline_eval(x: &[f64], y: &[f64], t: f64) -> f64 {
    let n = x.len();
    let m = spline_moments(x, y);
    let slope_at = |i: usize| -> f64 {
        if i == 0 {
            let h = x[1] - x[0];
            (y[1] - y[0]) / h - h * (2.0 * m[0] + m[1]) / 6.0
        } else {
            let h = x[n - 1] - x[n - 2];
            (y[n - 1] - y[n - 2]) / h + h * (m[n - 2] + 2.0 * m[n - 1]) / 6.0
        }
    };
    if t <= x[0] {
        return y[0] + slope_at(0) * (t - x[0]);
    }
    if t >= x[n - 1] {
        return y[n - 1] + slope_at(n - 1) * (t - x[n - 1]);
    }
    let i = x.partition_point(|&v| v <= t) - 1;
    let h = x[i + 1] - x[i];
    let a = (x[i + 1] - t) / h;
    let b = (t - x[i]) / h;
    a * y[i] + b * y[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0
}

/// Compressible relaxed system or its incompressible (unit density) specialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Compressible,
    Incompressible,
}

/// A relaxed solution `(rho_q, m_q, R_q)` sampled on the time grid.
///
/// Density and momentum carry their time derivatives; the stress does not.
#[derive(Debug, Clone)]
pub struct RelaxedState {
    pub q: usize,
    pub mode: Mode,
    pub rho: TimeField,
    pub m: TimeField,
    pub r: TimeField,
}

impl RelaxedState {
    pub fn new(q: usize, mode: Mode, rho: TimeField, m: TimeField, r: TimeField) -> Result<Self> {
        let grid = rho.grid();
        if m.grid() != grid || r.grid() != grid {
            return Err(CiwError::Shape("state components live on different grids".into()));
        }
        if rho.kind() != FieldKind::Scalar || m.kind() != FieldKind::Vector || r.kind() != FieldKind::SymTensor {
            return Err(CiwError::Shape("state components have the wrong kinds".into()));
        }
        if !rho.has_rates() || !m.has_rates() {
            return Err(CiwError::InvalidArgument("density and momentum must carry time derivatives".into()));
        }
        Ok(Self { q, mode, rho, m, r })
    }

    pub fn grid(&self) -> Grid {
        self.rho.grid()
    }

    /// `int rho(t_i, x) dx` for every sample.
    pub fn masses(&self) -> Vec<f64> {
        let vol = self.grid().space.volume();
        self.rho.values().iter().map(|f| f.mean(0) * vol).collect()
    }

    pub fn density_range(&self) -> (f64, f64) {
        self.rho
            .values()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| (lo.min(f.min_value()), hi.max(f.max_value())))
    }

    /// First sample time at which the density varies in space, or the
    /// momentum or the stress is nonzero; `None` if never.
    pub fn support_start(&self) -> Option<f64> {
        let grid = self.grid();
        let flags: Vec<bool> = (0..grid.n_t)
            .map(|i| {
                let rho = self.rho.value(i);
                let osc = rho.max_value() - rho.min_value();
                osc > 1e-13 * rho.max_abs().max(1.0)
                    || self.m.value(i).max_abs() > 0.0
                    || self.r.value(i).max_abs() > 0.0
            })
            .collect();
        flags.iter().position(|&f| f).map(|i| grid.time(i))
    }
}

/// Pointwise reciprocal; errors if the density is not positive.
pub fn reciprocal(rho: &Field) -> Result<Field> {
    let lo = rho.min_value();
    if !(lo > 0.0) {
        return Err(CiwError::Degenerate(format!("density lost positivity (min {lo:.3e})")));
    }
    Ok(rho.map(|r| 1.0 / r))
}

/// Relative residuals of the relaxed system at one sample.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct SampleResidual {
    pub continuity: f64,
    pub momentum: f64,
    pub continuity_abs: f64,
    pub momentum_abs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub samples: Vec<SampleResidual>,
    pub continuity_max: f64,
    pub momentum_max: f64,
}

impl ResidualReport {
    pub fn from_samples(samples: Vec<SampleResidual>) -> Self {
        let continuity_max = samples.iter().map(|s| s.continuity).fold(0.0, f64::max);
        let momentum_max = samples.iter().map(|s| s.momentum).fold(0.0, f64::max);
        Self { samples, continuity_max, momentum_max }
    }
}

fn ratio(num: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        num / scale
    } else {
        num
    }
}

fn sup(s: &Spectrum, engine: &Engine) -> f64 {
    engine.inverse(s).sup_norm()
}

/// Momentum terms of the relaxed system other than `div R`, as spectra.
pub struct MomentumTerms {
    pub dt_m: Spectrum,
    pub viscous: Spectrum,
    pub bulk: Spectrum,
    pub convection: Spectrum,
    pub pressure: Spectrum,
}

impl MomentumTerms {
    pub fn compute(
        engine: &Engine,
        physics: &Physics,
        law: &PressureLaw,
        mode: Mode,
        rho: &Field,
        m: &Field,
        m_dot: &Field,
    ) -> Result<Self> {
        let space = engine.space();
        let dt_m = engine.forward(m_dot);
        let (velocity, weight) = match mode {
            Mode::Compressible => {
                let inv = reciprocal(rho)?;
                (engine.product(&inv, m), Some(inv))
            }
            Mode::Incompressible => (m.clone(), None),
        };
        let vs = engine.forward(&velocity);
        let mut viscous = vs.clone();
        engine.fractional_laplacian_spec(&mut viscous, physics.alpha)?;
        viscous.scale(physics.mu);
        let bulk = match mode {
            Mode::Compressible => {
                let mut g = engine.grad_spec(&engine.div_spec(&vs));
                g.scale(-(physics.mu + physics.nu));
                g
            }
            Mode::Incompressible => Spectrum::zeros(space, FieldKind::Vector),
        };
        let flux = engine.weighted_outer(weight.as_ref(), m, m);
        let convection = engine.div_sym_spec(&engine.forward(&flux));
        let pressure = match mode {
            Mode::Compressible => engine.grad_spec(&engine.forward_scalar(law.apply(rho).comp(0))),
            Mode::Incompressible => Spectrum::zeros(space, FieldKind::Vector),
        };
        Ok(Self { dt_m, viscous, bulk, convection, pressure })
    }

    pub fn total(&self) -> Spectrum {
        let mut t = self.dt_m.clone();
        for s in [&self.viscous, &self.bulk, &self.convection, &self.pressure] {
            t.add_assign(s);
        }
        t
    }

    fn scale(&self, engine: &Engine) -> f64 {
        [&self.dt_m, &self.viscous, &self.bulk, &self.convection, &self.pressure]
            .iter()
            .map(|s| sup(s, engine))
            .fold(0.0, f64::max)
    }
}

/// Residual of the relaxed system at one sample. In incompressible mode the
/// momentum residual is measured after Leray projection (the pressure is a
/// Lagrange multiplier) and the continuity residual is `div m`.
#[allow(clippy::too_many_arguments)]
pub fn sample_residual(
    engine: &Engine,
    physics: &Physics,
    law: &PressureLaw,
    mode: Mode,
    rho: &Field,
    rho_dot: &Field,
    m: &Field,
    m_dot: &Field,
    r: &Field,
) -> Result<SampleResidual> {
    let div_m = engine.div(m);
    let cont = rho_dot.sum(&div_m);
    let continuity_abs = cont.sup_norm();
    let continuity = ratio(continuity_abs, rho_dot.sup_norm().max(div_m.sup_norm()).max(m.sup_norm()));

    let terms = MomentumTerms::compute(engine, physics, law, mode, rho, m, m_dot)?;
    let div_r = engine.div_sym_spec(&engine.forward(r));
    let mut res = terms.total();
    res.axpy(-1.0, &div_r);
    let mut scale = terms.scale(engine).max(sup(&div_r, engine));
    if mode == Mode::Incompressible {
        leray_spec(engine, &mut res);
        let mut projected = terms.total();
        leray_spec(engine, &mut projected);
        scale = scale.max(sup(&projected, engine));
    }
    let momentum_abs = sup(&res, engine);
    Ok(SampleResidual { continuity, momentum: ratio(momentum_abs, scale), continuity_abs, momentum_abs })
}

/// Residual of a relaxed state at every sample.
pub fn residual_check(
    engine: &Engine,
    physics: &Physics,
    law: &PressureLaw,
    state: &RelaxedState,
) -> Result<ResidualReport> {
    let grid = state.grid();
    let mut samples = Vec::with_capacity(grid.n_t);
    for i in 0..grid.n_t {
        samples.push(sample_residual(
            engine,
            physics,
            law,
            state.mode,
            state.rho.value(i),
            state.rho.rate(i).expect("density rate"),
            state.m.value(i),
            state.m.rate(i).expect("momentum rate"),
            state.r.value(i),
        )?);
    }
    Ok(ResidualReport::from_samples(samples))
}

/// Smooth transport solution used as initial datum: a quintic ramp in time
/// switches on a density bump and a divergence-free momentum after `onset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportData {
    pub density_mean: f64,
    pub density_amplitude: f64,
    pub momentum_amplitude: f64,
    pub onset: f64,
    pub ramp: f64,
}

impl Default for TransportData {
    fn default() -> Self {
        Self { density_mean: 2.0, density_amplitude: 0.2, momentum_amplitude: 0.5, onset: 0.25, ramp: 0.25 }
    }
}

/// Quintic smoothstep with its first two derivatives.
pub fn quintic_ramp(t: f64, onset: f64, width: f64) -> [f64; 3] {
    let s = (t - onset) / width;
    if s <= 0.0 {
        return [0.0, 0.0, 0.0];
    }
    if s >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let v = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    let d = 30.0 * s * s * (1.0 - s) * (1.0 - s) / width;
    let dd = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (width * width);
    [v, d, dd]
}

impl TransportData {
    pub fn validate(&self, horizon: f64) -> Result<()> {
        if !(self.density_mean > 0.0)
            || self.density_amplitude < 0.0
            || self.density_amplitude >= 0.5 * self.density_mean
        {
            return Err(CiwError::Config("initial density must satisfy 0 <= amplitude < mean / 2".into()));
        }
        if !(self.ramp > 0.0) || self.onset < 0.0 || self.onset + self.ramp > horizon {
            return Err(CiwError::Config("initial ramp must fit inside [0, T]".into()));
        }
        Ok(())
    }

    /// Density profile `theta` (mean free, `|theta| <= 1.5`).
    pub fn theta(x: &[f64; 3], dim: usize) -> f64 {
        match dim {
            2 => x[0].sin() + 0.5 * (2.0 * x[1]).cos(),
            _ => x[0].sin() + 0.5 * (2.0 * x[1]).cos() * x[2].cos(),
        }
    }

    /// Divergence-free, mean-free momentum profile.
    pub fn flow(x: &[f64; 3], dim: usize) -> [f64; 3] {
        match dim {
            2 => {
                // Perpendicular gradient of sin x sin y + cos(x + 2y) / 2.
                let dx = x[0].cos() * x[1].sin() - 0.5 * (x[0] + 2.0 * x[1]).sin();
                let dy = x[0].sin() * x[1].cos() - (x[0] + 2.0 * x[1]).sin();
                [-dy, dx, 0.0]
            }
            _ => [x[2].sin() + x[1].cos(), x[0].sin() + x[2].cos(), x[1].sin() + x[0].cos()],
        }
    }

    /// Samples `(rho, m)` with exact rates; the incompressible mode uses unit density.
    pub fn sample(&self, engine: &Engine, grid: Grid, mode: Mode) -> Result<(TimeField, TimeField)> {
        self.validate(grid.horizon)?;
        let space = grid.space;
        let dim = space.dim;
        let (mean, amp) = match mode {
            Mode::Compressible => (self.density_mean, self.density_amplitude),
            Mode::Incompressible => (1.0, 0.0),
        };
        let theta = Field::scalar_fn(space, |x| Self::theta(x, dim));
        let ts = engine.forward_scalar(theta.comp(0));
        let potential = engine.inverse(&engine.grad_spec(&engine.inverse_laplacian_spec(&ts)));
        let flow = Field::vector_fn(space, |x| Self::flow(x, dim));
        let mut rho = Vec::with_capacity(grid.n_t);
        let mut rho_dot = Vec::with_capacity(grid.n_t);
        let mut m = Vec::with_capacity(grid.n_t);
        let mut m_dot = Vec::with_capacity(grid.n_t);
        for t in grid.times() {
            let [r, dr, ddr] = quintic_ramp(t, self.onset, self.ramp);
            rho.push(theta.map(|v| mean + amp * r * v));
            rho_dot.push(theta.scaled(amp * dr));
            let mut mv = potential.scaled(-amp * dr);
            mv.axpy(self.momentum_amplitude * r, &flow);
            m.push(mv);
            let mut md = potential.scaled(-amp * ddr);
            md.axpy(self.momentum_amplitude * dr, &flow);
            m_dot.push(md);
        }
        Ok((
            TimeField::new(grid, FieldKind::Scalar, rho, Some(rho_dot))?,
            TimeField::new(grid, FieldKind::Vector, m, Some(m_dot))?,
        ))
    }
}

/// Builds the level-zero relaxed state from a transport solution.
pub fn init_from_transport(
    engine: &Engine,
    rho: TimeField,
    m: TimeField,
    physics: &Physics,
    law: &PressureLaw,
    mode: Mode,
) -> Result<RelaxedState> {
    let grid = rho.grid();
    let mut stresses = Vec::with_capacity(grid.n_t);
    for i in 0..grid.n_t {
        let (r, rd) = (rho.value(i), rho.rate(i).expect("rate"));
        let (mv, md) = (m.value(i), m.rate(i).expect("rate"));
        let cont = rd.sum(&engine.div(mv)).sup_norm();
        if cont > 1e-8 * (1.0 + rd.sup_norm()) {
            return Err(CiwError::Continuity { residual: cont, tolerance: 1e-8 });
        }
        if mode == Mode::Incompressible && (r.max_value() - 1.0).abs().max((r.min_value() - 1.0).abs()) > 0.0 {
            return Err(CiwError::InvalidArgument("incompressible mode needs unit density".into()));
        }
        let terms = MomentumTerms::compute(engine, physics, law, mode, r, mv, md)?;
        // Everything except the convective flux goes through the inverse divergence.
        let mut linear = terms.dt_m.clone();
        linear.add_assign(&terms.viscous);
        linear.add_assign(&terms.bulk);
        linear.add_assign(&terms.pressure);
        let lin_field = engine.inverse(&linear);
        let mut stress = inverse_divergence(engine, &lin_field)?;
        let weight = match mode {
            Mode::Compressible => Some(reciprocal(r)?),
            Mode::Incompressible => None,
        };
        let flux = engine.weighted_outer(weight.as_ref(), mv, mv);
        match mode {
            Mode::Compressible => stress.add_assign(&flux),
            Mode::Incompressible => stress.add_assign(&flux.trace_free()),
        }
        stresses.push(stress);
    }
    let r = TimeField::new(grid, FieldKind::SymTensor, stresses, None)?;
    RelaxedState::new(0, mode, rho, m, r)
}

/// Applies `R` to a vector spectrum (zero mode discarded) and returns the field.
pub fn r_of(engine: &Engine, v: &Spectrum) -> Field {
    engine.inverse(&inverse_divergence_spec(engine, &v.components()))
}

/// Zero-mode magnitude of a vector spectrum.
pub fn zero_mode(s: &Spectrum) -> f64 {
    (0..s.ncomp()).map(|c| s.mean_magnitude(c)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Space;

    fn physics() -> Physics {
        Physics { alpha: 0.6, mu: 0.05, nu: 0.02 }
    }

    #[test]
    fn spline_reproduces_cubic_interior_and_polytrope_nodes() {
        let x: Vec<f64> = (1..=8).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 2.0 + 1.0).collect();
        let law = PressureLaw::Tabulated { density: x.clone(), pressure: y };
        law.validate().unwrap();
        for t in [0.2, 0.7, 1.3, 3.9, 5.0] {
            assert!((law.eval(t) - (2.0 * t + 1.0)).abs() < 1e-12);
        }
        let poly = PressureLaw::default();
        assert!((poly.eval(2.0) - 2f64.powf(1.4)).abs() < 1e-15);
    }

    #[test]
    fn ramp_derivatives() {
        let h = 1e-6;
        for t in [0.3, 0.35, 0.42] {
            let [_, d, dd] = quintic_ramp(t, 0.25, 0.25);
            let fd = (quintic_ramp(t + h, 0.25, 0.25)[0] - quintic_ramp(t - h, 0.25, 0.25)[0]) / (2.0 * h);
            let fdd = (quintic_ramp(t + h, 0.25, 0.25)[1] - quintic_ramp(t - h, 0.25, 0.25)[1]) / (2.0 * h);
            assert!((d - fd).abs() < 1e-7);
            assert!((dd - fdd).abs() < 1e-5);
        }
    }

    #[test]
    fn initial_state_is_relaxed_solution() {
        for (dim, mode) in [(2, Mode::Compressible), (3, Mode::Compressible), (2, Mode::Incompressible)] {
            let grid = Grid::new(dim, 16, 9, 1.0).unwrap();
            let engine = Engine::new(grid.space);
            let (rho, m) = TransportData::default().sample(&engine, grid, mode).unwrap();
            let law = PressureLaw::default();
            let st = init_from_transport(&engine, rho, m, &physics(), &law, mode).unwrap();
            let rep = residual_check(&engine, &physics(), &law, &st).unwrap();
            assert!(rep.continuity_max < 1e-12, "{dim} {mode:?} {:?}", rep.samples);
            assert!(rep.momentum_max < 1e-12, "{dim} {mode:?} {}", rep.momentum_max);
            assert!(st.r.value(0).max_abs() == 0.0);
            assert!(st.support_start().unwrap() > 0.25);
        }
    }

    #[test]
    fn constant_state_has_zero_stress() {
        let grid = Grid::new(2, 8, 3, 1.0).unwrap();
        let engine = Engine::new(grid.space);
        let rho = TimeField::stationary(grid, Field::constant(grid.space, 1.0));
        let m = TimeField::stationary(grid, Field::zeros(grid.space, FieldKind::Vector));
        let st = init_from_transport(&engine, rho, m, &physics(), &PressureLaw::default(), Mode::Compressible).unwrap();
        assert_eq!(st.r.max_sup(), 0.0);
        let _ = Space::new(2, 8).unwrap();
    }

    #[test]
    fn nonpositive_density_is_rejected() {
        let space = Space::new(2, 8).unwrap();
        assert!(reciprocal(&Field::constant(space, 0.0)).is_err());
    }
}
