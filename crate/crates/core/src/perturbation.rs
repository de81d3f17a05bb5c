//! Amplitudes and the momentum and density perturbations of one iteration
//! step, together with the algebraic cancellation identities they satisfy.
//!
//! Every time-dependent quantity is carried as a jet (value and first time
//! derivative), so the new state inherits exact rate channels and the
//! continuity equation holds sample by sample without time differencing.

use serde::Serialize;

use crate::blocks::{mikado_family, Mikado, SpatialProfile, TemporalProfile};
use crate::error::{CiwError, Result};
use crate::field::{Field, FieldKind, Spectrum};
use crate::geometry::{pack, packed_frobenius, packed_identity, DirectionSet};
use crate::grid::{sym_index, Grid};
use crate::ledger::Level;
use crate::operators::leray_spec;
use crate::quad::{bump, hermite_basis, simpson_fn, BumpTable};
use crate::spectral::Engine;
use crate::state::{reciprocal, Mode, RelaxedState};

/// Relative size below which a stress sample counts as zero when locating its support.
pub const SUPPORT_THRESHOLD: f64 = 1e-14;

fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a / (a + b)
}

fn smooth_step_deriv(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a * b * (1.0 / (x * x) + 1.0 / ((1.0 - x) * (1.0 - x))) / ((a + b) * (a + b))
}

/// Smooth cutoff: `1` on [0, 1], `z` on [2, inf), a monotone blend in between.
pub fn chi(z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(CiwError::InvalidArgument(format!("chi needs z >= 0, got {z}")));
    }
    let s = smooth_step(z - 1.0);
    Ok((1.0 - s) + s * z)
}

pub fn chi_deriv(z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(CiwError::InvalidArgument(format!("chi needs z >= 0, got {z}")));
    }
    Ok(smooth_step(z - 1.0) + smooth_step_deriv(z - 1.0) * (z - 1.0))
}

/// Temporal cutoff `f`: one on the hull `[start, end]` of the stress support,
/// decaying to zero over a distance `ell` on either side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TemporalCutoff {
    pub start: f64,
    pub end: f64,
    pub ell: f64,
}

impl TemporalCutoff {
    /// Cutoff for a sampled stress norm series; `None` when the stress vanishes identically.
    pub fn from_norms(times: &[f64], norms: &[f64], ell: f64) -> Option<Self> {
        let max = norms.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return None;
        }
        let active: Vec<f64> =
            times.iter().zip(norms).filter(|(_, n)| **n > SUPPORT_THRESHOLD * max).map(|(t, _)| *t).collect();
        Some(Self { start: active[0], end: active[active.len() - 1], ell })
    }

    fn half(&self) -> f64 {
        0.5 * self.ell
    }

    /// `(f(t), f'(t))`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let table = BumpTable::shared();
        let h = self.half();
        let up = (t - self.start + h) / h;
        let down = (t - self.end - h) / h;
        let total = table.total();
        let raw = (table.integral(up) - table.integral(down)) / total;
        let value = raw.clamp(0.0, 1.0);
        if value >= 1.0 - 1e-9 {
            return (1.0, 0.0);
        }
        (value, (bump(up) - bump(down)) / (total * h))
    }

    pub fn support(&self) -> (f64, f64) {
        (self.start - self.ell, self.end + self.ell)
    }
}

/// Largest pointwise Frobenius norm of a stress sample and its time derivative
/// at the maximizing node; the trace is removed first in incompressible mode.
pub fn stress_sup(r: &Field, r_dot: Option<&Field>, mode: Mode) -> (f64, f64) {
    let d = r.space().dim;
    let mut best = (0.0f64, 0.0f64);
    for x in 0..r.nodes() {
        let s = stress_at(r, x, mode);
        let norm = packed_frobenius(d, &s);
        if norm > best.0 {
            let rate = match r_dot {
                Some(rd) => {
                    let e = stress_at(rd, x, mode);
                    frobenius_inner(d, &s, &e) / norm
                }
                None => 0.0,
            };
            best = (norm, rate);
        }
    }
    best
}

fn stress_at(r: &Field, x: usize, mode: Mode) -> Vec<f64> {
    let d = r.space().dim;
    let tr = (0..d).map(|i| r.sym(i, i, x)).sum::<f64>() / d as f64;
    pack(d, |i, j| {
        let v = r.sym(i, j, x);
        if i == j && mode == Mode::Incompressible {
            v - tr
        } else {
            v
        }
    })
}

fn frobenius_inner(d: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..d {
        for j in i..d {
            let c = sym_index(i, j, d);
            acc += if i == j { a[c] * b[c] } else { 2.0 * a[c] * b[c] };
        }
    }
    acc
}

/// Time series entering the amplitudes: the energy envelope `varrho`, the
/// cutoff `f`, and the stress norms they are built from.
#[derive(Debug, Clone, Serialize)]
pub struct AmplitudeBundle {
    pub mode: Mode,
    pub delta: f64,
    pub eps_u: f64,
    pub times: Vec<f64>,
    pub stress_norm: Vec<f64>,
    pub varrho: Vec<f64>,
    pub varrho_dot: Vec<f64>,
    pub f: Vec<f64>,
    pub f_dot: Vec<f64>,
    pub cutoff: Option<TemporalCutoff>,
}

/// Per-sample amplitude fields `a_(k)` and `A_(k) = rho^{-1} a_(k)^2` with rates.
#[derive(Debug, Clone)]
pub struct SampleAmplitudes {
    pub t: f64,
    pub varrho: f64,
    pub varrho_dot: f64,
    pub f: f64,
    pub f_dot: f64,
    pub a: Vec<Field>,
    pub a_dot: Vec<Field>,
    pub big_a: Vec<Field>,
    pub big_a_dot: Vec<Field>,
}

impl SampleAmplitudes {
    pub fn is_zero(&self) -> bool {
        self.f == 0.0 && self.f_dot == 0.0
    }
}

impl AmplitudeBundle {
    /// Envelope and cutoff from a mollified state (whose stress carries rates).
    pub fn build(state: &RelaxedState, ds: &DirectionSet, level: &Level) -> Result<Self> {
        let grid = state.grid();
        let times = grid.times();
        let mut stress_norm = Vec::with_capacity(grid.n_t);
        let mut stress_rate = Vec::with_capacity(grid.n_t);
        for i in 0..grid.n_t {
            let (n, r) = stress_sup(state.r.value(i), state.r.rate(i), state.mode);
            stress_norm.push(n);
            stress_rate.push(r);
        }
        let cutoff = TemporalCutoff::from_norms(&times, &stress_norm, level.ell);
        let mut out = Self {
            mode: state.mode,
            delta: level.delta_next,
            eps_u: ds.eps_u,
            times: times.clone(),
            stress_norm: stress_norm.clone(),
            varrho: Vec::new(),
            varrho_dot: Vec::new(),
            f: Vec::new(),
            f_dot: Vec::new(),
            cutoff,
        };
        for i in 0..grid.n_t {
            let (v, vd) = out.envelope(stress_norm[i], stress_rate[i])?;
            let (f, fd) = out.cutoff_at(times[i]);
            out.varrho.push(v);
            out.varrho_dot.push(vd);
            out.f.push(f);
            out.f_dot.push(fd);
        }
        Ok(out)
    }

    /// `varrho = 2 delta chi(|R| / delta) / eps_u` and its rate.
    pub fn envelope(&self, norm: f64, norm_dot: f64) -> Result<(f64, f64)> {
        let z = norm / self.delta;
        let v = 2.0 * self.delta * chi(z)? / self.eps_u;
        let vd = 2.0 * chi_deriv(z)? * norm_dot / self.eps_u;
        Ok((v, vd))
    }

    pub fn cutoff_at(&self, t: f64) -> (f64, f64) {
        match &self.cutoff {
            Some(c) => c.eval(t),
            None => (0.0, 0.0),
        }
    }

    /// Amplitude fields at sample `i` of the mollified state.
    pub fn sample(&self, ds: &DirectionSet, state: &RelaxedState, i: usize) -> Result<SampleAmplitudes> {
        self.fields(
            ds,
            self.times[i],
            (self.varrho[i], self.varrho_dot[i]),
            (self.f[i], self.f_dot[i]),
            (state.rho.value(i), state.rho.rate(i).expect("density rate")),
            (state.r.value(i), state.r.rate(i).expect("stress rate")),
        )
    }

    /// Amplitude fields at an arbitrary time, from mollified data evaluated there.
    pub fn sample_at(
        &self,
        ds: &DirectionSet,
        t: f64,
        rho: (&Field, &Field),
        r: (&Field, &Field),
    ) -> Result<SampleAmplitudes> {
        let (n, nd) = stress_sup(r.0, Some(r.1), self.mode);
        let env = self.envelope(n, nd)?;
        self.fields(ds, t, env, self.cutoff_at(t), rho, r)
    }

    fn fields(
        &self,
        ds: &DirectionSet,
        t: f64,
        (varrho, varrho_dot): (f64, f64),
        (f, f_dot): (f64, f64),
        (rho, rho_dot): (&Field, &Field),
        (r, r_dot): (&Field, &Field),
    ) -> Result<SampleAmplitudes> {
        let space = r.space();
        let nk = ds.len();
        let zero = || Field::zeros(space, FieldKind::Scalar);
        let mut out = SampleAmplitudes {
            t,
            varrho,
            varrho_dot,
            f,
            f_dot,
            a: (0..nk).map(|_| zero()).collect(),
            a_dot: (0..nk).map(|_| zero()).collect(),
            big_a: (0..nk).map(|_| zero()).collect(),
            big_a_dot: (0..nk).map(|_| zero()).collect(),
        };
        if f == 0.0 {
            return Ok(out);
        }
        let d = space.dim;
        let id = packed_identity(d);
        let compressible = self.mode == Mode::Compressible;
        for x in 0..space.len() {
            let rs = stress_at(r, x, self.mode);
            let rd = stress_at(r_dot, x, self.mode);
            let s: Vec<f64> = id.iter().zip(&rs).map(|(e, v)| e - v / varrho).collect();
            let sd: Vec<f64> =
                rs.iter().zip(&rd).map(|(v, w)| -w / varrho + v * varrho_dot / (varrho * varrho)).collect();
            let gamma = ds.gamma(&s)?;
            let gamma_dot = ds.gamma_derivative(&s, &sd)?;
            let (dens, dens_dot) = if compressible { (rho.comp(0)[x], rho_dot.comp(0)[x]) } else { (1.0, 0.0) };
            let root = (varrho * dens).sqrt();
            let root_dot = (varrho_dot * dens + varrho * dens_dot) / (2.0 * root);
            for k in 0..nk {
                let (g, gd) = (gamma[k], gamma_dot[k]);
                out.a[k].comp_mut(0)[x] = f * root * g;
                out.a_dot[k].comp_mut(0)[x] = f_dot * root * g + f * root_dot * g + f * root * gd;
                out.big_a[k].comp_mut(0)[x] = f * f * varrho * g * g;
                out.big_a_dot[k].comp_mut(0)[x] =
                    2.0 * f * f_dot * varrho * g * g + f * f * varrho_dot * g * g + 2.0 * f * f * varrho * g * gd;
            }
        }
        Ok(out)
    }
}

/// Spatial and temporal building blocks of one iteration step.
#[derive(Debug, Clone)]
pub struct BuildingBlocks {
    pub ds: DirectionSet,
    pub lambda: f64,
    pub mikados: Vec<Mikado>,
    pub temporal: TemporalProfile,
}

impl BuildingBlocks {
    pub fn build(
        engine: &Engine,
        grid: Grid,
        level: &Level,
        profile_radius: f64,
        harmonic_cap: Option<usize>,
    ) -> Result<Self> {
        let ds = DirectionSet::build(grid.dim())?;
        level.check_resolution(&ds, grid.n())?;
        let profile = SpatialProfile::new(grid.dim(), profile_radius)?;
        let mikados = mikado_family(engine, &ds, level.lambda, &profile, harmonic_cap)?;
        let temporal = TemporalProfile::new(ds.len(), grid.horizon, level.tau, level.sigma)?;
        Ok(Self { ds, lambda: level.lambda, mikados, temporal })
    }

    pub fn direction(&self, k: usize) -> &[f64] {
        &self.mikados[k].direction
    }

    /// Instants where `g_(k)` peaks, one per direction, in the oscillation
    /// period containing `near`; instants outside [0, T] are dropped.
    pub fn peak_instants(&self, near: f64) -> Vec<(usize, f64)> {
        let tp = &self.temporal;
        let period = tp.horizon / tp.sigma;
        let base = (near / period).floor() * period;
        (0..tp.count())
            .filter_map(|k| {
                let t = base + (tp.shifts[k] + 0.5 * tp.width) / (tp.tau * tp.sigma);
                (t >= 0.0 && t <= tp.horizon).then_some((k, t))
            })
            .collect()
    }
}

/// Temporal profile values at one instant.
#[derive(Debug, Clone, Serialize)]
pub struct TemporalSample {
    pub g: Vec<f64>,
    pub g_dot: Vec<f64>,
    pub h: Vec<f64>,
    pub h_dot: Vec<f64>,
}

impl TemporalSample {
    pub fn at(tp: &TemporalProfile, t: f64) -> Self {
        let ks = 0..tp.count();
        Self {
            g: ks.clone().map(|k| tp.g(k, t)).collect(),
            g_dot: ks.clone().map(|k| tp.g_dot(k, t)).collect(),
            h: ks.clone().map(|k| tp.h(k, t)).collect(),
            h_dot: ks.map(|k| tp.h_dot(k, t)).collect(),
        }
    }
}

/// Perturbation parts and their rates at one instant. `b[k]` holds
/// `(k . grad)^2 A_(k)`, the density source per direction.
#[derive(Debug, Clone)]
pub struct SamplePerturbation {
    pub t: f64,
    pub temporal: TemporalSample,
    pub wp: Field,
    pub wp_dot: Field,
    pub wc: Field,
    pub wc_dot: Field,
    pub wo: Field,
    pub wo_dot: Field,
    pub b: Vec<Field>,
    pub b_dot: Vec<Field>,
    /// `d/dt z = -div w`.
    pub z_dot: Field,
}

impl SamplePerturbation {
    pub fn total(&self) -> Field {
        let mut w = self.wp.sum(&self.wc);
        w.add_assign(&self.wo);
        w
    }

    pub fn total_rate(&self) -> Field {
        let mut w = self.wp_dot.sum(&self.wc_dot);
        w.add_assign(&self.wo_dot);
        w
    }

    pub fn is_zero(&self) -> bool {
        [&self.wp, &self.wp_dot, &self.wc, &self.wc_dot, &self.wo, &self.wo_dot].iter().all(|f| f.max_abs() == 0.0)
    }
}

/// Scalar field times a constant vector.
pub fn along(s: &Field, k: &[f64]) -> Field {
    let comps = k.iter().map(|&c| s.comp(0).iter().map(|v| v * c).collect()).collect();
    Field::from_components(s.space(), FieldKind::Vector, comps).expect("vector")
}

/// `k . grad f` of a scalar field.
pub fn directional(engine: &Engine, f: &Field, k: &[f64]) -> Field {
    let spec = engine.directional_spec(&engine.forward_scalar(f.comp(0)), k);
    Field::from_data(engine.space(), FieldKind::Scalar, engine.inverse_scalar(&spec)).expect("scalar")
}

/// Dealiased pointwise dot product of two vector fields.
pub fn dot_product(engine: &Engine, u: &Field, v: &Field) -> Field {
    let mut inputs = u.components();
    inputs.extend(v.components());
    let d = u.ncomp();
    let lifted = engine.lift(&inputs);
    let len = lifted[0].len();
    let mut acc = vec![0.0; len];
    for c in 0..d {
        for (x, a) in acc.iter_mut().enumerate() {
            *a += lifted[c][x] * lifted[d + c][x];
        }
    }
    let out = engine.lower(&[&acc]);
    Field::from_data(engine.space(), FieldKind::Scalar, out.into_iter().next().expect("one")).expect("scalar")
}

/// Incompressible corrector density of one direction:
/// `grad Phi (k . grad a) - k (grad Phi . grad a)`.
fn corrector_density(engine: &Engine, mikado: &Mikado, a: &Field) -> Field {
    let k = &mikado.direction;
    let grad_a = engine.grad(a);
    let ka = directional(engine, a, k);
    let mut out = engine.product(&ka, &mikado.grad_potential);
    let dot = dot_product(engine, &mikado.grad_potential, &grad_a);
    out.sub_assign(&along(&dot, k));
    out
}

/// Builds the perturbation parts at one instant.
pub fn perturb_at(
    engine: &Engine,
    blocks: &BuildingBlocks,
    mode: Mode,
    sigma: f64,
    amps: &SampleAmplitudes,
) -> SamplePerturbation {
    let space = engine.space();
    let nk = blocks.ds.len();
    let temporal = TemporalSample::at(&blocks.temporal, amps.t);
    let zero_v = || Field::zeros(space, FieldKind::Vector);
    let zero_s = || Field::zeros(space, FieldKind::Scalar);
    let mut out = SamplePerturbation {
        t: amps.t,
        temporal,
        wp: zero_v(),
        wp_dot: zero_v(),
        wc: zero_v(),
        wc_dot: zero_v(),
        wo: zero_v(),
        wo_dot: zero_v(),
        b: (0..nk).map(|_| zero_s()).collect(),
        b_dot: (0..nk).map(|_| zero_s()).collect(),
        z_dot: zero_s(),
    };
    if amps.is_zero() {
        return out;
    }
    let mut wo_spec = Spectrum::zeros(space, FieldKind::Vector);
    let mut wo_dot_spec = Spectrum::zeros(space, FieldKind::Vector);
    for k in 0..nk {
        let mikado = &blocks.mikados[k];
        let dir = &mikado.direction;
        let (g, gd) = (out.temporal.g[k], out.temporal.g_dot[k]);
        if g != 0.0 || gd != 0.0 {
            let pa = engine.product(&amps.a[k], &mikado.phi);
            let pad = engine.product(&amps.a_dot[k], &mikado.phi);
            let ca = corrector_density(engine, mikado, &amps.a[k]);
            let cad = corrector_density(engine, mikado, &amps.a_dot[k]);
            out.wp.axpy(g, &along(&pa, dir));
            out.wp_dot.axpy(gd, &along(&pa, dir));
            out.wp_dot.axpy(g, &along(&pad, dir));
            out.wc.axpy(g, &ca);
            out.wc_dot.axpy(gd, &ca);
            out.wc_dot.axpy(g, &cad);
        }
        let (h, hd) = (out.temporal.h[k], out.temporal.h_dot[k]);
        let a_spec = engine.forward_scalar(amps.big_a[k].comp(0));
        let ad_spec = engine.forward_scalar(amps.big_a_dot[k].comp(0));
        let ka = engine.directional_spec(&a_spec, dir);
        let kad = engine.directional_spec(&ad_spec, dir);
        for (c, &kc) in dir.iter().enumerate() {
            for (idx, v) in wo_spec.comp_mut(c).iter_mut().enumerate() {
                *v += ka[idx] * (-h * kc / sigma);
            }
            for (idx, v) in wo_dot_spec.comp_mut(c).iter_mut().enumerate() {
                *v += (ka[idx] * hd + kad[idx] * h) * (-kc / sigma);
            }
        }
        if mode == Mode::Compressible {
            let kka = engine.directional_spec(&ka, dir);
            let kkad = engine.directional_spec(&kad, dir);
            out.b[k] = Field::from_data(space, FieldKind::Scalar, engine.inverse_scalar(&kka)).expect("scalar");
            out.b_dot[k] = Field::from_data(space, FieldKind::Scalar, engine.inverse_scalar(&kkad)).expect("scalar");
            out.z_dot.axpy(h / sigma, &out.b[k]);
        }
    }
    if mode == Mode::Incompressible {
        leray_spec(engine, &mut wo_spec);
        leray_spec(engine, &mut wo_dot_spec);
    }
    out.wo = engine.inverse(&wo_spec);
    out.wo_dot = engine.inverse(&wo_dot_spec);
    out
}

/// Integrates `d/dt z = sigma^{-1} sum_k h_(k) B_(k)` between samples: each
/// `B_(k)` is replaced by its cubic Hermite interpolant in time (from values
/// and rates at the two ends) and the products with the known `h_(k)` are
/// integrated with fine Simpson quadrature.
#[derive(Debug, Clone)]
pub struct DensityIntegrator {
    sigma: f64,
    intervals: usize,
    z: Field,
    prev: Option<(f64, Vec<Field>, Vec<Field>)>,
}

impl DensityIntegrator {
    pub fn new(grid: Grid, sigma: f64, intervals: usize) -> Self {
        Self { sigma, intervals, z: Field::zeros(grid.space, FieldKind::Scalar), prev: None }
    }

    /// Weights of `(B_i, dt B'_i, B_{i+1}, dt B'_{i+1})` for direction `k` on [t0, t1].
    pub fn weights(tp: &TemporalProfile, k: usize, t0: f64, t1: f64, intervals: usize) -> [f64; 4] {
        let dt = t1 - t0;
        let mut w = [0.0; 4];
        for (b, wb) in w.iter_mut().enumerate() {
            *wb = simpson_fn(|s| tp.h(k, s) * hermite_basis((s - t0) / dt)[b], t0, t1, intervals);
        }
        w[1] *= dt;
        w[3] *= dt;
        w
    }

    /// Advances to the perturbation sample `p` and returns `z` there.
    pub fn advance(&mut self, tp: &TemporalProfile, p: &SamplePerturbation) -> &Field {
        if let Some((t0, b0, bd0)) = &self.prev {
            let any = b0.iter().chain(bd0).chain(&p.b).chain(&p.b_dot).any(|f| f.max_abs() > 0.0);
            if any {
                for k in 0..p.b.len() {
                    let w = Self::weights(tp, k, *t0, p.t, self.intervals);
                    self.z.axpy(w[0] / self.sigma, &b0[k]);
                    self.z.axpy(w[1] / self.sigma, &bd0[k]);
                    self.z.axpy(w[2] / self.sigma, &p.b[k]);
                    self.z.axpy(w[3] / self.sigma, &p.b_dot[k]);
                }
            }
        }
        self.prev = Some((p.t, p.b.clone(), p.b_dot.clone()));
        &self.z
    }
}

/// One measured identity residual.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityRow {
    pub identity: String,
    pub time: f64,
    pub sample: Option<usize>,
    pub value: f64,
    pub tolerance: f64,
}

impl IdentityRow {
    pub fn pass(&self) -> bool {
        self.value <= self.tolerance
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
}

impl IdentityReport {
    pub fn push(&mut self, identity: &str, time: f64, sample: Option<usize>, value: f64, tolerance: f64) {
        self.rows.push(IdentityRow { identity: identity.to_string(), time, sample, value, tolerance });
    }

    pub fn extend(&mut self, other: IdentityReport) {
        self.rows.extend(other.rows);
    }

    /// Largest residual of the named identity.
    pub fn worst(&self, identity: &str) -> Option<f64> {
        self.rows.iter().filter(|r| r.identity == identity).map(|r| r.value).reduce(f64::max)
    }

    pub fn failures(&self) -> Vec<&IdentityRow> {
        self.rows.iter().filter(|r| !r.pass()).collect()
    }
}

pub const TOL_VELCANCEL: f64 = 1e-8;
pub const TOL_OSCILLATION: f64 = 1e-6;
pub const TOL_TEMPORAL: f64 = 1e-5;
pub const TOL_DIVERGENCE: f64 = 1e-8;
pub const TOL_MEAN: f64 = 1e-12;

fn relative(num: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        num / scale
    } else {
        num
    }
}

/// `sum_k A_(k) k (x) k = varrho f^2 Id - R` pointwise, relative to the larger side.
pub fn velcancel_residual(ds: &DirectionSet, amps: &SampleAmplitudes, r: &Field, mode: Mode) -> f64 {
    let space = r.space();
    let d = space.dim;
    let target_scale = amps.varrho * amps.f * amps.f;
    let mut worst: f64 = 0.0;
    let mut scale = target_scale;
    for x in 0..space.len() {
        let weights: Vec<f64> = amps.big_a.iter().map(|a| a.comp(0)[x]).collect();
        let lhs = ds.reassemble(&weights);
        let rs = stress_at(r, x, mode);
        let f2 = amps.f * amps.f;
        let mut diff = Vec::with_capacity(lhs.len());
        for i in 0..d {
            for j in i..d {
                let c = sym_index(i, j, d);
                let id = if i == j { target_scale } else { 0.0 };
                diff.push(lhs[c] - (id - f2 * rs[c]));
            }
        }
        worst = worst.max(packed_frobenius(d, &diff));
        scale = scale.max(f2 * packed_frobenius(d, &rs));
    }
    relative(worst, scale)
}

/// Residual of the oscillation identity
/// `rho^{-1} w^p (x) w^p + R - varrho f^2 Id - sum_k A g^2 (phi^2 - 1) k (x) k - sum_k A (g^2 - 1) k (x) k`
/// for the amplitudes of one instant and a chosen set of temporal values `g`.
pub fn oscillation_residual(
    engine: &Engine,
    blocks: &BuildingBlocks,
    amps: &SampleAmplitudes,
    rho: &Field,
    r: &Field,
    mode: Mode,
    g: &[f64],
) -> Result<f64> {
    let space = engine.space();
    let d = space.dim;
    let inv = match mode {
        Mode::Compressible => reciprocal(rho)?,
        Mode::Incompressible => Field::constant(space, 1.0),
    };
    let mut wp = Field::zeros(space, FieldKind::Vector);
    let mut wavy = Vec::new();
    for (k, mikado) in blocks.mikados.iter().enumerate() {
        if g[k] != 0.0 {
            wp.axpy(g[k], &along(&engine.product(&amps.a[k], &mikado.phi), &mikado.direction));
        }
        wavy.push(&mikado.phi);
    }
    let mut worst: f64 = 0.0;
    let mut scale: f64 = amps.varrho * amps.f * amps.f;
    for x in 0..space.len() {
        let rs = stress_at(r, x, mode);
        let mut res = vec![0.0; d * (d + 1) / 2];
        let mut quad = vec![0.0; d * (d + 1) / 2];
        for i in 0..d {
            for j in i..d {
                let c = sym_index(i, j, d);
                quad[c] = inv.comp(0)[x] * wp.comp(i)[x] * wp.comp(j)[x];
                res[c] = quad[c] + rs[c] - if i == j { amps.varrho * amps.f * amps.f } else { 0.0 };
            }
        }
        for (k, mikado) in blocks.mikados.iter().enumerate() {
            let a = amps.big_a[k].comp(0)[x];
            let phi = wavy[k].comp(0)[x];
            let coef = a * g[k] * g[k] * (phi * phi - 1.0) + a * (g[k] * g[k] - 1.0);
            let dir = &mikado.direction;
            for i in 0..d {
                for j in i..d {
                    res[sym_index(i, j, d)] -= coef * dir[i] * dir[j];
                }
            }
        }
        worst = worst.max(packed_frobenius(d, &res));
        scale = scale.max(packed_frobenius(d, &quad)).max(packed_frobenius(d, &rs));
    }
    Ok(relative(worst, scale))
}

/// Residual of the temporal-corrector identity
/// `d/dt w^o + sum_k div(A (g^2 - 1) k (x) k) + sigma^{-1} sum_k h k (x) k d/dt grad A = 0`,
/// with `d/dt h_(k)` taken by a fourth-order centered difference in time.
pub fn temporal_corrector_residual(
    engine: &Engine,
    blocks: &BuildingBlocks,
    amps: &SampleAmplitudes,
    mode: Mode,
    sigma: f64,
) -> f64 {
    let space = engine.space();
    let tp = &blocks.temporal;
    let t = amps.t;
    let eps = 1e-3 * tp.width / (tp.sigma * tp.tau);
    let mut dwo = Spectrum::zeros(space, FieldKind::Vector);
    let mut rest = Spectrum::zeros(space, FieldKind::Vector);
    for (k, mikado) in blocks.mikados.iter().enumerate() {
        let dir = &mikado.direction;
        let h = tp.h(k, t);
        let g = tp.g(k, t);
        let hd = (8.0 * (tp.h(k, t + eps) - tp.h(k, t - eps)) - (tp.h(k, t + 2.0 * eps) - tp.h(k, t - 2.0 * eps)))
            / (12.0 * eps);
        let ka = engine.directional_spec(&engine.forward_scalar(amps.big_a[k].comp(0)), dir);
        let kad = engine.directional_spec(&engine.forward_scalar(amps.big_a_dot[k].comp(0)), dir);
        for (c, &kc) in dir.iter().enumerate() {
            for (idx, v) in dwo.comp_mut(c).iter_mut().enumerate() {
                *v += (ka[idx] * hd + kad[idx] * h) * (-kc / sigma);
            }
            for (idx, v) in rest.comp_mut(c).iter_mut().enumerate() {
                *v += ka[idx] * ((g * g - 1.0) * kc) + kad[idx] * (h * kc / sigma);
            }
        }
    }
    // The unprojected terms set the scale: projection may annihilate both sides.
    let mut scale = engine.inverse(&rest).sup_norm().max(engine.inverse(&dwo).sup_norm());
    if mode == Mode::Incompressible {
        leray_spec(engine, &mut dwo);
        leray_spec(engine, &mut rest);
        scale = scale.max(engine.inverse(&rest).sup_norm());
    }
    dwo.add_assign(&rest);
    relative(engine.inverse(&dwo).sup_norm(), scale)
}

/// `|div(w^p + w^c)|_{C^0} / |w^p|_{C^0}` (absolute when `w^p` vanishes).
pub fn divergence_ratio(engine: &Engine, p: &SamplePerturbation) -> f64 {
    let w = p.wp.sum(&p.wc);
    relative(engine.div(&w).sup_norm(), p.wp.sup_norm())
}

/// Largest zero-mode magnitude among the mean-free parts, relative to their size.
pub fn mean_defect(p: &SamplePerturbation, z: &Field) -> f64 {
    let w = p.wp.sum(&p.wc);
    let mut worst: f64 = 0.0;
    for (f, scale) in [(&w, p.wp.sup_norm().max(w.sup_norm())), (&p.wo, p.wo.sup_norm()), (z, z.sup_norm())] {
        for c in 0..f.ncomp() {
            worst = worst.max(relative(f.mean(c).abs(), scale));
        }
    }
    worst
}

/// Largest product `|g_(k) g_(k')|`, `k != k'`, on a fine grid over [0, T].
pub fn cross_support_overlap(tp: &TemporalProfile, samples: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..=samples {
        let t = tp.horizon * i as f64 / samples as f64;
        for k in 0..tp.count() {
            for l in k + 1..tp.count() {
                worst = worst.max((tp.g(k, t) * tp.g(l, t)).abs());
            }
        }
    }
    worst
}

/// Identity checks at one instant; `sample` is set for grid samples.
#[allow(clippy::too_many_arguments)]
pub fn verify_at(
    engine: &Engine,
    blocks: &BuildingBlocks,
    mode: Mode,
    sigma: f64,
    amps: &SampleAmplitudes,
    pert: &SamplePerturbation,
    rho: &Field,
    r: &Field,
    sample: Option<usize>,
) -> Result<IdentityReport> {
    let mut rep = IdentityReport::default();
    let t = amps.t;
    if amps.is_zero() {
        return Ok(rep);
    }
    rep.push("velcancel", t, sample, velcancel_residual(&blocks.ds, amps, r, mode), TOL_VELCANCEL);
    let g = &pert.temporal.g;
    rep.push("oscillation", t, sample, oscillation_residual(engine, blocks, amps, rho, r, mode, g)?, TOL_OSCILLATION);
    let tp = &blocks.temporal;
    let peak = tp.tau.sqrt() * tp.amplitude;
    for k in 0..blocks.ds.len() {
        let mut single = vec![0.0; blocks.ds.len()];
        single[k] = peak;
        let name = format!("oscillation_peak_k{k}");
        rep.push(&name, t, sample, oscillation_residual(engine, blocks, amps, rho, r, mode, &single)?, TOL_OSCILLATION);
    }
    rep.push(
        "temporal_corrector",
        t,
        sample,
        temporal_corrector_residual(engine, blocks, amps, mode, sigma),
        TOL_TEMPORAL,
    );
    rep.push("divergence_wpc", t, sample, divergence_ratio(engine, pert), TOL_DIVERGENCE);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::timefield::TimeField;

    #[test]
    fn chi_examples() {
        assert_eq!(chi(0.5).unwrap(), 1.0);
        assert_eq!(chi(3.0).unwrap(), 3.0);
        let v = chi(1.5).unwrap();
        assert!((0.75..=3.0).contains(&v));
        assert!(chi(-0.1).is_err());
    }

    #[test]
    fn chi_blend_bounds_and_monotone() {
        let mut last = 1.0;
        for i in 1..200 {
            let z = 1.0 + i as f64 / 200.0;
            let v = chi(z).unwrap();
            assert!(v >= 0.5 * z && v <= 2.0 * z);
            assert!(v >= last - 1e-15);
            last = v;
            let e = 1e-6;
            let fd = (chi(z + e).unwrap() - chi(z - e).unwrap()) / (2.0 * e);
            assert!((fd - chi_deriv(z).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn cutoff_properties() {
        let c = TemporalCutoff { start: 0.3, end: 0.7, ell: 0.1 };
        assert_eq!(c.eval(0.3).0, 1.0);
        assert_eq!(c.eval(0.5).0, 1.0);
        assert_eq!(c.eval(0.7).0, 1.0);
        assert_eq!(c.eval(0.19).0, 0.0);
        assert_eq!(c.eval(0.81).0, 0.0);
        for i in 0..100 {
            let t = i as f64 / 100.0;
            let (v, d) = c.eval(t);
            assert!((0.0..=1.0).contains(&v));
            let e = 1e-6;
            let fd = (c.eval(t + e).0 - c.eval(t - e).0) / (2.0 * e);
            if v > 0.0 && v < 1.0 - 1e-6 {
                assert!((fd - d).abs() < 1e-4 * (1.0 + d.abs()), "{t} {fd} {d}");
            }
        }
    }

    #[test]
    fn empty_support_gives_no_cutoff() {
        assert!(TemporalCutoff::from_norms(&[0.0, 0.5, 1.0], &[0.0; 3], 0.1).is_none());
    }

    fn small_setup(mode: Mode) -> (Engine, Grid, BuildingBlocks, RelaxedState, AmplitudeBundle) {
        let grid = Grid::new(2, 32, 5, 1.0).unwrap();
        let engine = Engine::new(grid.space);
        let level = Level { lambda: 2.0, delta_next: 0.05, ell: 0.2, tau: 3.0, sigma: 2.0 };
        let blocks = BuildingBlocks::build(&engine, grid, &level, 0.5, None).unwrap();
        let space = grid.space;
        let rho = match mode {
            Mode::Compressible => Field::scalar_fn(space, |x| 2.0 + 0.3 * x[0].sin()),
            Mode::Incompressible => Field::constant(space, 1.0),
        };
        let stress = |s: f64| {
            let mut r = Field::zeros(space, FieldKind::SymTensor);
            let a = Field::scalar_fn(space, |x| s * (0.1 * x[1].cos() + 0.05));
            let b = Field::scalar_fn(space, |x| s * 0.04 * (x[0] + x[1]).sin());
            r.comp_mut(0).copy_from_slice(a.comp(0));
            r.comp_mut(1).copy_from_slice(b.comp(0));
            r.comp_mut(2).copy_from_slice(a.map(|v| -0.5 * v).comp(0));
            r
        };
        let times = grid.times();
        let rho_tf = TimeField::new(
            grid,
            FieldKind::Scalar,
            vec![rho.clone(); 5],
            Some(vec![Field::zeros(space, FieldKind::Scalar); 5]),
        )
        .unwrap();
        let m_tf = TimeField::zeros(grid, FieldKind::Vector, true);
        let r_tf = TimeField::new(
            grid,
            FieldKind::SymTensor,
            times.iter().map(|&t| stress(1.0 + t)).collect(),
            Some(times.iter().map(|_| stress(1.0)).collect()),
        )
        .unwrap();
        let state = RelaxedState::new(0, mode, rho_tf, m_tf, r_tf).unwrap();
        let amps = AmplitudeBundle::build(&state, &blocks.ds, &level).unwrap();
        (engine, grid, blocks, state, amps)
    }

    #[test]
    fn amplitudes_cancel_the_stress() {
        for mode in [Mode::Compressible, Mode::Incompressible] {
            let (_, _, blocks, state, amps) = small_setup(mode);
            for i in 0..5 {
                let s = amps.sample(&blocks.ds, &state, i).unwrap();
                assert_eq!(s.f, 1.0);
                let ratio = amps.stress_norm[i] / amps.varrho[i];
                assert!(ratio <= blocks.ds.eps_u);
                assert!(velcancel_residual(&blocks.ds, &s, state.r.value(i), mode) < 1e-12);
            }
        }
    }

    #[test]
    fn amplitude_rates_match_differences() {
        let (_, _, blocks, state, amps) = small_setup(Mode::Compressible);
        let at = |s: f64| {
            let r = state.r.value(1).sum(&state.r.rate(1).unwrap().scaled(s));
            let rho = state.rho.value(1);
            amps.sample_at(
                &blocks.ds,
                0.25 + s,
                (rho, &Field::zeros(rho.space(), FieldKind::Scalar)),
                (&r, state.r.rate(1).unwrap()),
            )
            .unwrap()
        };
        let e = 1e-6;
        let (p, m, c) = (at(e), at(-e), at(0.0));
        for k in 0..blocks.ds.len() {
            let fd = p.big_a[k].diff(&m.big_a[k]).scaled(0.5 / e);
            assert!(fd.diff(&c.big_a_dot[k]).max_abs() < 1e-6 * (1.0 + c.big_a_dot[k].max_abs()));
            let fa = p.a[k].diff(&m.a[k]).scaled(0.5 / e);
            assert!(fa.diff(&c.a_dot[k]).max_abs() < 1e-6 * (1.0 + c.a_dot[k].max_abs()));
        }
    }

    #[test]
    fn perturbation_identities_at_peaks() {
        for mode in [Mode::Compressible, Mode::Incompressible] {
            let (engine, _, blocks, state, amps) = small_setup(mode);
            for (k, t) in blocks.peak_instants(0.5) {
                let (rho, rho_dot) = (state.rho.value(2), state.rho.rate(2).unwrap());
                let r = state.r.value(0).sum(&state.r.rate(0).unwrap().scaled(t));
                let s = amps.sample_at(&blocks.ds, t, (rho, rho_dot), (&r, state.r.rate(0).unwrap())).unwrap();
                let p = perturb_at(&engine, &blocks, mode, 2.0, &s);
                assert!(p.temporal.g[k] > 1.0);
                let rep = verify_at(&engine, &blocks, mode, 2.0, &s, &p, rho, &r, None).unwrap();
                for row in &rep.rows {
                    assert!(row.pass(), "{mode:?} {row:?}");
                }
                let w = p.total();
                for c in 0..2 {
                    assert!(w.mean(c).abs() < 1e-12 * w.sup_norm());
                }
                if mode == Mode::Incompressible {
                    assert!(engine.div(&w).sup_norm() < 1e-10 * w.sup_norm());
                } else {
                    let div = engine.div(&w);
                    assert!(div.sum(&p.z_dot).sup_norm() < 1e-10 * div.sup_norm());
                }
            }
        }
    }

    #[test]
    fn disjoint_temporal_supports() {
        let tp = TemporalProfile::new(3, 1.0, 8.0, 3.0).unwrap();
        assert_eq!(cross_support_overlap(&tp, 20000), 0.0);
    }

    #[test]
    fn hermite_weights_integrate_constants() {
        let tp = TemporalProfile::new(3, 1.0, 8.0, 3.0).unwrap();
        let (t0, t1) = (0.1, 0.15);
        let w = DensityIntegrator::weights(&tp, 1, t0, t1, 4000);
        let direct = simpson_fn(|s| tp.h(1, s), t0, t1, 4000);
        assert!((w[0] + w[2] - direct).abs() < 1e-12);
    }
}
