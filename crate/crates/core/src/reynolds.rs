//! Mollification of a relaxed state, the decomposition of the new Reynolds
//! stress into its linear, oscillation, corrector, pressure and commutator
//! parts, and two scaling probes (stationary phase, vanishing viscosity).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CiwError, Result};
use crate::field::{Field, FieldKind, Spectrum};
use crate::fit::{ScalingReport, ScalingSeries, SlopeRule};
use crate::grid::{Grid, Space};
use crate::ledger::Physics;
use crate::mollify::Mollifier;
use crate::norms::{holder_norm, lp_time};
use crate::operators::{leray_spec, r_div};
use crate::perturbation::{along, BuildingBlocks, SampleAmplitudes, SamplePerturbation};
use crate::quad::bump_fourier;
use crate::spectral::Engine;
use crate::state::{r_of, reciprocal, Mode, PressureLaw, RelaxedState};
use crate::timefield::TimeField;

/// A mollified state together with the commutator stress it generates.
#[derive(Debug, Clone)]
pub struct MollifiedState {
    /// `(rho_l, m_l, R_l)`; all three carry rate channels.
    pub state: RelaxedState,
    pub r_com: TimeField,
    pub warnings: Vec<String>,
}

/// Raw per-sample nonlinear quantities that are mollified alongside the state.
struct RawProducts {
    pressure: Vec<Field>,
    velocity: Vec<Field>,
    flux: Vec<Field>,
}

fn raw_products(engine: &Engine, law: &PressureLaw, state: &RelaxedState) -> Result<RawProducts> {
    let n_t = state.grid().n_t;
    let per: Vec<(Field, Field, Field)> = (0..n_t)
        .into_par_iter()
        .map(|j| {
            let rho = state.rho.value(j);
            let m = state.m.value(j);
            match state.mode {
                Mode::Compressible => {
                    let inv = reciprocal(rho)?;
                    Ok((law.apply(rho), engine.product(&inv, m), engine.weighted_outer(Some(&inv), m, m)))
                }
                Mode::Incompressible => {
                    Ok((Field::zeros(engine.space(), FieldKind::Scalar), m.clone(), engine.weighted_outer(None, m, m)))
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut out = RawProducts { pressure: Vec::new(), velocity: Vec::new(), flux: Vec::new() };
    for (p, v, q) in per {
        out.pressure.push(p);
        out.velocity.push(v);
        out.flux.push(q);
    }
    Ok(out)
}

/// Mollifies `(rho, m, R)` in space and time and assembles the commutator
/// stress that restores the relaxed system for the mollified fields.
pub fn mollify_state(
    engine: &Engine,
    physics: &Physics,
    law: &PressureLaw,
    state: &RelaxedState,
    mollifier: &Mollifier,
) -> Result<MollifiedState> {
    let grid = state.grid();
    let raw = raw_products(engine, law, state)?;
    let rate_of = |tf: &TimeField, i: usize| -> Field {
        match tf.rates() {
            Some(r) => Mollifier::combine(mollifier.value_weights(i), r),
            None => Mollifier::combine(mollifier.rate_weights(i), tf.values()),
        }
    };
    let samples: Vec<[Field; 7]> = (0..grid.n_t)
        .into_par_iter()
        .map(|i| {
            let wv = mollifier.value_weights(i);
            let s = |f: Field| mollifier.spatial(engine, &f);
            let rho = s(Mollifier::combine(wv, state.rho.values()));
            let rho_dot = s(rate_of(&state.rho, i));
            let m = s(Mollifier::combine(wv, state.m.values()));
            let m_dot = s(rate_of(&state.m, i));
            let r = s(Mollifier::combine(wv, state.r.values()));
            let r_dot = s(rate_of(&state.r, i));
            let flux_l = s(Mollifier::combine(wv, &raw.flux));
            let r_com = match state.mode {
                Mode::Compressible => {
                    let pressure_l = s(Mollifier::combine(wv, &raw.pressure));
                    let velocity_l = s(Mollifier::combine(wv, &raw.velocity));
                    let inv = reciprocal(&rho)?;
                    let dp = law.apply(&rho).diff(&pressure_l);
                    let dv = engine.product(&inv, &m).diff(&velocity_l);
                    let mut vec = engine.grad_spec(&engine.forward_scalar(dp.comp(0)));
                    vec.add_assign(&viscous_spec(engine, physics, &engine.forward(&dv))?);
                    let mut out = r_of(engine, &vec);
                    out.add_assign(&engine.weighted_outer(Some(&inv), &m, &m).diff(&flux_l));
                    out
                }
                Mode::Incompressible => {
                    let dq = engine.weighted_outer(None, &m, &m).diff(&flux_l);
                    let mut vec = engine.div_sym_spec(&engine.forward(&dq));
                    leray_spec(engine, &mut vec);
                    r_of(engine, &vec)
                }
            };
            Ok([rho, rho_dot, m, m_dot, r, r_dot, r_com])
        })
        .collect::<Result<_>>()?;
    let mut cols: Vec<Vec<Field>> = (0..7).map(|_| Vec::with_capacity(grid.n_t)).collect();
    for sample in samples {
        for (c, f) in sample.into_iter().enumerate() {
            cols[c].push(f);
        }
    }
    let mut it = cols.into_iter();
    let mut next = || it.next().expect("seven columns");
    let (rho, rho_dot, m, m_dot, r, r_dot, r_com) = (next(), next(), next(), next(), next(), next(), next());
    let st = RelaxedState::new(
        state.q,
        state.mode,
        TimeField::new(grid, FieldKind::Scalar, rho, Some(rho_dot))?,
        TimeField::new(grid, FieldKind::Vector, m, Some(m_dot))?,
        TimeField::new(grid, FieldKind::SymTensor, r, Some(r_dot))?,
    )?;
    Ok(MollifiedState {
        state: st,
        r_com: TimeField::new(grid, FieldKind::SymTensor, r_com, None)?,
        warnings: mollifier.warnings().to_vec(),
    })
}

/// `mu Lambda^alpha v - (mu + nu) grad div v` in compressible form.
fn viscous_spec(engine: &Engine, physics: &Physics, v: &Spectrum) -> Result<Spectrum> {
    let mut out = v.clone();
    engine.fractional_laplacian_spec(&mut out, physics.alpha)?;
    out.scale(physics.mu);
    let mut bulk = engine.grad_spec(&engine.div_spec(v));
    bulk.scale(-(physics.mu + physics.nu));
    out.add_assign(&bulk);
    Ok(out)
}

/// The parts of the new Reynolds stress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Lin,
    Osc1,
    Osc2,
    Osc3,
    Cor,
    Pre,
    Com,
}

impl Part {
    pub const ALL: [Part; 7] = [Part::Lin, Part::Osc1, Part::Osc2, Part::Osc3, Part::Cor, Part::Pre, Part::Com];

    pub fn name(self) -> &'static str {
        match self {
            Part::Lin => "lin",
            Part::Osc1 => "osc1",
            Part::Osc2 => "osc2",
            Part::Osc3 => "osc3",
            Part::Cor => "cor",
            Part::Pre => "pre",
            Part::Com => "com",
        }
    }
}

/// Reynolds parts at one sample, in the order of [`Part::ALL`].
#[derive(Debug, Clone)]
pub struct ReynoldsSample {
    pub parts: Vec<Field>,
}

impl ReynoldsSample {
    pub fn part(&self, p: Part) -> &Field {
        &self.parts[p as usize]
    }

    pub fn total(&self) -> Field {
        let mut t = self.parts[0].clone();
        for p in &self.parts[1..] {
            t.add_assign(p);
        }
        t
    }

    /// Relative defect of `X = R div X` for the sum of the parts generated
    /// by the inverse divergence (everything except the commutator).
    pub fn range_defect(&self, engine: &Engine) -> f64 {
        let mut x = self.total();
        x.sub_assign(self.part(Part::Com));
        let scale = x.sup_norm();
        if scale == 0.0 {
            return 0.0;
        }
        r_div(engine, &x).diff(&x).sup_norm() / scale
    }
}

/// Fields of one sample that the assembler needs.
pub struct AssemblyInput<'a> {
    pub rho_l: &'a Field,
    pub m_l: &'a Field,
    pub r_com: &'a Field,
    pub amps: &'a SampleAmplitudes,
    pub pert: &'a SamplePerturbation,
    /// Density perturbation at this sample.
    pub z: &'a Field,
}

/// Assembles all parts of the new stress at one sample.
pub fn assemble_sample(
    engine: &Engine,
    physics: &Physics,
    law: &PressureLaw,
    mode: Mode,
    blocks: &BuildingBlocks,
    sigma: f64,
    input: &AssemblyInput<'_>,
) -> Result<ReynoldsSample> {
    let space = engine.space();
    let zero = || Field::zeros(space, FieldKind::SymTensor);
    let p = input.pert;
    let mut parts: Vec<Field> = (0..Part::ALL.len()).map(|_| zero()).collect();
    parts[Part::Com as usize] = input.r_com.clone();
    if p.is_zero() && input.z.max_abs() == 0.0 {
        return Ok(ReynoldsSample { parts });
    }
    let w = p.total();
    let wco = p.wc.sum(&p.wo);
    let project = |s: &mut Spectrum| {
        if mode == Mode::Incompressible {
            leray_spec(engine, s);
        }
    };

    // Oscillation parts 1 and 2.
    let mut osc1 = Spectrum::zeros(space, FieldKind::Vector);
    let mut osc2 = Spectrum::zeros(space, FieldKind::Vector);
    for (k, mikado) in blocks.mikados.iter().enumerate() {
        let dir = &mikado.direction;
        let g = p.temporal.g[k];
        let h = p.temporal.h[k];
        let ka = engine.directional_spec(&engine.forward_scalar(input.amps.big_a[k].comp(0)), dir);
        if g != 0.0 {
            let ka_field = Field::from_data(space, FieldKind::Scalar, engine.inverse_scalar(&ka))?;
            // phi^2 X as two products: a truncated phi^2 would lose its Nyquist harmonic.
            let mut osc = engine.product(&mikado.phi, &engine.product(&mikado.phi, &ka_field));
            osc.sub_assign(&ka_field);
            osc1.axpy(g * g, &engine.forward(&along(&osc, dir)));
        }
        if h != 0.0 {
            let kad = engine.directional_spec(&engine.forward_scalar(input.amps.big_a_dot[k].comp(0)), dir);
            let kad_field = Field::from_data(space, FieldKind::Scalar, engine.inverse_scalar(&kad))?;
            osc2.axpy(-h / sigma, &engine.forward(&along(&kad_field, dir)));
        }
    }
    project(&mut osc1);
    project(&mut osc2);
    parts[Part::Osc1 as usize] = r_of(engine, &osc1);
    parts[Part::Osc2 as usize] = r_of(engine, &osc2);

    let rate = p.wp_dot.sum(&p.wc_dot);
    let mut lin = engine.forward(&rate);
    match mode {
        Mode::Compressible => {
            let inv_l = reciprocal(input.rho_l)?;
            let rho_n = input.rho_l.sum(input.z);
            let inv_n = reciprocal(&rho_n)?;
            let dinv = inv_n.diff(&inv_l);
            let mut v = engine.product(&inv_l, &w);
            v.add_assign(&engine.product(&dinv, input.m_l));
            v.add_assign(&engine.product(&dinv, &w));
            lin.add_assign(&viscous_spec(engine, physics, &engine.forward(&v))?);
            let mut flux = engine.weighted_outer(Some(&inv_n), input.m_l, &w).scaled(2.0);
            flux.add_assign(&engine.weighted_outer(Some(&dinv), input.m_l, input.m_l));
            lin.add_assign(&engine.div_sym_spec(&engine.forward(&flux)));

            let osc3 = engine.weighted_outer(Some(&dinv), &w, &w);
            parts[Part::Osc3 as usize] = r_of(engine, &engine.div_sym_spec(&engine.forward(&osc3)));

            let mut cor = engine.weighted_outer(Some(&inv_l), &p.wp, &wco).scaled(2.0);
            cor.add_assign(&engine.weighted_outer(Some(&inv_l), &wco, &wco));
            parts[Part::Cor as usize] = r_of(engine, &engine.div_sym_spec(&engine.forward(&cor)));

            if !law.is_constant() {
                let dp = law.apply(&rho_n).diff(&law.apply(input.rho_l));
                parts[Part::Pre as usize] = r_of(engine, &engine.grad_spec(&engine.forward_scalar(dp.comp(0))));
            }
        }
        Mode::Incompressible => {
            let mut visc = engine.forward(&w);
            engine.fractional_laplacian_spec(&mut visc, physics.alpha)?;
            visc.scale(physics.mu);
            lin.add_assign(&visc);
            let flux = engine.weighted_outer(None, input.m_l, &w).scaled(2.0);
            lin.add_assign(&engine.div_sym_spec(&engine.forward(&flux)));

            let mut cor = engine.weighted_outer(None, &p.wp, &wco).scaled(2.0);
            cor.add_assign(&engine.weighted_outer(None, &wco, &wco));
            let mut cs = engine.div_sym_spec(&engine.forward(&cor));
            leray_spec(engine, &mut cs);
            parts[Part::Cor as usize] = r_of(engine, &cs);
        }
    }
    project(&mut lin);
    parts[Part::Lin as usize] = r_of(engine, &lin);
    Ok(ReynoldsSample { parts })
}

/// Per-part sup norms over the time grid and their `L^1_t C_x` norms.
#[derive(Debug, Clone, Serialize)]
pub struct PartNorms {
    pub part: Part,
    pub sup: Vec<f64>,
    pub l1: f64,
}

/// Measurements of the decomposition; the summed stress itself becomes part of the next state.
#[derive(Debug, Clone, Serialize)]
pub struct ReynoldsDecomposition {
    pub parts: Vec<PartNorms>,
    /// `|R div X - X| / |X|` per sample for the non-commutator parts.
    pub range_defect: Vec<f64>,
}

impl ReynoldsDecomposition {
    pub fn new(grid: Grid) -> Self {
        Self {
            parts: Part::ALL
                .iter()
                .map(|&part| PartNorms { part, sup: Vec::with_capacity(grid.n_t), l1: 0.0 })
                .collect(),
            range_defect: Vec::with_capacity(grid.n_t),
        }
    }

    pub fn record(&mut self, engine: &Engine, sample: &ReynoldsSample) {
        for (pn, f) in self.parts.iter_mut().zip(&sample.parts) {
            pn.sup.push(f.sup_norm());
        }
        self.range_defect.push(sample.range_defect(engine));
    }

    pub fn finish(&mut self, dt: f64) {
        for pn in &mut self.parts {
            pn.l1 = lp_time(&pn.sup, dt, 1.0);
        }
    }

    pub fn get(&self, part: Part) -> &PartNorms {
        &self.parts[part as usize]
    }
}

/// `R(theta cos(lambda xi . x) e_1)` measured in `C^eps` across a frequency ladder.
pub fn stationary_phase_probe(
    engine: &Engine,
    theta: &Field,
    xi: &[i64],
    ladder: &[f64],
    eps: f64,
) -> Result<ScalingReport> {
    let space = engine.space();
    let d = space.dim;
    let mut values = Vec::new();
    let mut sups = Vec::new();
    for &lambda in ladder {
        if lambda.fract() != 0.0 {
            return Err(CiwError::InvalidArgument(format!("lambda = {lambda} must be an integer")));
        }
        let freq: Vec<f64> = xi.iter().map(|&v| v as f64 * lambda).collect();
        if freq.iter().any(|f| 2.0 * f.abs() + 4.0 > space.n as f64) {
            return Err(CiwError::Unresolvable {
                what: format!("stationary phase at lambda = {lambda}"),
                required_n: (2.0 * freq.iter().fold(0.0f64, |m, f| m.max(f.abs())) + 4.0) as usize,
                n: space.n,
            });
        }
        let wave = Field::scalar_fn(space, |x| (0..d).map(|a| freq[a] * x[a]).sum::<f64>().cos());
        let mut e1 = vec![0.0; d];
        e1[0] = 1.0;
        let v = along(&engine.product(theta, &wave), &e1);
        let spec = engine.forward(&v);
        let rv = r_of(engine, &spec);
        // Half a carrier wavelength fits in the Hölder window.
        let window = ((space.n as f64 / (2.0 * lambda)) as usize).clamp(2, space.n / 2);
        values.push(holder_norm(engine, &rv, 0, eps, window)?);
        sups.push(rv.sup_norm());
    }
    let mut rep = ScalingReport::new("stationary_phase");
    rep.series.push(ScalingSeries::new(
        "holder_norm",
        "lambda",
        ladder.to_vec(),
        values,
        SlopeRule::Within { target: -(1.0 - eps), tolerance: 0.1 },
    )?);
    rep.series.push(ScalingSeries::new("sup_norm", "lambda", ladder.to_vec(), sups, SlopeRule::Report)?);
    Ok(rep)
}

/// Lacunary Fourier series `sum_j 2^{-j beta} cos(2^j s + j)`, normalized by its
/// coefficient sum; `C^beta` down to the scale `2^{-levels}`.
pub fn lacunary(s: f64, beta: f64, levels: u32) -> f64 {
    let mut acc = 0.0;
    let mut norm = 0.0;
    for j in 0..=levels {
        let c = 2f64.powf(-(j as f64) * beta);
        acc += c * ((1u64 << j) as f64 * s + j as f64).cos();
        norm += c;
    }
    acc / norm
}

/// Synthetic rough solution of the continuity equation: density and momentum
/// translate rigidly with speed `speed` along the first axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoughTransport {
    pub beta: f64,
    pub speed: f64,
    pub density_amplitude: f64,
    pub shear_amplitude: f64,
}

impl Default for RoughTransport {
    fn default() -> Self {
        Self { beta: 0.5, speed: 1.0, density_amplitude: 0.3, shear_amplitude: 0.5 }
    }
}

impl RoughTransport {
    fn levels(space: Space) -> u32 {
        ((space.n / 4) as f64).log2().floor() as u32
    }

    /// `(rho_0, m_0)` at `t = 0`.
    pub fn initial(&self, space: Space) -> (Field, Field) {
        let l = Self::levels(space);
        let d = space.dim;
        let b = self.beta;
        let rho = Field::scalar_fn(space, |x| {
            let mut v = 2.0 + self.density_amplitude * lacunary(x[0], b, l);
            v += 0.5 * self.density_amplitude * lacunary(x[1] + 0.7, b, l);
            v
        });
        let shear = Field::vector_fn(space, |x| {
            let mut out = [0.0; 3];
            out[0] = self.shear_amplitude * lacunary(x[1] + 2.0, b, l);
            out[1] = self.shear_amplitude * lacunary(x[0] + 1.3, b, l);
            if d == 3 {
                out[2] = self.shear_amplitude * lacunary(x[0] - x[1], b, l);
            }
            out
        });
        let mut e1 = vec![0.0; d];
        e1[0] = self.speed;
        let mut m = along(&rho, &e1);
        m.add_assign(&shear);
        (rho, m)
    }
}

/// Per-axis tables of the spatial and temporal bump symbols, indexed by FFT slot.
struct TransportSymbols {
    spatial: Vec<f64>,
    temporal: Vec<f64>,
}

impl TransportSymbols {
    fn new(space: Space, speed: f64, radius: f64) -> Self {
        let table = |scale: f64| -> Vec<f64> {
            (0..space.n)
                .map(|k| match space.wavenumber(k) {
                    // The engine drops the Nyquist wavenumber, so it carries symbol 1.
                    w if w == 0 || k == space.n / 2 => 1.0,
                    w => bump_fourier(scale * w.abs() as f64),
                })
                .collect()
        };
        Self { spatial: table(radius), temporal: table(radius * speed) }
    }
}

/// Fourier multiplier of translation by `shift` along the first axis combined with
/// space-time mollification for a rigid motion.
fn transport_multiplier(engine: &Engine, symbols: &TransportSymbols, shift: f64) -> Vec<num_complex::Complex64> {
    let space = engine.space();
    let d = space.dim;
    (0..space.len())
        .map(|idx| {
            let slots = space.unflatten(idx);
            let mut m = symbols.temporal[slots[0]];
            for &k in slots.iter().take(d) {
                m *= symbols.spatial[k];
            }
            num_complex::Complex64::from_polar(m, -engine.xi(idx)[0] * shift)
        })
        .collect()
}

fn apply_multiplier(engine: &Engine, base: &Spectrum, mult: &[num_complex::Complex64]) -> Field {
    let mut s = base.clone();
    for c in 0..s.ncomp() {
        for (v, m) in s.comp_mut(c).iter_mut().zip(mult) {
            *v *= *m;
        }
    }
    engine.inverse(&s)
}

/// Reynolds stress of the space-time mollified rough solution at scale
/// `1/lambda_n` with viscosities scaled by `lambda_n^{-2}`; returns the total
/// and its four terms (pressure, viscous, bulk, flux commutators), as sup norms per sample.
pub fn euler_mollification_stress(
    engine: &Engine,
    grid: Grid,
    data: &RoughTransport,
    law: &PressureLaw,
    physics: &Physics,
    lambda_n: f64,
) -> Result<Vec<[f64; 5]>> {
    let space = engine.space();
    let (rho0, m0) = data.initial(space);
    // Continuity holds exactly for a rigid translation; check the discrete statement anyway.
    let cont = engine.div(&m0).diff(&engine.derivative(&rho0, &[1, 0, 0][..space.dim])?.scaled(data.speed));
    if cont.sup_norm() > 1e-8 * engine.div(&m0).sup_norm().max(1.0) {
        return Err(CiwError::Continuity { residual: cont.sup_norm(), tolerance: 1e-8 });
    }
    let inv0 = reciprocal(&rho0)?;
    let base_rho = engine.forward(&rho0);
    let base_m = engine.forward(&m0);
    let base_p = engine.forward(&law.apply(&rho0));
    let base_q = engine.forward(&engine.weighted_outer(Some(&inv0), &m0, &m0));
    let symbols = TransportSymbols::new(space, data.speed, 1.0 / lambda_n);
    let scale = lambda_n.powi(-2);
    let visc = Physics { alpha: physics.alpha, mu: physics.mu * scale, nu: physics.nu * scale };
    grid.times()
        .par_iter()
        .map(|&t| {
            let mult = transport_multiplier(engine, &symbols, data.speed * t);
            let rho = apply_multiplier(engine, &base_rho, &mult);
            let m = apply_multiplier(engine, &base_m, &mult);
            let p_n = apply_multiplier(engine, &base_p, &mult);
            let q_n = apply_multiplier(engine, &base_q, &mult);
            let inv = reciprocal(&rho)?;
            let v = engine.forward(&engine.product(&inv, &m));
            let dp = law.apply(&rho).diff(&p_n);
            let k1 = r_of(engine, &engine.grad_spec(&engine.forward_scalar(dp.comp(0))));
            let mut lap = v.clone();
            engine.fractional_laplacian_spec(&mut lap, visc.alpha)?;
            lap.scale(visc.mu);
            let k2 = r_of(engine, &lap);
            let mut bulk = engine.grad_spec(&engine.div_spec(&v));
            bulk.scale(-(visc.mu + visc.nu));
            let k3 = r_of(engine, &bulk);
            let k4 = engine.weighted_outer(Some(&inv), &m, &m).diff(&q_n);
            let mut total = k1.sum(&k2);
            total.add_assign(&k3);
            total.add_assign(&k4);
            Ok([total.sup_norm(), k1.sup_norm(), k2.sup_norm(), k3.sup_norm(), k4.sup_norm()])
        })
        .collect()
}

/// `||R_n||_{L^1_t C_x}` across a `lambda_n` ladder, with a per-term breakdown.
pub fn euler_mollification_probe(
    engine: &Engine,
    grid: Grid,
    data: &RoughTransport,
    law: &PressureLaw,
    physics: &Physics,
    ladder: &[f64],
) -> Result<ScalingReport> {
    let names = ["total", "pressure", "viscous", "bulk", "flux"];
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for &lambda_n in ladder {
        let per = euler_mollification_stress(engine, grid, data, law, physics, lambda_n)?;
        for (c, s) in series.iter_mut().enumerate() {
            let col: Vec<f64> = per.iter().map(|v| v[c]).collect();
            s.push(lp_time(&col, grid.dt(), 1.0));
        }
    }
    let mut rep = ScalingReport::new("euler_vanishing");
    let decreasing = series[0].windows(2).all(|w| w[1] < w[0]);
    rep.extras.push(("strictly_decreasing".into(), if decreasing { 1.0 } else { 0.0 }));
    for (name, values) in names.iter().zip(series) {
        let rule = if *name == "total" { SlopeRule::AtMost { bound: -0.3 } } else { SlopeRule::Report };
        if values.iter().all(|v| *v > 0.0) {
            rep.series.push(ScalingSeries::new(name, "lambda_n", ladder.to_vec(), values, rule)?);
        } else {
            rep.extras.push((format!("{name}_vanishes"), 1.0));
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{residual_check, sample_residual, TransportData};

    fn physics() -> Physics {
        Physics { alpha: 0.5, mu: 0.01, nu: 0.005 }
    }

    #[test]
    fn constant_state_has_zero_commutator() {
        let grid = Grid::new(2, 16, 9, 1.0).unwrap();
        let engine = Engine::new(grid.space);
        let rho = TimeField::new(
            grid,
            FieldKind::Scalar,
            vec![Field::constant(grid.space, 1.5); 9],
            Some(vec![Field::zeros(grid.space, FieldKind::Scalar); 9]),
        )
        .unwrap();
        let state = RelaxedState::new(
            0,
            Mode::Compressible,
            rho,
            TimeField::zeros(grid, FieldKind::Vector, true),
            TimeField::zeros(grid, FieldKind::SymTensor, false),
        )
        .unwrap();
        let moll = Mollifier::new(grid, 0.5, 0.2).unwrap();
        let out = mollify_state(&engine, &physics(), &PressureLaw::default(), &state, &moll).unwrap();
        assert!(out.r_com.max_sup() < 1e-12);
    }

    #[test]
    fn mollified_state_is_relaxed_with_commutator() {
        for mode in [Mode::Compressible, Mode::Incompressible] {
            let grid = Grid::new(2, 16, 17, 1.0).unwrap();
            let engine = Engine::new(grid.space);
            let law = PressureLaw::default();
            let (rho, m) = TransportData::default().sample(&engine, grid, mode).unwrap();
            let st = crate::state::init_from_transport(&engine, rho, m, &physics(), &law, mode).unwrap();
            let moll = Mollifier::new(grid, 0.4, 0.15).unwrap();
            let out = mollify_state(&engine, &physics(), &law, &st, &moll).unwrap();
            let s = &out.state;
            for i in 0..grid.n_t {
                let r = s.r.value(i).sum(out.r_com.value(i));
                let res = sample_residual(
                    &engine,
                    &physics(),
                    &law,
                    mode,
                    s.rho.value(i),
                    s.rho.rate(i).unwrap(),
                    s.m.value(i),
                    s.m.rate(i).unwrap(),
                    &r,
                )
                .unwrap();
                assert!(res.continuity < 1e-12 && res.momentum < 1e-10, "{mode:?} {i} {res:?}");
            }
            let _ = residual_check(&engine, &physics(), &law, s).unwrap();
        }
    }

    #[test]
    fn single_mode_commutator_matches_symbol_oracle() {
        // Shear m = (cos y, 0): the xx entry of the flux commutator is
        // (s(1)^2 - 1) / 2 + (s(1)^2 - s(2)) cos(2y) / 2, s the one-dimensional symbol.
        let grid = Grid::new(2, 16, 3, 1.0).unwrap();
        let engine = Engine::new(grid.space);
        let ell = 0.3;
        let m = Field::vector_fn(grid.space, |x| [x[1].cos(), 0.0, 0.0]);
        let moll = Mollifier::new(grid, ell, 0.0).unwrap();
        let ml = moll.spatial(&engine, &m);
        let flux = moll.spatial(&engine, &engine.weighted_outer(None, &m, &m));
        let comm = engine.weighted_outer(None, &ml, &ml).diff(&flux);
        let (s1, s2) = (bump_fourier(ell), bump_fourier(2.0 * ell));
        let oracle =
            Field::scalar_fn(grid.space, |x| 0.5 * (s1 * s1 - 1.0) + 0.5 * (s1 * s1 - s2) * (2.0 * x[1]).cos());
        assert!(
            Field::from_data(grid.space, FieldKind::Scalar, comm.comp(0).to_vec()).unwrap().diff(&oracle).max_abs()
                < 1e-13
        );
    }

    #[test]
    fn stationary_phase_pure_mode_decays_exactly() {
        let space = Space::new(2, 64).unwrap();
        let engine = Engine::new(space);
        let rep =
            stationary_phase_probe(&engine, &Field::constant(space, 1.0), &[1, 0], &[4.0, 8.0, 16.0], 0.1).unwrap();
        let s = rep.get("sup_norm").unwrap();
        assert!((s.fit.slope + 1.0).abs() < 1e-10);
    }

    #[test]
    fn euler_probe_trivial_state_vanishes() {
        let grid = Grid::new(2, 16, 3, 1.0).unwrap();
        let engine = Engine::new(grid.space);
        let data = RoughTransport { density_amplitude: 0.0, shear_amplitude: 0.0, speed: 0.0, beta: 0.5 };
        let per = euler_mollification_stress(&engine, grid, &data, &PressureLaw::default(), &physics(), 4.0).unwrap();
        for v in per {
            assert!(v[0] < 1e-12);
        }
    }
}
