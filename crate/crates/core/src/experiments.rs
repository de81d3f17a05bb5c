//! Parameter ladders: each experiment measures one quantity across a ladder
//! of `lambda`, `tau`, `sigma` or `ell` and fits a log-log slope.

use serde::{Deserialize, Serialize};

use crate::blocks::{mikado_family, SpatialProfile, TemporalProfile};
use crate::error::{CiwError, Result};
use crate::field::{Field, FieldKind};
use crate::fit::{ScalingReport, ScalingSeries, SlopeRule};
use crate::geometry::{pack, DirectionSet};
use crate::grid::{Grid, Space};
use crate::ledger::Physics;
use crate::mollify::Mollifier;
use crate::norms::{lp_space, lp_time};
use crate::perturbation::{along, directional};
use crate::quad::simpson_fn;
use crate::reynolds::{euler_mollification_probe, mollify_state, stationary_phase_probe, RoughTransport};
use crate::spectral::Engine;
use crate::state::{init_from_transport, r_of, Mode, PressureLaw, TransportData};

/// Names accepted by [`run_experiment`].
pub const EXPERIMENTS: [&str; 9] =
    ["gk", "wc", "stationary_phase", "decorrelation", "wprin", "osc1", "osc2", "commutator", "euler_vanishing"];

/// Ladders and fixed parameters of the scaling experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    /// Experiments run by the scaling-laws scenario.
    pub experiments: Vec<String>,
    pub dim: usize,
    pub tau_ladder: Vec<f64>,
    pub sigma: f64,
    pub gk_exponents: Vec<f64>,
    pub wc_n: usize,
    pub wc_lambda: Vec<f64>,
    pub wc_harmonic_cap: usize,
    pub phase_n: usize,
    pub phase_lambda: Vec<f64>,
    pub phase_epsilon: f64,
    pub decorrelation_sigma: Vec<f64>,
    pub decorrelation_p: f64,
    pub wprin_n: usize,
    pub wprin_lambda: f64,
    pub wprin_p: f64,
    pub osc1_n: usize,
    pub osc1_lambda: Vec<f64>,
    pub osc2_n: usize,
    pub osc2_sigma: Vec<f64>,
    pub osc2_tau: f64,
    pub commutator_n: usize,
    pub commutator_n_t: usize,
    pub commutator_ell: Vec<f64>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            experiments: EXPERIMENTS.iter().map(|s| s.to_string()).collect(),
            dim: 2,
            tau_ladder: vec![4.0, 16.0, 64.0],
            sigma: 2.0,
            gk_exponents: vec![1.0, 2.0, 4.0],
            wc_n: 256,
            wc_lambda: vec![4.0, 8.0, 16.0],
            wc_harmonic_cap: 1,
            phase_n: 256,
            phase_lambda: vec![8.0, 16.0, 32.0, 64.0],
            phase_epsilon: 0.1,
            decorrelation_sigma: vec![4.0, 16.0, 64.0],
            decorrelation_p: 2.0,
            wprin_n: 128,
            wprin_lambda: 8.0,
            wprin_p: 1.0,
            osc1_n: 512,
            osc1_lambda: vec![8.0, 16.0, 32.0],
            osc2_n: 64,
            osc2_sigma: vec![2.0, 4.0, 8.0, 16.0],
            osc2_tau: 64.0,
            commutator_n: 64,
            commutator_n_t: 33,
            commutator_ell: vec![0.4, 0.2, 0.1],
        }
    }
}

/// Settings of the vanishing-viscosity probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EulerConfig {
    pub n: usize,
    pub n_t: usize,
    pub lambda: Vec<f64>,
    pub beta: f64,
    pub speed: f64,
    pub density_amplitude: f64,
    pub shear_amplitude: f64,
}

impl Default for EulerConfig {
    fn default() -> Self {
        let d = RoughTransport::default();
        Self {
            n: 512,
            n_t: 9,
            lambda: vec![8.0, 16.0, 32.0],
            beta: d.beta,
            speed: d.speed,
            density_amplitude: d.density_amplitude,
            shear_amplitude: d.shear_amplitude,
        }
    }
}

impl EulerConfig {
    pub fn data(&self) -> RoughTransport {
        RoughTransport {
            beta: self.beta,
            speed: self.speed,
            density_amplitude: self.density_amplitude,
            shear_amplitude: self.shear_amplitude,
        }
    }
}

fn ensure_ladder(name: &str, ladder: &[f64]) -> Result<()> {
    if ladder.len() < 3 {
        return Err(CiwError::Config(format!("{name} ladder needs at least 3 points (got {})", ladder.len())));
    }
    if ladder.iter().any(|v| !(*v > 0.0)) {
        return Err(CiwError::Config(format!("{name} ladder entries must be positive")));
    }
    Ok(())
}

/// `int_0^T |g_(k)|^p`, integrated pulse by pulse.
fn profile_power(tp: &TemporalProfile, k: usize, p: f64) -> f64 {
    let period = tp.horizon / tp.sigma;
    let (a, b) = tp.support_in_period(k);
    let periods = tp.sigma.round() as usize;
    (0..periods)
        .map(|j| {
            let off = j as f64 * period;
            simpson_fn(|t| tp.g(k, t).abs().powf(p), off + a, off + b, 400)
        })
        .sum()
}

/// `||g_(k)||_{L^p_t}` across a `tau` ladder.
pub fn gk_scaling(cfg: &ScalingConfig) -> Result<ScalingReport> {
    ensure_ladder("tau", &cfg.tau_ladder)?;
    let mut rep = ScalingReport::new("gk");
    for &p in &cfg.gk_exponents {
        let values = cfg
            .tau_ladder
            .iter()
            .map(|&tau| {
                let tp = TemporalProfile::new(3, 1.0, tau, cfg.sigma)?;
                Ok(profile_power(&tp, 0, p).powf(1.0 / p))
            })
            .collect::<Result<Vec<f64>>>()?;
        let rule = SlopeRule::Within { target: 0.5 - 1.0 / p, tolerance: 0.05 };
        rep.series.push(ScalingSeries::new(&format!("gk_p{p}"), "tau", cfg.tau_ladder.clone(), values, rule)?);
    }
    Ok(rep)
}

/// `max_k ||W^c_(k)||_{C^0}` across a `lambda` ladder, with the number of
/// harmonics held fixed so that only the frequency changes.
pub fn wc_scaling(cfg: &ScalingConfig) -> Result<ScalingReport> {
    ensure_ladder("lambda", &cfg.wc_lambda)?;
    let space = Space::new(cfg.dim, cfg.wc_n)?;
    let engine = Engine::new(space);
    let ds = DirectionSet::build(cfg.dim)?;
    let profile = SpatialProfile::new(cfg.dim, 0.5)?;
    let mut values = Vec::new();
    for &lambda in &cfg.wc_lambda {
        let fam = mikado_family(&engine, &ds, lambda, &profile, Some(cfg.wc_harmonic_cap))?;
        values.push(fam.iter().map(|m| m.potential_matrix().max_abs()).fold(0.0, f64::max));
    }
    let mut rep = ScalingReport::new("wc");
    rep.series.push(ScalingSeries::new(
        "wc_sup",
        "lambda",
        cfg.wc_lambda.clone(),
        values,
        SlopeRule::Within { target: -1.0, tolerance: 0.05 },
    )?);
    Ok(rep)
}

/// Stationary phase with `theta = 1 + cos(x_1) / 2`.
pub fn phase_scaling(cfg: &ScalingConfig) -> Result<ScalingReport> {
    ensure_ladder("lambda", &cfg.phase_lambda)?;
    let space = Space::new(cfg.dim, cfg.phase_n)?;
    let engine = Engine::new(space);
    let theta = Field::scalar_fn(space, |x| 1.0 + 0.5 * x[0].cos());
    let mut xi = vec![0i64; cfg.dim];
    xi[0] = 1;
    stationary_phase_probe(&engine, &theta, &xi, &cfg.phase_lambda, cfg.phase_epsilon)
}

/// Defect `| ||f g(sigma .)||_{L^p} - ||f||_{L^p} ||g||_{L^p} |` on [0, 1] for a
/// smooth `f` and a concentrated periodic `g`. A trigonometric polynomial
/// `f` would decorrelate exactly once `sigma` exceeds its degree, so `f` is
/// taken non-periodic on [0, 1].
pub fn decorrelation_scaling(cfg: &ScalingConfig) -> Result<ScalingReport> {
    ensure_ladder("sigma", &cfg.decorrelation_sigma)?;
    let p = cfg.decorrelation_p;
    let tp = TemporalProfile::new(3, 1.0, 4.0, 1.0)?;
    let f = |t: f64| 1.0 + t;
    let (a, b) = tp.support_in_period(0);
    let g_norm = simpson_fn(|s| tp.g(0, s).abs().powf(p), a, b, 2000).powf(1.0 / p);
    let f_norm = simpson_fn(|t| f(t).abs().powf(p), 0.0, 1.0, 2000).powf(1.0 / p);
    let mut values = Vec::new();
    for &sigma in &cfg.decorrelation_sigma {
        if sigma.fract() != 0.0 {
            return Err(CiwError::Config(format!("decorrelation sigma = {sigma} must be an integer")));
        }
        let periods = sigma as usize;
        let mut acc = 0.0;
        for j in 0..periods {
            let off = j as f64 / sigma;
            acc += simpson_fn(|t| (f(t) * tp.g(0, sigma * t)).abs().powf(p), off + a / sigma, off + b / sigma, 400);
        }
        values.push((acc.powf(1.0 / p) - f_norm * g_norm).abs());
    }
    let mut rep = ScalingReport::new("decorrelation");
    rep.series.push(ScalingSeries::new(
        "defect",
        "sigma",
        cfg.decorrelation_sigma.clone(),
        values,
        SlopeRule::AtMost { bound: -0.4 },
    )?);
    Ok(rep)
}

/// Amplitudes `A_(k) = gamma_k(Id - S(x))^2` for a fixed smooth symmetric
/// field `S` of Frobenius size at most `eps_u / 2`.
pub fn frozen_amplitudes(space: Space, ds: &DirectionSet) -> Result<Vec<Field>> {
    let d = space.dim;
    let mut out: Vec<Field> = (0..ds.len()).map(|_| Field::zeros(space, FieldKind::Scalar)).collect();
    let scale = 0.5 * ds.eps_u / (d as f64);
    for idx in 0..space.len() {
        let x = space.point(idx);
        let s = pack(d, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            let bump = ((i + 1) as f64 * x[i] + (j as f64) * x[j] + 0.3 * (i + j) as f64).cos();
            id - scale * bump
        });
        let gamma = ds.gamma(&s)?;
        for (k, g) in gamma.iter().enumerate() {
            out[k].comp_mut(0)[idx] = g * g;
        }
    }
    Ok(out)
}

/// `||w^p||_{L^p_t L^2_x}` across a `tau` ladder with frozen amplitudes.
pub fn wprin_scaling(cfg: &ScalingConfig) -> Result<ScalingReport> {
    ensure_ladder("tau", &cfg.tau_ladder)?;
    let space = Space::new(cfg.dim, cfg.wprin_n)?;
    let engine = Engine::new(space);
    let ds = DirectionSet::build(cfg.dim)?;
    let profile = SpatialProfile::new(cfg.dim, 0.5)?;
    let fam = mikado_family(&engine, &ds, cfg.wprin_lambda, &profile, None)?;
    let amps = frozen_amplitudes(space, &ds)?;
    let spatial: Vec<f64> = fam
        .iter()
        .zip(&amps)
        .map(|(m, a)| lp_space(&along(&engine.product(&a.map(f64::sqrt), &m.phi), &m.direction), 2.0))
        .collect();
    let p = cfg.wprin_p;
    let values = cfg
        .tau_ladder
        .iter()
        .map(|&tau| {
            let tp = TemporalProfile::new(ds.len(), 1.0, tau, cfg.sigma)?;
            let acc: f64 = spatial.iter().enumerate().map(|(k, w)| w.powf(p) * profile_power(&tp, k, p)).sum();
            Ok(acc.powf(1.0 / p))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut rep = ScalingReport::new("wprin");
    rep.series.push(ScalingSeries::new(
        &format!("wp_l{p}t_l2x"),
        "tau",
        cfg.tau_ladder.clone(),
        values,
        SlopeRule::Within { target: 0.5 - 1.0 / p, tolerance: 0.05 },
    )?);
    Ok(rep)
}

/// `||R_osc.1||_{L^1_t C_x}` across a `lambda` ladder with frozen amplitudes.
/// The temporal profiles have disjoint supports and unit mean square, so the
/// norm is `T sum_k ||R((phi_k^2 - 1)(k . grad A_k) k)||_{C}`.
pub fn osc1_scaling(cfg: &ScalingConfig) -> Result<ScalingReport> {
    ensure_ladder("lambda", &cfg.osc1_lambda)?;
    let space = Space::new(cfg.dim, cfg.osc1_n)?;
    let engine = Engine::new(space);
    let ds = DirectionSet::build(cfg.dim)?;
    let profile = SpatialProfile::new(cfg.dim, 0.5)?;
    let amps = frozen_amplitudes(space, &ds)?;
    let mut values = Vec::new();
    for &lambda in &cfg.osc1_lambda {
        let fam = mikado_family(&engine, &ds, lambda, &profile, None)?;
        let mut total = 0.0;
        for (m, a) in fam.iter().zip(&amps) {
            let ka = directional(&engine, a, &m.direction);
            let mut osc = engine.product(&m.phi, &engine.product(&m.phi, &ka));
            osc.sub_assign(&ka);
            total += r_of(&engine, &engine.forward(&along(&osc, &m.direction))).sup_norm();
        }
        values.push(total);
    }
    let mut rep = ScalingReport::new("osc1");
    rep.series.push(ScalingSeries::new(
        "osc1_l1t_cx",
        "lambda",
        cfg.osc1_lambda.clone(),
        values,
        SlopeRule::AtMost { bound: -0.7 },
    )?);
    Ok(rep)
}

/// `||R_osc.2||_{L^1_t C_x}` across a `sigma` ladder, for amplitudes
/// `A_(k)(t, x) = A_(k)(x) (1 + sin(2 pi t) / 2)`.
pub fn osc2_scaling(cfg: &ScalingConfig) -> Result<ScalingReport> {
    ensure_ladder("sigma", &cfg.osc2_sigma)?;
    let space = Space::new(cfg.dim, cfg.osc2_n)?;
    let engine = Engine::new(space);
    let ds = DirectionSet::build(cfg.dim)?;
    let amps = frozen_amplitudes(space, &ds)?;
    let fields: Vec<Field> = amps
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let dir = ds.directions[k].unit();
            r_of(&engine, &engine.forward(&along(&directional(&engine, a, &dir), &dir)))
        })
        .collect();
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut values = Vec::new();
    for &sigma in &cfg.osc2_sigma {
        let tp = TemporalProfile::new(ds.len(), 1.0, cfg.osc2_tau, sigma)?;
        let steps = (64.0 * cfg.osc2_tau * sigma) as usize;
        let dt = 1.0 / steps as f64;
        let sup: Vec<f64> = (0..=steps)
            .map(|i| {
                let t = i as f64 * dt;
                let rate = 0.5 * two_pi * (two_pi * t).cos();
                let h: Vec<f64> = (0..ds.len()).map(|k| tp.h(k, t)).collect();
                let mut worst: f64 = 0.0;
                for x in 0..fields[0].data().len() {
                    let v: f64 = fields.iter().zip(&h).map(|(f, hk)| hk * f.data()[x]).sum();
                    worst = worst.max(v.abs());
                }
                worst * rate.abs() / sigma
            })
            .collect();
        values.push(lp_time(&sup, dt, 1.0));
    }
    let mut rep = ScalingReport::new("osc2");
    rep.series.push(ScalingSeries::new(
        "osc2_l1t_cx",
        "sigma",
        cfg.osc2_sigma.clone(),
        values,
        SlopeRule::Within { target: -1.0, tolerance: 0.15 },
    )?);
    Ok(rep)
}

/// `||R_com||_{L^1_t C_x}` of a smooth relaxed state across an `ell` ladder.
pub fn commutator_scaling(cfg: &ScalingConfig, physics: &Physics, law: &PressureLaw) -> Result<ScalingReport> {
    ensure_ladder("ell", &cfg.commutator_ell)?;
    let grid = Grid::new(cfg.dim, cfg.commutator_n, cfg.commutator_n_t, 1.0)?;
    let engine = Engine::new(grid.space);
    let (rho, m) = TransportData::default().sample(&engine, grid, Mode::Compressible)?;
    let state = init_from_transport(&engine, rho, m, physics, law, Mode::Compressible)?;
    let mut values = Vec::new();
    for &ell in &cfg.commutator_ell {
        let mollifier = Mollifier::new(grid, ell, ell)?;
        let out = mollify_state(&engine, physics, law, &state, &mollifier)?;
        values.push(lp_time(&out.r_com.sup_norms(), grid.dt(), 1.0));
    }
    let mut rep = ScalingReport::new("commutator");
    rep.series.push(ScalingSeries::new(
        "rcom_l1t_cx",
        "ell",
        cfg.commutator_ell.clone(),
        values,
        SlopeRule::AtLeast { bound: 0.4 },
    )?);
    Ok(rep)
}

/// Vanishing-viscosity probe on the rough traveling wave.
pub fn euler_scaling(cfg: &EulerConfig, physics: &Physics, law: &PressureLaw) -> Result<ScalingReport> {
    ensure_ladder("lambda_n", &cfg.lambda)?;
    let grid = Grid::new(2, cfg.n, cfg.n_t, 1.0)?;
    let engine = Engine::new(grid.space);
    euler_mollification_probe(&engine, grid, &cfg.data(), law, physics, &cfg.lambda)
}

/// Runs one named experiment.
pub fn run_experiment(
    name: &str,
    cfg: &ScalingConfig,
    euler: &EulerConfig,
    physics: &Physics,
    law: &PressureLaw,
) -> Result<ScalingReport> {
    match name {
        "gk" => gk_scaling(cfg),
        "wc" => wc_scaling(cfg),
        "stationary_phase" => phase_scaling(cfg),
        "decorrelation" => decorrelation_scaling(cfg),
        "wprin" => wprin_scaling(cfg),
        "osc1" => osc1_scaling(cfg),
        "osc2" => osc2_scaling(cfg),
        "commutator" => commutator_scaling(cfg, physics, law),
        "euler_vanishing" => euler_scaling(euler, physics, law),
        other => {
            Err(CiwError::Config(format!("unknown experiment `{other}` (expected one of {})", EXPERIMENTS.join(", "))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScalingConfig {
        ScalingConfig {
            wc_n: 64,
            wc_lambda: vec![1.0, 2.0, 4.0],
            wprin_n: 64,
            wprin_lambda: 4.0,
            osc1_n: 128,
            osc1_lambda: vec![2.0, 4.0, 8.0],
            osc2_n: 32,
            osc2_sigma: vec![2.0, 4.0, 8.0],
            osc2_tau: 8.0,
            ..Default::default()
        }
    }

    #[test]
    fn gk_exponents_match_concentration() {
        let rep = gk_scaling(&small()).unwrap();
        for s in &rep.series {
            assert!(s.pass, "{} slope {}", s.name, s.fit.slope);
        }
        let l2 = rep.get("gk_p2").unwrap();
        for v in &l2.values {
            assert!((v - 1.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn wc_decays_like_inverse_frequency() {
        let rep = wc_scaling(&small()).unwrap();
        assert!((rep.series[0].fit.slope + 1.0).abs() < 1e-9);
    }

    #[test]
    fn decorrelation_defect_decays() {
        let rep = decorrelation_scaling(&small()).unwrap();
        assert!(rep.pass(), "{:?}", rep.series[0]);
    }

    #[test]
    fn wprin_follows_tau() {
        let rep = wprin_scaling(&small()).unwrap();
        assert!(rep.pass(), "{:?}", rep.series[0].fit);
    }

    #[test]
    fn small_ladders_pass() {
        for rep in [osc1_scaling(&small()).unwrap(), osc2_scaling(&small()).unwrap()] {
            assert!(rep.pass(), "{} {:?}", rep.experiment, rep.series[0]);
        }
    }

    #[test]
    fn frozen_amplitudes_reassemble() {
        let space = Space::new(2, 16).unwrap();
        let ds = DirectionSet::build(2).unwrap();
        let a = frozen_amplitudes(space, &ds).unwrap();
        for idx in 0..space.len() {
            let w: Vec<f64> = a.iter().map(|f| f.data()[idx]).collect();
            let s = ds.reassemble(&w);
            assert!((s[0] + s[2] - 2.0).abs() < 0.5 * ds.eps_u * 2.0);
        }
    }

    #[test]
    fn unknown_experiment_is_a_config_error() {
        let e = run_experiment(
            "nope",
            &small(),
            &EulerConfig::default(),
            &Physics { alpha: 0.5, mu: 0.0, nu: 0.0 },
            &PressureLaw::default(),
        );
        assert!(matches!(e, Err(CiwError::Config(_))));
    }
}
