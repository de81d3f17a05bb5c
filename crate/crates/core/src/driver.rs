//! One iteration step `q -> q+1`: mollify, build amplitudes and perturbations,
//! verify the cancellation identities, assemble the next state and its stress,
//! and check the relaxed system at the new level.

use std::time::Instant;

use serde::Serialize;

use crate::error::{CiwError, Result};
use crate::field::{Field, FieldKind};
use crate::ledger::{Level, ParameterLedger};
use crate::mollify::Mollifier;
use crate::norms::{lp_space, lp_time};
use crate::perturbation::{
    mean_defect, perturb_at, verify_at, AmplitudeBundle, BuildingBlocks, DensityIntegrator, IdentityReport,
    SamplePerturbation, TOL_MEAN,
};
use crate::report::Record;
use crate::reynolds::{assemble_sample, mollify_state, AssemblyInput, Part, ReynoldsDecomposition};
use crate::spectral::Engine;
use crate::state::{residual_check, Mode, PressureLaw, RelaxedState, ResidualReport};
use crate::timefield::TimeField;

pub const TOL_CONTINUITY: f64 = 1e-6;
pub const TOL_MOMENTUM: f64 = 1e-4;
pub const TOL_MASS: f64 = 1e-10;
pub const TOL_RANGE: f64 = 1e-8;
pub const TOL_CONTINUITY_PERTURBATION: f64 = 1e-10;

const MODULE: &str = "iteration_driver";

/// Numerical knobs of one step that are not part of the parameter ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepOptions {
    /// Support radius of the Mikado profile in the unit cell.
    pub profile_radius: f64,
    /// Largest Mikado harmonic kept, if any.
    pub harmonic_cap: Option<usize>,
    /// Simpson intervals per time step in the density integration.
    pub density_intervals: usize,
    /// Also verify the identities at the peaks of the temporal profiles.
    pub peak_probes: bool,
    /// Abort on the first identity above tolerance.
    pub strict: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { profile_radius: 0.5, harmonic_cap: None, density_intervals: 64, peak_probes: true, strict: true }
    }
}

/// Everything measured during one step.
#[derive(Debug, Clone, Serialize)]
pub struct StepDiagnostics {
    pub q: usize,
    pub mode: Mode,
    pub level: Level,
    pub records: Vec<Record>,
    pub identities: IdentityReport,
    pub reynolds: ReynoldsDecomposition,
    pub residual: ResidualReport,
    pub support_start: Option<f64>,
    pub next_support_start: Option<f64>,
    pub cutoff_support: Option<(f64, f64)>,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

impl StepDiagnostics {
    pub fn failures(&self) -> Vec<&Record> {
        self.records.iter().filter(|r| r.failed()).collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn record(&self, quantity: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.quantity == quantity && r.time_sample.is_none())
    }
}

pub struct StepOutput {
    pub next: RelaxedState,
    /// Density and momentum perturbations per sample (`z`, `w`).
    pub increments: Option<(Vec<Field>, Vec<Field>)>,
    pub diagnostics: StepDiagnostics,
}

/// Continuity defect `|div w + d_t z|` of the perturbation, relative to the
/// largest single term `d_i w_i` of the divergence.
fn perturbation_continuity(engine: &Engine, mode: Mode, p: &SamplePerturbation) -> f64 {
    let w = p.total();
    let d = engine.space().dim;
    let mut scale = p.z_dot.sup_norm();
    let mut div = Field::zeros(engine.space(), FieldKind::Scalar);
    for i in 0..d {
        let mut zeta = vec![0; d];
        zeta[i] = 1;
        let wi = Field::from_data(engine.space(), FieldKind::Scalar, w.comp(i).to_vec()).expect("component");
        let di = engine.derivative(&wi, &zeta).expect("first derivative");
        scale = scale.max(di.sup_norm());
        div.add_assign(&di);
    }
    if mode == Mode::Compressible {
        div.add_assign(&p.z_dot);
    }
    let defect = div.sup_norm();
    if scale > 0.0 {
        defect / scale
    } else {
        defect
    }
}

fn abort_on_failure(report: &IdentityReport) -> Result<()> {
    if let Some(row) = report.failures().first() {
        return Err(CiwError::Assertion { identity: row.identity.clone(), value: row.value, tolerance: row.tolerance });
    }
    Ok(())
}

/// Runs one step of the iteration on `state` with the ledger parameters of level `state.q`.
pub fn iterate_once(
    engine: &Engine,
    ledger: &ParameterLedger,
    law: &PressureLaw,
    state: &RelaxedState,
    options: &StepOptions,
    keep_increments: bool,
) -> Result<StepOutput> {
    let start = Instant::now();
    let grid = state.grid();
    let mode = state.mode;
    let q = state.q;
    let level = ledger.level(q)?;
    let physics = ledger.physics;
    let mollifier = Mollifier::new(grid, level.ell, level.ell)?;
    let moll = mollify_state(engine, &physics, law, state, &mollifier)?;
    let blocks = BuildingBlocks::build(engine, grid, &level, options.profile_radius, options.harmonic_cap)?;
    let bundle = AmplitudeBundle::build(&moll.state, &blocks.ds, &level)?;
    let ms = &moll.state;
    let mut warnings = moll.warnings.clone();

    let mut identities = IdentityReport::default();
    let mut reynolds = ReynoldsDecomposition::new(grid);
    let mut integrator = DensityIntegrator::new(grid, level.sigma, options.density_intervals);
    let (mut rho_n, mut rho_dot_n, mut m_n, mut m_dot_n, mut r_n) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut z_all = Vec::new();
    let mut w_all = Vec::new();
    let mut w_l2 = Vec::with_capacity(grid.n_t);
    let mut z_sup: f64 = 0.0;

    for i in 0..grid.n_t {
        let t = grid.time(i);
        let amps = bundle.sample(&blocks.ds, ms, i)?;
        let pert = perturb_at(engine, &blocks, mode, level.sigma, &amps);
        let z = integrator.advance(&blocks.temporal, &pert).clone();
        if !amps.is_zero() {
            let rep =
                verify_at(engine, &blocks, mode, level.sigma, &amps, &pert, ms.rho.value(i), ms.r.value(i), Some(i))?;
            identities.extend(rep);
        }
        if !pert.is_zero() {
            identities.push("mean_free", t, Some(i), mean_defect(&pert, &z), TOL_MEAN);
            identities.push(
                "continuity_perturbation",
                t,
                Some(i),
                perturbation_continuity(engine, mode, &pert),
                TOL_CONTINUITY_PERTURBATION,
            );
        }
        if options.strict {
            abort_on_failure(&identities)?;
        }
        let input = AssemblyInput {
            rho_l: ms.rho.value(i),
            m_l: ms.m.value(i),
            r_com: moll.r_com.value(i),
            amps: &amps,
            pert: &pert,
            z: &z,
        };
        let sample = assemble_sample(engine, &physics, law, mode, &blocks, level.sigma, &input)?;
        reynolds.record(engine, &sample);

        let w = pert.total();
        w_l2.push(lp_space(&w, 2.0));
        z_sup = z_sup.max(z.sup_norm());
        rho_n.push(ms.rho.value(i).sum(&z));
        rho_dot_n.push(ms.rho.rate(i).expect("density rate").sum(&pert.z_dot));
        m_n.push(ms.m.value(i).sum(&w));
        m_dot_n.push(ms.m.rate(i).expect("momentum rate").sum(&pert.total_rate()));
        r_n.push(sample.total());
        if keep_increments {
            z_all.push(z);
            w_all.push(w);
        }
    }
    reynolds.finish(grid.dt());

    if options.peak_probes {
        if let Some(cut) = &bundle.cutoff {
            let (a, b) = cut.support();
            let near = 0.5 * (a.max(0.0) + b.min(grid.horizon));
            for (_, t) in blocks.peak_instants(near) {
                let (rho, rho_dot) = mollifier.sample_at(engine, &state.rho, t);
                let (r, r_dot) = mollifier.sample_at(engine, &state.r, t);
                let amps = bundle.sample_at(&blocks.ds, t, (&rho, &rho_dot), (&r, &r_dot))?;
                if amps.is_zero() {
                    continue;
                }
                let pert = perturb_at(engine, &blocks, mode, level.sigma, &amps);
                let mut rep = verify_at(engine, &blocks, mode, level.sigma, &amps, &pert, &rho, &r, None)?;
                rep.push(
                    "continuity_perturbation",
                    t,
                    None,
                    perturbation_continuity(engine, mode, &pert),
                    TOL_CONTINUITY_PERTURBATION,
                );
                identities.extend(rep);
            }
            if options.strict {
                abort_on_failure(&identities)?;
            }
        }
    }

    let next = RelaxedState::new(
        q + 1,
        mode,
        TimeField::new(grid, FieldKind::Scalar, rho_n, Some(rho_dot_n))?,
        TimeField::new(grid, FieldKind::Vector, m_n, Some(m_dot_n))?,
        TimeField::new(grid, FieldKind::SymTensor, r_n, None)?,
    )?;
    let residual = residual_check(engine, &physics, law, &next)?;

    let mut records = Vec::new();
    let check = |quantity: &str, value: f64, tol: f64, op: &str| Record::check(q, quantity, value, tol, MODULE, op);
    let info = |quantity: &str, value: f64, op: &str| Record::info(q, quantity, value, MODULE, op);

    for name in identity_names(&identities) {
        let worst = identities.worst(&name).unwrap_or(0.0);
        let tol = identities.rows.iter().find(|r| r.identity == name).map(|r| r.tolerance).unwrap_or(0.0);
        records.push(Record::check(
            q,
            &format!("identity_{name}"),
            worst,
            tol,
            "perturbation_builder",
            "verify_cancellations",
        ));
    }
    records.push(check("continuity_residual", residual.continuity_max, TOL_CONTINUITY, "residual_check"));
    records.push(check("momentum_residual", residual.momentum_max, TOL_MOMENTUM, "residual_check"));
    for (i, s) in residual.samples.iter().enumerate() {
        records.push(check("continuity_residual", s.continuity, TOL_CONTINUITY, "residual_check").at_sample(i));
        records.push(check("momentum_residual", s.momentum, TOL_MOMENTUM, "residual_check").at_sample(i));
    }

    let masses_prev = state.masses();
    let masses_next = next.masses();
    let mass_defect = masses_prev.iter().zip(&masses_next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    records.push(check("mass_defect", mass_defect, TOL_MASS, "assemble_next_state"));

    let range_defect = reynolds.range_defect.iter().copied().fold(0.0, f64::max);
    records.push(Record::check(
        q,
        "reynolds_range_defect",
        range_defect,
        TOL_RANGE,
        "reynolds_assembler",
        "assemble_reynolds",
    ));
    for part in Part::ALL {
        let pn = reynolds.get(part);
        records.push(Record::info(
            q,
            &format!("reynolds_{}_l1c", part.name()),
            pn.l1,
            "reynolds_assembler",
            "assemble_reynolds",
        ));
    }

    let support_start = state.support_start();
    let next_support_start = next.support_start();
    if let (Some(a), Some(b)) = (support_start, next_support_start) {
        let margin = b - (a - 2.0 * level.ell);
        records.push(Record::verdict(q, "support_margin", margin, Some(0.0), margin >= -1e-12, MODULE, "iterate_once"));
    }
    let (lo, hi) = next.density_range();
    records.push(info("density_min", lo, "assemble_next_state"));
    records.push(info("density_max", hi, "assemble_next_state"));
    records.push(info("perturbation_l2t_l2x", lp_time(&w_l2, grid.dt(), 2.0), "build_perturbation"));
    records.push(info("density_increment_sup", z_sup, "build_perturbation"));
    let dm: Vec<f64> = (0..grid.n_t).map(|i| lp_space(&next.m.value(i).diff(state.m.value(i)), 2.0)).collect();
    records.push(info("momentum_deviation_l2t_l2x", lp_time(&dm, grid.dt(), 2.0), "iterate_once"));
    let dm1: Vec<f64> = (0..grid.n_t).map(|i| lp_space(&next.m.value(i).diff(state.m.value(i)), 1.0)).collect();
    records.push(info("momentum_deviation_l1t_l1x", lp_time(&dm1, grid.dt(), 1.0), "iterate_once"));
    let drho = (0..grid.n_t).map(|i| next.rho.value(i).diff(state.rho.value(i)).sup_norm()).fold(0.0, f64::max);
    records.push(info("density_deviation_sup", drho, "iterate_once"));
    records.push(info("stress_l1t_cx", lp_time(&next.r.sup_norms(), grid.dt(), 1.0), "iterate_once"));
    records.push(info("mollified_stress_l1t_cx", lp_time(&bundle.stress_norm, grid.dt(), 1.0), "mollify_state"));
    let wall = start.elapsed().as_secs_f64();

    if ledger.warnings.iter().any(|w| !warnings.contains(w)) {
        warnings.extend(ledger.warnings.iter().cloned());
    }
    let diagnostics = StepDiagnostics {
        q,
        mode,
        level,
        records,
        identities,
        reynolds,
        residual,
        support_start,
        next_support_start,
        cutoff_support: bundle.cutoff.as_ref().map(|c| c.support()),
        warnings,
        wall_time_s: wall,
    };
    let increments = keep_increments.then_some((z_all, w_all));
    Ok(StepOutput { next, increments, diagnostics })
}

fn identity_names(rep: &IdentityReport) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for row in &rep.rows {
        if !names.contains(&row.identity) {
            names.push(row.identity.clone());
        }
    }
    names
}

/// Runs `steps` iterations from `state`, stopping at the first error.
pub fn iterate(
    engine: &Engine,
    ledger: &ParameterLedger,
    law: &PressureLaw,
    state: RelaxedState,
    options: &StepOptions,
    steps: usize,
) -> Result<(RelaxedState, Vec<StepDiagnostics>)> {
    let mut current = state;
    let mut diags = Vec::with_capacity(steps);
    for _ in 0..steps {
        let out = iterate_once(engine, ledger, law, &current, options, false)?;
        diags.push(out.diagnostics);
        current = out.next;
    }
    Ok((current, diags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::ledger::Physics;
    use crate::state::{init_from_transport, TransportData};

    fn physics() -> Physics {
        Physics { alpha: 0.5, mu: 0.01, nu: 0.005 }
    }

    fn level() -> Level {
        Level { lambda: 4.0, delta_next: 0.01, ell: 0.1, tau: 4.0, sigma: 2.0 }
    }

    fn small_state(mode: Mode) -> (Engine, RelaxedState) {
        let grid = Grid::new(2, 64, 65, 1.0).unwrap();
        let engine = Engine::new(grid.space);
        let (rho, m) = TransportData::default().sample(&engine, grid, mode).unwrap();
        let st = init_from_transport(&engine, rho, m, &physics(), &PressureLaw::default(), mode).unwrap();
        (engine, st)
    }

    #[test]
    fn zero_stress_is_a_fixed_point() {
        let (engine, st) = small_state(Mode::Compressible);
        let grid = st.grid();
        let zero = RelaxedState::new(
            0,
            Mode::Compressible,
            st.rho.clone(),
            st.m.clone(),
            TimeField::zeros(grid, FieldKind::SymTensor, false),
        )
        .unwrap();
        let ledger = ParameterLedger::desk(vec![level()], physics(), 2).unwrap();
        let out =
            iterate_once(&engine, &ledger, &PressureLaw::default(), &zero, &StepOptions::default(), true).unwrap();
        let (z, w) = out.increments.unwrap();
        assert!(z.iter().all(|f| f.max_abs() == 0.0));
        assert!(w.iter().all(|f| f.max_abs() == 0.0));
        let mollifier = Mollifier::new(grid, 0.1, 0.1).unwrap();
        let rho_l = mollifier.mollify(&engine, &zero.rho).unwrap();
        for i in 0..grid.n_t {
            assert!(out.next.rho.value(i).diff(rho_l.value(i)).max_abs() < 1e-14);
        }
    }

    #[test]
    fn one_step_passes_residual_in_both_modes() {
        for mode in [Mode::Compressible, Mode::Incompressible] {
            let (engine, st) = small_state(mode);
            let ledger = ParameterLedger::desk(vec![level()], physics(), 2).unwrap();
            let out =
                iterate_once(&engine, &ledger, &PressureLaw::default(), &st, &StepOptions::default(), false).unwrap();
            let d = &out.diagnostics;
            for r in d.failures() {
                panic!("{mode:?}: {r:?}");
            }
            assert!(d.reynolds.get(Part::Osc1).l1 > 0.0);
            assert!(d.identities.rows.len() > 10);
            assert_eq!(out.next.q, 1);
        }
    }
}
