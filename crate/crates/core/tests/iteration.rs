//! One-step behaviour of the iteration on a small grid.

use ciw_core::driver::{iterate_once, StepOptions, TOL_MASS};
use ciw_core::grid::Grid;
use ciw_core::ledger::{Level, ParameterLedger, Physics};
use ciw_core::reynolds::Part;
use ciw_core::spectral::Engine;
use ciw_core::state::{init_from_transport, Mode, PressureLaw, RelaxedState, TransportData};

fn physics() -> Physics {
    Physics { alpha: 0.5, mu: 0.01, nu: 0.005 }
}

fn ledger() -> ParameterLedger {
    ParameterLedger::desk(vec![Level { lambda: 4.0, delta_next: 0.01, ell: 0.1, tau: 4.0, sigma: 2.0 }], physics(), 2)
        .unwrap()
}

fn state(grid: Grid, law: &PressureLaw, mode: Mode) -> (Engine, RelaxedState) {
    let engine = Engine::new(grid.space);
    let (rho, m) = TransportData::default().sample(&engine, grid, mode).unwrap();
    let st = init_from_transport(&engine, rho, m, &physics(), law, mode).unwrap();
    (engine, st)
}

#[test]
fn constant_pressure_has_no_pressure_stress() {
    let law = PressureLaw::Constant { value: 3.0 };
    let (engine, st) = state(Grid::new(2, 64, 65, 1.0).unwrap(), &law, Mode::Compressible);
    let out = iterate_once(&engine, &ledger(), &law, &st, &StepOptions::default(), false).unwrap();
    let pre = out.diagnostics.reynolds.get(Part::Pre);
    assert!(pre.sup.iter().all(|v| *v == 0.0));
    assert!(out.diagnostics.reynolds.get(Part::Osc1).l1 > 0.0);
    assert!(out.diagnostics.passed());
}

#[test]
fn step_conserves_mass_and_respects_supports() {
    let law = PressureLaw::default();
    let (engine, st) = state(Grid::new(2, 64, 65, 1.0).unwrap(), &law, Mode::Compressible);
    let before = st.masses();
    let out = iterate_once(&engine, &ledger(), &law, &st, &StepOptions::default(), false).unwrap();
    let after = out.next.masses();
    for (a, b) in before.iter().zip(&after) {
        assert!((a - b).abs() <= TOL_MASS);
    }
    let margin = out.diagnostics.record("support_margin").unwrap();
    assert!(!margin.failed(), "{margin:?}");
    let (lo, _) = out.next.density_range();
    assert!(lo > 0.0);
}

#[test]
fn repeated_steps_are_bit_identical() {
    let law = PressureLaw::default();
    let (engine, st) = state(Grid::new(2, 64, 65, 1.0).unwrap(), &law, Mode::Incompressible);
    let a = iterate_once(&engine, &ledger(), &law, &st, &StepOptions::default(), false).unwrap();
    let b = iterate_once(&engine, &ledger(), &law, &st, &StepOptions::default(), false).unwrap();
    let values =
        |d: &ciw_core::driver::StepDiagnostics| d.records.iter().map(|r| r.value.to_bits()).collect::<Vec<_>>();
    assert_eq!(values(&a.diagnostics), values(&b.diagnostics));
    for i in 0..st.grid().n_t {
        assert_eq!(a.next.m.value(i).data(), b.next.m.value(i).data());
    }
}

/// Halving the time step must not worsen the continuity residual of a step;
/// the frozen tolerances sit well above both values.
#[test]
fn continuity_residual_under_time_refinement() {
    let law = PressureLaw::default();
    let mut residuals = Vec::new();
    for n_t in [33, 65] {
        let (engine, st) = state(Grid::new(2, 64, n_t, 1.0).unwrap(), &law, Mode::Compressible);
        let out = iterate_once(&engine, &ledger(), &law, &st, &StepOptions::default(), false).unwrap();
        residuals.push(out.diagnostics.residual.continuity_max);
    }
    assert!(residuals[1] <= residuals[0] * 1.5 + 1e-12, "{residuals:?}");
    assert!(residuals.iter().all(|r| *r < ciw_core::driver::TOL_CONTINUITY), "{residuals:?}");
}
