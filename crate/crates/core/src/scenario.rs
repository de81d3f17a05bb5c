//! Scenario execution: builds what a [`RunConfig`] asks for, runs it and
//! writes the diagnostics CSV, the JSON reports and optional field dumps.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{RunConfig, Scenario};
use crate::driver::{iterate_once, StepDiagnostics};
use crate::dump::write_dump;
use crate::error::{CiwError, Result};
use crate::experiments::{euler_scaling, run_experiment};
use crate::fit::ScalingReport;
use crate::geometry::{DirectionSet, GeometrySummary};
use crate::grid::Space;
use crate::ledger::ParameterLedger;
use crate::report::{write_csv, write_json, Record};
use crate::spectral::Engine;
use crate::state::{init_from_transport, RelaxedState};
use crate::verify::{geometric_batch, inverse_divergence_batch};

pub const CSV_NAME: &str = "diagnostics.csv";
pub const REPORT_NAME: &str = "report.json";

/// Outcome of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub seed: u64,
    pub passed: bool,
    pub records: Vec<Record>,
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    pub fn failures(&self) -> Vec<&Record> {
        self.records.iter().filter(|r| r.failed()).collect()
    }
}

#[derive(Serialize)]
struct ReportBody<'a> {
    scenario: Scenario,
    seed: u64,
    passed: bool,
    config: &'a RunConfig,
    ledger: &'a ParameterLedger,
    records: &'a [Record],
    #[serde(skip_serializing_if = "Vec::is_empty")]
    scaling: Vec<ScalingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    geometry: Option<Vec<GeometrySummary>>,
}

#[derive(Serialize)]
struct StepBody<'a> {
    scenario: Scenario,
    step: &'a StepDiagnostics,
}

struct Outcome {
    records: Vec<Record>,
    files: Vec<PathBuf>,
    scaling: Vec<ScalingReport>,
    geometry: Option<Vec<GeometrySummary>>,
}

impl Outcome {
    fn new() -> Self {
        Self { records: Vec::new(), files: Vec::new(), scaling: Vec::new(), geometry: None }
    }
}

/// Builds the level-zero state on the configured grid.
pub fn initial_state(cfg: &RunConfig, engine: &Engine) -> Result<RelaxedState> {
    let grid = cfg.grid()?;
    let (rho, m) = cfg.initial.transport().sample(engine, grid, cfg.initial.mode)?;
    init_from_transport(engine, rho, m, &cfg.physics, &cfg.pressure, cfg.initial.mode)
}

fn step_path(dir: &Path, q: usize) -> PathBuf {
    dir.join(format!("step_{q:03}.json"))
}

fn write_step(dir: &Path, scenario: Scenario, diag: &StepDiagnostics, out: &mut Outcome) -> Result<()> {
    let path = step_path(dir, diag.q);
    write_json(&path, &StepBody { scenario, step: diag })?;
    out.files.push(path);
    Ok(())
}

fn verify_identities(cfg: &RunConfig, ledger: &ParameterLedger, out: &mut Outcome) -> Result<()> {
    let v = cfg.verify;
    for (offset, d) in [2usize, 3].into_iter().enumerate() {
        let seed = cfg.seed.wrapping_add(offset as u64);
        let engine = Engine::new(Space::new(d, v.r_n)?);
        out.records.extend(inverse_divergence_batch(&engine, v.r_samples, seed)?.records(d));
        let ds = DirectionSet::build(d)?;
        out.records.extend(geometric_batch(&ds, v.geometry_samples, seed)?.records(d));
    }
    if v.full_step {
        let engine = Engine::new(cfg.grid()?.space);
        let state = initial_state(cfg, &engine)?;
        let step = iterate_once(&engine, ledger, &cfg.pressure, &state, &cfg.iterate.options(), false)?;
        out.records.extend(step.diagnostics.records.iter().cloned());
        write_step(&cfg.output, Scenario::VerifyIdentities, &step.diagnostics, out)?;
    }
    Ok(())
}

fn dump_state(dir: &Path, engine: &Engine, state: &RelaxedState, out: &mut Outcome) -> Result<()> {
    let q = state.q;
    for (name, tf) in [("rho", &state.rho), ("m", &state.m), ("r", &state.r)] {
        let path = dir.join("dumps").join(format!("{name}_q{q}.ciwf"));
        write_dump(&path, engine, tf.values())?;
        out.files.push(path);
    }
    Ok(())
}

fn iterate(cfg: &RunConfig, ledger: &ParameterLedger, out: &mut Outcome) -> Result<()> {
    let engine = Engine::new(cfg.grid()?.space);
    let mut state = initial_state(cfg, &engine)?;
    if cfg.iterate.dump {
        dump_state(&cfg.output, &engine, &state, out)?;
    }
    let options = cfg.iterate.options();
    for _ in 0..cfg.iterate.steps {
        let step = iterate_once(&engine, ledger, &cfg.pressure, &state, &options, false)?;
        out.records.extend(step.diagnostics.records.iter().cloned());
        write_step(&cfg.output, Scenario::Iterate, &step.diagnostics, out)?;
        state = step.next;
    }
    if cfg.iterate.dump {
        dump_state(&cfg.output, &engine, &state, out)?;
    }
    Ok(())
}

fn scaling_records(rep: &ScalingReport) -> Vec<Record> {
    let module = "iteration_driver";
    let op = &rep.experiment;
    let mut records = Vec::new();
    for s in &rep.series {
        let name = format!("{}.{}", rep.experiment, s.name);
        let slope = format!("{name}_slope");
        if s.rule.is_checked() {
            records.push(Record::verdict(0, &slope, s.fit.slope, s.rule.tolerance(), s.pass, module, op));
        } else {
            records.push(Record::info(0, &slope, s.fit.slope, module, op));
        }
        records.push(Record::info(0, &format!("{name}_r2"), s.fit.r2, module, op));
    }
    for (name, value) in &rep.extras {
        if name == "strictly_decreasing" {
            let q = format!("{}.{name}", rep.experiment);
            records.push(Record::verdict(0, &q, *value, None, *value == 1.0, module, op));
        } else {
            records.push(Record::info(0, &format!("{}.{name}", rep.experiment), *value, module, op));
        }
    }
    records
}

fn scaling_laws(cfg: &RunConfig, out: &mut Outcome) -> Result<()> {
    for name in &cfg.scaling.experiments {
        let rep = run_experiment(name, &cfg.scaling, &cfg.euler, &cfg.physics, &cfg.pressure)?;
        out.records.extend(scaling_records(&rep));
        out.scaling.push(rep);
    }
    Ok(())
}

fn geometry(cfg: &RunConfig, out: &mut Outcome) -> Result<()> {
    let d = cfg.grid.dim;
    let ds = DirectionSet::build(d)?;
    let summary = GeometrySummary::from(&ds);
    let module = "direction_geometry";
    out.records.push(Record::info(0, "eps_u", ds.eps_u, module, "build"));
    out.records.push(Record::info(0, "n_lambda", ds.n_lambda as f64, module, "build"));
    out.records.push(Record::info(0, "condition_number", ds.condition_number, module, "build"));
    out.records.push(Record::verdict(
        0,
        "frames_exact",
        f64::from(u8::from(summary.frames_exact)),
        None,
        summary.frames_exact,
        module,
        "build",
    ));
    out.records.extend(geometric_batch(&ds, cfg.verify.geometry_samples, cfg.seed)?.records(d));
    out.geometry = Some(vec![summary]);
    Ok(())
}

fn euler(cfg: &RunConfig, out: &mut Outcome) -> Result<()> {
    let rep = euler_scaling(&cfg.euler, &cfg.physics, &cfg.pressure)?;
    out.records.extend(scaling_records(&rep));
    out.scaling.push(rep);
    Ok(())
}

/// Runs the configured scenario and writes its reports into `cfg.output`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let ledger = cfg.ledger()?;
    std::fs::create_dir_all(&cfg.output)?;
    let mut out = Outcome::new();
    match cfg.scenario {
        Scenario::VerifyIdentities => verify_identities(cfg, &ledger, &mut out)?,
        Scenario::Iterate => iterate(cfg, &ledger, &mut out)?,
        Scenario::ScalingLaws => scaling_laws(cfg, &mut out)?,
        Scenario::Geometry => geometry(cfg, &mut out)?,
        Scenario::EulerViscosityLimit => euler(cfg, &mut out)?,
    }
    if out.records.is_empty() {
        return Err(CiwError::InvalidArgument(format!("scenario {} produced no records", cfg.scenario.name())));
    }
    let passed = out.records.iter().all(|r| !r.failed());
    let csv = cfg.output.join(CSV_NAME);
    write_csv(&csv, &out.records)?;
    let json = cfg.output.join(REPORT_NAME);
    write_json(
        &json,
        &ReportBody {
            scenario: cfg.scenario,
            seed: cfg.seed,
            passed,
            config: cfg,
            ledger: &ledger,
            records: &out.records,
            scaling: std::mem::take(&mut out.scaling),
            geometry: out.geometry.take(),
        },
    )?;
    let mut files = vec![csv, json];
    files.append(&mut out.files);
    Ok(RunSummary { scenario: cfg.scenario, seed: cfg.seed, passed, records: out.records, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str, dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::from_toml(text).unwrap();
        cfg.output = dir.to_path_buf();
        cfg
    }

    #[test]
    fn geometry_scenario_writes_both_reports() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config("scenario = \"geometry\"\n[grid]\ndim = 3\n[verify]\ngeometry_samples = 20\n", dir.path());
        let summary = run(&cfg).unwrap();
        assert!(summary.passed);
        assert!(dir.path().join(CSV_NAME).exists());
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(REPORT_NAME)).unwrap()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["geometry"][0]["dim"], 3);
    }

    #[test]
    fn scaling_records_carry_fit_quality() {
        let dir = tempfile::tempdir().unwrap();
        let cfg =
            config("scenario = \"scaling-laws\"\n[scaling]\nexperiments = [\"gk\", \"decorrelation\"]\n", dir.path());
        let summary = run(&cfg).unwrap();
        assert!(summary.passed);
        assert!(summary.records.iter().any(|r| r.quantity == "gk.gk_p2_r2"));
    }
}
