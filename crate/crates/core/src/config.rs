//! Run configuration, read from TOML.
//!
//! ```toml
//! scenario = "iterate"
//! seed = 7
//! output = "out"
//!
//! [grid]
//! dim = 2
//! n = 64
//! n_t = 65
//!
//! [ledger]
//! mode = "desk"
//! levels = [{ lambda = 4, delta_next = 0.01, ell = 0.1, tau = 4, sigma = 2 }]
//!
//! [iterate]
//! steps = 2
//! ```
//!
//! Every section is optional; unknown keys are rejected. [`RunConfig::validate`]
//! checks all cross-field constraints before anything is allocated.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::driver::StepOptions;
use crate::error::{CiwError, Result};
use crate::experiments::{EulerConfig, ScalingConfig, EXPERIMENTS};
use crate::geometry::DirectionSet;
use crate::grid::Grid;
use crate::ledger::{Level, PaperSchedule, ParameterLedger, Physics};
use crate::state::{Mode, PressureLaw, TransportData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    VerifyIdentities,
    Iterate,
    ScalingLaws,
    Geometry,
    EulerViscosityLimit,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::VerifyIdentities => "verify-identities",
            Scenario::Iterate => "iterate",
            Scenario::ScalingLaws => "scaling-laws",
            Scenario::Geometry => "geometry",
            Scenario::EulerViscosityLimit => "euler-viscosity-limit",
        }
    }

    /// Whether the scenario builds a relaxed state on the configured grid.
    fn needs_grid(self) -> bool {
        matches!(self, Scenario::VerifyIdentities | Scenario::Iterate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub n: usize,
    pub n_t: usize,
    pub horizon: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { dim: 2, n: 64, n_t: 65, horizon: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum LedgerSection {
    Desk {
        levels: Vec<Level>,
        #[serde(default)]
        exponents: Option<[f64; 2]>,
    },
    Paper {
        a: f64,
        b: f64,
        beta: f64,
        epsilon: f64,
        #[serde(default)]
        exponents: Option<[f64; 2]>,
    },
}

impl Default for LedgerSection {
    fn default() -> Self {
        LedgerSection::Desk {
            levels: vec![Level { lambda: 4.0, delta_next: 0.01, ell: 0.1, tau: 4.0, sigma: 2.0 }],
            exponents: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub mode: Mode,
    pub density_mean: f64,
    pub density_amplitude: f64,
    pub momentum_amplitude: f64,
    pub onset: f64,
    pub ramp: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        let t = TransportData::default();
        Self {
            mode: Mode::Compressible,
            density_mean: t.density_mean,
            density_amplitude: t.density_amplitude,
            momentum_amplitude: t.momentum_amplitude,
            onset: t.onset,
            ramp: t.ramp,
        }
    }
}

impl InitialSection {
    pub fn transport(&self) -> TransportData {
        TransportData {
            density_mean: self.density_mean,
            density_amplitude: self.density_amplitude,
            momentum_amplitude: self.momentum_amplitude,
            onset: self.onset,
            ramp: self.ramp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterateSection {
    pub steps: usize,
    pub profile_radius: f64,
    pub harmonic_cap: Option<usize>,
    pub density_intervals: usize,
    pub peak_probes: bool,
    pub strict: bool,
    /// Write binary dumps of the final density, momentum and stress.
    pub dump: bool,
}

impl Default for IterateSection {
    fn default() -> Self {
        let o = StepOptions::default();
        Self {
            steps: 1,
            profile_radius: o.profile_radius,
            harmonic_cap: o.harmonic_cap,
            density_intervals: o.density_intervals,
            peak_probes: o.peak_probes,
            strict: o.strict,
            dump: false,
        }
    }
}

impl IterateSection {
    pub fn options(&self) -> StepOptions {
        StepOptions {
            profile_radius: self.profile_radius,
            harmonic_cap: self.harmonic_cap,
            density_intervals: self.density_intervals,
            peak_probes: self.peak_probes,
            strict: self.strict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Grid size of the randomised inverse-divergence checks.
    pub r_n: usize,
    pub r_samples: usize,
    pub geometry_samples: usize,
    /// Also run one full iteration step on the configured grid.
    pub full_step: bool,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { r_n: 64, r_samples: 100, geometry_samples: 1000, full_step: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub output: PathBuf,
    pub grid: GridSection,
    pub physics: Physics,
    pub pressure: PressureLaw,
    pub ledger: LedgerSection,
    pub initial: InitialSection,
    pub iterate: IterateSection,
    pub verify: VerifySection,
    pub scaling: ScalingConfig,
    pub euler: EulerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::VerifyIdentities,
            seed: 0,
            output: PathBuf::from("out"),
            grid: GridSection::default(),
            physics: Physics::default(),
            pressure: PressureLaw::default(),
            ledger: LedgerSection::default(),
            initial: InitialSection::default(),
            iterate: IterateSection::default(),
            verify: VerifySection::default(),
            scaling: ScalingConfig::default(),
            euler: EulerConfig::default(),
        }
    }
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let head = &text[..offset.min(text.len())];
    let line = head.matches('\n').count() + 1;
    let col = head.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, col)
}

impl RunConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    CiwError::Config(format!("line {line}, column {col}: {msg}"))
                }
                None => CiwError::Config(msg),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = self.grid;
        Grid::new(g.dim, g.n, g.n_t, g.horizon).map_err(|e| CiwError::Config(e.to_string()))
    }

    pub fn ledger(&self) -> Result<ParameterLedger> {
        let dim = self.grid.dim;
        let built = match &self.ledger {
            LedgerSection::Desk { levels, exponents } => {
                let l = ParameterLedger::desk(levels.clone(), self.physics, dim)?;
                match exponents {
                    Some([p, s]) => l.with_exponents(*p, *s)?,
                    None => l,
                }
            }
            LedgerSection::Paper { a, b, beta, epsilon, exponents } => ParameterLedger::paper(
                PaperSchedule { a: *a, b: *b, beta: *beta, epsilon: *epsilon },
                self.physics,
                exponents.map(|[p, s]| (p, s)),
                dim,
            )?,
        };
        Ok(built)
    }

    /// Checks every constraint that does not need field data.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: CiwError| match e {
            CiwError::Config(_) => e,
            other => CiwError::Config(other.to_string()),
        };
        let grid = self.grid().map_err(cfg)?;
        self.physics.validate(self.grid.dim).map_err(cfg)?;
        self.pressure.validate().map_err(cfg)?;
        let ledger = self.ledger().map_err(cfg)?;
        if self.output.as_os_str().is_empty() {
            return Err(CiwError::Config("output directory must not be empty".into()));
        }
        if self.scenario.needs_grid() {
            if !ledger.is_desk() {
                return Err(CiwError::Config(format!(
                    "scenario {} needs a desk ledger; the asymptotic schedule cannot be gridded",
                    self.scenario.name()
                )));
            }
            self.initial.transport().validate(grid.horizon).map_err(cfg)?;
            let ds = DirectionSet::build(self.grid.dim).map_err(cfg)?;
            let steps = match self.scenario {
                Scenario::Iterate => self.iterate.steps,
                _ => 1,
            };
            if steps == 0 {
                return Err(CiwError::Config("iterate.steps must be at least 1".into()));
            }
            for q in 0..steps {
                let level = ledger.level(q).map_err(cfg)?;
                level.check_resolution(&ds, self.grid.n).map_err(cfg)?;
                if 2.0 * level.ell >= grid.horizon {
                    return Err(CiwError::Config(format!(
                        "level {q}: ell = {} too large for T = {}",
                        level.ell, grid.horizon
                    )));
                }
            }
            if !(self.iterate.profile_radius > 0.0 && self.iterate.profile_radius <= 0.5) {
                return Err(CiwError::Config("iterate.profile_radius must lie in (0, 1/2]".into()));
            }
            if self.iterate.density_intervals < 2 || self.iterate.density_intervals % 2 != 0 {
                return Err(CiwError::Config("iterate.density_intervals must be even and at least 2".into()));
            }
        }
        if self.scenario == Scenario::VerifyIdentities {
            crate::grid::Space::new(3, self.verify.r_n).map_err(cfg)?;
            if self.verify.r_samples == 0 || self.verify.geometry_samples == 0 {
                return Err(CiwError::Config("verify sample counts must be positive".into()));
            }
        }
        if self.scenario == Scenario::ScalingLaws {
            if self.scaling.experiments.is_empty() {
                return Err(CiwError::Config("scaling.experiments is empty".into()));
            }
            for name in &self.scaling.experiments {
                if !EXPERIMENTS.contains(&name.as_str()) {
                    return Err(CiwError::Config(format!(
                        "unknown experiment `{name}` (expected one of {})",
                        EXPERIMENTS.join(", ")
                    )));
                }
            }
        }
        if self.scenario == Scenario::Geometry && !matches!(self.grid.dim, 2 | 3) {
            return Err(CiwError::Config(format!("geometry needs dim 2 or 3, got {}", self.grid.dim)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn shipped_configs_validate() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut seen = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                let cfg = RunConfig::load(&path).unwrap();
                cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                seen += 1;
            }
        }
        assert!(seen >= 5);
    }

    #[test]
    fn unknown_key_is_rejected_with_position() {
        let err = RunConfig::from_toml("seed = 1\n[grid]\ndim = 2\nbogus = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, CiwError::Config(_)));
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn syntax_error_reports_line_and_column() {
        let msg = RunConfig::from_toml("seed = 1\n[grid\n").unwrap_err().to_string();
        assert!(msg.contains("line 2") && msg.contains("column"), "{msg}");
    }

    #[test]
    fn paper_ledger_parses_and_refuses_to_iterate() {
        let text =
            "scenario = \"geometry\"\n[ledger]\nmode = \"paper\"\na = 2\nb = 40040\nbeta = 1e-12\nepsilon = 0.025\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        assert!(!cfg.ledger().unwrap().is_desk());
        let text = text.replace("geometry", "iterate");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn unresolvable_level_is_a_config_error() {
        let text = "scenario = \"iterate\"\n[grid]\nn = 16\nn_t = 17\n";
        assert!(matches!(RunConfig::from_toml(text), Err(CiwError::Config(_))));
    }

    #[test]
    fn scaling_section_selects_experiments() {
        let cfg = RunConfig::from_toml(
            "scenario = \"scaling-laws\"\n[scaling]\nexperiments = [\"gk\"]\ntau_ladder = [2, 4, 8]\n",
        )
        .unwrap();
        assert_eq!(cfg.scaling.tau_ladder, vec![2.0, 4.0, 8.0]);
        assert!(RunConfig::from_toml("scenario = \"scaling-laws\"\n[scaling]\nexperiments = [\"nope\"]\n").is_err());
    }
}
