//! Iteration parameters: the asymptotic "paper" schedule and explicit desk levels.

use serde::{Deserialize, Serialize};

use crate::error::{CiwError, Result};
use crate::geometry::DirectionSet;

/// Parameters of one iteration step `q -> q+1` at desk scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub lambda: f64,
    pub delta_next: f64,
    pub ell: f64,
    pub tau: f64,
    pub sigma: f64,
}

impl Level {
    /// Checks `ell < 1 < sigma < tau < lambda^2` and integrality of `lambda`, `sigma`.
    pub fn validate(&self) -> Result<()> {
        let Level { lambda, delta_next, ell, tau, sigma } = *self;
        let checks = [
            (ell > 0.0 && ell < 1.0, format!("0 < ell < 1 (ell = {ell})")),
            (sigma > 1.0, format!("1 < sigma (sigma = {sigma})")),
            (sigma < tau, format!("sigma < tau ({sigma} vs {tau})")),
            (tau < lambda * lambda, format!("tau < lambda^2 ({tau} vs {})", lambda * lambda)),
            (lambda >= 1.0 && lambda.fract() == 0.0, format!("lambda integral (lambda = {lambda})")),
            (sigma.fract() == 0.0, format!("sigma integral (sigma = {sigma})")),
            (delta_next > 0.0, format!("delta_next > 0 (delta_next = {delta_next})")),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(CiwError::Ledger(format!("desk ordering violated: {what}")));
            }
        }
        Ok(())
    }

    /// Checks that every Mikado flow at this level is resolved on an `n`-point grid.
    pub fn check_resolution(&self, ds: &DirectionSet, n: usize) -> Result<()> {
        let need = ds.required_n(self.lambda);
        if need > n {
            return Err(CiwError::Unresolvable {
                what: format!("Mikado flows at lambda = {}", self.lambda),
                required_n: need,
                n,
            });
        }
        Ok(())
    }
}

/// Physical coefficients: hypo-viscosity exponent and the two viscosities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    pub alpha: f64,
    pub mu: f64,
    pub nu: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self { alpha: 0.5, mu: 0.01, nu: 0.005 }
    }
}

impl Physics {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CiwError::Ledger(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if self.mu < 0.0 {
            return Err(CiwError::Ledger(format!("mu = {} must be non-negative", self.mu)));
        }
        if self.nu + 2.0 * self.mu / (dim as f64) < 0.0 {
            return Err(CiwError::Ledger(format!(
                "nu + 2 mu / d = {} must be non-negative",
                self.nu + 2.0 * self.mu / dim as f64
            )));
        }
        Ok(())
    }
}

/// The asymptotic schedule, kept in base-10 logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaperSchedule {
    pub a: f64,
    pub b: f64,
    pub beta: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PaperLevel {
    pub q: usize,
    pub log10_lambda: f64,
    pub log10_delta: f64,
    pub log10_ell: f64,
    pub log10_tau: f64,
    pub log10_sigma: f64,
}

/// Largest admissible `epsilon` for given `alpha` and exponent pair `(p, s)`.
pub fn epsilon_bound(alpha: f64, p: f64, s: f64) -> Result<f64> {
    let gap = 2.0 * alpha / p - alpha - s;
    if gap <= 0.0 {
        return Err(CiwError::Ledger(format!(
            "(p, s) = ({p}, {s}) is not supercritical: alpha + s - 2 alpha / p = {} must be negative",
            -gap
        )));
    }
    Ok((1.0 - alpha).min(alpha).min(gap) / 20.0)
}

impl PaperSchedule {
    pub fn validate(&self, physics: &Physics, exponents: Option<(f64, f64)>) -> Result<Vec<String>> {
        let PaperSchedule { a, b, beta, epsilon } = *self;
        if a < 2.0 || a.fract() != 0.0 {
            return Err(CiwError::Ledger(format!("a = {a} must be an integer >= 2")));
        }
        if b.fract() != 0.0 || (b as i64) % 2 != 0 {
            return Err(CiwError::Ledger(format!("b = {b} must be an even integer")));
        }
        if epsilon <= 0.0 {
            return Err(CiwError::Ledger(format!("epsilon = {epsilon} must be positive")));
        }
        if b <= 1000.0 / epsilon {
            return Err(CiwError::Ledger(format!("b = {b} must exceed 1000 / epsilon = {}", 1000.0 / epsilon)));
        }
        let be = b * epsilon;
        if (be - be.round()).abs() > 1e-9 * be.max(1.0) {
            return Err(CiwError::Ledger(format!("b * epsilon = {be} must be an integer")));
        }
        if !(beta > 0.0 && beta < 1.0 / (100.0 * b * b)) {
            return Err(CiwError::Ledger(format!("beta = {beta} must lie in (0, 1/(100 b^2))")));
        }
        let bound = match exponents {
            Some((p, s)) => epsilon_bound(physics.alpha, p, s)?,
            None => (1.0 - physics.alpha).min(physics.alpha) / 20.0,
        };
        if epsilon > bound * (1.0 + 1e-12) {
            return Err(CiwError::Ledger(format!("epsilon = {epsilon} exceeds its admissible bound {bound}")));
        }
        let lam1 = self.level(1, physics).log10_lambda;
        Ok(vec![format!("lambda_1 = 10^{lam1:.3e}; no grid can resolve the asymptotic schedule")])
    }

    pub fn level(&self, q: usize, physics: &Physics) -> PaperLevel {
        let la = self.a.log10();
        let log_lambda = |q: usize| self.b.powi(q as i32) * la;
        let lq = log_lambda(q);
        let lq1 = log_lambda(q + 1);
        PaperLevel {
            q,
            log10_lambda: lq,
            log10_delta: 3.0 * self.beta * log_lambda(1) - 2.0 * self.beta * lq,
            log10_ell: -30.0 * lq,
            log10_tau: (2.0 * physics.alpha - 10.0 * self.epsilon) * lq1,
            log10_sigma: 15.0 * self.epsilon * lq1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Schedule {
    Paper(PaperSchedule),
    Desk { levels: Vec<Level> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterLedger {
    pub schedule: Schedule,
    pub physics: Physics,
    pub exponents: Option<(f64, f64)>,
    pub warnings: Vec<String>,
}

impl ParameterLedger {
    pub fn desk(levels: Vec<Level>, physics: Physics, dim: usize) -> Result<Self> {
        physics.validate(dim)?;
        if levels.is_empty() {
            return Err(CiwError::Ledger("desk ledger needs at least one level".into()));
        }
        for (q, l) in levels.iter().enumerate() {
            l.validate().map_err(|e| CiwError::Ledger(format!("level {q}: {e}")))?;
        }
        Ok(Self { schedule: Schedule::Desk { levels }, physics, exponents: None, warnings: Vec::new() })
    }

    pub fn paper(schedule: PaperSchedule, physics: Physics, exponents: Option<(f64, f64)>, dim: usize) -> Result<Self> {
        physics.validate(dim)?;
        let warnings = schedule.validate(&physics, exponents)?;
        Ok(Self { schedule: Schedule::Paper(schedule), physics, exponents, warnings })
    }

    pub fn with_exponents(mut self, p: f64, s: f64) -> Result<Self> {
        epsilon_bound(self.physics.alpha, p, s)?;
        self.exponents = Some((p, s));
        Ok(self)
    }

    /// Desk parameters of step `q -> q+1`; the last level repeats.
    pub fn level(&self, q: usize) -> Result<Level> {
        match &self.schedule {
            Schedule::Desk { levels } => Ok(levels[q.min(levels.len() - 1)]),
            Schedule::Paper(_) => Err(CiwError::Ledger("paper-mode parameters cannot be gridded".into())),
        }
    }

    pub fn is_desk(&self) -> bool {
        matches!(self.schedule, Schedule::Desk { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn physics() -> Physics {
        Physics { alpha: 0.5, mu: 0.01, nu: 0.0 }
    }

    #[test]
    fn desk_example_is_accepted() {
        let l = Level { lambda: 16.0, delta_next: 0.01, ell: 0.05, tau: 64.0, sigma: 4.0 };
        let ledger = ParameterLedger::desk(vec![l], physics(), 2).unwrap();
        let ds = DirectionSet::build(2).unwrap();
        ledger.level(0).unwrap().check_resolution(&ds, 256).unwrap();
        assert!(ledger.level(0).unwrap().check_resolution(&ds, 128).is_err());
        assert_eq!(ledger.level(5).unwrap(), l);
    }

    #[test]
    fn desk_ordering_errors_name_the_inequality() {
        let l = Level { lambda: 16.0, delta_next: 0.01, ell: 0.05, tau: 4.0, sigma: 8.0 };
        let err = ParameterLedger::desk(vec![l], physics(), 2).unwrap_err().to_string();
        assert!(err.contains("sigma < tau"), "{err}");
    }

    #[test]
    fn boundary_exponents_are_rejected() {
        assert!(epsilon_bound(0.5, 2.0, 0.0).is_err());
    }

    #[test]
    fn epsilon_bound_arithmetic() {
        assert!((epsilon_bound(0.9, 1.0, 0.5).unwrap() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn paper_schedule_values() {
        let phys = Physics { alpha: 0.9, mu: 1.0, nu: 0.0 };
        let sched = PaperSchedule { a: 10.0, b: 400_000.0, beta: 1e-14, epsilon: 0.005 };
        let ledger = ParameterLedger::paper(sched, phys, Some((1.0, 0.5)), 3).unwrap();
        assert_eq!(ledger.warnings.len(), 1);
        let lv = sched.level(1, &phys);
        assert!((lv.log10_lambda - 400_000.0).abs() < 1e-6);
        assert!((lv.log10_ell + 1.2e7).abs() < 1e-3);
        assert!(ledger.level(0).is_err());
        let bad = PaperSchedule { b: 200_000.0, ..sched };
        assert!(ParameterLedger::paper(bad, phys, Some((1.0, 0.5)), 3).is_err());
    }

    #[test]
    fn viscosity_constraint() {
        let p = Physics { alpha: 0.5, mu: 1.0, nu: -1.5 };
        assert!(p.validate(2).is_err());
        assert!(p.validate(3).is_err());
        let ok = Physics { alpha: 0.5, mu: 1.5, nu: -1.0 };
        assert!(ok.validate(3).is_ok());
    }
}
