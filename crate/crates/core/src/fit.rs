//! Log-log least-squares fits for scaling ladders.

use serde::Serialize;

use crate::error::{CiwError, Result};

/// Result of fitting `log y = intercept + slope * log x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(CiwError::InvalidArgument(format!(
            "fit needs matching ladders of at least two points (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(CiwError::InvalidArgument("log-log fit requires positive finite data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(CiwError::InvalidArgument("ladder has no spread".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(LogLogFit { slope, intercept, r2 })
}

/// Acceptance rule attached to a fitted exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SlopeRule {
    Within { target: f64, tolerance: f64 },
    AtMost { bound: f64 },
    AtLeast { bound: f64 },
    Report,
}

impl SlopeRule {
    pub fn accepts(&self, slope: f64) -> bool {
        match *self {
            SlopeRule::Within { target, tolerance } => (slope - target).abs() <= tolerance,
            SlopeRule::AtMost { bound } => slope <= bound,
            SlopeRule::AtLeast { bound } => slope >= bound,
            SlopeRule::Report => true,
        }
    }

    pub fn is_checked(&self) -> bool {
        !matches!(self, SlopeRule::Report)
    }

    /// Tolerance column value for reports.
    pub fn tolerance(&self) -> Option<f64> {
        match *self {
            SlopeRule::Within { tolerance, .. } => Some(tolerance),
            SlopeRule::AtMost { bound } | SlopeRule::AtLeast { bound } => Some(bound),
            SlopeRule::Report => None,
        }
    }
}

/// One fitted scaling series.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingSeries {
    pub name: String,
    pub parameter: String,
    pub ladder: Vec<f64>,
    pub values: Vec<f64>,
    pub fit: LogLogFit,
    pub rule: SlopeRule,
    pub pass: bool,
}

impl ScalingSeries {
    pub fn new(name: &str, parameter: &str, ladder: Vec<f64>, values: Vec<f64>, rule: SlopeRule) -> Result<Self> {
        let fit = loglog_fit(&ladder, &values)?;
        let pass = rule.accepts(fit.slope);
        Ok(Self { name: name.to_string(), parameter: parameter.to_string(), ladder, values, fit, rule, pass })
    }
}

/// Collection of fitted series produced by one experiment.
#[derive(Debug, Clone, Serialize, Default)]
pub struct ScalingReport {
    pub experiment: String,
    pub series: Vec<ScalingSeries>,
    /// Auxiliary measurements (name, value).
    pub extras: Vec<(String, f64)>,
}

impl ScalingReport {
    pub fn new(experiment: &str) -> Self {
        Self { experiment: experiment.to_string(), ..Default::default() }
    }

    pub fn pass(&self) -> bool {
        self.series.iter().all(|s| s.pass)
    }

    pub fn get(&self, name: &str) -> Option<&ScalingSeries> {
        self.series.iter().find(|s| s.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let x = [2.0, 4.0, 8.0, 16.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        let f = loglog_fit(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-14);
        assert!((f.r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(loglog_fit(&[1.0, 2.0], &[1.0, 0.0]).is_err());
        assert!(loglog_fit(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn rules() {
        assert!(SlopeRule::Within { target: -1.0, tolerance: 0.05 }.accepts(-0.97));
        assert!(!SlopeRule::AtMost { bound: -0.7 }.accepts(-0.6));
        assert!(SlopeRule::AtLeast { bound: 0.4 }.accepts(0.5));
    }
}
