//! Diagnostic records and their CSV / JSON emission.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CiwError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Info,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Info => "info",
        }
    }
}

/// One measured number, traceable to the module and operation that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub q: usize,
    pub quantity: String,
    pub value: f64,
    pub tolerance: Option<f64>,
    pub status: Status,
    pub module: String,
    pub operation: String,
    pub time_sample: Option<usize>,
}

impl Record {
    /// A hard check: passes iff `value <= tolerance` (NaN fails).
    pub fn check(q: usize, quantity: &str, value: f64, tolerance: f64, module: &str, operation: &str) -> Self {
        let status = if value <= tolerance { Status::Pass } else { Status::Fail };
        Self {
            q,
            quantity: quantity.to_string(),
            value,
            tolerance: Some(tolerance),
            status,
            module: module.to_string(),
            operation: operation.to_string(),
            time_sample: None,
        }
    }

    /// A check with an externally decided outcome (e.g. a slope rule).
    pub fn verdict(
        q: usize,
        quantity: &str,
        value: f64,
        tolerance: Option<f64>,
        pass: bool,
        module: &str,
        operation: &str,
    ) -> Self {
        Self {
            q,
            quantity: quantity.to_string(),
            value,
            tolerance,
            status: if pass { Status::Pass } else { Status::Fail },
            module: module.to_string(),
            operation: operation.to_string(),
            time_sample: None,
        }
    }

    /// A measurement with no pass/fail meaning.
    pub fn info(q: usize, quantity: &str, value: f64, module: &str, operation: &str) -> Self {
        Self {
            q,
            quantity: quantity.to_string(),
            value,
            tolerance: None,
            status: Status::Info,
            module: module.to_string(),
            operation: operation.to_string(),
            time_sample: None,
        }
    }

    pub fn at_sample(mut self, i: usize) -> Self {
        self.time_sample = Some(i);
        self
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }
}

/// Shortest round-trip decimal representation, switching to exponent form
/// for very large or very small magnitudes.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if a == 0.0 || (1e-4..1e9).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes `bytes` to `path` through a temporary sibling file and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = temp_path(path);
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp"))
}

/// Serializes records as RFC 4180 CSV with header `q,quantity,value,tolerance,pass_fail`.
pub fn records_csv(records: &[Record]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(["q", "quantity", "value", "tolerance", "pass_fail"])?;
    for r in records {
        let tol = r.tolerance.map(format_float).unwrap_or_default();
        w.write_record([
            r.q.to_string(),
            r.quantity.clone(),
            format_float(r.value),
            tol,
            r.status.as_str().to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| CiwError::Serialize(e.to_string()))
}

pub fn write_csv(path: &Path, records: &[Record]) -> Result<()> {
    if records.is_empty() {
        return Err(CiwError::InvalidArgument("refusing to emit an empty report".into()));
    }
    atomic_write(path, &records_csv(records)?)
}

/// Writes a single top-level JSON object carrying `schema_version` and the given body.
pub fn write_json<T: Serialize>(path: &Path, body: &T) -> Result<()> {
    let mut value = serde_json::to_value(body)?;
    let obj = match value {
        serde_json::Value::Object(ref mut map) => map,
        _ => return Err(CiwError::Serialize("report body must serialize to an object".into())),
    };
    obj.insert("schema_version".into(), serde_json::Value::from(SCHEMA_VERSION));
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_record_gives_two_lines() {
        let r = Record::check(0, "identity", 1e-13, 1e-12, "m", "op");
        let text = String::from_utf8(records_csv(&[r]).unwrap()).unwrap();
        let lines: Vec<&str> = text.split("\r\n").filter(|l| !l.is_empty()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "q,quantity,value,tolerance,pass_fail");
        assert_eq!(lines[1], "0,identity,1e-13,1e-12,pass");
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, -2.5e-7, 0.0, 123456.789] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn nan_fails_checks() {
        assert!(Record::check(0, "x", f64::NAN, 1.0, "m", "o").failed());
    }

    #[test]
    fn json_has_schema_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        #[derive(Serialize)]
        struct Body {
            a: u32,
        }
        write_json(&path, &Body { a: 3 }).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["a"], 3);
        write_json(&path, &Body { a: 4 }).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["a"], 4);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
