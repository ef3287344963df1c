//! Outcome records of inequality checks.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

/// One checked inequality `lhs ≤ rhs` (after any declared slack has been added to `rhs`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`
    pub margin: f64,
    pub passed: bool,
    pub params: BTreeMap<String, Value>,
    pub seed: Option<u64>,
}

impl VerificationReport {
    /// `lhs ≤ rhs + tol`.
    pub fn le(check: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self {
            check: check.into(),
            lhs,
            rhs,
            margin: rhs - lhs,
            passed: lhs <= rhs + tol,
            params: BTreeMap::new(),
            seed: None,
        }
    }

    pub fn with_param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Combine per-instance reports into the worst case (smallest margin).
    pub fn worst(check: impl Into<String>, reports: &[VerificationReport]) -> Self {
        let check = check.into();
        let passed = reports.iter().all(|r| r.passed);
        let worst = reports.iter().min_by(|a, b| a.margin.total_cmp(&b.margin));
        let mut out = match worst {
            Some(w) => Self {
                check,
                passed,
                ..w.clone()
            },
            None => Self::le(check, 0.0, 0.0, 0.0),
        };
        out.params.insert("instances".into(), reports.len().into());
        out.params.insert(
            "failures".into(),
            reports.iter().filter(|r| !r.passed).count().into(),
        );
        out
    }
}

pub fn write_reports_json<W: Write>(reports: &[VerificationReport], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, reports)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worst_case() {
        let a = VerificationReport::le("x", 1.0, 2.0, 0.0);
        let b = VerificationReport::le("x", 1.5, 1.6, 0.0).with_param("k", 3);
        let w = VerificationReport::worst("all", &[a, b]);
        assert!(w.passed);
        assert!((w.margin - 0.1).abs() < 1e-15);
        assert_eq!(w.params["k"], 3);
        assert_eq!(w.params["instances"], 2);
        let c = VerificationReport::le("x", 2.0, 1.0, 0.5);
        assert!(!c.passed);
        let mut buf = Vec::new();
        write_reports_json(&[c.with_seed(7)], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("\"seed\": 7"));
    }
}
