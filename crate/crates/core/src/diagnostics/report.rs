use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Named `(t, value)` series plus free-form metadata, written as
/// `metric,t,value` CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsReport {
    series: BTreeMap<String, Vec<(f64, f64)>>,
    pub metadata: BTreeMap<String, String>,
}

impl DiagnosticsReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a sample. Values must be finite and times non-decreasing per
    /// metric.
    pub fn push(&mut self, metric: &str, t: f64, value: f64) -> Result<()> {
        if !t.is_finite() || !value.is_finite() {
            return Err(Error::Domain(format!(
                "non-finite sample for {metric}: t = {t}, value = {value}"
            )));
        }
        if metric.contains(',') || metric.contains('\n') {
            return Err(Error::Domain(format!("metric name {metric:?} is not CSV safe")));
        }
        let s = self.series.entry(metric.to_string()).or_default();
        if let Some(&(last, _)) = s.last() {
            if t < last {
                return Err(Error::Domain(format!(
                    "time stamps for {metric} must not decrease ({t} after {last})"
                )));
            }
        }
        s.push((t, value));
        Ok(())
    }

    pub fn series(&self, metric: &str) -> Option<&[(f64, f64)]> {
        self.series.get(metric).map(|v| v.as_slice())
    }

    pub fn metrics(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(|k| k.as_str())
    }

    pub fn merge(&mut self, other: DiagnosticsReport) -> Result<()> {
        for (metric, samples) in other.series {
            for (t, v) in samples {
                self.push(&metric, t, v)?;
            }
        }
        self.metadata.extend(other.metadata);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,t,value\n");
        for (metric, samples) in &self.series {
            for (t, v) in samples {
                let _ = writeln!(out, "{metric},{t:.16e},{v:.16e}");
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses CSV produced by [`DiagnosticsReport::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("metric,t,value") {
            return Err(Error::Malformed("missing metric,t,value header".into()));
        }
        let mut report = Self::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Malformed(format!("bad CSV row {line:?}")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Malformed(format!("bad number {s:?}")))
            };
            report.push(parts[0], num(parts[1])?, num(parts[2])?)?;
        }
        Ok(report)
    }
}
