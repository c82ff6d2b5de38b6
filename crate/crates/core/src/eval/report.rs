use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};

/// Per-waypoint errors; the summary statistics are always derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ErrorStatsRecord", try_from = "ErrorStatsRecord")]
pub struct ErrorStats {
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ErrorStatsRecord {
    max: f64,
    mean: f64,
    sd: f64,
    values: Vec<f64>,
}

impl From<ErrorStats> for ErrorStatsRecord {
    fn from(s: ErrorStats) -> Self {
        Self {
            max: s.max(),
            mean: s.mean(),
            sd: s.sd(),
            values: s.values,
        }
    }
}

impl TryFrom<ErrorStatsRecord> for ErrorStats {
    type Error = String;

    fn try_from(r: ErrorStatsRecord) -> std::result::Result<Self, String> {
        let s = ErrorStats::new(r.values);
        for (name, stored, derived) in [
            ("max", r.max, s.max()),
            ("mean", r.mean, s.mean()),
            ("sd", r.sd, s.sd()),
        ] {
            if (stored - derived).abs() > 1e-12 {
                return Err(format!("{name} {stored} disagrees with the values ({derived})"));
            }
        }
        Ok(s)
    }
}

impl ErrorStats {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Sample standard deviation; zero for fewer than two values.
    pub fn sd(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: String,
    pub message: String,
}

/// One method on one subject. Methods are named by string so results from
/// external tools can sit in the same table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: String,
    pub hausdorff: Option<f64>,
    pub waypoint_errors: Option<ErrorStats>,
    #[serde(default)]
    pub failures: Vec<Failure>,
    /// Wall-clock time per stage, ms.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub runtime_ms: BTreeMap<String, f64>,
}

impl MethodOutcome {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub subject: String,
    pub methods: Vec<MethodOutcome>,
}

impl SubjectReport {
    pub fn method(&self, name: &str) -> Option<&MethodOutcome> {
        self.methods.iter().find(|m| m.method == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: PipelineConfig,
    pub subjects: Vec<SubjectReport>,
}

type Column = fn(&MethodOutcome) -> Option<f64>;

impl EvalReport {
    /// Method names in first-seen order.
    pub fn method_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for s in &self.subjects {
            for m in &s.methods {
                if !names.contains(&m.method) {
                    names.push(m.method.clone());
                }
            }
        }
        names
    }

    /// Hausdorff distance of `method` per subject, skipping failures.
    pub fn hausdorff_values(&self, method: &str) -> Vec<f64> {
        self.subjects
            .iter()
            .filter_map(|s| s.method(method).and_then(|m| m.hausdorff))
            .collect()
    }

    /// Every waypoint error of `method` pooled over subjects.
    pub fn pooled_waypoint_errors(&self, method: &str) -> ErrorStats {
        ErrorStats::new(
            self.subjects
                .iter()
                .filter_map(|s| s.method(method).and_then(|m| m.waypoint_errors.as_ref()))
                .flat_map(|e| e.values().iter().copied())
                .collect(),
        )
    }

    /// Per-stage runtimes keyed by subject then method.
    pub fn timings(&self) -> BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>> {
        self.subjects
            .iter()
            .map(|s| {
                (
                    s.subject.clone(),
                    s.methods
                        .iter()
                        .map(|m| (m.method.clone(), m.runtime_ms.clone()))
                        .collect(),
                )
            })
            .collect()
    }

    /// The report with runtimes removed, which is a pure function of the
    /// config.
    pub fn without_timings(&self) -> EvalReport {
        let mut r = self.clone();
        for s in &mut r.subjects {
            for m in &mut s.methods {
                m.runtime_ms.clear();
            }
        }
        r
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: EvalReport = serde_json::from_str(text)?;
        r.config.validate()?;
        Ok(r)
    }

    /// Methods × subjects tables of Hausdorff distance and mean waypoint
    /// error, with a Mean±SD column.
    pub fn to_table(&self) -> String {
        let methods = self.method_names();
        let subjects: Vec<&str> = self.subjects.iter().map(|s| s.subject.as_str()).collect();
        let mut out = String::new();
        let sections: [(&str, Column); 2] = [
            ("Hausdorff distance (mm)", |m| m.hausdorff),
            ("Mean waypoint error (mm)", |m| {
                m.waypoint_errors.as_ref().map(ErrorStats::mean)
            }),
        ];
        for (k, (title, get)) in sections.iter().enumerate() {
            if k > 0 {
                out.push('\n');
            }
            let mut rows: Vec<Vec<String>> = Vec::new();
            let mut header = vec!["Method".to_string()];
            header.extend(subjects.iter().map(|s| s.to_string()));
            header.push("Mean±SD".into());
            rows.push(header);
            for name in &methods {
                let mut row = vec![name.clone()];
                let mut values = Vec::new();
                for s in &self.subjects {
                    match s.method(name).and_then(get) {
                        Some(v) => {
                            values.push(v);
                            row.push(format!("{v:.2}"));
                        }
                        None => row.push("fail".into()),
                    }
                }
                let stats = ErrorStats::new(values);
                row.push(if stats.is_empty() {
                    "-".into()
                } else {
                    format!("{:.2}±{:.2}", stats.mean(), stats.sd())
                });
                rows.push(row);
            }
            let widths: Vec<usize> = (0..rows[0].len())
                .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
                .collect();
            writeln!(out, "{title}").expect("string write");
            for (i, row) in rows.iter().enumerate() {
                let cells: Vec<String> = row
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(c, (cell, w))| {
                        let pad = w - cell.chars().count();
                        if c == 0 {
                            format!("{cell}{}", " ".repeat(pad))
                        } else {
                            format!("{}{cell}", " ".repeat(pad))
                        }
                    })
                    .collect();
                writeln!(out, "{}", cells.join("  ").trim_end()).expect("string write");
                if i == 0 {
                    let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                    writeln!(out, "{}", "-".repeat(total)).expect("string write");
                }
            }
        }
        let failures: Vec<String> = self
            .subjects
            .iter()
            .flat_map(|s| {
                s.methods.iter().flat_map(move |m| {
                    m.failures
                        .iter()
                        .map(move |f| format!("{} {}: {} stage: {}", s.subject, m.method, f.stage, f.message))
                })
            })
            .collect();
        if !failures.is_empty() {
            out.push_str("\nFailures\n");
            for f in failures {
                writeln!(out, "{f}").expect("string write");
            }
        }
        out
    }
}

impl std::str::FromStr for EvalReport {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_json(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_match_direct_formulas() {
        let s = ErrorStats::new(vec![1.0, 2.0, 4.0]);
        assert_eq!(s.max(), 4.0);
        assert!((s.mean() - 7.0 / 3.0).abs() < 1e-15);
        let m = 7.0 / 3.0;
        let var = ((1.0 - m) * (1.0f64 - m) + (2.0 - m) * (2.0 - m) + (4.0 - m) * (4.0 - m)) / 2.0;
        assert!((s.sd() - var.sqrt()).abs() < 1e-15);
        assert_eq!(ErrorStats::new(vec![3.0]).sd(), 0.0);
    }

    #[test]
    fn stats_json_round_trip_and_tamper_check() {
        let s = ErrorStats::new(vec![0.5, 1.25, 3.0]);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<ErrorStats>(&text).unwrap(), s);
        let tampered = text.replace("\"max\":3.0", "\"max\":2.0");
        assert!(serde_json::from_str::<ErrorStats>(&tampered).is_err());
    }

    fn outcome(method: &str, hd: Option<f64>) -> MethodOutcome {
        MethodOutcome {
            method: method.into(),
            hausdorff: hd,
            waypoint_errors: hd.map(|h| ErrorStats::new(vec![h / 2.0, h / 4.0])),
            failures: Vec::new(),
            runtime_ms: BTreeMap::from([("total".to_string(), 1.0)]),
        }
    }

    #[test]
    fn table_lists_methods_and_subjects() {
        let report = EvalReport {
            config: PipelineConfig::default(),
            subjects: vec![
                SubjectReport {
                    subject: "seed-1".into(),
                    methods: vec![outcome("icp", Some(10.0)), outcome("graph", Some(4.0))],
                },
                SubjectReport {
                    subject: "seed-2".into(),
                    methods: vec![outcome("icp", Some(12.0)), outcome("graph", None)],
                },
            ],
        };
        let table = report.to_table();
        assert!(table.contains("seed-1") && table.contains("seed-2"));
        assert!(table.contains("11.00±1.41"), "{table}");
        assert!(table.contains("fail"));
        assert_eq!(report.hausdorff_values("icp"), vec![10.0, 12.0]);
        let bare = report.without_timings();
        assert!(!bare.to_json().unwrap().contains("runtime_ms"));
        assert_eq!(EvalReport::from_json(&bare.to_json().unwrap()).unwrap(), bare);
    }
}
