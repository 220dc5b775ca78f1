//! Machine-readable run reports.
//!
//! Every subcommand emits one JSON report on stdout (or CSV rows with
//! `--csv`) and a short human summary on stderr. Numeric results carry the
//! tolerance they were checked against, or `null` when they are
//! informational. The schema ships in `docs/report-schema.json`.

use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const REPORT_SCHEMA: &str = "wlm-report/1";

#[derive(Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct NumericResult {
    pub name: String,
    pub value: f64,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub tolerance: Option<f64>,
    pub detail: String,
}

#[derive(Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub command: String,
    pub args: Vec<String>,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub results: Vec<NumericResult>,
    pub checks: Vec<CheckResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
    pub wall_time_ms: f64,
}

pub struct ReportBuilder {
    report: RunReport,
    started: Instant,
}

impl ReportBuilder {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        let args: Vec<String> = std::env::args().skip(1).collect();
        Self {
            report: RunReport {
                schema: REPORT_SCHEMA,
                command: command.to_string(),
                args,
                inputs: Vec::new(),
                seed,
                results: Vec::new(),
                checks: Vec::new(),
                details: None,
                wall_time_ms: 0.0,
            },
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &std::path::Path, bytes: &[u8]) {
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        self.report.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex_string(&hasher.finalize()),
        });
    }

    pub fn result(&mut self, name: &str, value: f64) {
        self.report.results.push(NumericResult {
            name: name.to_string(),
            value,
            tolerance: None,
            pass: None,
        });
    }

    pub fn checked_result(&mut self, name: &str, value: f64, tolerance: f64, pass: bool) {
        self.report.results.push(NumericResult {
            name: name.to_string(),
            value,
            tolerance: Some(tolerance),
            pass: Some(pass),
        });
    }

    pub fn check(&mut self, name: &str, pass: bool, tolerance: Option<f64>, detail: String) {
        self.report.checks.push(CheckResult { name: name.to_string(), pass, tolerance, detail });
    }

    pub fn details(&mut self, value: serde_json::Value) {
        self.report.details = Some(value);
    }

    pub fn finish(mut self) -> RunReport {
        self.report.wall_time_ms = self.started.elapsed().as_secs_f64() * 1e3;
        self.report
    }
}

impl RunReport {
    /// False iff some check failed or some checked result failed.
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
            && self.results.iter().all(|r| r.pass.unwrap_or(true))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Tabular form: one `kind,name,value,tolerance,pass` row per entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,name,value,tolerance,pass\n");
        for r in &self.results {
            out.push_str(&format!(
                "result,{},{},{},{}\n",
                r.name,
                r.value,
                r.tolerance.map_or(String::new(), |t| format!("{t}")),
                r.pass.map_or(String::new(), |p| p.to_string()),
            ));
        }
        for c in &self.checks {
            out.push_str(&format!(
                "check,{},,{},{}\n",
                c.name,
                c.tolerance.map_or(String::new(), |t| format!("{t}")),
                c.pass,
            ));
        }
        out
    }

    /// One-line human summary per result/check, for stderr.
    pub fn summary(&self) -> String {
        let mut lines = Vec::new();
        for r in &self.results {
            let status = match r.pass {
                Some(true) => " [ok]",
                Some(false) => " [FAIL]",
                None => "",
            };
            lines.push(format!("  {} = {:.12}{}", r.name, r.value, status));
        }
        for c in &self.checks {
            lines.push(format!(
                "  {}: {} — {}",
                c.name,
                if c.pass { "ok" } else { "FAIL" },
                c.detail
            ));
        }
        lines.join("\n")
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
