//! The run report: everything one `evaluate` run produced, serialized
//! deterministically (no timestamps, fixed field order) so identical
//! inputs yield byte-identical reports.

use serde::{Deserialize, Serialize};
use surety::calibration::CalibrationReport;
use surety::testcase::{SuiteReport, TestOutcome, Verdict};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub toolkit_version: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CalibrationSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ece: Option<CalibrationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nll_before: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nll_after: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interval_coverage: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression_calibration_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sharpness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conformal: Option<ConformalSummary>,
}

impl CalibrationSection {
    pub fn is_empty(&self) -> bool {
        self.ece.is_none()
            && self.temperature.is_none()
            && self.interval_coverage.is_empty()
            && self.regression_calibration_error.is_none()
            && self.sharpness.is_none()
            && self.conformal.is_none()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConformalSummary {
    pub alpha: f64,
    pub threshold: f64,
    pub calibration_size: usize,
    pub evaluated: usize,
    pub empirical_coverage: f64,
    pub mean_set_size: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub name: String,
    pub metric: String,
    pub events: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_event_index: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftSummary {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_shift_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_flag: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_statistic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_importance_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_ood_score: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdversarialSummary {
    pub name: String,
    pub clean_risk: f64,
    pub adversarial_risk_lower_bound: f64,
    pub instances: usize,
    pub queries_used: usize,
}

/// Everything one evaluate run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub suite: SuiteReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detection_gates: Vec<TestOutcome>,
    #[serde(default, skip_serializing_if = "CalibrationSection::is_empty")]
    pub calibration: CalibrationSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub monitors: Vec<MonitorSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shift: Vec<ShiftSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub adversarial: Vec<AdversarialSummary>,
    /// Suite deployability and every detection gate, combined.
    pub deployable: bool,
}

impl RunReport {
    pub fn compute_deployable(&mut self) {
        self.deployable = self.suite.deployable
            && self
                .detection_gates
                .iter()
                .all(|g| g.verdict == Verdict::Pass);
    }

    /// Render the human-facing summary: satisficing gates and optimizing
    /// scores as separate tables, then the sections that ran.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("# Evaluation report\n\n");
        out.push_str(&format!(
            "- config: `{}`\n- seed: {}\n- toolkit: {}\n- deployable: **{}**\n\n",
            self.provenance.config_hash,
            self.provenance.seed,
            self.provenance.toolkit_version,
            if self.deployable { "yes" } else { "no" }
        ));
        if self.suite.empty_suite {
            out.push_str("> Warning: the suite contains no test cases; the deployable flag is vacuous.\n\n");
        }

        let satisficing: Vec<&TestOutcome> = self
            .suite
            .outcomes
            .iter()
            .filter(|o| o.satisficing)
            .chain(self.detection_gates.iter())
            .collect();
        if !satisficing.is_empty() {
            out.push_str("## Satisficing tests\n\n");
            out.push_str("| case | score | n | verdict |\n|---|---|---|---|\n");
            for o in satisficing {
                out.push_str(&format!(
                    "| {} | {:.6} | {} | {} |\n",
                    o.case,
                    o.score,
                    o.n,
                    match o.verdict {
                        Verdict::Pass => "pass",
                        Verdict::Fail => "FAIL",
                        Verdict::ScoreOnly => "score-only",
                    }
                ));
            }
            out.push('\n');
        }

        let optimizing: Vec<&TestOutcome> = self
            .suite
            .outcomes
            .iter()
            .filter(|o| !o.satisficing)
            .collect();
        if !optimizing.is_empty() {
            out.push_str("## Optimizing tests\n\n");
            out.push_str("| case | score | n |\n|---|---|---|\n");
            for o in optimizing {
                out.push_str(&format!("| {} | {:.6} | {} |\n", o.case, o.score, o.n));
            }
            out.push('\n');
        }

        if !self.calibration.is_empty() {
            out.push_str("## Calibration\n\n");
            if let Some(ece) = &self.calibration.ece {
                out.push_str(&format!(
                    "- ECE: {:.6} over {} records ({} bins)\n",
                    ece.ece,
                    ece.n,
                    ece.bins.len()
                ));
            }
            if let Some(t) = self.calibration.temperature {
                out.push_str(&format!("- fitted temperature: {t:.4}"));
                if let (Some(before), Some(after)) =
                    (self.calibration.nll_before, self.calibration.nll_after)
                {
                    out.push_str(&format!(" (NLL {before:.4} -> {after:.4})"));
                }
                out.push('\n');
            }
            for (p, c) in &self.calibration.interval_coverage {
                out.push_str(&format!("- interval coverage at {p}: {c:.4}\n"));
            }
            if let Some(e) = self.calibration.regression_calibration_error {
                out.push_str(&format!("- regression calibration error: {e:.6}\n"));
            }
            if let Some(s) = self.calibration.sharpness {
                out.push_str(&format!("- sharpness (mean stddev): {s:.6}\n"));
            }
            if let Some(c) = &self.calibration.conformal {
                out.push_str(&format!(
                    "- conformal (alpha {}): coverage {:.4}, mean set size {:.3} on {} held-out records\n",
                    c.alpha, c.empirical_coverage, c.mean_set_size, c.evaluated
                ));
            }
            out.push('\n');
        }

        if !self.monitors.is_empty() {
            out.push_str("## Monitors\n\n| monitor | metric | events | first index |\n|---|---|---|---|\n");
            for m in &self.monitors {
                out.push_str(&format!(
                    "| {} | {} | {} | {} |\n",
                    m.name,
                    m.metric,
                    m.events,
                    m.first_event_index
                        .map_or_else(|| "-".to_string(), |i| i.to_string())
                ));
            }
            out.push('\n');
        }

        if !self.shift.is_empty() {
            out.push_str("## Shift analysis\n\n");
            for s in &self.shift {
                out.push_str(&format!("- {}:", s.name));
                if let Some(w) = &s.label_shift_weights {
                    let rendered: Vec<String> = w.iter().map(|v| format!("{v:.4}")).collect();
                    out.push_str(&format!(" weights [{}]", rendered.join(", ")));
                    if s.condition_flag == Some(true) {
                        out.push_str(" (poorly conditioned)");
                    }
                }
                if let (Some(stat), Some(p)) = (s.test_statistic, s.p_value) {
                    out.push_str(&format!(" chi-square {stat:.4}, p = {p:.6}"));
                }
                if let Some(w) = s.mean_importance_weight {
                    out.push_str(&format!(" mean importance weight {w:.4}"));
                }
                if let Some(v) = s.mean_ood_score {
                    out.push_str(&format!(" mean OOD score {v:.4}"));
                }
                out.push('\n');
            }
            out.push('\n');
        }

        if !self.adversarial.is_empty() {
            out.push_str("## Adversarial risk (search lower bounds)\n\n");
            out.push_str("| task | clean risk | adversarial ≥ | instances | queries |\n|---|---|---|---|---|\n");
            for a in &self.adversarial {
                out.push_str(&format!(
                    "| {} | {:.6} | {:.6} | {} | {} |\n",
                    a.name, a.clean_risk, a.adversarial_risk_lower_bound, a.instances, a.queries_used
                ));
            }
            out.push('\n');
        }
        out
    }
}
