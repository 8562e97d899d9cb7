//! Run reports: measured values, declared budgets, verdicts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fabric::LatencyStats;
use crate::harness::HarnessError;
use crate::wakeword::DetectorMetrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetCheck {
    pub name: String,
    /// Absent when the run produced nothing to measure; the check then
    /// passes vacuously.
    pub measured: Option<f64>,
    pub bound: f64,
    /// "<=" or ">".
    pub relation: String,
    pub pass: bool,
}

impl BudgetCheck {
    pub fn at_most(name: &str, measured: Option<f64>, bound: f64) -> Self {
        let pass = measured.map(|m| m <= bound).unwrap_or(true);
        Self { name: name.to_string(), measured, bound, relation: "<=".into(), pass }
    }

    pub fn above(name: &str, measured: Option<f64>, bound: f64) -> Self {
        let pass = measured.map(|m| m > bound).unwrap_or(true);
        Self { name: name.to_string(), measured, bound, relation: ">".into(), pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub stimulus_t_ms: u64,
    pub target_yaw_deg: f64,
    /// Time from stimulus to |error| < 0.5 degrees, if reached.
    pub settle_ms: Option<u64>,
    pub final_gaze_yaw_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MessageCounts {
    pub sent: u64,
    pub delivered: u64,
    pub routing_errors: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario_seed: u64,
    pub topology: String,
    pub interactions: usize,
    pub wake: Option<LatencyStats>,
    pub missed_wakes: usize,
    pub dialog_transitions: BTreeMap<String, usize>,
    pub eye_log: Vec<String>,
    pub tracking: Vec<TrackingReport>,
    pub detector_metrics: Vec<DetectorMetrics>,
    pub budgets: Vec<BudgetCheck>,
    pub messages: MessageCounts,
}

impl RunReport {
    pub fn all_budgets_pass(&self) -> bool {
        self.budgets.iter().all(|b| b.pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            other => Err(HarnessError::Usage(format!(
                "unknown report format {other:?}; expected json or text"
            ))),
        }
    }
}

/// Machine-readable JSON or a human summary table.
pub fn emit_report<W: std::io::Write>(
    report: &RunReport,
    format: ReportFormat,
    mut out: W,
) -> Result<(), HarnessError> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, report)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        ReportFormat::Text => {
            writeln!(out, "run report (seed {}, topology {})", report.scenario_seed, report.topology)?;
            writeln!(out, "  interactions: {}", report.interactions)?;
            match &report.wake {
                Some(w) => writeln!(
                    out,
                    "  wake latency: mean {:.1} ms, median {:.1} ms, p95 {:.1} ms over {} detections ({} missed)",
                    w.mean_ms, w.median_ms, w.p95_ms, w.samples, report.missed_wakes
                )?,
                None => writeln!(out, "  wake latency: no samples")?,
            }
            if !report.dialog_transitions.is_empty() {
                writeln!(out, "  dialog transitions:")?;
                for (k, v) in &report.dialog_transitions {
                    writeln!(out, "    {k}: {v}")?;
                }
            }
            for t in &report.tracking {
                match t.settle_ms {
                    Some(ms) => writeln!(
                        out,
                        "  tracking: {}deg target settled in {} ms (final gaze {:.2})",
                        t.target_yaw_deg, ms, t.final_gaze_yaw_deg
                    )?,
                    None => writeln!(
                        out,
                        "  tracking: {}deg target did not settle (final gaze {:.2})",
                        t.target_yaw_deg, t.final_gaze_yaw_deg
                    )?,
                }
            }
            for m in &report.detector_metrics {
                writeln!(
                    out,
                    "  detector {}: FP {} FN {} mean latency {}",
                    m.algorithm,
                    m.false_positive_rate
                        .map(|r| format!("{:.3}%", r * 100.0))
                        .unwrap_or_else(|| "n/a".into()),
                    m.false_negative_rate
                        .map(|r| format!("{:.2}%", r * 100.0))
                        .unwrap_or_else(|| "n/a".into()),
                    m.mean_latency_ms
                        .map(|l| format!("{l:.1} ms"))
                        .unwrap_or_else(|| "n/a".into()),
                )?;
            }
            writeln!(
                out,
                "  messages: {} sent, {} delivered, {} routing errors",
                report.messages.sent, report.messages.delivered, report.messages.routing_errors
            )?;
            writeln!(out, "  budgets:")?;
            for b in &report.budgets {
                writeln!(
                    out,
                    "    [{}] {} (measured {} {} {})",
                    if b.pass { "PASS" } else { "FAIL" },
                    b.name,
                    b.measured.map(|m| format!("{m:.2}")).unwrap_or_else(|| "n/a".into()),
                    b.relation,
                    b.bound
                )?;
            }
        }
    }
    Ok(())
}

pub fn parse_report<R: std::io::Read>(input: R) -> Result<RunReport, HarnessError> {
    serde_json::from_reader(input).map_err(|e| HarnessError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> RunReport {
        RunReport {
            scenario_seed: 42,
            topology: "dual".into(),
            interactions: 2,
            wake: Some(LatencyStats {
                samples: 2,
                missed: 0,
                mean_ms: 104.5,
                median_ms: 101.0,
                p95_ms: 131.0,
                min_ms: 78.0,
                max_ms: 131.0,
            }),
            missed_wakes: 0,
            dialog_transitions: [("Idle->Listening".to_string(), 2)].into_iter().collect(),
            eye_log: vec!["500 GREEN NONE".into()],
            tracking: vec![TrackingReport {
                stimulus_t_ms: 9000,
                target_yaw_deg: 6.0,
                settle_ms: Some(1010),
                final_gaze_yaw_deg: 5.982,
            }],
            detector_metrics: vec![],
            budgets: vec![BudgetCheck::at_most("wake mean latency ms", Some(104.5), 200.0)],
            messages: MessageCounts { sent: 10, delivered: 10, routing_errors: 0 },
        }
    }

    #[test]
    fn json_report_roundtrips_exactly() {
        let r = sample_report();
        let mut buf = Vec::new();
        emit_report(&r, ReportFormat::Json, &mut buf).unwrap();
        let parsed = parse_report(buf.as_slice()).unwrap();
        assert_eq!(parsed, r);
    }

    #[test]
    fn text_summary_has_one_row_per_budget() {
        let mut r = sample_report();
        r.budgets.push(BudgetCheck::above("single mean above 300", Some(450.0), 300.0));
        let mut buf = Vec::new();
        emit_report(&r, ReportFormat::Text, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows = text.lines().filter(|l| l.contains("[PASS]") || l.contains("[FAIL]")).count();
        assert_eq!(rows, r.budgets.len());
    }

    #[test]
    fn vacuous_budgets_pass() {
        let b = BudgetCheck::at_most("nothing measured", None, 200.0);
        assert!(b.pass);
    }

    #[test]
    fn unknown_format_is_a_usage_error() {
        let err = "yaml".parse::<ReportFormat>().unwrap_err();
        assert!(matches!(err, HarnessError::Usage(_)));
    }
}
