//! Run metrics: latency statistics per scheme, failure and fallback
//! accounting, planning-side quality, and the closed-form scheduling
//! overhead model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::predictor::nearest_rank;
use crate::protocol::Scheme;

pub const METRICS_FORMAT: &str = "ntnsim-metrics";
pub const METRICS_VERSION: u32 = 1;
pub const LATENCY_CSV_LINE: &str = "# ntnsim-latency v1";

/// Summary of one latency sample set, percentiles by nearest rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub max_s: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return LatencyStats::default();
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        LatencyStats {
            count: sorted.len() as u64,
            mean_s: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p50_s: nearest_rank(&sorted, 50.0),
            p95_s: nearest_rank(&sorted, 95.0),
            max_s: *sorted.last().unwrap(),
        }
    }
}

/// Per-scheme outcome counters and interruption statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SchemeReport {
    /// Handovers executed under this scheme.
    pub handovers: u64,
    /// Scheduled target was dead at the trigger; a reactive target was
    /// used instead (serial procedure for the parallel scheme).
    pub fallbacks: u64,
    /// No live target existed at the trigger, or the target died before
    /// the procedure completed.
    pub failures: u64,
    pub failure_rate_permille: f64,
    pub interruption: LatencyStats,
    pub preparation: LatencyStats,
    /// Fraction of service time lost to handover interruptions:
    /// per-terminal handover rate times mean interruption.
    pub loss_proxy: f64,
}

/// Planner quality: how often the scheduled target disagreed with a fresh
/// measurement-based choice at execution time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct InadequateReport {
    pub planned: u64,
    pub inadequate: u64,
    pub rate: f64,
}

/// Store-and-fire slot accounting over the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SsfReport {
    pub stored: u64,
    pub fired: u64,
    pub pending: u64,
    pub fallbacks: u64,
}

/// Window-planning counters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PlanningReport {
    pub windows: u64,
    pub entries: u64,
    pub gaps: u64,
    pub acquisitions: u64,
    pub flicker_anomalies: u64,
    pub cancelled: u64,
    /// Executed events whose source was already below threshold at the
    /// trigger (coverage-hole crossings).
    pub source_down: u64,
}

/// Scheduling overhead of a deployment, from the closed-form model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct OverheadReport {
    pub communication_bytes_per_s: f64,
    pub storage_bytes: f64,
    pub calculation_evals_per_s: f64,
}

/// Bytes per second spent distributing schedule updates: every terminal
/// receives `message_size_bytes` at its handover rate.
pub fn communication_overhead_bytes_per_s(
    terminals: u64,
    handover_rate_hz: f64,
    message_size_bytes: u64,
) -> f64 {
    terminals as f64 * handover_rate_hz * message_size_bytes as f64
}

/// Bytes of schedule state held for one planning interval.
pub fn storage_overhead_bytes(
    terminals: u64,
    handover_rate_hz: f64,
    message_size_bytes: u64,
    plan_interval_s: f64,
) -> f64 {
    communication_overhead_bytes_per_s(terminals, handover_rate_hz, message_size_bytes)
        * plan_interval_s
}

/// Strength evaluations per second on the planning side: every terminal's
/// candidate set is scored once per planning interval.
pub fn calculation_overhead_evals_per_s(
    terminals: u64,
    candidates_per_terminal: f64,
    plan_interval_s: f64,
) -> f64 {
    terminals as f64 * candidates_per_terminal / plan_interval_s
}

/// Whole-run metrics document, serialized as versioned JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format: String,
    pub version: u32,
    pub scenario: String,
    pub seed: u64,
    pub duration_s: f64,
    pub terminals: u32,
    pub handover_events: u64,
    /// Events per terminal per second.
    pub handover_rate_hz: f64,
    pub schemes: BTreeMap<String, SchemeReport>,
    pub inadequate: InadequateReport,
    pub ssf: SsfReport,
    pub planning: PlanningReport,
    pub overhead: OverheadReport,
    pub mean_pass_duration_s: f64,
}

impl MetricsReport {
    pub fn to_json_string(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("metrics serialize");
        text.push('\n');
        text
    }

    pub fn from_json_str(text: &str) -> Result<Self, String> {
        let report: MetricsReport = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if report.format != METRICS_FORMAT {
            return Err(format!("format: expected {METRICS_FORMAT:?}, found {:?}", report.format));
        }
        if report.version != METRICS_VERSION {
            return Err(format!(
                "version: expected {METRICS_VERSION}, found {}",
                report.version
            ));
        }
        Ok(report)
    }

    pub fn scheme(&self, scheme: Scheme) -> Option<&SchemeReport> {
        self.schemes.get(scheme.label())
    }
}

/// One CSV of interruption samples, versioned, milliseconds with full
/// float precision so the numbers survive a round trip exactly.
pub fn latency_samples_csv(samples: &BTreeMap<Scheme, Vec<f64>>) -> String {
    let mut out = String::new();
    out.push_str(LATENCY_CSV_LINE);
    out.push('\n');
    out.push_str("scheme,interruption_ms\n");
    for (scheme, values) in samples {
        for v in values {
            out.push_str(&format!("{},{}\n", scheme.label(), v * 1e3));
        }
    }
    out
}

/// Empirical CDF of one sample set as CSV `value_ms,fraction` rows.
pub fn cdf_csv(samples: &[f64]) -> String {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut out = String::new();
    out.push_str(LATENCY_CSV_LINE);
    out.push('\n');
    out.push_str("interruption_ms,fraction\n");
    let n = sorted.len();
    for (i, v) in sorted.iter().enumerate() {
        out.push_str(&format!("{},{}\n", v * 1e3, (i + 1) as f64 / n as f64));
    }
    out
}
