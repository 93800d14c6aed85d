//! Machine-readable experiment reports.
//!
//! Exact rationals are authoritative; decimal renderings carry 12
//! significant digits and are labeled approximate.

use serde::{Deserialize, Serialize};

use dynlab_core::cost::CostModel;
use dynlab_core::ledger::SolutionLedger;
use dynlab_core::model::Trace;
use dynlab_core::opt::{verify_lightest_first, verify_newest_first, LightestMode};
use dynlab_core::weight::Weight;

pub const REPORT_FORMAT: &str = "dynlab-report/1";
pub const DECIMAL_DIGITS: usize = 12;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExactValue {
    pub exact: String,
    /// Approximate decimal rendering; the exact field is authoritative.
    pub approx: String,
}

impl ExactValue {
    pub fn of(w: &Weight) -> Self {
        ExactValue {
            exact: w.to_string(),
            approx: w.to_decimal(DECIMAL_DIGITS),
        }
    }

    pub fn weight(&self) -> Weight {
        self.exact.parse().expect("reports only store valid rationals")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    pub trace: String,
    pub variant: String,
    pub build_total: ExactValue,
    pub query_total: u64,
    pub combined_total: ExactValue,
    /// The variant's objective: combined for Min-Sum, build otherwise.
    pub objective_total: ExactValue,
    pub build_cost_per_time: Vec<String>,
    pub query_cost_per_time: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opt_cost: Option<ExactValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opt_solver: Option<String>,
    /// objective_total / opt_cost, exact; present only when an oracle ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<ExactValue>,
    pub newest_first: bool,
    pub lightest_first: bool,
    pub wall_ms: u64,
}

impl ExperimentReport {
    pub fn from_ledger(
        policy: String,
        k: Option<u64>,
        trace_id: String,
        trace: &Trace,
        ledger: &SolutionLedger,
        wall_ms: u64,
    ) -> Self {
        let model = CostModel::for_variant(trace.variant);
        ExperimentReport {
            format: REPORT_FORMAT.to_string(),
            policy,
            k,
            trace: trace_id,
            variant: trace.variant.name().to_string(),
            build_total: ExactValue::of(&ledger.build_total),
            query_total: ledger.query_total,
            combined_total: ExactValue::of(&ledger.combined_total()),
            objective_total: ExactValue::of(&ledger.objective_total(trace)),
            build_cost_per_time: ledger
                .build_cost_per_time
                .iter()
                .map(|w| w.to_string())
                .collect(),
            query_cost_per_time: ledger.query_cost_per_time.clone(),
            opt_cost: None,
            opt_solver: None,
            ratio: None,
            newest_first: verify_newest_first(ledger, trace),
            lightest_first: verify_lightest_first(
                ledger,
                trace,
                model,
                LightestMode::MergeEvents,
            ),
            wall_ms,
        }
    }

    pub fn attach_opt(&mut self, opt_cost: &Weight, solver: &str) {
        self.opt_cost = Some(ExactValue::of(opt_cost));
        self.opt_solver = Some(solver.to_string());
        if !opt_cost.is_zero() {
            let ratio = self
                .objective_total
                .weight()
                .div(opt_cost)
                .expect("nonzero divisor");
            self.ratio = Some(ExactValue::of(&ratio));
        }
    }
}

/// Stable column order for comparison tables.
pub const CSV_COLUMNS: [&str; 12] = [
    "policy",
    "k",
    "trace",
    "variant",
    "build_total",
    "query_total",
    "combined_total",
    "objective_total",
    "opt_cost",
    "ratio",
    "newest_first",
    "lightest_first",
];

pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

pub fn csv_row(r: &ExperimentReport) -> String {
    [
        r.policy.clone(),
        r.k.map(|k| k.to_string()).unwrap_or_default(),
        r.trace.clone(),
        r.variant.clone(),
        r.build_total.exact.clone(),
        r.query_total.to_string(),
        r.combined_total.exact.clone(),
        r.objective_total.exact.clone(),
        r.opt_cost.as_ref().map(|v| v.exact.clone()).unwrap_or_default(),
        r.ratio.as_ref().map(|v| v.exact.clone()).unwrap_or_default(),
        r.newest_first.to_string(),
        r.lightest_first.to_string(),
    ]
    .join(",")
}
