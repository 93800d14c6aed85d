//! The operations behind each subcommand.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use dynlab_core::adversary::{check_merge_tree, gen_minsum_lower_bound, run_kcomp_adversary, AdversaryRun};
use dynlab_core::error::{Error, Result};
use dynlab_core::ledger::SolutionLedger;
use dynlab_core::model::{Time, Trace, Variant};
use dynlab_core::opt::{
    brute_force_newest_first, dp_opt_kcomponent, dp_opt_minsum, partition_oracle, BruteConfig,
    OptResult, PartitionConfig,
};
use dynlab_core::policy::PolicySpec;
use dynlab_core::run::run_policy_ledger;
use dynlab_core::weight::Weight;

use crate::report::{csv_header, csv_row, ExactValue, ExperimentReport};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OracleKind {
    Brute,
    Partition,
    Dp,
}

impl OracleKind {
    pub fn parse(s: &str) -> Result<OracleKind> {
        match s {
            "brute" => Ok(OracleKind::Brute),
            "partition" => Ok(OracleKind::Partition),
            "dp" => Ok(OracleKind::Dp),
            other => Err(Error::Validation(format!("unknown oracle {:?}", other))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OracleCaps {
    pub brute: BruteConfig,
    pub partition: PartitionConfig,
}

impl OracleCaps {
    pub fn new() -> Self {
        OracleCaps {
            brute: BruteConfig::default(),
            partition: PartitionConfig::default(),
        }
    }
}

/// The k-variants need a budget; Min-Sum ignores one.
fn effective_k(trace: &Trace, k: Option<u64>) -> Result<Option<u64>> {
    match trace.variant {
        Variant::MinSum => Ok(None),
        _ => {
            if k.is_none() {
                return Err(Error::Validation(
                    "this variant requires a component budget k".into(),
                ));
            }
            Ok(k)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessReport {
    pub build_total: String,
    pub query_total: u64,
    pub covers: Vec<Vec<u64>>,
    pub components: Vec<WitnessComponent>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessComponent {
    pub id: u64,
    pub birth: Time,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<(Time, Time)>,
    pub members: Vec<String>,
}

fn witness_report(ledger: &SolutionLedger, trace: &Trace) -> WitnessReport {
    let mut components: Vec<WitnessComponent> = Vec::new();
    for cover in &ledger.covers {
        for id in &cover.components {
            if components.iter().any(|c| c.id == id.0) {
                continue;
            }
            let c = ledger.store.get(*id).unwrap();
            components.push(WitnessComponent {
                id: id.0,
                birth: c.birth,
                interval: c.interval,
                members: c
                    .members
                    .iter()
                    .map(|&m| trace.item(m).token.clone())
                    .collect(),
            });
        }
    }
    components.sort_by_key(|c| c.id);
    WitnessReport {
        build_total: ledger.build_total.to_string(),
        query_total: ledger.query_total,
        covers: ledger
            .covers
            .iter()
            .map(|c| c.components.iter().map(|id| id.0).collect())
            .collect(),
        components,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptReport {
    pub solver: String,
    pub variant: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    pub optimal_cost: ExactValue,
    pub explored: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessReport>,
    pub wall_ms: u64,
}

/// Runs the selected oracle on a trace.
pub fn solve_opt(
    trace: &Trace,
    oracle: OracleKind,
    k: Option<u64>,
    caps: &OracleCaps,
) -> Result<OptReport> {
    let start = Instant::now();
    let k = effective_k(trace, k)?;
    let (cost, solver, explored, witness) = match oracle {
        OracleKind::Brute => {
            let OptResult {
                optimal_cost,
                witness,
                solver,
                explored,
            } = brute_force_newest_first(trace, k, &caps.brute)?;
            (
                optimal_cost,
                solver.name(),
                explored,
                Some(witness_report(&witness, trace)),
            )
        }
        OracleKind::Partition => {
            let OptResult {
                optimal_cost,
                witness,
                solver,
                explored,
            } = partition_oracle(trace, k, &caps.partition)?;
            (
                optimal_cost,
                solver.name(),
                explored,
                Some(witness_report(&witness, trace)),
            )
        }
        OracleKind::Dp => match trace.variant {
            Variant::MinSum => (dp_opt_minsum(trace)?, "dp-minsum", 0, None),
            _ => {
                let k = k.expect("checked by effective_k");
                (dp_opt_kcomponent(trace, k)?, "dp-kcomponent", 0, None)
            }
        },
    };
    Ok(OptReport {
        solver: solver.to_string(),
        variant: trace.variant.name().to_string(),
        k,
        optimal_cost: ExactValue::of(&cost),
        explored,
        witness,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Replays a policy over a trace, optionally runs an oracle, and reports.
pub fn run_experiment(
    policy: &PolicySpec,
    trace: &Trace,
    trace_id: &str,
    oracle: Option<OracleKind>,
    caps: &OracleCaps,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let k = policy.k();
    let ledger = run_policy_ledger(policy, trace, k)?;
    let wall_ms = start.elapsed().as_millis() as u64;
    let mut report = ExperimentReport::from_ledger(
        policy.name().to_string(),
        k,
        trace_id.to_string(),
        trace,
        &ledger,
        wall_ms,
    );
    if let Some(oracle) = oracle {
        let opt = solve_opt(trace, oracle, k, caps)?;
        report.attach_opt(&opt.optimal_cost.weight(), &opt.solver);
    }
    Ok(report)
}

/// One row per (policy, trace); stable column order.
pub fn compare(
    policies: &[PolicySpec],
    traces: &[(String, Trace)],
    oracle: Option<OracleKind>,
    caps: &OracleCaps,
) -> Result<(String, Vec<ExperimentReport>)> {
    let mut rows = vec![csv_header()];
    let mut reports = Vec::new();
    for (trace_id, trace) in traces {
        for policy in policies {
            let report = run_experiment(policy, trace, trace_id, oracle, caps)?;
            rows.push(csv_row(&report));
            reports.push(report);
        }
    }
    Ok((rows.join("\n") + "\n", reports))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub depth: u64,
    pub n_exp: u64,
    pub leaves: usize,
    pub trace_len: Time,
    pub matches: bool,
    pub build_cost: ExactValue,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_merge_time: Option<Time>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<String>,
    pub wall_ms: u64,
}

/// Generates the Min-Sum lower-bound instance, replays the capacity-driven
/// policy on it, and checks the merge tree node by node.
pub fn lowerbound_minsum(depth: u64) -> Result<LowerBoundReport> {
    let start = Instant::now();
    let (trace, spec) = gen_minsum_lower_bound(depth)?;
    let ledger = run_policy_ledger(&PolicySpec::AdaptiveBinary, &trace, None)?;
    let check = check_merge_tree(&ledger, &trace, &spec);
    Ok(LowerBoundReport {
        depth,
        n_exp: spec.n_exp,
        leaves: check.leaves,
        trace_len: trace.len(),
        matches: check.matches,
        build_cost: ExactValue::of(&check.build_cost),
        first_merge_time: check.first_merge_time,
        mismatch: check.mismatch,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Runs the adaptive k-component adversary against a named policy.
pub fn adversary_run(
    policy: &PolicySpec,
    k: u64,
    epsilon: &Weight,
    step_cap: Time,
) -> Result<AdversaryRun> {
    if policy.k() != Some(k) {
        return Err(Error::Validation(
            "adversary k must match the policy's k".into(),
        ));
    }
    if !policy.supports(Variant::KComponent) {
        return Err(Error::PolicyMismatch {
            policy: policy.name().to_string(),
            variant: Variant::KComponent.name().to_string(),
        });
    }
    let mut built = policy.build();
    run_kcomp_adversary(built.as_mut(), k, epsilon, step_cap)
}
