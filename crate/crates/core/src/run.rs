//! Replay machinery: drive a policy over a trace, validate every cover, and
//! produce the exact ledger.
//!
//! The harness owns the clock: every time step 1..=n is fed to the policy,
//! including empty batches, so Min-Sum query accounting stays uniform.

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::ledger::{
    accumulate_costs, validate_cover, Component, ComponentId, ComponentStore, Cover,
    CoverageTracker, SolutionLedger,
};
use crate::model::{Time, Trace};
use crate::policy::{CoverDelta, Policy, PolicySpec, StepCtx};

/// The raw outcome of a replay: per-time covers, the component table, and the
/// per-time deltas (useful for merge-tree reconstruction).
pub struct Replay {
    pub covers: Vec<Cover>,
    pub store: ComponentStore,
    pub deltas: Vec<CoverDelta>,
}

/// Applies one delta to a sorted id list, checking id discipline.
pub fn apply_delta(
    current: &mut Vec<ComponentId>,
    delta: &CoverDelta,
    t: Time,
) -> Result<()> {
    for id in &delta.destroyed {
        match current.binary_search(id) {
            Ok(pos) => {
                current.remove(pos);
            }
            Err(_) => {
                return Err(Error::Policy {
                    t,
                    detail: format!("destroyed {:?} which is not live", id),
                });
            }
        }
    }
    for c in &delta.created {
        match current.binary_search(&c.id) {
            Ok(_) => {
                return Err(Error::Policy {
                    t,
                    detail: format!("created duplicate id {:?}", c.id),
                });
            }
            Err(pos) => current.insert(pos, c.id),
        }
    }
    Ok(())
}

/// Replays `policy` over the full trace. Every cover is validated as it is
/// produced; a violation aborts with the offending time and delta.
pub fn replay_policy(
    policy: &mut dyn Policy,
    trace: &Trace,
    model: CostModel,
    k: Option<u64>,
) -> Result<Replay> {
    let mut covers: Vec<Cover> = Vec::with_capacity(trace.len() as usize);
    let mut store = ComponentStore::new();
    let mut deltas: Vec<CoverDelta> = Vec::with_capacity(trace.len() as usize);
    let mut live: Vec<ComponentId> = Vec::new();
    let mut seq: u64 = 0;
    let mut tracker = CoverageTracker::new();

    for t in 1..=trace.len() {
        let batch = trace.batch(t);
        tracker.admit_batch(batch);
        let ctx = StepCtx {
            trace,
            model,
            now: t,
        };
        let delta = policy.step(t, batch, &ctx)?;
        apply_delta(&mut live, &delta, t)?;
        for id in &delta.destroyed {
            let c = store.get(*id).expect("liveness checked by apply_delta");
            tracker.remove_members(&c.members);
        }
        for c in &delta.created {
            seq += 1;
            let comp = Component {
                id: c.id,
                members: c.members.clone(),
                birth: t,
                seq,
                interval: c.interval,
            };
            comp.validate_interval(trace)?;
            tracker.add_members(&c.members, trace, t)?;
            store.insert(comp)?;
        }
        let cover = Cover {
            time: t,
            components: live.clone(),
        };
        if !tracker.complete() || k.map_or(false, |k| cover.components.len() as u64 > k) {
            let v = validate_cover(&cover, &store, trace, k);
            return Err(Error::InvalidCover {
                t,
                detail: format!("{:?} (delta {:?})", v, delta),
            });
        }
        covers.push(cover);
        deltas.push(delta);
    }
    Ok(Replay {
        covers,
        store,
        deltas,
    })
}

/// Replay + exact accounting in one call.
pub fn run_policy_ledger(
    spec: &PolicySpec,
    trace: &Trace,
    k: Option<u64>,
) -> Result<SolutionLedger> {
    if !spec.supports(trace.variant) {
        return Err(Error::PolicyMismatch {
            policy: spec.name().to_string(),
            variant: trace.variant.name().to_string(),
        });
    }
    let model = CostModel::for_variant(trace.variant);
    let mut policy = spec.build();
    let replay = replay_policy(policy.as_mut(), trace, model, k)?;
    accumulate_costs(&replay.covers, &replay.store, model, trace, k)
}
