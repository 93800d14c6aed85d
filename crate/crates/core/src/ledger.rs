//! Covers, components, cover validation, and exact cost accounting.
//!
//! Component identity is by id token, not by member-set equality: a rebuilt
//! component with identical members is a new component and incurs build cost
//! again. Per-time build cost charges exactly the components present at t but
//! not at t-1; query cost is the cover size.

use std::collections::HashMap;

use serde::Serialize;

use crate::cost::{eval_build_cost, CostModel};
use crate::error::{Error, Result};
use crate::model::{ItemSet, Members, Time, Trace};
use crate::weight::Weight;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize)]
pub struct ComponentId(pub u64);

/// An immutable static container of items, alive from `birth` until destroyed.
#[derive(Clone, Debug)]
pub struct Component {
    pub id: ComponentId,
    pub members: Members,
    pub birth: Time,
    /// Creation sequence number; total order of creation, used for "newest".
    pub seq: u64,
    /// Present when members = I_i ∪ ... ∪ I_j exactly.
    pub interval: Option<(Time, Time)>,
}

impl Component {
    pub fn validate_interval(&self, trace: &Trace) -> Result<()> {
        if let Some((i, j)) = self.interval {
            let mut expect = ItemSet::new();
            for t in i..=j {
                expect.extend(trace.batch(t).items.iter().copied());
            }
            if expect != *self.members {
                return Err(Error::Validation(format!(
                    "component {:?} interval ({}, {}) does not reproduce its members",
                    self.id, i, j
                )));
            }
        }
        if self.members.is_empty() {
            return Err(Error::Validation(format!(
                "component {:?} has no members",
                self.id
            )));
        }
        Ok(())
    }
}

/// The cover at one time step: ids of the live components, sorted.
#[derive(Clone, Debug, Default)]
pub struct Cover {
    pub time: Time,
    pub components: Vec<ComponentId>,
}

/// All components ever created during a run, indexed by id.
#[derive(Clone, Debug, Default)]
pub struct ComponentStore {
    by_id: HashMap<ComponentId, Component>,
}

impl ComponentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, c: Component) -> Result<()> {
        if self.by_id.contains_key(&c.id) {
            return Err(Error::Validation(format!(
                "component id {:?} created twice",
                c.id
            )));
        }
        self.by_id.insert(c.id, c);
        Ok(())
    }

    pub fn get(&self, id: ComponentId) -> Option<&Component> {
        self.by_id.get(&id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

/// Violations found while validating a cover. Violations are data, not
/// failures; callers decide whether to treat them as fatal.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CoverViolations {
    /// Items inserted by t but absent from every component.
    pub missing_items: Vec<String>,
    /// Component members not inserted by t (or unknown).
    pub unknown_items: Vec<String>,
    /// Set when a k-budget was given and |C_t| exceeds it.
    pub budget_exceeded: Option<(usize, u64)>,
}

impl CoverViolations {
    pub fn ok(&self) -> bool {
        self.missing_items.is_empty()
            && self.unknown_items.is_empty()
            && self.budget_exceeded.is_none()
    }
}

/// Checks that the cover's union is exactly U_t and the k-budget holds.
pub fn validate_cover(
    cover: &Cover,
    store: &ComponentStore,
    trace: &Trace,
    k: Option<u64>,
) -> CoverViolations {
    let mut v = CoverViolations::default();
    let universe = trace.universe_at(cover.time);
    let mut covered = ItemSet::new();
    for id in &cover.components {
        if let Some(c) = store.get(*id) {
            for &m in c.members.iter() {
                if !universe.contains(&m) {
                    let token = if (m.0 as usize) < trace.item_count() {
                        trace.item(m).token.clone()
                    } else {
                        format!("#{}", m.0)
                    };
                    v.unknown_items.push(token);
                }
                covered.insert(m);
            }
        } else {
            v.unknown_items.push(format!("component {:?}", id));
        }
    }
    for &m in universe.difference(&covered) {
        v.missing_items.push(trace.item(m).token.clone());
    }
    if let Some(k) = k {
        if cover.components.len() as u64 > k {
            v.budget_exceeded = Some((cover.components.len(), k));
        }
    }
    v.missing_items.sort();
    v.unknown_items.sort();
    v
}

/// The full cost record of one solution: per-time builds and query counts,
/// exact totals, and the components table.
#[derive(Clone, Debug)]
pub struct SolutionLedger {
    pub covers: Vec<Cover>,
    pub store: ComponentStore,
    pub build_cost_per_time: Vec<Weight>,
    pub query_cost_per_time: Vec<u64>,
    pub build_total: Weight,
    pub query_total: u64,
}

impl SolutionLedger {
    pub fn len(&self) -> Time {
        self.covers.len() as Time
    }

    pub fn is_empty(&self) -> bool {
        self.covers.is_empty()
    }

    /// build + query, as an exact rational.
    pub fn combined_total(&self) -> Weight {
        self.build_total.clone() + Weight::from_u64(self.query_total)
    }

    /// The variant's objective: Min-Sum counts queries, the k-variants don't.
    pub fn objective_total(&self, trace: &Trace) -> Weight {
        if trace.variant.counts_query_cost() {
            self.combined_total()
        } else {
            self.build_total.clone()
        }
    }

    /// Components created at time t (present at t, absent at t-1).
    pub fn created_at(&self, t: Time) -> Vec<ComponentId> {
        let cur = &self.covers[(t - 1) as usize].components;
        if t == 1 {
            return cur.clone();
        }
        let prev = &self.covers[(t - 2) as usize].components;
        diff_sorted(cur, prev)
    }

    /// Components destroyed at time t (present at t-1, absent at t).
    pub fn destroyed_at(&self, t: Time) -> Vec<ComponentId> {
        if t == 1 {
            return Vec::new();
        }
        let cur = &self.covers[(t - 1) as usize].components;
        let prev = &self.covers[(t - 2) as usize].components;
        diff_sorted(prev, cur)
    }
}

/// Elements of `a` not in `b`; both sorted.
pub(crate) fn diff_sorted(a: &[ComponentId], b: &[ComponentId]) -> Vec<ComponentId> {
    let mut out = Vec::new();
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j >= b.len() || b[j] != x {
            out.push(x);
        }
    }
    out
}

/// Incremental set-cover bookkeeping: tracks, across cover transitions,
/// whether every inserted item is covered, without rebuilding U_t per step.
#[derive(Clone, Debug, Default)]
pub struct CoverageTracker {
    counts: Vec<u32>,
    covered: usize,
    universe: usize,
}

impl CoverageTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn admit_batch(&mut self, batch: &crate::model::Batch) {
        self.universe += batch.items.len();
    }

    pub fn add_members(&mut self, members: &ItemSet, trace: &Trace, t: Time) -> Result<()> {
        for &id in members {
            let idx = id.0 as usize;
            if idx >= trace.item_count() {
                return Err(Error::UnknownItem(format!("#{}", id.0)));
            }
            let meta = trace.item(id);
            if meta.inserted_at > t {
                return Err(Error::ItemFromFuture {
                    id: meta.token.clone(),
                    inserted: meta.inserted_at,
                    at: t,
                });
            }
            if self.counts.len() <= idx {
                self.counts.resize(idx + 1, 0);
            }
            self.counts[idx] += 1;
            if self.counts[idx] == 1 {
                self.covered += 1;
            }
        }
        Ok(())
    }

    pub fn remove_members(&mut self, members: &ItemSet) {
        for &id in members {
            let idx = id.0 as usize;
            self.counts[idx] -= 1;
            if self.counts[idx] == 0 {
                self.covered -= 1;
            }
        }
    }

    /// Every item inserted so far is in some live component.
    pub fn complete(&self) -> bool {
        self.covered == self.universe
    }
}

/// Replays a cover sequence into a ledger with exact per-time costs.
///
/// Every cover is validated as the sequence advances; an invalid cover is an
/// error, never a silently-costed solution. New components are identified by
/// id.
pub fn accumulate_costs(
    covers: &[Cover],
    store: &ComponentStore,
    model: CostModel,
    trace: &Trace,
    k: Option<u64>,
) -> Result<SolutionLedger> {
    let mut build_per: Vec<Weight> = Vec::with_capacity(covers.len());
    let mut query_per: Vec<u64> = Vec::with_capacity(covers.len());
    let mut build_total = Weight::zero();
    let mut query_total: u64 = 0;
    let empty: Vec<ComponentId> = Vec::new();
    let mut tracker = CoverageTracker::new();

    for (idx, cover) in covers.iter().enumerate() {
        let t = idx as Time + 1;
        if cover.time != t {
            return Err(Error::Validation(format!(
                "cover at position {} claims time {}",
                idx + 1,
                cover.time
            )));
        }
        tracker.admit_batch(trace.batch(t));
        let prev = if idx == 0 {
            &empty
        } else {
            &covers[idx - 1].components
        };
        let mut step_build = Weight::zero();
        for id in diff_sorted(prev, &cover.components) {
            let c = store
                .get(id)
                .ok_or_else(|| Error::Validation(format!("unknown component {:?}", id)))?;
            tracker.remove_members(&c.members);
        }
        for id in diff_sorted(&cover.components, prev) {
            let c = store
                .get(id)
                .ok_or_else(|| Error::Validation(format!("unknown component {:?}", id)))?;
            c.validate_interval(trace)?;
            if c.birth != t {
                return Err(Error::Validation(format!(
                    "component {:?} born at {} first appears at {}",
                    id, c.birth, t
                )));
            }
            tracker.add_members(&c.members, trace, t)?;
            step_build += &eval_build_cost(model, t, &c.members, trace)?;
        }
        if !tracker.complete() || k.map_or(false, |k| cover.components.len() as u64 > k) {
            // Rebuild the full report only on the failure path.
            let v = validate_cover(cover, store, trace, k);
            return Err(Error::InvalidCover {
                t,
                detail: format!("{:?}", v),
            });
        }
        build_total += &step_build;
        build_per.push(step_build);
        let q = cover.components.len() as u64;
        query_total += q;
        query_per.push(q);
    }

    Ok(SolutionLedger {
        covers: covers.to_vec(),
        store: store.clone(),
        build_cost_per_time: build_per,
        query_cost_per_time: query_per,
        build_total,
        query_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{trace_from_weights, Variant};

    fn w(n: u64) -> Weight {
        Weight::from_u64(n)
    }

    fn comp(id: u64, members: &[u32], birth: Time) -> Component {
        Component {
            id: ComponentId(id),
            members: std::sync::Arc::new(
                members.iter().map(|&i| crate::model::ItemId(i)).collect(),
            ),
            birth,
            seq: id,
            interval: None,
        }
    }

    #[test]
    fn single_batch_single_component() {
        let trace = trace_from_weights(Variant::MinSum, &[Some(w(5))]);
        let mut store = ComponentStore::new();
        store.insert(comp(1, &[0], 1)).unwrap();
        let covers = vec![Cover {
            time: 1,
            components: vec![ComponentId(1)],
        }];
        let ledger =
            accumulate_costs(&covers, &store, CostModel::Additive, &trace, None).unwrap();
        assert_eq!(ledger.build_total, w(5));
        assert_eq!(ledger.query_total, 1);
    }

    #[test]
    fn missing_item_is_reported_and_rejected() {
        let trace = trace_from_weights(Variant::MinSum, &[Some(w(1)), Some(w(2))]);
        let mut store = ComponentStore::new();
        store.insert(comp(1, &[0], 1)).unwrap();
        let cover = Cover {
            time: 2,
            components: vec![ComponentId(1)],
        };
        let v = validate_cover(&cover, &store, &trace, None);
        assert_eq!(v.missing_items, vec!["x2".to_string()]);

        let covers = vec![
            Cover {
                time: 1,
                components: vec![ComponentId(1)],
            },
            cover,
        ];
        assert!(accumulate_costs(&covers, &store, CostModel::Additive, &trace, None).is_err());
    }

    #[test]
    fn budget_violation_reported() {
        let trace = trace_from_weights(
            Variant::KComponent,
            &[Some(w(1)), Some(w(1)), Some(w(1))],
        );
        let mut store = ComponentStore::new();
        for i in 0..3 {
            store.insert(comp(i + 1, &[i as u32], i + 1)).unwrap();
        }
        let cover = Cover {
            time: 3,
            components: vec![ComponentId(1), ComponentId(2), ComponentId(3)],
        };
        let v = validate_cover(&cover, &store, &trace, Some(2));
        assert_eq!(v.budget_exceeded, Some((3, 2)));
        assert!(validate_cover(&cover, &store, &trace, Some(3)).ok());
    }

    #[test]
    fn rebuilt_identical_set_incurs_cost_again() {
        let trace = trace_from_weights(Variant::MinSum, &[Some(w(4)), None]);
        let mut store = ComponentStore::new();
        store.insert(comp(1, &[0], 1)).unwrap();
        store.insert(comp(2, &[0], 2)).unwrap();
        let covers = vec![
            Cover {
                time: 1,
                components: vec![ComponentId(1)],
            },
            Cover {
                time: 2,
                components: vec![ComponentId(2)],
            },
        ];
        let ledger =
            accumulate_costs(&covers, &store, CostModel::Additive, &trace, None).unwrap();
        assert_eq!(ledger.build_total, w(8));
    }

    #[test]
    fn accumulation_is_deterministic() {
        let trace = trace_from_weights(Variant::MinSum, &[Some(w(3)), Some(w(1))]);
        let mut store = ComponentStore::new();
        store.insert(comp(1, &[0], 1)).unwrap();
        store.insert(comp(2, &[1], 2)).unwrap();
        let covers = vec![
            Cover {
                time: 1,
                components: vec![ComponentId(1)],
            },
            Cover {
                time: 2,
                components: vec![ComponentId(1), ComponentId(2)],
            },
        ];
        let a = accumulate_costs(&covers, &store, CostModel::Additive, &trace, None).unwrap();
        let b = accumulate_costs(&covers, &store, CostModel::Additive, &trace, None).unwrap();
        assert_eq!(a.build_total, b.build_total);
        assert_eq!(a.build_cost_per_time, b.build_cost_per_time);
        assert_eq!(a.query_cost_per_time, b.query_cost_per_time);
    }
}
