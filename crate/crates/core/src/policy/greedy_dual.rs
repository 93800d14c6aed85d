//! The credit-based k-component policy and its LSM bootstrap.
//!
//! With k components live, credits rise uniformly until some component's
//! credit reaches its current build cost; the oldest such component and
//! everything newer merge with the batch into one new zero-credit component.
//! Weights may decrease over time, in which case a stored credit can already
//! exceed the current cost and the raise is zero.
//!
//! The LSM variant runs the same machinery against the reduced weights
//! wt'_t(x) = nr(x, U_t) * wt_t({x}): an item's weight drops to its tombstone
//! weight on expiry and to zero once a newer same-key item arrives. On every
//! merge the implementation cross-checks wt'_t(S0) against the equivalent
//! difference form wt_t(S') - wt_t(S' \ S0); a mismatch is reported as a
//! policy error rather than silently trusted.

use std::collections::HashMap;
use std::sync::Arc;

use crate::cost::{eval_unchecked, expired_at, CostModel};
use crate::error::{Error, Result};
use crate::ledger::ComponentId;
use crate::model::{
    Batch, DecreasingSchedule, ItemId, ItemSet, Members, Time, Trace, Variant,
};
use crate::policy::{batch_set, CoverDelta, IdGen, NewComponent, Policy, StepCtx};
use crate::weight::Weight;

struct Comp {
    id: ComponentId,
    members: Members,
    credit: Weight,
    interval: (Time, Time),
    /// Exact additive member-weight sum, maintained incrementally so the
    /// plain k-component path never rescans a component's members.
    additive: Weight,
}

/// Shared engine: `lsm` switches cost evaluation to the reduced weights and
/// enables the difference-form assertion.
pub struct GreedyDualCore {
    k: u64,
    lsm: bool,
    /// Oldest first.
    comps: Vec<Comp>,
    ids: IdGen,
    /// Credit raise per step, recorded for the ledger-level cost bound.
    deltas: Vec<(Time, Weight)>,
    /// Items currently superseded by a newer same-key item (LSM mode).
    redundant: HashMap<ItemId, ()>,
    latest_by_key: HashMap<String, ItemId>,
}

impl GreedyDualCore {
    fn new(k: u64, lsm: bool) -> Self {
        assert!(k >= 1);
        GreedyDualCore {
            k,
            lsm,
            comps: Vec::new(),
            ids: IdGen::new(),
            deltas: Vec::new(),
            redundant: HashMap::new(),
            latest_by_key: HashMap::new(),
        }
    }

    pub fn deltas(&self) -> &[(Time, Weight)] {
        &self.deltas
    }

    /// The decision weight of a component: wt'_t in LSM mode, wt_t otherwise.
    fn cost_of(&self, comp: &Comp, t: Time, ctx: &StepCtx<'_>) -> Weight {
        if self.lsm {
            let mut total = Weight::zero();
            for &id in comp.members.iter() {
                if self.redundant.contains_key(&id) {
                    continue;
                }
                let meta = ctx.trace.item(id);
                if expired_at(meta.expiry, t) {
                    total += meta.tombstone();
                } else {
                    total += &meta.weight;
                }
            }
            total
        } else if ctx.model == CostModel::Additive {
            comp.additive.clone()
        } else {
            ctx.eval(&comp.members)
        }
    }

    fn note_arrivals(&mut self, batch: &Batch, trace: &Trace) {
        if !self.lsm {
            return;
        }
        for &id in &batch.items {
            let meta = trace.item(id);
            if let Some(key) = &meta.key {
                if let Some(&old) = self.latest_by_key.get(key) {
                    self.redundant.insert(old, ());
                }
                self.latest_by_key.insert(key.clone(), id);
            }
        }
    }

    fn step(&mut self, t: Time, batch: &Batch, ctx: &StepCtx<'_>) -> Result<CoverDelta> {
        if batch.is_empty() {
            return Ok(CoverDelta::none());
        }
        self.note_arrivals(batch, ctx.trace);
        let batch_additive: Weight = batch
            .items
            .iter()
            .map(|&id| ctx.trace.item(id).weight.clone())
            .sum();
        let mut delta = CoverDelta::none();
        if (self.comps.len() as u64) < self.k {
            let members: Members = Arc::new(batch_set(batch));
            let id = self.ids.fresh();
            delta.created.push(NewComponent {
                id,
                members: members.clone(),
                interval: Some((t, t)),
            });
            self.comps.push(Comp {
                id,
                members,
                credit: Weight::zero(),
                interval: (t, t),
                additive: batch_additive,
            });
            return Ok(delta);
        }

        let costs: Vec<Weight> = self
            .comps
            .iter()
            .map(|c| self.cost_of(c, t, ctx))
            .collect();
        // Raise every credit by the smallest gap; zero if some credit has
        // already reached its (possibly decreased) cost.
        let raise = self
            .comps
            .iter()
            .zip(&costs)
            .map(|(c, w)| w.saturating_sub(&c.credit))
            .min()
            .expect("k >= 1 components");
        if !raise.is_zero() {
            for c in &mut self.comps {
                c.credit += &raise;
            }
        }
        self.deltas.push((t, raise));

        let pivot = self
            .comps
            .iter()
            .zip(&costs)
            .position(|(c, w)| c.credit >= *w)
            .expect("some component reached its cost after the raise");

        if self.lsm {
            self.assert_difference_form(pivot, t, ctx)?;
        }

        // Merge the batch with the pivot and everything newer, reusing the
        // largest absorbed set in place when nothing else holds it.
        let absorbed: Vec<Comp> = self.comps.drain(pivot..).collect();
        let mut start = t;
        let mut additive = batch_additive;
        for c in &absorbed {
            start = start.min(c.interval.0);
            additive += &c.additive;
            delta.destroyed.push(c.id);
        }
        let base_idx = (0..absorbed.len())
            .max_by_key(|&i| absorbed[i].members.len())
            .expect("at least the pivot is absorbed");
        let mut set: Option<ItemSet> = None;
        let mut rest: Vec<Members> = Vec::new();
        for (i, c) in absorbed.into_iter().enumerate() {
            if i == base_idx {
                set = Some(match Arc::try_unwrap(c.members) {
                    Ok(owned) => owned,
                    Err(shared) => (*shared).clone(),
                });
            } else {
                rest.push(c.members);
            }
        }
        let mut set = set.expect("base chosen above");
        for m in rest {
            set.extend(m.iter().copied());
        }
        set.extend(batch.items.iter().copied());
        let members: Members = Arc::new(set);
        let id = self.ids.fresh();
        delta.created.push(NewComponent {
            id,
            members: members.clone(),
            interval: Some((start, t)),
        });
        self.comps.push(Comp {
            id,
            members,
            credit: Weight::zero(),
            interval: (start, t),
            additive,
        });
        Ok(delta)
    }

    /// Checks wt'_t(S0) = wt_t(S') - wt_t(S' \ S0) where S' takes S0 together
    /// with every newer item, evaluating both sides through different paths.
    fn assert_difference_form(&self, pivot: usize, t: Time, ctx: &StepCtx<'_>) -> Result<()> {
        let s0: &ItemSet = &self.comps[pivot].members;
        let via_schedule = self.cost_of(&self.comps[pivot], t, ctx);
        let mut s_prime: ItemSet = ItemSet::new();
        for (id, meta) in ctx.trace.items() {
            if meta.inserted_at >= self.comps[pivot].interval.0 && meta.inserted_at <= t {
                s_prime.insert(id);
            }
        }
        let rest: ItemSet = s_prime.difference(s0).copied().collect();
        let lhs = eval_unchecked(CostModel::Lsm, t, &s_prime, ctx.trace);
        let rhs = eval_unchecked(CostModel::Lsm, t, &rest, ctx.trace);
        let via_difference = lhs.saturating_sub(&rhs);
        if via_difference != via_schedule {
            return Err(Error::Policy {
                t,
                detail: format!(
                    "reduced-weight mismatch: schedule form {} vs difference form {}",
                    via_schedule, via_difference
                ),
            });
        }
        Ok(())
    }
}

pub struct GreedyDual {
    core: GreedyDualCore,
}

impl GreedyDual {
    pub fn new(k: u64) -> Self {
        GreedyDual {
            core: GreedyDualCore::new(k, false),
        }
    }

    pub fn deltas(&self) -> &[(Time, Weight)] {
        self.core.deltas()
    }
}

impl Policy for GreedyDual {
    fn name(&self) -> &'static str {
        "greedy-dual"
    }

    fn step(&mut self, t: Time, batch: &Batch, ctx: &StepCtx<'_>) -> Result<CoverDelta> {
        self.core.step(t, batch, ctx)
    }
}

pub struct GreedyDualLsm {
    core: GreedyDualCore,
}

impl GreedyDualLsm {
    pub fn new(k: u64) -> Self {
        GreedyDualLsm {
            core: GreedyDualCore::new(k, true),
        }
    }

    pub fn deltas(&self) -> &[(Time, Weight)] {
        self.core.deltas()
    }
}

impl Policy for GreedyDualLsm {
    fn name(&self) -> &'static str {
        "greedy-dual-lsm"
    }

    fn step(&mut self, t: Time, batch: &Batch, ctx: &StepCtx<'_>) -> Result<CoverDelta> {
        self.core.step(t, batch, ctx)
    }
}

/// Rewrites an LSM trace as a decreasing-weights instance carrying the
/// reduced schedule wt': the weight falls to the tombstone weight once the
/// item expires and to zero once a newer same-key item is inserted.
pub fn lsm_reweight(trace: &Trace) -> Result<Trace> {
    if trace.variant != Variant::Lsm {
        return Err(Error::Validation(format!(
            "lsm reweight expects an lsm trace, got {}",
            trace.variant.name()
        )));
    }
    trace.validate()?;
    // First insertion time of a newer same-key item, per item.
    let mut superseded_at: HashMap<ItemId, Time> = HashMap::new();
    let mut latest: HashMap<&str, ItemId> = HashMap::new();
    for b in &trace.batches {
        for &id in &b.items {
            if let Some(key) = trace.item(id).key.as_deref() {
                if let Some(&old) = latest.get(key) {
                    superseded_at.entry(old).or_insert(b.time);
                }
                latest.insert(key, id);
            }
        }
    }
    let mut schedule = DecreasingSchedule::new();
    for (id, meta) in trace.items() {
        let mut bps: Vec<(Time, Weight)> = Vec::new();
        let dead = superseded_at.get(&id).copied();
        if let Some(exp) = meta.expiry {
            let from = exp + 1;
            if dead.map_or(true, |d| from < d) && meta.tombstone() != &meta.weight {
                bps.push((from.max(meta.inserted_at), meta.tombstone().clone()));
            }
        }
        if let Some(d) = dead {
            bps.push((d, Weight::zero()));
        }
        if !bps.is_empty() {
            schedule.set(id, bps);
        }
    }

    let mut out = trace.clone();
    out.variant = Variant::DecreasingWeights;
    out.set_schedule(schedule);
    out.validate()?;
    Ok(out)
}
