//! Recursive phase-based policy for the general k-component problem.
//!
//! B_1 keeps everything in one component, rebuilt on every non-empty batch.
//! B_k (k >= 2) runs a nested B_{k-1} over the current phase's batches and
//! uses its components on top of the root left by the previous full merge.
//! After feeding the child each batch, if the child's cumulative phase cost
//! exceeds (k-1) * wt_t(U_t), everything merges into a single new root and
//! the next phase starts at t+1.
//!
//! The child's final step inside a phase-ending time is speculative: its
//! delta feeds the cost test but never materializes in the parent's cover.

use crate::error::Result;
use crate::ledger::ComponentId;
use crate::model::{Batch, ItemSet, Time};
use crate::policy::{CoverDelta, IdGen, NewComponent, Policy, StepCtx};
use crate::weight::Weight;

pub struct RecursiveBk {
    k: u64,
    /// First time of this instance's scope (1 for the top level, the phase
    /// start for nested children).
    scope_start: Time,
    ids: IdGen,
    /// Everything inserted within scope so far.
    items: ItemSet,
    /// Single component when k = 1, else the previous full merge's output.
    root: Option<ComponentId>,
    /// Live components from the child, in the parent's id space.
    child_live: Vec<ComponentId>,
    child: Option<Box<RecursiveBk>>,
    child_cost: Weight,
    phase_start: Time,
    /// Times at which this instance performed a full merge; top-level
    /// introspection for phase-structure tests.
    full_merges: Vec<Time>,
}

impl RecursiveBk {
    pub fn new(k: u64, ids: IdGen, scope_start: Time) -> Self {
        assert!(k >= 1);
        RecursiveBk {
            k,
            scope_start,
            ids,
            items: ItemSet::new(),
            root: None,
            child_live: Vec::new(),
            child: None,
            child_cost: Weight::zero(),
            phase_start: scope_start,
            full_merges: Vec::new(),
        }
    }

    pub fn full_merge_times(&self) -> &[Time] {
        &self.full_merges
    }

    fn live_ids(&self) -> Vec<ComponentId> {
        let mut ids: Vec<ComponentId> = self.root.into_iter().collect();
        ids.extend(self.child_live.iter().copied());
        ids
    }
}

impl Policy for RecursiveBk {
    fn name(&self) -> &'static str {
        "recursive-bk"
    }

    fn step(&mut self, t: Time, batch: &Batch, ctx: &StepCtx<'_>) -> Result<CoverDelta> {
        if batch.is_empty() {
            return Ok(CoverDelta::none());
        }
        self.items.extend(batch.items.iter().copied());

        if self.k == 1 {
            let mut delta = CoverDelta::none();
            if let Some(old) = self.root.take() {
                delta.destroyed.push(old);
            }
            let id = self.ids.fresh();
            delta.created.push(NewComponent {
                id,
                members: std::sync::Arc::new(self.items.clone()),
                interval: Some((self.scope_start, t)),
            });
            self.root = Some(id);
            self.full_merges.push(t);
            return Ok(delta);
        }

        if self.child.is_none() {
            self.child = Some(Box::new(RecursiveBk::new(
                self.k - 1,
                self.ids.clone(),
                self.phase_start,
            )));
        }
        let child_delta = self.child.as_mut().unwrap().step(t, batch, ctx)?;
        for c in &child_delta.created {
            self.child_cost += &ctx.eval(&c.members);
        }

        let full_cost = ctx.eval(&self.items);
        if self.child_cost > full_cost.mul_u64(self.k - 1) {
            // End the phase: the child's step this round never materializes.
            let mut delta = CoverDelta::none();
            delta.destroyed = self.live_ids();
            let id = self.ids.fresh();
            delta.created.push(NewComponent {
                id,
                members: std::sync::Arc::new(self.items.clone()),
                interval: Some((self.scope_start, t)),
            });
            self.root = Some(id);
            self.child = None;
            self.child_live.clear();
            self.child_cost = Weight::zero();
            self.phase_start = t + 1;
            self.full_merges.push(t);
            Ok(delta)
        } else {
            // Materialize the child's change.
            for id in &child_delta.destroyed {
                self.child_live.retain(|c| c != id);
            }
            for c in &child_delta.created {
                self.child_live.push(c.id);
            }
            Ok(child_delta)
        }
    }
}
