//! The plain binary transform applied batch-wise: every insertion counts as
//! one unit, and the unit counts held by components mimic a binary counter.

use crate::error::Result;
use crate::ledger::ComponentId;
use crate::model::{Batch, Members, Time};
use std::sync::Arc;
use crate::policy::{batch_set, CoverDelta, IdGen, NewComponent, Policy, StepCtx};

struct Comp {
    id: ComponentId,
    members: Members,
    units: u64,
    interval: (Time, Time),
}

pub struct NaiveBinary {
    /// Oldest first; unit counts are distinct powers of two decreasing with
    /// recency, so the newest components are also the smallest.
    comps: Vec<Comp>,
    ids: IdGen,
}

impl NaiveBinary {
    pub fn new() -> Self {
        NaiveBinary {
            comps: Vec::new(),
            ids: IdGen::new(),
        }
    }

    /// Unit counts, oldest first. Exposed for state replay tests.
    pub fn unit_counts(&self) -> Vec<u64> {
        self.comps.iter().map(|c| c.units).collect()
    }
}

impl Default for NaiveBinary {
    fn default() -> Self {
        Self::new()
    }
}

impl Policy for NaiveBinary {
    fn name(&self) -> &'static str {
        "naive-binary"
    }

    fn step(&mut self, t: Time, batch: &Batch, _ctx: &StepCtx<'_>) -> Result<CoverDelta> {
        if batch.is_empty() {
            return Ok(CoverDelta::none());
        }
        let mut delta = CoverDelta::none();
        let mut members = batch_set(batch);
        let mut units = 1u64;
        let mut start = t;
        // Binary increment: absorb the suffix of components holding
        // 2^0, 2^1, ..., 2^(j-1) units.
        while let Some(last) = self.comps.last() {
            if last.units == units {
                let absorbed = self.comps.pop().unwrap();
                delta.destroyed.push(absorbed.id);
                members.extend(absorbed.members.iter().copied());
                start = absorbed.interval.0;
                units *= 2;
            } else {
                break;
            }
        }
        let id = self.ids.fresh();
        let members: Members = Arc::new(members);
        delta.created.push(NewComponent {
            id,
            members: members.clone(),
            interval: Some((start, t)),
        });
        self.comps.push(Comp {
            id,
            members,
            units,
            interval: (start, t),
        });
        Ok(delta)
    }
}
