//! Bigtable's default compaction rule, parameterized by k.
//!
//! Every flush (batch, empty or not) arrives as a newest pseudo-component;
//! if the count then exceeds k, merge the i most recently created
//! components, with i >= 2 minimal such that afterwards every remaining
//! component strictly outweighs the total of everything newer than it. The
//! rule is memoryless: each cover is a function of the previous cover and
//! the batch.
//!
//! An empty flush contributes a weight-zero pseudo-component that exists
//! only inside the merge decision; it never reaches the cover, but it does
//! push the count past k and so forces the characteristic rebuild of the
//! newest real component.

use crate::error::Result;
use crate::ledger::ComponentId;
use crate::model::{Batch, ItemSet, Members, Time};
use std::sync::Arc;
use crate::policy::{batch_set, CoverDelta, IdGen, NewComponent, Policy, StepCtx};
use crate::weight::Weight;

struct Comp {
    id: ComponentId,
    members: Members,
    weight: Weight,
    interval: (Time, Time),
}

pub struct BigtableDefault {
    k: u64,
    /// Creation order, oldest first.
    comps: Vec<Comp>,
    ids: IdGen,
}

impl BigtableDefault {
    pub fn new(k: u64) -> Self {
        assert!(k >= 1);
        BigtableDefault {
            k,
            comps: Vec::new(),
            ids: IdGen::new(),
        }
    }
}

impl Policy for BigtableDefault {
    fn name(&self) -> &'static str {
        "bigtable-default"
    }

    fn step(&mut self, t: Time, batch: &Batch, ctx: &StepCtx<'_>) -> Result<CoverDelta> {
        let fresh = if batch.is_empty() {
            None
        } else {
            let members: Members = Arc::new(batch_set(batch));
            let weight = ctx.eval(&members);
            let id = self.ids.fresh();
            self.comps.push(Comp {
                id,
                members,
                weight,
                interval: (t, t),
            });
            Some(id)
        };
        // Conceptual count includes an empty flush as a newest zero-weight
        // entry; `phantom` is 1 exactly when the batch was empty.
        let phantom: u64 = u64::from(batch.is_empty());
        let count = self.comps.len() as u64 + phantom;

        let mut merged_id = None;
        if count > self.k {
            // Minimal i >= 2; i = count is always feasible because with no
            // remaining component the condition is vacuous.
            let mut chosen = count;
            'outer: for i in 2..count {
                let real = (i - phantom) as usize;
                let split = self.comps.len() - real;
                let mut newer: Weight = self.comps[split..]
                    .iter()
                    .map(|c| c.weight.clone())
                    .sum();
                // Walk the survivors newest-to-oldest; each must strictly
                // outweigh everything newer than it.
                for c in self.comps[..split].iter().rev() {
                    if c.weight <= newer {
                        continue 'outer;
                    }
                    newer += &c.weight;
                }
                chosen = i;
                break;
            }
            let real = (chosen - phantom) as usize;
            let tail = self.comps.split_off(self.comps.len() - real);
            let mut members = ItemSet::new();
            let mut weight = Weight::zero();
            let mut start = Time::MAX;
            let mut end = 0;
            let mut absorbed = Vec::new();
            for c in tail {
                members.extend(c.members.iter().copied());
                weight += &c.weight;
                start = start.min(c.interval.0);
                end = end.max(c.interval.1);
                absorbed.push(c.id);
            }
            let id = self.ids.fresh();
            merged_id = Some((id, absorbed));
            self.comps.push(Comp {
                id,
                members: Arc::new(members),
                weight,
                interval: (start, end),
            });
        }

        // Report the net change. A fresh component absorbed by the same-step
        // merge never surfaces in the cover.
        let mut delta = CoverDelta::none();
        match merged_id {
            None => {
                if let Some(fid) = fresh {
                    let c = self.comps.last().unwrap();
                    debug_assert_eq!(c.id, fid);
                    delta.created.push(NewComponent {
                        id: fid,
                        members: c.members.clone(),
                        interval: Some(c.interval),
                    });
                }
            }
            Some((mid, absorbed)) => {
                // The merge suffix always reaches the newest real component,
                // so a same-step insertion is always absorbed by it.
                debug_assert!(fresh.is_none() || absorbed.contains(&fresh.unwrap()));
                for id in absorbed {
                    if Some(id) != fresh {
                        delta.destroyed.push(id);
                    }
                }
                let c = self.comps.last().unwrap();
                debug_assert_eq!(c.id, mid);
                delta.created.push(NewComponent {
                    id: mid,
                    members: c.members.clone(),
                    interval: Some(c.interval),
                });
            }
        }
        Ok(delta)
    }
}
