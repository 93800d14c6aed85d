//! The capacity-driven merge policy for Min-Sum instances.
//!
//! At each time t the capacity is the largest power of two dividing t; if two
//! or more components weigh no more than the capacity, they all merge into
//! one. The merge line runs at every time step, including query-only ones.

use crate::error::{Error, Result};
use crate::model::{Batch, ItemSet, Members, Time};
use std::sync::Arc;
use crate::policy::{batch_set, CoverDelta, IdGen, NewComponent, Policy, StepCtx};
use crate::weight::Weight;

/// The merge-weight threshold at time t: 2^j for the maximal j with 2^j | t.
pub fn capacity(t: Time) -> Result<Weight> {
    if t == 0 {
        return Err(Error::Validation("capacity undefined at t = 0".into()));
    }
    Ok(Weight::one().shl2(t.trailing_zeros() as i64))
}

struct Comp {
    id: crate::ledger::ComponentId,
    members: Members,
    weight: Weight,
}

pub struct AdaptiveBinary {
    comps: Vec<Comp>,
    ids: IdGen,
}

impl AdaptiveBinary {
    pub fn new() -> Self {
        AdaptiveBinary {
            comps: Vec::new(),
            ids: IdGen::new(),
        }
    }
}

impl Default for AdaptiveBinary {
    fn default() -> Self {
        Self::new()
    }
}

impl Policy for AdaptiveBinary {
    fn name(&self) -> &'static str {
        "adaptive-binary"
    }

    fn step(&mut self, t: Time, batch: &Batch, ctx: &StepCtx<'_>) -> Result<CoverDelta> {
        let mut delta = CoverDelta::none();
        let mut inserted: Option<usize> = None;
        if !batch.is_empty() {
            let members: Members = Arc::new(batch_set(batch));
            let weight = ctx.eval(&members);
            let id = self.ids.fresh();
            inserted = Some(self.comps.len());
            self.comps.push(Comp { id, members, weight });
        }

        let cap = capacity(t)?;
        let light: Vec<usize> = (0..self.comps.len())
            .filter(|&i| self.comps[i].weight <= cap)
            .collect();
        let merged = light.len() >= 2;
        if let Some(i) = inserted {
            // The same-step insertion folds straight into a merge that takes
            // it; it only surfaces in the cover when it survives the step.
            if !(merged && light.contains(&i)) {
                delta.created.push(NewComponent {
                    id: self.comps[i].id,
                    members: self.comps[i].members.clone(),
                    interval: Some((t, t)),
                });
            }
        }
        if merged {
            let mut members = ItemSet::new();
            let mut weight = Weight::zero();
            for &i in &light {
                members.extend(self.comps[i].members.iter().copied());
                weight += &self.comps[i].weight;
                if inserted != Some(i) {
                    delta.destroyed.push(self.comps[i].id);
                }
            }
            let id = self.ids.fresh();
            let members: Members = Arc::new(members);
            delta.created.push(NewComponent {
                id,
                members: members.clone(),
                interval: None,
            });
            let mut keep = Vec::new();
            for (i, c) in self.comps.drain(..).enumerate() {
                if !light.contains(&i) {
                    keep.push(c);
                }
            }
            keep.push(Comp { id, members, weight });
            self.comps = keep;
        }
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_values() {
        assert_eq!(capacity(8).unwrap(), Weight::from_u64(8));
        assert_eq!(capacity(12).unwrap(), Weight::from_u64(4));
        assert_eq!(capacity(7).unwrap(), Weight::from_u64(1));
        assert!(capacity(0).is_err());
    }
}
