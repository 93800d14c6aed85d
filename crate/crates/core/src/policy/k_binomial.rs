//! The k-binomial transform: k components at all times with sizes
//! C(i_1,1), ..., C(i_k,k) for 0 <= i_1 < ... < i_k. Zero-size levels are
//! not materialized, so the visible cover can be smaller than k.

use crate::error::{Error, Result};
use crate::ledger::ComponentId;
use crate::model::{Batch, ItemSet, Time};
use crate::policy::{CoverDelta, IdGen, NewComponent, Policy, StepCtx};

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc * (n - j) as u128 / (j + 1) as u128;
    }
    acc
}

/// The unique decomposition t = sum_j C(i_j, j) with 0 <= i_1 < ... < i_k,
/// found greedily from level k down (i_j maximal with C(i_j, j) <= remainder).
pub fn binomial_decompose(t: u64, k: u64) -> Vec<u64> {
    assert!(k >= 1);
    let mut rem = t as u128;
    let mut out = vec![0u64; k as usize];
    let mut upper: Option<u64> = None;
    for j in (1..=k).rev() {
        let mut i = j - 1; // C(j-1, j) = 0 always fits
        let cap = upper.map(|u| u.saturating_sub(1));
        let mut probe = i + 1;
        while cap.map_or(true, |c| probe <= c) && binomial(probe, j) <= rem {
            i = probe;
            probe += 1;
        }
        rem -= binomial(i, j);
        out[(j - 1) as usize] = i;
        upper = Some(i);
    }
    debug_assert_eq!(rem, 0, "decomposition must consume t exactly");
    out
}

struct Level {
    id: ComponentId,
    /// Unit range [lo, hi) into the inserted-batch list, oldest units lowest.
    units: (u64, u64),
}

pub struct KBinomial {
    k: u64,
    /// One entry per non-empty batch seen, in order: its items and time.
    units: Vec<(ItemSet, Time)>,
    /// Live components, oldest (largest) first.
    levels: Vec<Level>,
    ids: IdGen,
}

impl KBinomial {
    pub fn new(k: u64) -> Self {
        assert!(k >= 1);
        KBinomial {
            k,
            units: Vec::new(),
            levels: Vec::new(),
            ids: IdGen::new(),
        }
    }

    /// Component sizes in units, oldest first. For state replay tests.
    pub fn sizes(&self) -> Vec<u64> {
        self.levels.iter().map(|l| l.units.1 - l.units.0).collect()
    }
}

impl Policy for KBinomial {
    fn name(&self) -> &'static str {
        "k-binomial"
    }

    fn step(&mut self, t: Time, batch: &Batch, _ctx: &StepCtx<'_>) -> Result<CoverDelta> {
        if batch.is_empty() {
            return Ok(CoverDelta::none());
        }
        self.units
            .push((batch.items.iter().copied().collect(), t));
        let count = self.units.len() as u64;
        let decomposition = binomial_decompose(count, self.k);
        // Unit boundaries of the new cover, oldest first, zero levels skipped.
        let mut sizes: Vec<u64> = Vec::new();
        for j in (1..=self.k).rev() {
            let sz = binomial(decomposition[(j - 1) as usize], j);
            if sz > 0 {
                if sz > u64::MAX as u128 {
                    return Err(Error::ResourceCap(
                        "binomial component size exceeds u64".into(),
                    ));
                }
                sizes.push(sz as u64);
            }
        }
        let mut boundaries: Vec<(u64, u64)> = Vec::with_capacity(sizes.len());
        let mut lo = 0u64;
        for sz in sizes {
            boundaries.push((lo, lo + sz));
            lo += sz;
        }
        debug_assert_eq!(lo, count);

        // Keep the prefix of untouched components, rebuild the rest.
        let mut keep = 0;
        while keep < self.levels.len()
            && keep < boundaries.len()
            && self.levels[keep].units == boundaries[keep]
        {
            keep += 1;
        }
        let mut delta = CoverDelta::none();
        for lvl in self.levels.drain(keep..) {
            delta.destroyed.push(lvl.id);
        }
        for &(lo, hi) in &boundaries[keep..] {
            let mut members = ItemSet::new();
            for (set, _) in &self.units[lo as usize..hi as usize] {
                members.extend(set.iter().copied());
            }
            let interval = (
                self.units[lo as usize].1,
                self.units[(hi - 1) as usize].1,
            );
            let id = self.ids.fresh();
            delta.created.push(NewComponent {
                id,
                members: std::sync::Arc::new(members),
                interval: Some(interval),
            });
            self.levels.push(Level { id, units: (lo, hi) });
        }
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_matches_published_states() {
        assert_eq!(binomial_decompose(8, 2), vec![2, 4]);
        assert_eq!(binomial_decompose(10, 2), vec![0, 5]);
        assert_eq!(binomial_decompose(7, 2), vec![1, 4]);
    }

    #[test]
    fn decomposition_is_strictly_increasing_and_sums() {
        for k in 1..=4u64 {
            for t in 0..200u64 {
                let d = binomial_decompose(t, k);
                let mut total = 0u128;
                for j in 1..=k {
                    total += binomial(d[(j - 1) as usize], j);
                }
                assert_eq!(total, t as u128, "t={} k={}", t, k);
                for w in d.windows(2) {
                    assert!(w[0] < w[1], "not increasing at t={} k={}: {:?}", t, k, d);
                }
            }
        }
    }
}
