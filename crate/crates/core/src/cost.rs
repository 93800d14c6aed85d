//! The four build-cost semantics and the property checker for them.
//!
//! Build costs follow the cost function wt_t(S) of the active variant:
//! additive sums member weights, the decreasing variant reads per-item
//! schedules, the LSM variant charges only non-redundant items (tombstone
//! weight once expired), and the general variant evaluates a declared hook.
//!
//! Every implemented cost function must satisfy, for i <= t and S, S' ⊆ U_t:
//!   P1 (sub-additivity)       wt_t(S ∪ S') <= wt_t(S) + wt_t(S')
//!   P2 (suffix monotonicity)  wt_t(S \ U_i) <= wt_t(S)
//!   P3 (temporal monotonicity) wt_t(S) <= wt_i(S)   for S ⊆ U_i
//!
//! P3 reads "a set never gets more expensive to build later"; this is the
//! direction under which the decreasing-weights and LSM costs qualify.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{ItemId, ItemSet, Time, Trace, Variant};
use crate::rng::XorShift64Star;
use crate::weight::Weight;

/// Which cost semantics to evaluate; parameters (schedules, hooks) live on
/// the trace itself.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CostModel {
    Additive,
    Decreasing,
    Lsm,
    General,
}

impl CostModel {
    pub fn for_variant(variant: Variant) -> CostModel {
        match variant {
            Variant::MinSum | Variant::KComponent => CostModel::Additive,
            Variant::DecreasingWeights => CostModel::Decreasing,
            Variant::Lsm => CostModel::Lsm,
            Variant::General => CostModel::General,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CostModel::Additive => "additive",
            CostModel::Decreasing => "decreasing",
            CostModel::Lsm => "lsm",
            CostModel::General => "general",
        }
    }
}

/// wt_t(S): the cost of building component `S` at time `t`.
pub fn eval_build_cost(
    model: CostModel,
    t: Time,
    members: &ItemSet,
    trace: &Trace,
) -> Result<Weight> {
    for &id in members {
        if id.0 as usize >= trace.item_count() {
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
    }
    Ok(eval_unchecked(model, t, members, trace))
}

pub(crate) fn eval_unchecked(
    model: CostModel,
    t: Time,
    members: &ItemSet,
    trace: &Trace,
) -> Weight {
    match model {
        CostModel::Additive => members
            .iter()
            .map(|&id| trace.item(id).weight.clone())
            .sum(),
        CostModel::Decreasing => {
            let empty = crate::model::DecreasingSchedule::new();
            let sched = trace.decreasing.as_ref().unwrap_or(&empty);
            members
                .iter()
                .map(|&id| sched.weight_at(id, &trace.item(id).weight, t))
                .sum()
        }
        CostModel::Lsm => {
            let live = nonredundant_in(members, trace);
            live.iter()
                .map(|&id| {
                    let meta = trace.item(id);
                    if expired_at(meta.expiry, t) {
                        meta.tombstone().clone()
                    } else {
                        meta.weight.clone()
                    }
                })
                .sum()
        }
        CostModel::General => match trace.general_hook {
            Some(crate::model::GeneralCost::MaxWeight) => members
                .iter()
                .map(|&id| trace.item(id).weight.clone())
                .max()
                .unwrap_or_else(Weight::zero),
            None => members
                .iter()
                .map(|&id| trace.item(id).weight.clone())
                .sum(),
        },
    }
}

/// An item is expired at build time `t` once `t` is strictly past its expiry.
pub fn expired_at(expiry: Option<Time>, t: Time) -> bool {
    matches!(expiry, Some(e) if e < t)
}

/// The items of `S` with no newer same-key item in `S`. Keyless items are
/// always non-redundant.
pub fn nonredundant_items(members: &ItemSet, trace: &Trace) -> Result<ItemSet> {
    let mut seen_ts: HashMap<u64, ()> = HashMap::new();
    for &id in members {
        let meta = trace.item(id);
        if meta.key.is_some() {
            let ts = meta.ts.ok_or_else(|| {
                Error::Validation(format!("keyed item {:?} lacks a timestamp", meta.token))
            })?;
            if seen_ts.insert(ts, ()).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate timestamp {} among keyed items",
                    ts
                )));
            }
        }
    }
    Ok(nonredundant_in(members, trace))
}

fn nonredundant_in(members: &ItemSet, trace: &Trace) -> ItemSet {
    let mut newest: HashMap<&str, (u64, ItemId)> = HashMap::new();
    for &id in members {
        let meta = trace.item(id);
        if let (Some(key), Some(ts)) = (meta.key.as_deref(), meta.ts) {
            match newest.get(key) {
                Some(&(best, _)) if best >= ts => {}
                _ => {
                    newest.insert(key, (ts, id));
                }
            }
        }
    }
    members
        .iter()
        .copied()
        .filter(|&id| {
            let meta = trace.item(id);
            match (meta.key.as_deref(), meta.ts) {
                (Some(key), Some(ts)) => newest[key].0 == ts,
                _ => true,
            }
        })
        .collect()
}

/// One counterexample found by the property checker.
#[derive(Clone, Debug)]
pub struct PropertyViolation {
    pub property: &'static str,
    pub t: Time,
    pub i: Time,
    pub lhs: Weight,
    pub rhs: Weight,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct PropertyReport {
    pub trials: u64,
    pub violations: Vec<PropertyViolation>,
}

impl PropertyReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn sample_subset(universe: &[ItemId], rng: &mut XorShift64Star) -> ItemSet {
    universe
        .iter()
        .copied()
        .filter(|_| rng.chance(1, 2))
        .collect()
}

/// Samples (t, i <= t, S, S') and checks P1-P3 on every sample.
pub fn check_cost_properties(
    model: CostModel,
    trace: &Trace,
    seed: u64,
    trials: u64,
) -> Result<PropertyReport> {
    if trials == 0 {
        return Err(Error::Validation("property checker needs trials >= 1".into()));
    }
    let n = trace.len();
    let mut rng = XorShift64Star::new(seed);
    let mut violations = Vec::new();
    for _ in 0..trials {
        let t = rng.range(1, n.max(1));
        let i = rng.range(1, t);
        let u_t: Vec<ItemId> = trace.universe_at(t).into_iter().collect();
        let u_i = trace.universe_at(i);
        let s = sample_subset(&u_t, &mut rng);
        let s2 = sample_subset(&u_t, &mut rng);
        let union: ItemSet = s.union(&s2).copied().collect();

        let wt_s = eval_unchecked(model, t, &s, trace);
        let wt_s2 = eval_unchecked(model, t, &s2, trace);
        let wt_union = eval_unchecked(model, t, &union, trace);
        if wt_union > wt_s.clone() + &wt_s2 {
            violations.push(PropertyViolation {
                property: "P1 sub-additivity",
                t,
                i,
                lhs: wt_union.clone(),
                rhs: wt_s.clone() + &wt_s2,
                detail: format!("|S|={} |S'|={}", s.len(), s2.len()),
            });
        }

        let suffix: ItemSet = s.iter().copied().filter(|id| !u_i.contains(id)).collect();
        let wt_suffix = eval_unchecked(model, t, &suffix, trace);
        if wt_suffix > wt_s {
            violations.push(PropertyViolation {
                property: "P2 suffix monotonicity",
                t,
                i,
                lhs: wt_suffix,
                rhs: wt_s.clone(),
                detail: format!("|S|={} |S\\U_i|={}", s.len(), suffix.len()),
            });
        }

        // P3 compares builds of the same set at two times, so the set must
        // already exist at the earlier one.
        let s_old: ItemSet = s.iter().copied().filter(|id| u_i.contains(id)).collect();
        let early = eval_unchecked(model, i, &s_old, trace);
        let late = eval_unchecked(model, t, &s_old, trace);
        if late > early {
            violations.push(PropertyViolation {
                property: "P3 temporal monotonicity",
                t,
                i,
                lhs: late,
                rhs: early,
                detail: format!("|S|={}", s_old.len()),
            });
        }
    }
    Ok(PropertyReport { trials, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ItemSpec, TraceBuilder};

    fn w(n: u64) -> Weight {
        Weight::from_u64(n)
    }

    fn keyed(token: &str, weight: u64, key: &str, ts: u64) -> ItemSpec {
        let mut s = ItemSpec::new(token, w(weight));
        s.key = Some(key.into());
        s.ts = Some(ts);
        s
    }

    #[test]
    fn additive_sums_members() {
        let mut b = TraceBuilder::new(Variant::KComponent);
        let ids = b
            .push_batch(vec![ItemSpec::new("x", w(3)), ItemSpec::new("y", w(1))])
            .unwrap();
        let t = b.finish().unwrap();
        let set: ItemSet = ids.into_iter().collect();
        assert_eq!(
            eval_build_cost(CostModel::Additive, 1, &set, &t).unwrap(),
            w(4)
        );
    }

    #[test]
    fn lsm_discounts_redundant_items() {
        let mut b = TraceBuilder::new(Variant::Lsm);
        let i1 = b.push_batch(vec![keyed("a1", 5, "a", 1)]).unwrap()[0];
        let i2 = b.push_batch(vec![keyed("a2", 2, "a", 2)]).unwrap()[0];
        let t = b.finish().unwrap();
        let set: ItemSet = [i1, i2].into_iter().collect();
        assert_eq!(eval_build_cost(CostModel::Lsm, 2, &set, &t).unwrap(), w(2));
    }

    #[test]
    fn lsm_charges_tombstone_after_expiry() {
        let mut b = TraceBuilder::new(Variant::Lsm);
        let mut spec = keyed("a1", 5, "a", 1);
        spec.expiry = Some(3);
        spec.tombstone_weight = Some(w(1));
        let id = b.push_batch(vec![spec]).unwrap()[0];
        for _ in 0..3 {
            b.push_empty();
        }
        let t = b.finish().unwrap();
        let set: ItemSet = [id].into_iter().collect();
        // expiry 3 means full weight through t=3 and tombstone weight after
        assert_eq!(eval_build_cost(CostModel::Lsm, 3, &set, &t).unwrap(), w(5));
        assert_eq!(eval_build_cost(CostModel::Lsm, 4, &set, &t).unwrap(), w(1));
    }

    #[test]
    fn nonredundant_keeps_newest_per_key() {
        let mut b = TraceBuilder::new(Variant::Lsm);
        let a1 = b.push_batch(vec![keyed("a1", 1, "a", 1)]).unwrap()[0];
        let a2 = b.push_batch(vec![keyed("a2", 1, "a", 2)]).unwrap()[0];
        let b3 = b.push_batch(vec![keyed("b3", 1, "b", 3)]).unwrap()[0];
        let t = b.finish().unwrap();
        let set: ItemSet = [a1, a2, b3].into_iter().collect();
        let nr = nonredundant_items(&set, &t).unwrap();
        assert_eq!(nr, [a2, b3].into_iter().collect());
        let single: ItemSet = [a1].into_iter().collect();
        assert_eq!(nonredundant_items(&single, &t).unwrap(), single);
    }

    #[test]
    fn nonredundant_keeps_latest_of_many() {
        let mut b = TraceBuilder::new(Variant::Lsm);
        let a1 = b.push_batch(vec![keyed("a1", 1, "a", 1)]).unwrap()[0];
        let a2 = b.push_batch(vec![keyed("a2", 1, "a", 2)]).unwrap()[0];
        let a5 = b.push_batch(vec![keyed("a5", 1, "a", 5)]).unwrap()[0];
        let t = b.finish().unwrap();
        let set: ItemSet = [a1, a2, a5].into_iter().collect();
        assert_eq!(
            nonredundant_items(&set, &t).unwrap(),
            [a5].into_iter().collect()
        );
    }

    #[test]
    fn future_items_rejected() {
        let mut b = TraceBuilder::new(Variant::KComponent);
        b.push_batch(vec![ItemSpec::new("x", w(1))]).unwrap();
        let id = b.push_batch(vec![ItemSpec::new("y", w(1))]).unwrap()[0];
        let t = b.finish().unwrap();
        let set: ItemSet = [id].into_iter().collect();
        assert!(eval_build_cost(CostModel::Additive, 1, &set, &t).is_err());
    }

    #[test]
    fn lsm_never_exceeds_additive() {
        let mut b = TraceBuilder::new(Variant::Lsm);
        let mut spec = keyed("a1", 5, "a", 1);
        spec.expiry = Some(1);
        spec.tombstone_weight = Some(w(2));
        let a1 = b.push_batch(vec![spec]).unwrap()[0];
        let a2 = b.push_batch(vec![keyed("a2", 3, "a", 2)]).unwrap()[0];
        let c = b.push_batch(vec![ItemSpec::new("c", w(7))]).unwrap()[0];
        let t = b.finish().unwrap();
        let set: ItemSet = [a1, a2, c].into_iter().collect();
        let lsm = eval_build_cost(CostModel::Lsm, 3, &set, &t).unwrap();
        let add = eval_build_cost(CostModel::Additive, 3, &set, &t).unwrap();
        assert!(lsm <= add);
        assert_eq!(lsm, w(10)); // a1 redundant, a2 + c live
    }

    #[test]
    fn properties_hold_for_additive_and_maxweight() {
        let t = crate::model::trace_from_weights(
            Variant::KComponent,
            &[Some(w(3)), Some(w(1)), Some(w(4)), None, Some(w(2))],
        );
        let report = check_cost_properties(CostModel::Additive, &t, 7, 500).unwrap();
        assert!(report.ok(), "{:?}", report.violations);

        let mut b = TraceBuilder::new(Variant::General);
        for (i, wt) in [5u64, 2, 9, 1].iter().enumerate() {
            b.push_batch(vec![ItemSpec::new(format!("g{}", i), w(*wt))])
                .unwrap();
        }
        let g = b.general_hook(crate::model::GeneralCost::MaxWeight);
        let gt = g.finish().unwrap();
        let report = check_cost_properties(CostModel::General, &gt, 11, 500).unwrap();
        assert!(report.ok(), "{:?}", report.violations);
    }

    #[test]
    fn lsm_shared_key_gives_strict_subadditivity() {
        let mut b = TraceBuilder::new(Variant::Lsm);
        let a1 = b.push_batch(vec![keyed("a1", 5, "a", 1)]).unwrap()[0];
        let a2 = b.push_batch(vec![keyed("a2", 2, "a", 2)]).unwrap()[0];
        let t = b.finish().unwrap();
        let s: ItemSet = [a1].into_iter().collect();
        let s2: ItemSet = [a2].into_iter().collect();
        let union: ItemSet = [a1, a2].into_iter().collect();
        let lhs = eval_build_cost(CostModel::Lsm, 2, &union, &t).unwrap();
        let rhs = eval_build_cost(CostModel::Lsm, 2, &s, &t).unwrap()
            + eval_build_cost(CostModel::Lsm, 2, &s2, &t).unwrap();
        assert!(lhs < rhs, "expected strict sub-additivity: {} vs {}", lhs, rhs);
    }
}
