//! Executable lower-bound constructions.
//!
//! One generator emits the Min-Sum instance whose merge tree is the
//! weight-labeled tree T^N_D, together with the tree itself so a replay can
//! be checked node by node. The other drives any deterministic k-component
//! policy adaptively, feeding it geometrically shrinking items chosen from
//! the policy's own merge decisions, and reports the realized cost ratio.

use std::collections::HashMap;

use serde::Serialize;

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::ledger::{ComponentId, SolutionLedger};
use crate::model::{ItemId, ItemSet, ItemSpec, Time, Trace, TraceBuilder, Variant};
use crate::policy::{Policy, StepCtx};
use crate::run::apply_delta;
use crate::weight::Weight;

/// The weighted merge tree T^N_D: node i has parent p(i), 2^(i-p(i))
/// children, and weight 2^(N-p(i)); each parent's weight equals the sum of
/// its children's.
#[derive(Clone, Debug)]
pub struct MergeTreeSpec {
    pub depth_param: u64,
    pub n_exp: u64,
    /// parent[i] for 1-based node i; parent[1] = 0.
    pub parent: Vec<u64>,
    pub depth: Vec<u64>,
    /// Leaves (nodes of maximal depth D+1) in node order.
    pub leaves: Vec<u64>,
}

impl MergeTreeSpec {
    pub fn node_count(&self) -> u64 {
        self.parent.len() as u64 - 1
    }

    pub fn node_weight(&self, i: u64) -> Weight {
        Weight::one().shl2((self.n_exp - self.parent[i as usize]) as i64)
    }

    pub fn children(&self, i: u64) -> Vec<u64> {
        (1..=self.node_count())
            .filter(|&j| self.parent[j as usize] == i)
            .collect()
    }
}

/// Builds T^N_D and the matching trace: one singleton insertion per leaf in
/// node order, then empty steps through t = 2^(N-1).
///
/// The tree grows doubly exponentially in D; depths above 2 are refused
/// rather than exhausting memory.
pub fn gen_minsum_lower_bound(depth: u64) -> Result<(Trace, MergeTreeSpec)> {
    if depth > 2 {
        return Err(Error::ResourceCap(format!(
            "depth {} lower-bound instance has astronomically many leaves; max supported depth is 2",
            depth
        )));
    }
    // Grow T_infinity level by level: iterate nodes, giving node i its
    // 2^(i - p(i)) children, until everything at depth <= D+1 exists.
    let mut parent: Vec<u64> = vec![0, 0]; // parent[0] unused, parent[1] = 0
    let mut depth_of: Vec<u64> = vec![0, 0];
    let mut next_child: u64 = 2;
    let mut i: u64 = 1;
    loop {
        if (i as usize) >= parent.len() {
            break;
        }
        if depth_of[i as usize] > depth {
            break; // children would exceed depth D+1
        }
        let span = i - parent[i as usize];
        // Counts stay small for depth <= 2 (at most 2^9 children per node).
        let kids = 1u64 << span;
        for _ in 0..kids {
            parent.push(i);
            depth_of.push(depth_of[i as usize] + 1);
            next_child += 1;
        }
        let _ = next_child;
        i += 1;
    }
    let node_count = parent.len() as u64 - 1;
    // n_D: nodes of depth <= D.
    let n_d = (1..=node_count)
        .filter(|&j| depth_of[j as usize] <= depth)
        .count() as u64;
    let n_exp = 2 * n_d;
    let leaves: Vec<u64> = (1..=node_count)
        .filter(|&j| depth_of[j as usize] == depth + 1)
        .collect();

    let spec = MergeTreeSpec {
        depth_param: depth,
        n_exp,
        parent,
        depth: depth_of,
        leaves,
    };

    let mut b = TraceBuilder::new(Variant::MinSum);
    for &leaf in &spec.leaves {
        let w = spec.node_weight(leaf);
        b.push_batch(vec![ItemSpec::new(format!("leaf{}", leaf), w)])?;
    }
    let horizon: Time = 1 << (n_exp - 1);
    for _ in spec.leaves.len() as u64..horizon {
        b.push_empty();
    }
    Ok((b.finish()?, spec))
}

#[derive(Clone, Debug, Serialize)]
pub struct MergeTreeCheck {
    pub matches: bool,
    pub build_cost: Weight,
    pub leaves: usize,
    pub first_merge_time: Option<Time>,
    pub mismatch: Option<String>,
}

/// Checks that a replayed ledger's merge tree is exactly `spec`: every
/// component corresponds to a node with equal weight, and merged components
/// correspond to that node's children.
pub fn check_merge_tree(
    ledger: &SolutionLedger,
    trace: &Trace,
    spec: &MergeTreeSpec,
) -> MergeTreeCheck {
    let mut result = MergeTreeCheck {
        matches: true,
        build_cost: ledger.build_total.clone(),
        leaves: spec.leaves.len(),
        first_merge_time: None,
        mismatch: None,
    };
    let fail = |msg: String, r: &mut MergeTreeCheck| {
        if r.matches {
            r.matches = false;
            r.mismatch = Some(msg);
        }
    };

    // Node assignment: the i-th insertion is the i-th leaf; merge-built
    // components must match internal nodes by (weight, child set). A merge
    // can absorb the same-step insertion, in which case that leaf never
    // surfaces as its own component and counts as a virtual child.
    let mut node_of: HashMap<ComponentId, u64> = HashMap::new();
    let mut virtual_built: Vec<u64> = Vec::new();
    let mut leaf_idx = 0usize;
    for t in 1..=ledger.len() {
        let created = ledger.created_at(t);
        let destroyed = ledger.destroyed_at(t);
        let batch: ItemSet = trace.batch(t).items.iter().copied().collect();
        let mut batch_leaf: Option<u64> = None;
        if !batch.is_empty() {
            if leaf_idx >= spec.leaves.len() {
                fail(format!("extra insertion at t={}", t), &mut result);
            } else {
                let node = spec.leaves[leaf_idx];
                leaf_idx += 1;
                let weight: Weight = batch
                    .iter()
                    .map(|&m| trace.item(m).weight.clone())
                    .sum();
                if weight != spec.node_weight(node) {
                    fail(
                        format!(
                            "leaf {} weighs {}, expected {}",
                            node,
                            weight,
                            spec.node_weight(node)
                        ),
                        &mut result,
                    );
                }
                batch_leaf = Some(node);
            }
        }
        for id in created {
            let comp = ledger.store.get(id).unwrap();
            let weight: Weight = comp
                .members
                .iter()
                .map(|&m| trace.item(m).weight.clone())
                .sum();
            if *comp.members == batch {
                // Plain insertion build.
                if let Some(node) = batch_leaf.take() {
                    node_of.insert(id, node);
                }
            } else {
                if result.first_merge_time.is_none() {
                    result.first_merge_time = Some(t);
                }
                // Merge build: children are the destroyed components, plus
                // the just-inserted leaf when the merge swallowed it.
                let mut child_nodes: Vec<u64> = Vec::new();
                for d in &destroyed {
                    match node_of.get(d) {
                        Some(&n) => child_nodes.push(n),
                        None => fail(
                            format!("destroyed component at t={} maps to no node", t),
                            &mut result,
                        ),
                    }
                }
                if !batch.is_empty() && batch.is_subset(&comp.members) {
                    if let Some(node) = batch_leaf.take() {
                        child_nodes.push(node);
                        virtual_built.push(node);
                    }
                }
                child_nodes.sort_unstable();
                // All children share one parent in T^N_D.
                let parents: Vec<u64> = child_nodes
                    .iter()
                    .map(|&c| spec.parent[c as usize])
                    .collect();
                let Some(&node) = parents.first() else {
                    fail(format!("merge with no children at t={}", t), &mut result);
                    continue;
                };
                if parents.iter().any(|&p| p != node) {
                    fail(
                        format!("merge at t={} mixes children of different nodes", t),
                        &mut result,
                    );
                    continue;
                }
                let mut expected = spec.children(node);
                expected.sort_unstable();
                if child_nodes != expected {
                    fail(
                        format!(
                            "merge at t={} built node {} from children {:?}, expected {:?}",
                            t, node, child_nodes, expected
                        ),
                        &mut result,
                    );
                }
                if weight != spec.node_weight(node) {
                    fail(
                        format!("node {} weighs {} in replay", node, weight),
                        &mut result,
                    );
                }
                node_of.insert(id, node);
            }
        }
    }
    if leaf_idx != spec.leaves.len() {
        fail(
            format!("only {} of {} leaves inserted", leaf_idx, spec.leaves.len()),
            &mut result,
        );
    }
    // Every node must have been built (absorbed leaves count: they were paid
    // for inside the merge that swallowed them).
    let mut built: Vec<u64> = node_of.values().copied().collect();
    built.extend(virtual_built);
    for node in 1..=spec.node_count() {
        if !built.contains(&node) {
            fail(format!("node {} never built", node), &mut result);
        }
    }
    result
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum StopReason {
    /// The policy's cumulative cost reached k.
    CostReached,
    /// The step cap expired first.
    StepCap,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdversaryItem {
    pub token: String,
    /// Which sequence the item came from.
    pub sequence: u64,
    /// Exponent e of the weight epsilon^e.
    pub exponent: u64,
    /// Token of the parent (the sequence-(l) representative at choice time).
    pub parent: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdversaryRun {
    pub epsilon: Weight,
    pub k: u64,
    pub steps: Time,
    pub alg_cost: Weight,
    pub opt_upper: Weight,
    /// alg_cost / opt_upper, exact.
    pub achieved_ratio: Weight,
    pub stop_reason: StopReason,
    pub transcript: Vec<AdversaryItem>,
}

/// One of the k+1 geometric item sequences; items are materialized lazily,
/// smallest (highest exponent) first.
struct Sequence {
    index: u64,
    /// Exponent of sigma_i is offset - i.
    offset: u64,
    used: u64,
    limit: u64,
    /// Weight of the next unused item, maintained incrementally: consecutive
    /// items differ by a factor 1/eps, and one pow() per sequence beats
    /// recomputing eps^e (e can be near the step cap) for every item.
    next_weight: Option<Weight>,
    /// The most recent item inserted from this sequence.
    representative: Option<ItemId>,
}

impl Sequence {
    fn take_weight(&mut self, epsilon: &Weight) -> (u64, Weight) {
        self.used += 1;
        let exponent = self.offset - self.used;
        let w = match self.next_weight.take() {
            Some(w) => w,
            None => epsilon.pow(exponent),
        };
        let inv = Weight::from_rational(
            num::rational::BigRational::new(
                epsilon.as_rational().denom().clone(),
                epsilon.as_rational().numer().clone(),
            ),
        )
        .expect("1/eps is positive");
        self.next_weight = Some(w.clone() * inv);
        (exponent, w)
    }
}

/// Drives `policy` with the adaptive lower-bound construction for the plain
/// k-component problem.
///
/// Sequence j carries n_j = ceil(k / sigma_1(j+1)) items with
/// sigma_i(j) = eps^(n_k + ... + n_j - i + 2). The counts are capped at
/// step_cap + 2 (a run of step_cap insertions cannot exhaust a capped
/// sequence), which keeps every exponent near the step cap instead of the
/// astronomically large uncapped counts.
pub fn run_kcomp_adversary(
    policy: &mut dyn Policy,
    k: u64,
    epsilon: &Weight,
    step_cap: Time,
) -> Result<AdversaryRun> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    if epsilon.is_zero() || *epsilon >= Weight::one() {
        return Err(Error::Validation("epsilon must satisfy 0 < eps < 1".into()));
    }
    let cap = step_cap + 2;

    // Sequence k+1 holds the single item eps; then, writing T_j for the
    // running count n_k + ... + n_j (T_{k+1} = 0), sequence j has
    // n_j = ceil(k / sigma_1(j+1)) items with sigma_1(j+1) = eps^(T_{j+1}+1),
    // and sigma_i(j) = eps^(T_j - i + 2).
    let mut seqs: Vec<Sequence> = Vec::with_capacity(k as usize + 1);
    seqs.push(Sequence {
        index: k + 1,
        offset: 2,
        used: 0,
        limit: 1,
        next_weight: None,
        representative: None,
    });
    let mut running: u64 = 0; // T_{j+1}
    for j in (1..=k).rev() {
        let n_j = ceil_k_over_eps_pow(k, epsilon, running + 1, cap);
        running += n_j; // now T_j
        seqs.push(Sequence {
            index: j,
            offset: running + 2,
            used: 0,
            limit: n_j,
            next_weight: None,
            representative: None,
        });
    }

    run_adversary_loop(policy, k, epsilon, step_cap, seqs)
}

/// ceil(k / eps^e), capped. eps = p/q, so k/eps^e = k * q^e / p^e.
fn ceil_k_over_eps_pow(k: u64, eps: &Weight, e: u64, cap: u64) -> u64 {
    use num::bigint::BigInt;
    use num::ToPrimitive;
    let r = eps.as_rational();
    let p = r.numer().clone();
    let q = r.denom().clone();
    // Cheap overflow test first: if (q/p)^e * k clearly exceeds the cap,
    // skip the big computation.
    let bits_ratio = q.bits() as i64 - p.bits() as i64;
    if bits_ratio > 0 && (e as i64) * (bits_ratio - 1) > 80 {
        return cap;
    }
    let num = BigInt::from(k) * q.pow(e as u32);
    let den = p.pow(e as u32);
    let ceil = (&num + &den - BigInt::from(1)) / &den;
    ceil.to_u64().map_or(cap, |v| v.min(cap))
}

fn run_adversary_loop(
    policy: &mut dyn Policy,
    k: u64,
    epsilon: &Weight,
    step_cap: Time,
    mut seqs: Vec<Sequence>,
) -> Result<AdversaryRun> {
    // seqs is ordered k+1, k, ..., 1; index by sequence number for clarity.
    seqs.sort_by_key(|s| s.index);
    let by_index = |j: u64| (j - 1) as usize;

    let mut trace = Trace::new(Variant::KComponent);
    let mut transcript: Vec<AdversaryItem> = Vec::new();
    let mut live: Vec<ComponentId> = Vec::new();
    let mut members_of: HashMap<ComponentId, crate::model::Members> = HashMap::new();
    let mut alg_cost = Weight::zero();
    let k_weight = Weight::from_u64(k);

    // C(j) candidate covers for the optimum upper bound: for each j in 1..k,
    // one component holding sequences j and j+1 together, singletons-by-
    // sequence elsewhere. Rebuilding on every gained item and charging the
    // component's weight then is exactly the cover's cost.
    let mut cj_weights: Vec<HashMap<u64, Weight>> = vec![HashMap::new(); k as usize];
    let mut cj_costs: Vec<Weight> = vec![Weight::zero(); k as usize];
    let comp_key = |j_cover: u64, seq_idx: u64| -> u64 {
        // Sequences j_cover and j_cover+1 share one component.
        if seq_idx == j_cover + 1 {
            j_cover
        } else {
            seq_idx
        }
    };

    // First insertion: the single item of sequence k+1.
    let mut next_seq = k + 1;
    let mut stop_reason = StopReason::StepCap;
    let mut steps: Time = 0;

    for t in 1..=step_cap {
        steps = t;
        let (token, item_id, exponent) = {
            let s = &mut seqs[by_index(next_seq)];
            if s.used >= s.limit {
                return Err(Error::ResourceCap(format!(
                    "sequence {} exhausted at t={}",
                    next_seq, t
                )));
            }
            let (exponent, w) = s.take_weight(epsilon);
            let token = format!("s{}_{}", s.index, s.used);
            let ids = trace.append_batch(vec![ItemSpec::new(token.clone(), w)])?;
            s.representative = Some(ids[0]);
            (token, ids[0], exponent)
        };
        let parent_token = if next_seq <= k {
            let rep = seqs[by_index(next_seq + 1)].representative;
            rep.map(|id| trace.item(id).token.clone())
        } else {
            None
        };
        transcript.push(AdversaryItem {
            token: token.clone(),
            sequence: next_seq,
            exponent,
            parent: parent_token,
        });

        // Update the C(j) upper-bound covers.
        for j in 1..=k {
            let slot = comp_key(j, next_seq);
            let map = &mut cj_weights[(j - 1) as usize];
            let w = trace.item(item_id).weight.clone();
            let entry = map.entry(slot).or_insert_with(Weight::zero);
            *entry += &w;
            let rebuilt = entry.clone();
            cj_costs[(j - 1) as usize] += rebuilt;
        }

        // Let the policy respond.
        let model = CostModel::Additive;
        let ctx = StepCtx {
            trace: &trace,
            model,
            now: t,
        };
        let batch = trace.batch(t).clone();
        let delta = policy.step(t, &batch, &ctx)?;
        let mut step_cost = Weight::zero();
        let mut new_comp_members: Vec<&ItemSet> = Vec::new();
        for c in &delta.created {
            let w: Weight = c
                .members
                .iter()
                .map(|&m| trace.item(m).weight.clone())
                .sum();
            step_cost += &w;
            members_of.insert(c.id, c.members.clone());
        }
        apply_delta(&mut live, &delta, t).map_err(|e| Error::Policy {
            t,
            detail: format!("invalid cover delta: {}", e),
        })?;
        for c in &delta.created {
            new_comp_members.push(&members_of[&c.id]);
        }
        // Validate the cover: every inserted item present, at most k comps.
        let mut union = ItemSet::new();
        for id in &live {
            union.extend(members_of[id].iter().copied());
        }
        if union.len() != trace.item_count() || live.len() as u64 > k {
            return Err(Error::Policy {
                t,
                detail: format!(
                    "invalid cover: {} of {} items covered by {} components (budget {})",
                    union.len(),
                    trace.item_count(),
                    live.len(),
                    k
                ),
            });
        }
        alg_cost += &step_cost;

        // l(t): the sequence of the largest representative inside any new
        // component. The just-inserted item guarantees it exists.
        let mut ell: Option<u64> = None;
        for j in (1..=k + 1).rev() {
            if let Some(rep) = seqs[by_index(j)].representative {
                if new_comp_members.iter().any(|m| m.contains(&rep)) {
                    ell = Some(j);
                    break;
                }
            }
        }
        let ell = ell.ok_or_else(|| Error::Policy {
            t,
            detail: "no sequence representative in any new component".into(),
        })?;
        if ell == 1 {
            return Err(Error::Policy {
                t,
                detail: "l(t) = 1: the policy exposed more than k components".into(),
            });
        }

        // Live transcript invariant: representatives of sequences l..k+1
        // exist and sit in pairwise distinct components.
        let mut seen_comps: Vec<usize> = Vec::new();
        for j in ell..=k + 1 {
            let rep = seqs[by_index(j)].representative.ok_or_else(|| Error::Policy {
                t,
                detail: format!("sequence {} has no representative at t={}", j, t),
            })?;
            let pos = live
                .iter()
                .position(|id| members_of[id].contains(&rep))
                .ok_or_else(|| Error::Policy {
                    t,
                    detail: format!("representative of sequence {} is uncovered", j),
                })?;
            if seen_comps.contains(&pos) {
                return Err(Error::Policy {
                    t,
                    detail: format!(
                        "representatives of sequences {}..{} share a component",
                        ell,
                        k + 1
                    ),
                });
            }
            seen_comps.push(pos);
        }

        if alg_cost >= k_weight {
            stop_reason = StopReason::CostReached;
            break;
        }
        next_seq = ell - 1;
    }

    let opt_upper = cj_costs
        .iter()
        .min()
        .cloned()
        .unwrap_or_else(Weight::zero);
    let achieved_ratio = if opt_upper.is_zero() {
        Weight::zero()
    } else {
        alg_cost.div(&opt_upper)?
    };
    Ok(AdversaryRun {
        epsilon: epsilon.clone(),
        k,
        steps,
        alg_cost,
        opt_upper,
        achieved_ratio,
        stop_reason,
        transcript,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_zero_tree() {
        let (trace, spec) = gen_minsum_lower_bound(0).unwrap();
        assert_eq!(spec.leaves.len(), 2);
        assert_eq!(spec.n_exp, 2);
        assert_eq!(trace.len(), 2); // 2 leaves, horizon 2^(N-1) = 2
        assert_eq!(trace.nonempty_count(), 2);
        assert_eq!(spec.node_weight(1), Weight::from_u64(4));
        assert_eq!(spec.node_weight(2), Weight::from_u64(2));
    }

    #[test]
    fn depth_two_matches_published_shape() {
        let (trace, spec) = gen_minsum_lower_bound(2).unwrap();
        assert_eq!(spec.leaves.len(), 132);
        assert_eq!(spec.n_exp, 18);
        assert_eq!(trace.len(), 1 << 17);
        // Leaf weight multiset: 64 x 2^9, 32 x 2^10, 16 x 2^11, 8 x 2^12,
        // 8 x 2^13, 4 x 2^14.
        let mut counts: HashMap<String, usize> = HashMap::new();
        for &leaf in &spec.leaves {
            *counts.entry(spec.node_weight(leaf).to_string()).or_insert(0) += 1;
        }
        let expect = [
            (1u64 << 9, 64),
            (1 << 10, 32),
            (1 << 11, 16),
            (1 << 12, 8),
            (1 << 13, 8),
            (1 << 14, 4),
        ];
        for (w, c) in expect {
            assert_eq!(counts.get(&w.to_string()), Some(&c), "weight {}", w);
        }
        // Total leaf weight equals the root weight 2^18.
        assert_eq!(trace.total_weight(), Weight::from_u64(1 << 18));
    }

    #[test]
    fn parents_weights_consistent() {
        let (_, spec) = gen_minsum_lower_bound(1).unwrap();
        for node in 1..=spec.node_count() {
            let kids = spec.children(node);
            if !kids.is_empty() {
                let total: Weight = kids.iter().map(|&c| spec.node_weight(c)).sum();
                assert_eq!(total, spec.node_weight(node), "node {}", node);
            }
        }
    }

    #[test]
    fn depth_three_refused() {
        assert!(matches!(
            gen_minsum_lower_bound(3),
            Err(Error::ResourceCap(_))
        ));
    }
}
