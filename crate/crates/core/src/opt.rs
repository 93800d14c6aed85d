//! Offline-optimal oracles and solution-structure checkers.
//!
//! The brute-force oracle searches newest-first solutions exhaustively (every
//! instance has a newest-first optimum for the plain objectives; for the
//! decreasing-weights and LSM variants the result is the newest-first
//! optimum). The partition oracle enumerates arbitrary partition sequences at
//! desk scale and is the independent cross-check that newest-first search
//! loses nothing. The two dynamic programs reproduce the brute-force values
//! in cubic time and are gated by oracle equivalence in the test suite.

use std::collections::HashMap;

use crate::cost::{eval_unchecked, CostModel};
use crate::error::{Error, Result};
use crate::ledger::{
    accumulate_costs, Component, ComponentId, ComponentStore, Cover, SolutionLedger,
};
use crate::model::{ItemSet, Time, Trace, Variant};
use crate::weight::Weight;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Solver {
    BruteNewestFirst,
    PartitionOracle,
    DpMinSum,
    DpKComponent,
}

impl Solver {
    pub fn name(&self) -> &'static str {
        match self {
            Solver::BruteNewestFirst => "brute-newest-first",
            Solver::PartitionOracle => "partition-oracle",
            Solver::DpMinSum => "dp-minsum",
            Solver::DpKComponent => "dp-kcomponent",
        }
    }
}

pub struct OptResult {
    pub optimal_cost: Weight,
    pub witness: SolutionLedger,
    pub solver: Solver,
    pub explored: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct BruteConfig {
    /// Refuse instances with more non-empty batches than this.
    pub max_nonempty: usize,
}

impl Default for BruteConfig {
    fn default() -> Self {
        BruteConfig { max_nonempty: 12 }
    }
}

/// Per-instance view used by the searches: non-empty batch indices (1-based),
/// their real times, item sets, and additive prefix weights.
struct Instance<'a> {
    trace: &'a Trace,
    model: CostModel,
    times: Vec<Time>,
    sets: Vec<ItemSet>,
    prefix: Vec<Weight>,
}

impl<'a> Instance<'a> {
    fn new(trace: &'a Trace, model: CostModel) -> Self {
        let mut times = Vec::new();
        let mut sets = Vec::new();
        let mut prefix = vec![Weight::zero()];
        for b in &trace.batches {
            if !b.is_empty() {
                times.push(b.time);
                let set: ItemSet = b.items.iter().copied().collect();
                let w: Weight = b
                    .items
                    .iter()
                    .map(|&id| trace.item(id).weight.clone())
                    .sum();
                prefix.push(prefix.last().unwrap().clone() + &w);
                sets.push(set);
            }
        }
        Instance {
            trace,
            model,
            times,
            sets,
            prefix,
        }
    }

    fn m(&self) -> usize {
        self.times.len()
    }

    /// Union of non-empty batches r..=s (1-based).
    fn range_set(&self, r: usize, s: usize) -> ItemSet {
        let mut out = ItemSet::new();
        for set in &self.sets[r - 1..s] {
            out.extend(set.iter().copied());
        }
        out
    }

    fn range_weight_additive(&self, r: usize, s: usize) -> Weight {
        self.prefix[s].clone() - self.prefix[r - 1].clone()
    }

    /// Build cost of the interval component r..=s at the time of index s.
    fn build_cost(&self, r: usize, s: usize) -> Weight {
        if self.model == CostModel::Additive {
            self.range_weight_additive(r, s)
        } else {
            eval_unchecked(
                self.model,
                self.times[s - 1],
                &self.range_set(r, s),
                self.trace,
            )
        }
    }
}

/// Stack of interval start indices, oldest first: component p covers
/// non-empty indices [starts[p] .. starts[p+1]-1], the top one up to the
/// last processed index.
type Stack = Vec<u32>;

struct BruteSearch<'a> {
    inst: Instance<'a>,
    k: Option<u64>,
    minsum: bool,
    /// Restrict Min-Sum merges to lightest-compatible suffixes. Optimality is
    /// preserved (a newest-and-lightest-first optimum always exists for the
    /// plain objectives) and the witness then passes the lightest checker.
    lightest_only: bool,
    n: Time,
    memo: HashMap<(usize, Stack), Option<Weight>>,
    explored: u64,
}

impl<'a> BruteSearch<'a> {
    fn next_time(&self, r: usize) -> Time {
        if r < self.inst.m() {
            self.inst.times[r]
        } else {
            self.n + 1
        }
    }

    /// The i merged (newest) components are the i lightest on the stack.
    fn lightest_compatible(&self, r: usize, stack: &Stack, i: usize) -> bool {
        if i == 0 {
            return true;
        }
        let len = stack.len();
        let mut weights: Vec<Weight> = Vec::with_capacity(len);
        for p in 0..len {
            let start = stack[p] as usize;
            let end = if p + 1 < len {
                stack[p + 1] as usize - 1
            } else {
                r - 1
            };
            weights.push(self.inst.range_weight_additive(start, end));
        }
        let mut suffix: Vec<Weight> = weights[len - i..].to_vec();
        suffix.sort();
        let mut sorted = weights;
        sorted.sort();
        suffix == sorted[..i]
    }

    /// Minimum cost of steps r..=m from this stack, including Min-Sum query
    /// charges from time t_r onward. `None` when the k-budget is infeasible.
    fn solve(&mut self, r: usize, stack: &Stack) -> Option<Weight> {
        if r > self.inst.m() {
            return Some(Weight::zero());
        }
        if let Some(hit) = self.memo.get(&(r, stack.clone())) {
            return hit.clone();
        }
        self.explored += 1;
        let mut best: Option<Weight> = None;
        for i in 0..=stack.len() {
            if self.lightest_only && !self.lightest_compatible(r, stack, i) {
                continue;
            }
            let (stack2, build) = self.apply(r, stack, i);
            if let Some(k) = self.k {
                if stack2.len() as u64 > k {
                    continue;
                }
            }
            let mut cost = build;
            if self.minsum {
                let span = self.next_time(r) - self.inst.times[r - 1];
                cost += Weight::from_u64(stack2.len() as u64 * span);
            }
            if let Some(rest) = self.solve(r + 1, &stack2) {
                cost += rest;
                if best.as_ref().map_or(true, |b| cost < *b) {
                    best = Some(cost);
                }
            }
        }
        self.memo.insert((r, stack.clone()), best.clone());
        best
    }

    /// Merge the batch at index r with the top i components.
    fn apply(&self, r: usize, stack: &Stack, i: usize) -> (Stack, Weight) {
        let mut stack2 = stack[..stack.len() - i].to_vec();
        let start = if i == 0 {
            r as u32
        } else {
            stack[stack.len() - i]
        };
        stack2.push(start);
        let build = self.inst.build_cost(start as usize, r);
        (stack2, build)
    }

    /// Re-walks the memoized table picking, at each step, the smallest i that
    /// achieves the optimum, and materializes the witness ledger.
    fn reconstruct(&mut self, trace: &Trace) -> Result<SolutionLedger> {
        let mut stack: Stack = Vec::new();
        let mut live: Vec<(u32, ComponentId)> = Vec::new(); // (start, id)
        let mut store = ComponentStore::new();
        let mut covers: Vec<Cover> = Vec::with_capacity(self.n as usize);
        let mut next_id = 0u64;
        let mut seq = 0u64;
        let mut r = 1usize;
        for t in 1..=self.n {
            let is_step = r <= self.inst.m() && self.inst.times[r - 1] == t;
            if is_step {
                let total = self.solve(r, &stack).expect("solved root must be feasible");
                let mut chosen = None;
                for i in 0..=stack.len() {
                    if self.lightest_only && !self.lightest_compatible(r, &stack, i) {
                        continue;
                    }
                    let (stack2, build) = self.apply(r, &stack, i);
                    if let Some(k) = self.k {
                        if stack2.len() as u64 > k {
                            continue;
                        }
                    }
                    let mut cost = build;
                    if self.minsum {
                        let span = self.next_time(r) - self.inst.times[r - 1];
                        cost += Weight::from_u64(stack2.len() as u64 * span);
                    }
                    if let Some(rest) = self.solve(r + 1, &stack2) {
                        cost += rest;
                        if cost == total {
                            chosen = Some((i, stack2));
                            break;
                        }
                    }
                }
                let (i, stack2) =
                    chosen.expect("an optimal choice must reproduce the memoized value");
                let start = *stack2.last().unwrap();
                for _ in 0..i {
                    live.pop();
                }
                next_id += 1;
                seq += 1;
                let id = ComponentId(next_id);
                let members = self.inst.range_set(start as usize, r);
                let interval = (
                    self.inst.times[start as usize - 1],
                    self.inst.times[r - 1],
                );
                store.insert(Component {
                    id,
                    members: std::sync::Arc::new(members),
                    birth: t,
                    seq,
                    interval: Some(interval),
                })?;
                live.push((start, id));
                stack = stack2;
                r += 1;
            }
            covers.push(Cover {
                time: t,
                components: {
                    let mut ids: Vec<ComponentId> = live.iter().map(|&(_, id)| id).collect();
                    ids.sort();
                    ids
                },
            });
        }
        accumulate_costs(&covers, &store, self.inst.model, trace, self.k)
    }
}

/// Exhaustive search over newest-first solutions.
///
/// For Min-Sum the search also keeps merges lightest-compatible, so the
/// witness is both newest-first and lightest-first. The k-variants receive
/// `k`; Min-Sum ignores it.
pub fn brute_force_newest_first(
    trace: &Trace,
    k: Option<u64>,
    cfg: &BruteConfig,
) -> Result<OptResult> {
    let model = CostModel::for_variant(trace.variant);
    let minsum = trace.variant.counts_query_cost();
    if !minsum && k.is_none() {
        return Err(Error::Validation(
            "k-component search requires a component budget".into(),
        ));
    }
    let inst = Instance::new(trace, model);
    if inst.m() > cfg.max_nonempty {
        return Err(Error::ResourceCap(format!(
            "brute force capped at {} non-empty batches, instance has {}",
            cfg.max_nonempty,
            inst.m()
        )));
    }
    let mut search = BruteSearch {
        inst,
        k: if minsum { None } else { k },
        minsum,
        lightest_only: minsum,
        n: trace.len(),
        memo: HashMap::new(),
        explored: 0,
    };
    let cost = search
        .solve(1, &Vec::new())
        .ok_or_else(|| Error::Validation("no feasible newest-first solution".into()))?;
    let witness = search.reconstruct(trace)?;
    let achieved = witness.objective_total(trace);
    if achieved != cost {
        return Err(Error::Validation(format!(
            "witness cost {} disagrees with search value {}",
            achieved, cost
        )));
    }
    Ok(OptResult {
        optimal_cost: cost,
        witness,
        solver: Solver::BruteNewestFirst,
        explored: search.explored,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct PartitionConfig {
    pub max_items: usize,
    pub max_len: Time,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            max_items: 5,
            max_len: 4,
        }
    }
}

fn partitions_of(items: &[crate::model::ItemId], max_blocks: Option<usize>) -> Vec<Vec<ItemSet>> {
    let mut out = Vec::new();
    let mut blocks: Vec<ItemSet> = Vec::new();
    fn rec(
        items: &[crate::model::ItemId],
        idx: usize,
        blocks: &mut Vec<ItemSet>,
        max_blocks: Option<usize>,
        out: &mut Vec<Vec<ItemSet>>,
    ) {
        if idx == items.len() {
            out.push(blocks.clone());
            return;
        }
        let id = items[idx];
        for b in 0..blocks.len() {
            blocks[b].insert(id);
            rec(items, idx + 1, blocks, max_blocks, out);
            blocks[b].remove(&id);
        }
        if max_blocks.map_or(true, |k| blocks.len() < k) {
            blocks.push([id].into_iter().collect());
            rec(items, idx + 1, blocks, max_blocks, out);
            blocks.pop();
        }
    }
    rec(items, 0, &mut blocks, max_blocks, &mut out);
    out
}

/// Exact minimum over all sequences of partitions of U_t. A block is new,
/// and charged, exactly when its member set was absent at t-1; this is the
/// cost-minimal reading, so the oracle lower-bounds every newest-first
/// solution and the equality test against the newest-first search is the
/// desk-scale check of the offline structure theorem.
pub fn partition_oracle(
    trace: &Trace,
    k: Option<u64>,
    cfg: &PartitionConfig,
) -> Result<OptResult> {
    if trace.item_count() > cfg.max_items || trace.len() > cfg.max_len {
        return Err(Error::ResourceCap(format!(
            "partition oracle capped at {} items / {} steps, instance has {} / {}",
            cfg.max_items,
            cfg.max_len,
            trace.item_count(),
            trace.len()
        )));
    }
    let model = CostModel::for_variant(trace.variant);
    let minsum = trace.variant.counts_query_cost();
    if !minsum && k.is_none() {
        return Err(Error::Validation(
            "k-component oracle requires a component budget".into(),
        ));
    }
    let max_blocks = if minsum { None } else { k.map(|k| k as usize) };
    let n = trace.len();
    let mut explored: u64 = 0;

    // One layer per time: every allowed partition of U_t with the cheapest
    // cost of reaching it, plus a back-pointer for the witness.
    let mut layers: Vec<Vec<Vec<ItemSet>>> = Vec::with_capacity(n as usize);
    let mut best: Vec<Vec<Option<(Weight, usize)>>> = Vec::with_capacity(n as usize);
    for t in 1..=n {
        let universe: Vec<crate::model::ItemId> = trace.universe_at(t).into_iter().collect();
        let parts = if universe.is_empty() {
            vec![Vec::new()]
        } else {
            partitions_of(&universe, max_blocks)
        };
        explored += parts.len() as u64;
        let mut layer_best: Vec<Option<(Weight, usize)>> = vec![None; parts.len()];
        for (pi, part) in parts.iter().enumerate() {
            let query = Weight::from_u64(if minsum { part.len() as u64 } else { 0 });
            if t == 1 {
                let mut cost = query;
                for block in part {
                    cost += &eval_unchecked(model, t, block, trace);
                }
                layer_best[pi] = Some((cost, usize::MAX));
            } else {
                let prev_parts = &layers[(t - 2) as usize];
                let prev_best = &best[(t - 2) as usize];
                for (qi, prev) in prev_parts.iter().enumerate() {
                    let Some((prev_cost, _)) = &prev_best[qi] else {
                        continue;
                    };
                    let mut cost = prev_cost.clone() + query.clone();
                    for block in part {
                        if !prev.iter().any(|b| b == block) {
                            cost += &eval_unchecked(model, t, block, trace);
                        }
                    }
                    if layer_best[pi]
                        .as_ref()
                        .map_or(true, |(c, _)| cost < *c)
                    {
                        layer_best[pi] = Some((cost, qi));
                    }
                }
            }
        }
        layers.push(parts);
        best.push(layer_best);
    }

    let (last_pi, (total, _)) = best
        .last()
        .unwrap()
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.as_ref().map(|c| (i, c)))
        .min_by(|a, b| a.1 .0.cmp(&b.1 .0))
        .ok_or_else(|| Error::Validation("no feasible partition sequence".into()))?;
    let total = total.clone();

    // Trace back the chosen partitions, then materialize components with
    // persistent ids: a block keeps its id while its member set survives.
    let mut chosen: Vec<usize> = vec![0; n as usize];
    let mut pi = last_pi;
    for t in (1..=n).rev() {
        chosen[(t - 1) as usize] = pi;
        let (_, back) = best[(t - 1) as usize][pi].as_ref().unwrap();
        pi = *back;
    }
    let mut store = ComponentStore::new();
    let mut covers = Vec::with_capacity(n as usize);
    let mut live: HashMap<Vec<crate::model::ItemId>, ComponentId> = HashMap::new();
    let mut next_id = 0u64;
    let mut seq = 0u64;
    for t in 1..=n {
        let part = &layers[(t - 1) as usize][chosen[(t - 1) as usize]];
        let mut next_live: HashMap<Vec<crate::model::ItemId>, ComponentId> = HashMap::new();
        let mut ids = Vec::with_capacity(part.len());
        for block in part {
            let key: Vec<crate::model::ItemId> = block.iter().copied().collect();
            let id = match live.get(&key) {
                Some(&id) => id,
                None => {
                    next_id += 1;
                    seq += 1;
                    let id = ComponentId(next_id);
                    store.insert(Component {
                        id,
                        members: std::sync::Arc::new(block.clone()),
                        birth: t,
                        seq,
                        interval: None,
                    })?;
                    id
                }
            };
            next_live.insert(key, id);
            ids.push(id);
        }
        ids.sort();
        live = next_live;
        covers.push(Cover {
            time: t,
            components: ids,
        });
    }
    let witness = accumulate_costs(&covers, &store, model, trace, k)?;
    let achieved = witness.objective_total(trace);
    if achieved != total {
        return Err(Error::Validation(format!(
            "partition witness cost {} disagrees with value {}",
            achieved, total
        )));
    }
    Ok(OptResult {
        optimal_cost: total,
        witness,
        solver: Solver::PartitionOracle,
        explored,
    })
}

/// Cubic-time optimum for Min-Sum instances (additive weights).
///
/// Over newest-first solutions, every non-empty index builds exactly one
/// interval component; covers form a laminar forest of intervals. Writing
/// lifetimes via parent build times turns the objective into
///   sum_v wt(v) + sum_u children(u) * t_u + roots * (n+1) - sum_r t_r,
/// whose first three terms decompose over subtrees. `g[a][b]` is the best
/// subtree cost for the interval a..=b; `f` assembles root forests.
pub fn dp_opt_minsum(trace: &Trace) -> Result<Weight> {
    if trace.variant != Variant::MinSum {
        return Err(Error::Validation(
            "the Min-Sum dynamic program expects a minsum trace".into(),
        ));
    }
    let inst = Instance::new(trace, CostModel::Additive);
    let m = inst.m();
    let n = trace.len();
    if m == 0 {
        return Ok(Weight::zero());
    }
    let t_of = |idx: usize| Weight::from_u64(inst.times[idx - 1]);

    // g[a][b], 1-based, b >= a.
    let mut g: Vec<Vec<Option<Weight>>> = vec![vec![None; m + 1]; m + 1];
    for b in 1..=m {
        // d[x]: best partition of x..=b-1 into child subtrees, each charged
        // its own cost plus one unit of t_b (the parent's fan-in term).
        let mut d: Vec<Option<Weight>> = vec![None; m + 2];
        d[b] = Some(Weight::zero());
        for x in (1..b).rev() {
            let mut best: Option<Weight> = None;
            for c in x..b {
                let Some(gc) = &g[x][c] else { continue };
                let Some(rest) = &d[c + 1] else { continue };
                let cand = gc.clone() + t_of(b) + rest.clone();
                if best.as_ref().map_or(true, |w| cand < *w) {
                    best = Some(cand);
                }
            }
            d[x] = best;
        }
        for a in 1..=b {
            let children = if a == b {
                Some(Weight::zero())
            } else {
                d[a].clone()
            };
            if let Some(children) = children {
                g[a][b] = Some(inst.range_weight_additive(a, b) + children);
            }
        }
    }

    // Root forest over 1..=m; every root is alive through n, hence n+1.
    let horizon = Weight::from_u64(n + 1);
    let mut f: Vec<Option<Weight>> = vec![None; m + 2];
    f[m + 1] = Some(Weight::zero());
    for x in (1..=m).rev() {
        let mut best: Option<Weight> = None;
        for c in x..=m {
            let Some(gc) = &g[x][c] else { continue };
            let Some(rest) = &f[c + 1] else { continue };
            let cand = gc.clone() + horizon.clone() + rest.clone();
            if best.as_ref().map_or(true, |w| cand < *w) {
                best = Some(cand);
            }
        }
        f[x] = best;
    }
    let built: Weight = (1..=m).map(t_of).sum();
    let total = f[1].clone().expect("forest over a non-empty index range");
    Ok(total - built)
}

/// Cubic-time optimum for k-component instances (additive or decreasing).
///
/// `F(i, j, h)`: cheapest processing of non-empty indices i..=j under h
/// simultaneous in-range components, decomposed over the first root [i..m]:
/// its children occupy [i..m-1] with h slots, it is built at t_m, and the
/// remainder [m+1..j] runs beside it with h-1 slots.
pub fn dp_opt_kcomponent(trace: &Trace, k: u64) -> Result<Weight> {
    let model = CostModel::for_variant(trace.variant);
    if !matches!(model, CostModel::Additive | CostModel::Decreasing) {
        return Err(Error::Validation(format!(
            "the k-component dynamic program supports additive or decreasing costs, not {}",
            model.name()
        )));
    }
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    let inst = Instance::new(trace, model);
    let m = inst.m();
    if m == 0 {
        return Ok(Weight::zero());
    }
    let k = (k as usize).min(m);

    // memo[i][j][h]; i in 1..=m+1, j in 0..=m, h in 0..=k. None = infeasible.
    let mut memo: Vec<Vec<Vec<Option<Option<Weight>>>>> =
        vec![vec![vec![None; k + 1]; m + 1]; m + 2];

    fn solve(
        inst: &Instance<'_>,
        memo: &mut Vec<Vec<Vec<Option<Option<Weight>>>>>,
        i: usize,
        j: usize,
        h: usize,
    ) -> Option<Weight> {
        if i > j {
            return Some(Weight::zero());
        }
        if h == 0 {
            return None;
        }
        if let Some(hit) = &memo[i][j][h] {
            return hit.clone();
        }
        let mut best: Option<Weight> = None;
        for mid in i..=j {
            let Some(before) = (if mid == i {
                Some(Weight::zero())
            } else {
                solve(inst, memo, i, mid - 1, h)
            }) else {
                continue;
            };
            let Some(rest) = solve(inst, memo, mid + 1, j, h - 1) else {
                continue;
            };
            let cand = before + inst.build_cost(i, mid) + rest;
            if best.as_ref().map_or(true, |w| cand < *w) {
                best = Some(cand);
            }
        }
        memo[i][j][h] = Some(best.clone());
        best
    }

    solve(&inst, &mut memo, 1, m, k)
        .ok_or_else(|| Error::Validation("no feasible k-component schedule".into()))
}

/// How the lightest-first checker treats merges at query-only times.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LightestMode {
    /// The solution-level definition: empty times must create nothing.
    Strict,
    /// Judge each merge event on its own: whatever time it happens, the
    /// merged components must be a lightest subset of the pre-merge cover.
    MergeEvents,
}

fn batch_members(trace: &Trace, t: Time) -> ItemSet {
    trace.batch(t).items.iter().copied().collect()
}

/// True iff every non-empty time creates exactly one component merging the
/// batch with the i newest components, and empty times create none.
pub fn verify_newest_first(ledger: &SolutionLedger, trace: &Trace) -> bool {
    for t in 1..=ledger.len() {
        let created = ledger.created_at(t);
        let destroyed = ledger.destroyed_at(t);
        let batch = batch_members(trace, t);
        if batch.is_empty() {
            if !created.is_empty() || !destroyed.is_empty() {
                return false;
            }
            continue;
        }
        if created.len() != 1 {
            return false;
        }
        let new = ledger.store.get(created[0]).unwrap();
        let mut expect: ItemSet = batch.clone();
        for id in &destroyed {
            expect.extend(ledger.store.get(*id).unwrap().members.iter().copied());
        }
        if *new.members != expect {
            return false;
        }
        // The destroyed components must be exactly the newest ones.
        let prev = if t == 1 {
            Vec::new()
        } else {
            ledger.covers[(t - 2) as usize].components.clone()
        };
        let mut by_recency: Vec<ComponentId> = prev;
        by_recency.sort_by_key(|id| ledger.store.get(*id).unwrap().seq);
        let suffix: Vec<ComponentId> = by_recency
            .iter()
            .rev()
            .take(destroyed.len())
            .copied()
            .collect();
        let mut destroyed_sorted = destroyed.clone();
        destroyed_sorted.sort();
        let mut suffix_sorted = suffix;
        suffix_sorted.sort();
        if destroyed_sorted != suffix_sorted {
            return false;
        }
    }
    true
}

/// True iff every merge combines a lightest set of components (weights at
/// merge time under `model`).
pub fn verify_lightest_first(
    ledger: &SolutionLedger,
    trace: &Trace,
    model: CostModel,
    mode: LightestMode,
) -> bool {
    for t in 1..=ledger.len() {
        let created = ledger.created_at(t);
        let destroyed = ledger.destroyed_at(t);
        let batch = batch_members(trace, t);
        if batch.is_empty() && mode == LightestMode::Strict {
            if !created.is_empty() || !destroyed.is_empty() {
                return false;
            }
            continue;
        }
        if created.is_empty() {
            if !destroyed.is_empty() {
                return false;
            }
            continue;
        }
        // Conceptual pre-merge cover: last cover plus the batch as a virtual
        // newest component.
        let prev: Vec<ComponentId> = if t == 1 {
            Vec::new()
        } else {
            ledger.covers[(t - 2) as usize].components.clone()
        };
        let mut pre: Vec<(Option<ComponentId>, ItemSet)> = prev
            .iter()
            .map(|id| {
                (
                    Some(*id),
                    (*ledger.store.get(*id).unwrap().members).clone(),
                )
            })
            .collect();
        if !batch.is_empty() {
            pre.push((None, batch.clone()));
        }

        // Identify the merge event: at most one created component may absorb
        // others; the only other admissible creation is a plain insert of
        // the batch.
        let mut merge: Option<&Component> = None;
        let mut plain = 0usize;
        for id in &created {
            let c = ledger.store.get(*id).unwrap();
            if *c.members == batch {
                plain += 1;
            } else if merge.is_none() {
                merge = Some(c);
            } else {
                return false;
            }
        }
        if plain > 1 || (plain == 1 && batch.is_empty()) {
            return false;
        }
        let Some(mc) = merge else {
            if !destroyed.is_empty() {
                return false;
            }
            continue;
        };
        // The merged pre-components are those whose members sit inside the
        // new component; they must include every destroyed id.
        let absorbed: Vec<usize> = pre
            .iter()
            .enumerate()
            .filter(|(_, (_, members))| members.is_subset(&mc.members))
            .map(|(i, _)| i)
            .collect();
        let absorbed_ids: Vec<ComponentId> =
            absorbed.iter().filter_map(|&i| pre[i].0).collect();
        let mut destroyed_sorted = destroyed.clone();
        destroyed_sorted.sort();
        let mut absorbed_sorted = absorbed_ids;
        absorbed_sorted.sort();
        if absorbed_sorted != destroyed_sorted {
            return false;
        }
        let mut union = ItemSet::new();
        for &i in &absorbed {
            union.extend(pre[i].1.iter().copied());
        }
        if union != *mc.members {
            return false;
        }
        // Lightest check: the absorbed weights are the |absorbed| smallest.
        let weights: Vec<Weight> = pre
            .iter()
            .map(|(_, members)| eval_unchecked(model, t, members, trace))
            .collect();
        let mut taken: Vec<Weight> = absorbed.iter().map(|&i| weights[i].clone()).collect();
        taken.sort();
        let mut all = weights;
        all.sort();
        if taken != all[..taken.len()] {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::trace_from_weights;

    fn w(n: u64) -> Weight {
        Weight::from_u64(n)
    }

    fn ws(v: &[u64]) -> Vec<Option<Weight>> {
        v.iter().map(|&x| Some(w(x))).collect()
    }

    #[test]
    fn minsum_two_units_is_five() {
        let trace = trace_from_weights(Variant::MinSum, &ws(&[1, 1]));
        let r = brute_force_newest_first(&trace, None, &BruteConfig::default()).unwrap();
        assert_eq!(r.optimal_cost, w(5));
        assert_eq!(dp_opt_minsum(&trace).unwrap(), w(5));
    }

    #[test]
    fn minsum_single_batch_pays_weight_plus_n() {
        let mut weights = ws(&[7]);
        for _ in 0..5 {
            weights.push(None);
        }
        let trace = trace_from_weights(Variant::MinSum, &weights);
        assert_eq!(dp_opt_minsum(&trace).unwrap(), w(7 + 6));
        let r = brute_force_newest_first(&trace, None, &BruteConfig::default()).unwrap();
        assert_eq!(r.optimal_cost, w(13));
    }

    #[test]
    fn k1_forces_full_merges() {
        let trace = trace_from_weights(Variant::KComponent, &ws(&[2, 3, 4]));
        let r = brute_force_newest_first(&trace, Some(1), &BruteConfig::default()).unwrap();
        // wt(U_1) + wt(U_2) + wt(U_3) = 2 + 5 + 9
        assert_eq!(r.optimal_cost, w(16));
        assert_eq!(dp_opt_kcomponent(&trace, 1).unwrap(), w(16));
    }

    #[test]
    fn bigtable_instance_optimum_is_four() {
        let mut weights = ws(&[3, 1]);
        for _ in 0..98 {
            weights.push(None);
        }
        let trace = trace_from_weights(Variant::KComponent, &weights);
        let r = brute_force_newest_first(&trace, Some(2), &BruteConfig::default()).unwrap();
        assert_eq!(r.optimal_cost, w(4));
        assert_eq!(dp_opt_kcomponent(&trace, 2).unwrap(), w(4));
        assert!(verify_newest_first(&r.witness, &trace));
    }

    #[test]
    fn k_at_least_m_needs_no_merges() {
        let trace = trace_from_weights(Variant::KComponent, &ws(&[5, 2, 9]));
        let r = brute_force_newest_first(&trace, Some(3), &BruteConfig::default()).unwrap();
        assert_eq!(r.optimal_cost, w(16));
        assert_eq!(dp_opt_kcomponent(&trace, 7).unwrap(), w(16));
    }

    #[test]
    fn partition_matches_brute_on_small_instances() {
        let trace = trace_from_weights(Variant::KComponent, &ws(&[3, 1]));
        let p = partition_oracle(&trace, Some(2), &PartitionConfig::default()).unwrap();
        assert_eq!(p.optimal_cost, w(4));

        let trace = trace_from_weights(Variant::MinSum, &ws(&[1, 1]));
        let p = partition_oracle(&trace, None, &PartitionConfig::default()).unwrap();
        assert_eq!(p.optimal_cost, w(5));
    }

    #[test]
    fn caps_are_enforced() {
        let trace = trace_from_weights(Variant::MinSum, &ws(&[1; 13]));
        assert!(matches!(
            brute_force_newest_first(&trace, None, &BruteConfig::default()),
            Err(Error::ResourceCap(_))
        ));
        let trace = trace_from_weights(Variant::MinSum, &ws(&[1; 6]));
        assert!(matches!(
            partition_oracle(&trace, None, &PartitionConfig::default()),
            Err(Error::ResourceCap(_))
        ));
    }

    #[test]
    fn single_item_partition_oracle() {
        let trace = trace_from_weights(Variant::MinSum, &ws(&[4]));
        let p = partition_oracle(&trace, None, &PartitionConfig::default()).unwrap();
        assert_eq!(p.optimal_cost, w(5)); // build 4 + one query
    }

    #[test]
    fn hand_built_non_suffix_merge_fails_newest_first() {
        // Three singletons, then a component merging oldest+newest only.
        let trace = trace_from_weights(Variant::MinSum, &ws(&[1, 1, 1]));
        let mut store = ComponentStore::new();
        let mk = |id: u64, items: &[u32], birth: Time| Component {
            id: ComponentId(id),
            members: std::sync::Arc::new(
                items.iter().map(|&i| crate::model::ItemId(i)).collect(),
            ),
            birth,
            seq: id,
            interval: None,
        };
        store.insert(mk(1, &[0], 1)).unwrap();
        store.insert(mk(2, &[1], 2)).unwrap();
        store.insert(mk(3, &[0, 2], 3)).unwrap();
        let covers = vec![
            Cover { time: 1, components: vec![ComponentId(1)] },
            Cover { time: 2, components: vec![ComponentId(1), ComponentId(2)] },
            Cover { time: 3, components: vec![ComponentId(2), ComponentId(3)] },
        ];
        let ledger =
            accumulate_costs(&covers, &store, CostModel::Additive, &trace, None).unwrap();
        assert!(!verify_newest_first(&ledger, &trace));
    }
}
