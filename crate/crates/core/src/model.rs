//! Input model: items, batches, traces, and the problem variants.
//!
//! A trace is the universal input format: a sequence of timestamped item
//! batches (possibly empty), with times running exactly 1..=n. Items are
//! immutable after construction; every operation downstream of here is a pure
//! function over these values.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weight::Weight;

pub type Time = u64;

/// Interned item handle; the original opaque token lives on `ItemMeta`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ItemId(pub u32);

pub type ItemSet = BTreeSet<ItemId>;

/// Shared component member sets: policies hand these across the step
/// interface without copying, and reclaim them in place when they hold the
/// only reference.
pub type Members = std::sync::Arc<ItemSet>;

/// Which problem the trace is an instance of.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "minsum")]
    MinSum,
    #[serde(rename = "kcomponent")]
    KComponent,
    #[serde(rename = "decreasing")]
    DecreasingWeights,
    #[serde(rename = "lsm")]
    Lsm,
    #[serde(rename = "general")]
    General,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::MinSum => "minsum",
            Variant::KComponent => "kcomponent",
            Variant::DecreasingWeights => "decreasing",
            Variant::Lsm => "lsm",
            Variant::General => "general",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "minsum" => Ok(Variant::MinSum),
            "kcomponent" => Ok(Variant::KComponent),
            "decreasing" => Ok(Variant::DecreasingWeights),
            "lsm" => Ok(Variant::Lsm),
            "general" => Ok(Variant::General),
            other => Err(Error::Validation(format!("unknown variant {:?}", other))),
        }
    }

    /// Min-Sum pays query cost per step; the k-variants carry a budget instead.
    pub fn counts_query_cost(&self) -> bool {
        matches!(self, Variant::MinSum)
    }
}

/// Named general build-cost functions for the general variant.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum GeneralCost {
    /// wt_t(S) = max over members of wt(x); satisfies P1-P3.
    #[serde(rename = "max-weight")]
    MaxWeight,
}

impl GeneralCost {
    pub fn name(&self) -> &'static str {
        match self {
            GeneralCost::MaxWeight => "max-weight",
        }
    }

    pub fn parse(s: &str) -> Result<GeneralCost> {
        match s {
            "max-weight" => Ok(GeneralCost::MaxWeight),
            other => Err(Error::Validation(format!(
                "unknown general cost hook {:?}",
                other
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ItemMeta {
    pub token: String,
    pub weight: Weight,
    pub key: Option<String>,
    pub ts: Option<u64>,
    pub expiry: Option<Time>,
    pub tombstone_weight: Option<Weight>,
    pub inserted_at: Time,
}

impl ItemMeta {
    /// Weight charged once the item has expired; defaults to the full weight.
    pub fn tombstone(&self) -> &Weight {
        self.tombstone_weight.as_ref().unwrap_or(&self.weight)
    }
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub time: Time,
    pub items: Vec<ItemId>,
}

impl Batch {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Per-item decreasing weight schedules: step functions over time.
///
/// An item absent from the table keeps its base weight. Entries are
/// `(from_time, weight)` breakpoints sorted by time; the value at `t` is the
/// weight of the latest breakpoint with `from_time <= t`, or the base weight
/// before the first breakpoint.
#[derive(Clone, Debug, Default)]
pub struct DecreasingSchedule {
    table: HashMap<ItemId, Vec<(Time, Weight)>>,
}

impl DecreasingSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, item: ItemId, breakpoints: Vec<(Time, Weight)>) {
        self.table.insert(item, breakpoints);
    }

    pub fn breakpoints(&self, item: ItemId) -> Option<&[(Time, Weight)]> {
        self.table.get(&item).map(|v| v.as_slice())
    }

    pub fn weight_at(&self, item: ItemId, base: &Weight, t: Time) -> Weight {
        match self.table.get(&item) {
            None => base.clone(),
            Some(bps) => {
                let mut current = base.clone();
                for (from, w) in bps {
                    if *from <= t {
                        current = w.clone();
                    } else {
                        break;
                    }
                }
                current
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// The full input instance.
#[derive(Clone, Debug)]
pub struct Trace {
    pub variant: Variant,
    pub batches: Vec<Batch>,
    items: Vec<ItemMeta>,
    by_token: HashMap<String, ItemId>,
    pub decreasing: Option<DecreasingSchedule>,
    pub general_hook: Option<GeneralCost>,
}

impl Trace {
    pub fn len(&self) -> Time {
        self.batches.len() as Time
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn batch(&self, t: Time) -> &Batch {
        &self.batches[(t - 1) as usize]
    }

    pub fn item(&self, id: ItemId) -> &ItemMeta {
        &self.items[id.0 as usize]
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn lookup(&self, token: &str) -> Option<ItemId> {
        self.by_token.get(token).copied()
    }

    pub fn items(&self) -> impl Iterator<Item = (ItemId, &ItemMeta)> {
        self.items
            .iter()
            .enumerate()
            .map(|(i, m)| (ItemId(i as u32), m))
    }

    /// Number of non-empty batches, `m` in the objective bounds.
    pub fn nonempty_count(&self) -> usize {
        self.batches.iter().filter(|b| !b.is_empty()).count()
    }

    pub fn nonempty_times(&self) -> Vec<Time> {
        self.batches
            .iter()
            .filter(|b| !b.is_empty())
            .map(|b| b.time)
            .collect()
    }

    /// All items inserted at times <= t (the set U_t).
    pub fn universe_at(&self, t: Time) -> ItemSet {
        let mut set = ItemSet::new();
        for b in &self.batches[..t.min(self.len()) as usize] {
            set.extend(b.items.iter().copied());
        }
        set
    }

    pub fn total_weight(&self) -> Weight {
        self.items.iter().map(|m| m.weight.clone()).sum()
    }

    /// Checks every structural invariant of the input format.
    pub fn validate(&self) -> Result<()> {
        for (idx, b) in self.batches.iter().enumerate() {
            if b.time != idx as Time + 1 {
                return Err(Error::Validation(format!(
                    "batch times must run 1..=n with no gaps; found {} at position {}",
                    b.time,
                    idx + 1
                )));
            }
        }
        let mut seen_ts: Option<u64> = None;
        for b in &self.batches {
            for &id in &b.items {
                let m = self.item(id);
                if let Some(tw) = &m.tombstone_weight {
                    if tw > &m.weight {
                        return Err(Error::Validation(format!(
                            "item {:?} tombstone weight {} exceeds weight {}",
                            m.token, tw, m.weight
                        )));
                    }
                }
                if m.key.is_some() && self.variant == Variant::Lsm && m.ts.is_none() {
                    return Err(Error::Validation(format!(
                        "keyed item {:?} in an lsm trace has no timestamp",
                        m.token
                    )));
                }
                if let Some(ts) = m.ts {
                    if let Some(prev) = seen_ts {
                        if ts <= prev {
                            return Err(Error::Validation(format!(
                                "item {:?} timestamp {} does not increase (previous {})",
                                m.token, ts, prev
                            )));
                        }
                    }
                    seen_ts = Some(ts);
                }
            }
        }
        if let Some(sched) = &self.decreasing {
            for (id, meta) in self.items() {
                if let Some(bps) = sched.breakpoints(id) {
                    let mut prev = meta.weight.clone();
                    let mut prev_t = meta.inserted_at;
                    for (from, w) in bps {
                        if *from < prev_t {
                            return Err(Error::Validation(format!(
                                "schedule for {:?} has non-monotone times",
                                meta.token
                            )));
                        }
                        if *w > prev {
                            return Err(Error::Validation(format!(
                                "schedule for {:?} increases at t={}",
                                meta.token, from
                            )));
                        }
                        prev = w.clone();
                        prev_t = *from;
                    }
                }
            }
        }
        if self.variant == Variant::General && self.general_hook.is_none() {
            return Err(Error::Validation(
                "general variant requires a declared cost hook".into(),
            ));
        }
        Ok(())
    }
}

impl Trace {
    pub fn new(variant: Variant) -> Trace {
        Trace {
            variant,
            batches: Vec::new(),
            items: Vec::new(),
            by_token: HashMap::new(),
            decreasing: None,
            general_hook: None,
        }
    }

    /// Appends the next batch in place: used by adaptive generators that grow
    /// the instance while a policy runs. Id uniqueness is enforced here;
    /// `validate` still checks the whole trace.
    pub fn append_batch(&mut self, specs: Vec<ItemSpec>) -> Result<Vec<ItemId>> {
        let time = self.batches.len() as Time + 1;
        let mut ids = Vec::with_capacity(specs.len());
        for spec in specs {
            if self.by_token.contains_key(&spec.token) {
                return Err(Error::Validation(format!(
                    "duplicate item id {:?}",
                    spec.token
                )));
            }
            let id = ItemId(self.items.len() as u32);
            self.by_token.insert(spec.token.clone(), id);
            self.items.push(ItemMeta {
                token: spec.token,
                weight: spec.weight,
                key: spec.key,
                ts: spec.ts,
                expiry: spec.expiry,
                tombstone_weight: spec.tombstone_weight,
                inserted_at: time,
            });
            ids.push(id);
        }
        self.batches.push(Batch { time, items: ids.clone() });
        Ok(ids)
    }

    pub fn append_empty(&mut self) {
        let time = self.batches.len() as Time + 1;
        self.batches.push(Batch { time, items: Vec::new() });
    }

    pub fn set_schedule(&mut self, schedule: DecreasingSchedule) {
        self.decreasing = Some(schedule);
    }
}

/// Incremental trace construction; enforces id uniqueness at insert.
#[derive(Debug)]
pub struct TraceBuilder {
    trace: Trace,
}

#[derive(Clone, Debug, Default)]
pub struct ItemSpec {
    pub token: String,
    pub weight: Weight,
    pub key: Option<String>,
    pub ts: Option<u64>,
    pub expiry: Option<Time>,
    pub tombstone_weight: Option<Weight>,
}

impl ItemSpec {
    pub fn new(token: impl Into<String>, weight: Weight) -> Self {
        ItemSpec {
            token: token.into(),
            weight,
            ..Default::default()
        }
    }
}

impl TraceBuilder {
    pub fn new(variant: Variant) -> Self {
        TraceBuilder {
            trace: Trace::new(variant),
        }
    }

    pub fn general_hook(mut self, hook: GeneralCost) -> Self {
        self.trace.general_hook = Some(hook);
        self
    }

    /// Appends the next batch (time is implicit: one past the current end).
    pub fn push_batch(&mut self, specs: Vec<ItemSpec>) -> Result<Vec<ItemId>> {
        self.trace.append_batch(specs)
    }

    pub fn push_empty(&mut self) {
        self.trace.append_empty();
    }

    pub fn set_schedule(&mut self, schedule: DecreasingSchedule) {
        self.trace.set_schedule(schedule);
    }

    pub fn finish(self) -> Result<Trace> {
        self.trace.validate()?;
        Ok(self.trace)
    }
}

/// Shorthand for plain traces: one weight per batch, one item per non-empty
/// batch. `None` entries are empty (query-only) steps.
pub fn trace_from_weights(variant: Variant, weights: &[Option<Weight>]) -> Trace {
    let mut b = TraceBuilder::new(variant);
    for (i, w) in weights.iter().enumerate() {
        match w {
            Some(w) => {
                b.push_batch(vec![ItemSpec::new(format!("x{}", i + 1), w.clone())])
                    .unwrap();
            }
            None => b.push_empty(),
        }
    }
    b.finish().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(n: u64) -> Weight {
        Weight::from_u64(n)
    }

    #[test]
    fn times_are_contiguous() {
        let mut b = TraceBuilder::new(Variant::MinSum);
        b.push_batch(vec![ItemSpec::new("a", w(1))]).unwrap();
        b.push_empty();
        b.push_batch(vec![ItemSpec::new("b", w(2))]).unwrap();
        let t = b.finish().unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.batch(2).items.len(), 0);
        assert_eq!(t.nonempty_count(), 2);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut b = TraceBuilder::new(Variant::MinSum);
        b.push_batch(vec![ItemSpec::new("a", w(1))]).unwrap();
        assert!(b.push_batch(vec![ItemSpec::new("a", w(2))]).is_err());
    }

    #[test]
    fn tombstone_above_weight_rejected() {
        let mut b = TraceBuilder::new(Variant::Lsm);
        let mut spec = ItemSpec::new("a", w(1));
        spec.key = Some("k".into());
        spec.ts = Some(1);
        spec.tombstone_weight = Some(w(2));
        b.push_batch(vec![spec]).unwrap();
        assert!(b.finish().is_err());
    }

    #[test]
    fn timestamps_must_increase() {
        let mut b = TraceBuilder::new(Variant::Lsm);
        let mut s1 = ItemSpec::new("a", w(1));
        s1.key = Some("k".into());
        s1.ts = Some(5);
        let mut s2 = ItemSpec::new("b", w(1));
        s2.key = Some("k".into());
        s2.ts = Some(5);
        b.push_batch(vec![s1]).unwrap();
        b.push_batch(vec![s2]).unwrap();
        assert!(b.finish().is_err());
    }

    #[test]
    fn universe_accumulates() {
        let t = trace_from_weights(
            Variant::MinSum,
            &[Some(w(1)), None, Some(w(2))],
        );
        assert_eq!(t.universe_at(1).len(), 1);
        assert_eq!(t.universe_at(2).len(), 1);
        assert_eq!(t.universe_at(3).len(), 2);
    }
}
