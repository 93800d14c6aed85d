//! Online compaction policies behind a single step interface.
//!
//! Each policy is a state machine advanced one batch at a time. A step
//! returns a `CoverDelta`; the runner applies it, validates the resulting
//! cover, and keeps the ledger. State depends only on the observed prefix:
//! a policy sees the current batch and may evaluate build costs at the
//! current time, nothing else.

mod adaptive_binary;
mod bigtable;
mod greedy_dual;
mod k_binomial;
mod naive_binary;
mod recursive_bk;

pub use adaptive_binary::{capacity, AdaptiveBinary};
pub use bigtable::BigtableDefault;
pub use greedy_dual::{lsm_reweight, GreedyDual, GreedyDualLsm};
pub use k_binomial::{binomial_decompose, KBinomial};
pub use naive_binary::NaiveBinary;
pub use recursive_bk::RecursiveBk;

use std::cell::Cell;
use std::rc::Rc;

use crate::cost::{eval_unchecked, CostModel};
use crate::error::{Error, Result};
use crate::ledger::ComponentId;
use crate::model::{Batch, ItemSet, Members, Time, Trace, Variant};
use crate::weight::Weight;

/// What a policy changed at one time step. Applying the delta to the
/// previous cover must yield a valid cover at t.
#[derive(Clone, Debug, Default)]
pub struct CoverDelta {
    pub destroyed: Vec<ComponentId>,
    pub created: Vec<NewComponent>,
}

#[derive(Clone, Debug)]
pub struct NewComponent {
    pub id: ComponentId,
    pub members: Members,
    pub interval: Option<(Time, Time)>,
}

impl CoverDelta {
    pub fn none() -> Self {
        CoverDelta::default()
    }

    pub fn is_empty(&self) -> bool {
        self.destroyed.is_empty() && self.created.is_empty()
    }
}

/// Shared monotone id source so nested policy simulations never collide.
#[derive(Clone, Debug, Default)]
pub struct IdGen(Rc<Cell<u64>>);

impl IdGen {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh(&self) -> ComponentId {
        let next = self.0.get() + 1;
        self.0.set(next);
        ComponentId(next)
    }
}

/// Cost evaluation bound to the current time step. This is the only window a
/// policy gets onto the instance, which keeps policies online by
/// construction.
pub struct StepCtx<'a> {
    pub trace: &'a Trace,
    pub model: CostModel,
    pub now: Time,
}

impl<'a> StepCtx<'a> {
    /// wt_now(S): caller guarantees members were inserted by now, which holds
    /// for any set a policy assembled from batches it has seen.
    pub fn eval(&self, members: &ItemSet) -> Weight {
        eval_unchecked(self.model, self.now, members, self.trace)
    }
}

pub trait Policy {
    fn name(&self) -> &'static str;

    fn step(&mut self, t: Time, batch: &Batch, ctx: &StepCtx<'_>) -> Result<CoverDelta>;
}

/// Policy name + parameters, the construction surface used by the harness.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolicySpec {
    AdaptiveBinary,
    NaiveBinary,
    KBinomial { k: u64 },
    BigtableDefault { k: u64 },
    GreedyDual { k: u64 },
    GreedyDualLsm { k: u64 },
    RecursiveBk { k: u64 },
}

impl PolicySpec {
    pub fn parse(name: &str, k: Option<u64>) -> Result<PolicySpec> {
        let need_k = || {
            k.ok_or_else(|| Error::Validation(format!("policy {:?} requires --k", name)))
                .and_then(|k| {
                    if k == 0 {
                        Err(Error::Validation("k must be at least 1".into()))
                    } else {
                        Ok(k)
                    }
                })
        };
        match name {
            "adaptive-binary" => Ok(PolicySpec::AdaptiveBinary),
            "naive-binary" => Ok(PolicySpec::NaiveBinary),
            "k-binomial" => Ok(PolicySpec::KBinomial { k: need_k()? }),
            "bigtable-default" => Ok(PolicySpec::BigtableDefault { k: need_k()? }),
            "greedy-dual" => Ok(PolicySpec::GreedyDual { k: need_k()? }),
            "greedy-dual-lsm" => Ok(PolicySpec::GreedyDualLsm { k: need_k()? }),
            "recursive-bk" => Ok(PolicySpec::RecursiveBk { k: need_k()? }),
            other => Err(Error::Validation(format!("unknown policy {:?}", other))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::AdaptiveBinary => "adaptive-binary",
            PolicySpec::NaiveBinary => "naive-binary",
            PolicySpec::KBinomial { .. } => "k-binomial",
            PolicySpec::BigtableDefault { .. } => "bigtable-default",
            PolicySpec::GreedyDual { .. } => "greedy-dual",
            PolicySpec::GreedyDualLsm { .. } => "greedy-dual-lsm",
            PolicySpec::RecursiveBk { .. } => "recursive-bk",
        }
    }

    pub fn k(&self) -> Option<u64> {
        match self {
            PolicySpec::AdaptiveBinary | PolicySpec::NaiveBinary => None,
            PolicySpec::KBinomial { k }
            | PolicySpec::BigtableDefault { k }
            | PolicySpec::GreedyDual { k }
            | PolicySpec::GreedyDualLsm { k }
            | PolicySpec::RecursiveBk { k } => Some(*k),
        }
    }

    pub fn supports(&self, variant: Variant) -> bool {
        match self {
            PolicySpec::AdaptiveBinary | PolicySpec::NaiveBinary => {
                variant == Variant::MinSum
            }
            PolicySpec::KBinomial { .. } | PolicySpec::BigtableDefault { .. } => {
                variant == Variant::KComponent
            }
            PolicySpec::GreedyDual { .. } => {
                matches!(variant, Variant::KComponent | Variant::DecreasingWeights)
            }
            PolicySpec::GreedyDualLsm { .. } => variant == Variant::Lsm,
            PolicySpec::RecursiveBk { .. } => matches!(
                variant,
                Variant::KComponent
                    | Variant::DecreasingWeights
                    | Variant::Lsm
                    | Variant::General
            ),
        }
    }

    pub fn build(&self) -> Box<dyn Policy> {
        match self {
            PolicySpec::AdaptiveBinary => Box::new(AdaptiveBinary::new()),
            PolicySpec::NaiveBinary => Box::new(NaiveBinary::new()),
            PolicySpec::KBinomial { k } => Box::new(KBinomial::new(*k)),
            PolicySpec::BigtableDefault { k } => Box::new(BigtableDefault::new(*k)),
            PolicySpec::GreedyDual { k } => Box::new(GreedyDual::new(*k)),
            PolicySpec::GreedyDualLsm { k } => Box::new(GreedyDualLsm::new(*k)),
            PolicySpec::RecursiveBk { k } => Box::new(RecursiveBk::new(*k, IdGen::new(), 1)),
        }
    }
}

pub(crate) fn batch_set(batch: &Batch) -> ItemSet {
    batch.items.iter().copied().collect()
}
