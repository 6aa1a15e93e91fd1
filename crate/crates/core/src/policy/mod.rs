//! Contexts, top-K ranking actions and ranking policies.
//!
//! A policy is a conditional distribution over top-K rankings of a context's
//! eligible items. The estimators only rely on the [`Policy`] contract (exact
//! log-probabilities plus sampling), so the concrete family is pluggable;
//! [`PlackettLuce`] is the one shipped here.

mod enumerate;
mod plackett_luce;

pub use enumerate::{enumerate_index_rankings, ranking_count};
pub use plackett_luce::{LinearScorer, PlackettLuce};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::montecarlo::StreamRng;

/// Opaque item identifier.
pub type ItemId = String;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("action contains duplicate item {0:?}")]
    DuplicateItem(ItemId),

    #[error("action item {0:?} is not eligible in this context")]
    IneligibleItem(ItemId),

    #[error("action has {got} items, policy ranks top-{expected}")]
    WrongActionLength { expected: usize, got: usize },

    #[error("context offers {m} eligible items, fewer than K = {k}")]
    TooFewEligible { m: usize, k: usize },

    #[error("no score defined for item {item:?} in context {context_id:?}")]
    UndefinedScore { context_id: String, item: ItemId },

    #[error("feature weights for item {item:?} have length {got}, context has {expected} features")]
    FeatureLengthMismatch {
        item: ItemId,
        expected: usize,
        got: usize,
    },

    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),

    #[error("policy is degenerate on context {context_id:?}: non-finite log-probability")]
    DegeneratePolicy { context_id: String },

    #[error("context {0:?} has duplicate eligible items")]
    DuplicateEligible(String),

    #[error("context {0:?} has no eligible items")]
    NoEligibleItems(String),
}

/// One display opportunity: who is asking and what may be shown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    /// Opaque identifier, carried through logs and error messages.
    pub id: String,
    /// Small-integer group label (e.g. registered vs unknown customers).
    pub segment: u32,
    /// Fixed-length real feature vector.
    pub features: Vec<f64>,
    /// Candidate items; a ranking picks K of these without repetition.
    pub eligible_items: Vec<ItemId>,
}

impl Context {
    /// Checks the structural invariants: nonempty, duplicate-free eligible set.
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.eligible_items.is_empty() {
            return Err(PolicyError::NoEligibleItems(self.id.clone()));
        }
        for (i, item) in self.eligible_items.iter().enumerate() {
            if self.eligible_items[..i].contains(item) {
                return Err(PolicyError::DuplicateEligible(self.id.clone()));
            }
        }
        Ok(())
    }

    /// Position of `item` in the eligible list.
    pub fn item_index(&self, item: &str) -> Option<usize> {
        self.eligible_items.iter().position(|x| x == item)
    }
}

/// A top-K ranking over a context's eligible items.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RankedAction {
    pub items: Vec<ItemId>,
}

impl RankedAction {
    pub fn new(items: Vec<ItemId>) -> Self {
        Self { items }
    }

    /// Validates this action against a context and ranking size.
    pub fn validate_for(&self, ctx: &Context, k: usize) -> Result<(), PolicyError> {
        if self.items.len() != k {
            return Err(PolicyError::WrongActionLength {
                expected: k,
                got: self.items.len(),
            });
        }
        for (i, item) in self.items.iter().enumerate() {
            if self.items[..i].contains(item) {
                return Err(PolicyError::DuplicateItem(item.clone()));
            }
            if !ctx.eligible_items.iter().any(|x| x == item) {
                return Err(PolicyError::IneligibleItem(item.clone()));
            }
        }
        Ok(())
    }

    /// Maps items to their indices in the context's eligible list.
    pub fn to_indices(&self, ctx: &Context) -> Result<Vec<usize>, PolicyError> {
        self.items
            .iter()
            .map(|item| {
                ctx.item_index(item)
                    .ok_or_else(|| PolicyError::IneligibleItem(item.clone()))
            })
            .collect()
    }

    /// Builds an action from eligible-list indices.
    pub fn from_indices(ctx: &Context, idx: &[usize]) -> Self {
        Self {
            items: idx.iter().map(|&i| ctx.eligible_items[i].clone()).collect(),
        }
    }
}

/// An importance weight `π_t(a|x) / π_p(a|x)` kept alongside its log parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceWeight {
    pub value: f64,
    pub log_p_target: f64,
    pub log_p_logging: f64,
}

/// The policy contract the estimators rely on.
///
/// `prepare` resolves scores for one context once; the returned object then
/// answers log-probability and sampling queries without touching the scorer
/// again, which is what makes Monte-Carlo loops affordable.
pub trait Policy: Send + Sync {
    /// Ranking size K.
    fn k(&self) -> usize;

    /// Resolve this policy on one context.
    fn prepare<'a>(&'a self, ctx: &'a Context) -> Result<Box<dyn PreparedPolicy + 'a>, PolicyError>;
}

/// A policy bound to a single context.
pub trait PreparedPolicy: Send + Sync {
    fn k(&self) -> usize;

    /// Number of eligible items M.
    fn n_items(&self) -> usize;

    /// Exact log-probability of the ranking given by eligible-list indices.
    ///
    /// `idx` must hold `k` distinct valid indices; this is the unchecked hot
    /// path, use [`PreparedPolicy::log_prob`] for validated item-id input.
    fn log_prob_indices(&self, idx: &[usize]) -> f64;

    /// Draws a ranking as eligible-list indices into `out`.
    fn sample_into(&self, rng: &mut StreamRng, out: &mut Vec<usize>);

    /// Validated log-probability of an action.
    fn log_prob(&self, action: &RankedAction) -> Result<f64, PolicyError>;

    /// Draws a ranking as a [`RankedAction`].
    fn sample(&self, rng: &mut StreamRng) -> RankedAction;
}

/// Log-probability of `action` under `policy` at `context`.
pub fn log_prob(
    policy: &dyn Policy,
    context: &Context,
    action: &RankedAction,
) -> Result<f64, PolicyError> {
    policy.prepare(context)?.log_prob(action)
}

/// Samples one ranking from `policy` at `context`.
pub fn sample(
    policy: &dyn Policy,
    context: &Context,
    rng: &mut StreamRng,
) -> Result<RankedAction, PolicyError> {
    let prepared = policy.prepare(context)?;
    if prepared.n_items() < prepared.k() {
        return Err(PolicyError::TooFewEligible {
            m: prepared.n_items(),
            k: prepared.k(),
        });
    }
    Ok(prepared.sample(rng))
}

/// Importance weight of `action` between a target and a logging policy.
pub fn importance_weight(
    target: &dyn Policy,
    logging: &dyn Policy,
    context: &Context,
    action: &RankedAction,
) -> Result<ImportanceWeight, PolicyError> {
    let log_p_target = log_prob(target, context, action)?;
    let log_p_logging = log_prob(logging, context, action)?;
    if !log_p_target.is_finite() || !log_p_logging.is_finite() {
        return Err(PolicyError::DegeneratePolicy {
            context_id: context.id.clone(),
        });
    }
    Ok(ImportanceWeight {
        value: (log_p_target - log_p_logging).exp(),
        log_p_target,
        log_p_logging,
    })
}
