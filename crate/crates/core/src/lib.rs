//! Offline A/B testing for ranking policies.
//!
//! This crate evaluates a candidate ranking policy against logged feedback
//! collected under a production policy, without running the candidate online.
//! It provides:
//!
//! - [`policy`]: contexts, top-K ranking actions and Plackett-Luce policies
//!   with exact log-probabilities, Gumbel top-K sampling and importance
//!   weights;
//! - [`logmodel`]: the logged-feedback data model and its line-delimited
//!   on-disk format;
//! - [`estimators`]: the counterfactual estimator family (IS, NIS, DR, CIS,
//!   NCIS, PieceNCIS, PointNCIS) implemented as mergeable streaming folds,
//!   together with capping diagnostics and bootstrap confidence intervals;
//! - [`montecarlo`]: splittable random streams and the Midzuno-Sen
//!   rejection-sampling estimator used by PointNCIS;
//! - [`simbench`]: a synthetic online/offline benchmark harness that produces
//!   ground-truth uplifts so estimator bias and decision quality can be
//!   measured end to end.
//!
//! Everything is deterministic given a seed: estimators fold over fixed-size
//! chunks merged in index order and all Monte-Carlo sub-streams are derived
//! from (seed, sample index), so serial and parallel runs agree bit for bit.

pub mod csvio;
pub mod estimators;
pub mod logmodel;
pub mod montecarlo;
pub mod policy;
pub mod simbench;

pub use estimators::{CapMode, CappingRule, EstimatorReport};
pub use logmodel::{LogDataset, LoggedSample};
pub use montecarlo::{RandomStream, StreamRng};
pub use policy::{Context, ItemId, PlackettLuce, Policy, RankedAction};
