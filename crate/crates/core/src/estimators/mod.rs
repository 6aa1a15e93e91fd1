//! Counterfactual estimators over logged bandit feedback.
//!
//! All estimators value a target policy `π_t` from samples logged under a
//! production policy `π_p`, using importance weights `w = π_t(a|x)/π_p(a|x)`:
//!
//! - [`estimate_is`] — basic importance sampling, `(1/n) Σ w·r`;
//! - [`estimate_nis`] — self-normalized, `Σ w·r / Σ w`;
//! - [`estimate_dr`] — doubly robust with a reward model control variate;
//! - [`estimate_cis`] — capped IS, `(1/n) Σ w̄·r` with `w̄` max- or
//!   zero-capped at `c`;
//! - [`estimate_ncis`] — capped and globally self-normalized;
//! - [`estimate_piece_ncis`] — NCIS per stratum of a context partition;
//! - [`estimate_point_ncis`] — capped IS normalized per context via the
//!   Midzuno-Sen reciprocal-mass estimate.
//!
//! Capping trades variance for bias; the normalized variants re-model that
//! bias globally, per stratum, or per context. Diagnostics
//! ([`cis_bias_upper_bound`], [`capping_sweep`], [`weight_quantiles`],
//! [`shrink_capping`]) expose the trade-off. Exact small-instance oracles
//! live in [`enumeration`].

pub mod enumeration;
pub mod fold;

mod bootstrap;
mod diagnostics;
pub(crate) mod ops;
mod value_model;
pub(crate) mod weights;

pub use bootstrap::BootstrapConfig;
pub(crate) use bootstrap::quantile_sorted;
pub use diagnostics::{
    capping_sweep, cis_bias_upper_bound, shrink_capping, weight_quantiles, QuantileTable,
    SweepRow, DEFAULT_QUANTILES, SHRINK_MAX_HALVINGS,
};
pub use enumeration::EnumerableInstance;
pub use ops::{
    estimate_cis, estimate_dr, estimate_is, estimate_ncis, estimate_nis, estimate_piece_ncis,
    estimate_point_ncis, McConfig, RewardModel, DR_ENUMERATION_CAP,
};
pub use value_model::{build_value_partition, Partition, ValueModel, VALUE_MODEL_CLIP};
pub use weights::WeightSource;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::montecarlo::McError;
use crate::policy::PolicyError;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("capping parameter must be positive and finite, got {0}")]
    InvalidCapping(f64),

    #[error("{estimator}: all (capped) weights are zero, estimate undefined")]
    ZeroDenominator { estimator: &'static str },

    #[error("mc_samples must be at least 1, got {0}")]
    InvalidMcSamples(usize),

    #[error("partition assigns no group to context {context_id:?}")]
    PartitionGroupMissing { context_id: String },

    #[error("quantile list must be sorted ascending")]
    UnsortedQuantiles,

    #[error("quantile {0} outside [0, 1]")]
    InvalidQuantile(f64),

    #[error("capping sweep grid is empty")]
    EmptyGrid,

    #[error("adaptive capping requires max mode, zero capping cannot bound effective weights")]
    ZeroModeAdaptive,

    #[error(
        "shrink_capping: probe budget exhausted after {halvings} halvings on context {context_id:?}"
    )]
    ProbeBudgetExhausted { context_id: String, halvings: usize },

    #[error(transparent)]
    Policy(#[from] PolicyError),

    #[error(transparent)]
    MonteCarlo(#[from] McError),
}

/// How importance weights are tamed before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapMode {
    /// `w̄ = min(w, c)`.
    Max,
    /// `w̄ = w·[w < c]`.
    Zero,
}

impl CapMode {
    pub fn with_c(self, c: f64) -> Result<CappingRule, EstimatorError> {
        CappingRule::new(self, c)
    }
}

impl std::str::FromStr for CapMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(CapMode::Max),
            "zero" => Ok(CapMode::Zero),
            other => Err(format!("unknown cap mode {other:?} (expected max|zero)")),
        }
    }
}

/// A capping rule: mode plus threshold `c > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CappingRule {
    pub mode: CapMode,
    pub c: f64,
}

impl CappingRule {
    pub fn new(mode: CapMode, c: f64) -> Result<Self, EstimatorError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(EstimatorError::InvalidCapping(c));
        }
        Ok(Self { mode, c })
    }

    pub fn max(c: f64) -> Result<Self, EstimatorError> {
        Self::new(CapMode::Max, c)
    }

    pub fn zero(c: f64) -> Result<Self, EstimatorError> {
        Self::new(CapMode::Zero, c)
    }

    /// The capped weight `w̄`.
    #[inline]
    pub fn apply(&self, w: f64) -> f64 {
        match self.mode {
            CapMode::Max => w.min(self.c),
            CapMode::Zero => {
                if w < self.c {
                    w
                } else {
                    0.0
                }
            }
        }
    }

    /// The ratio `w̄/w ∈ [0, 1]`, computed from `ln w` so enormous weights
    /// cannot overflow.
    #[inline]
    pub fn ratio_from_log_weight(&self, log_w: f64) -> f64 {
        let ln_c = self.c.ln();
        match self.mode {
            CapMode::Max => {
                if log_w <= ln_c {
                    1.0
                } else {
                    (ln_c - log_w).exp()
                }
            }
            CapMode::Zero => {
                if log_w < ln_c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Whether a weight counts as capped in diagnostics (`w > c`).
    #[inline]
    pub fn is_capped(&self, w: f64) -> bool {
        w > self.c
    }
}

/// Point estimate plus bootstrap interval and diagnostic counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub estimator_name: String,
    pub estimate: f64,
    /// 90% bootstrap interval (percentile method); collapses onto the
    /// estimate when bootstrapping is disabled.
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_used: u64,
    /// Fraction of samples whose raw weight exceeds the capping parameter.
    pub capped_fraction: f64,
    /// Sum of the weights the estimator actually averaged.
    pub sum_weights: f64,
}

/// The estimator family, as named on the command line and in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Is,
    Nis,
    Dr,
    Cis,
    Ncis,
    PieceNcis,
    PointNcis,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Is => "is",
            EstimatorKind::Nis => "nis",
            EstimatorKind::Dr => "dr",
            EstimatorKind::Cis => "cis",
            EstimatorKind::Ncis => "ncis",
            EstimatorKind::PieceNcis => "piece-ncis",
            EstimatorKind::PointNcis => "point-ncis",
        }
    }

    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::Is,
        EstimatorKind::Nis,
        EstimatorKind::Dr,
        EstimatorKind::Cis,
        EstimatorKind::Ncis,
        EstimatorKind::PieceNcis,
        EstimatorKind::PointNcis,
    ];
}

impl std::str::FromStr for EstimatorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EstimatorKind::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown estimator {s:?}"))
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capping_rule_applies_both_modes() {
        let max = CappingRule::max(2.0).unwrap();
        assert_eq!(max.apply(1.5), 1.5);
        assert_eq!(max.apply(5.0), 2.0);
        let zero = CappingRule::zero(2.0).unwrap();
        assert_eq!(zero.apply(1.5), 1.5);
        assert_eq!(zero.apply(5.0), 0.0);
        assert_eq!(zero.apply(2.0), 0.0, "zero capping is strict");
    }

    #[test]
    fn ratio_from_log_weight_matches_direct_computation() {
        let rule = CappingRule::max(3.0).unwrap();
        for w in [0.01, 0.5, 1.0, 2.9999, 3.0, 3.0001, 50.0, 1e12] {
            let direct = rule.apply(w) / w;
            let via_log = rule.ratio_from_log_weight(w.ln());
            assert!(
                (direct - via_log).abs() < 1e-12,
                "w = {w}: {direct} vs {via_log}"
            );
        }
        // survives weights far beyond f64 overflow of exp
        assert_eq!(rule.ratio_from_log_weight(1e9), 0.0_f64.max((3.0f64.ln() - 1e9).exp()));
    }

    #[test]
    fn invalid_capping_rejected() {
        assert!(CappingRule::max(0.0).is_err());
        assert!(CappingRule::max(-1.0).is_err());
        assert!(CappingRule::max(f64::NAN).is_err());
        assert!(CappingRule::max(f64::INFINITY).is_err());
    }

    #[test]
    fn estimator_names_round_trip() {
        for kind in EstimatorKind::ALL {
            assert_eq!(kind.name().parse::<EstimatorKind>().unwrap(), kind);
        }
        assert!("bogus".parse::<EstimatorKind>().is_err());
    }
}
