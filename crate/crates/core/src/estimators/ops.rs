//! The estimator family itself.

use rayon::prelude::*;
use std::collections::BTreeMap;

use super::bootstrap::{BootstrapConfig, Finalize, Statistic};
use super::fold::SampleTerm;
use super::value_model::Partition;
use super::weights::{compute_weights, WeightSource};
use super::{CapMode, CappingRule, EstimatorError, EstimatorReport};
use crate::logmodel::LogDataset;
use crate::montecarlo::{midzuno_sen_prepared, RandomStream};
use crate::policy::{enumerate_index_rankings, ranking_count, Context, Policy, RankedAction};

/// Exact inner expectations are enumerated up to this many rankings; above
/// it the doubly robust estimator falls back to Monte-Carlo draws.
pub const DR_ENUMERATION_CAP: u64 = 10_000;

/// A model of the expected reward of an action in a context.
pub trait RewardModel: Send + Sync {
    /// Predicted expected reward, within `[0, r_max]`.
    fn predict(&self, ctx: &Context, action: &RankedAction) -> f64;
}

impl<F> RewardModel for F
where
    F: Fn(&Context, &RankedAction) -> f64 + Send + Sync,
{
    fn predict(&self, ctx: &Context, action: &RankedAction) -> f64 {
        self(ctx, action)
    }
}

/// Monte-Carlo settings for PointNCIS.
#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    /// Ratio draws per positive-reward sample.
    pub n_mc: usize,
    /// Shrink the capping per context so effective weights stay below `c`
    /// (max capping only).
    pub adaptive: bool,
    /// Probe draws used by the adaptive shrink.
    pub probe_samples: usize,
    /// Acceptance-loop budget before declaring degenerate overlap.
    pub acceptance_budget: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_mc: 100,
            adaptive: false,
            probe_samples: 200,
            acceptance_budget: crate::montecarlo::DEFAULT_ACCEPTANCE_BUDGET,
        }
    }
}

/// An estimator bound to a dataset: per-sample terms plus diagnostics,
/// ready to finalize and bootstrap.
pub(crate) struct PreparedEstimate {
    pub name: &'static str,
    pub terms: Vec<SampleTerm>,
    pub n_groups: usize,
    pub finalize: Finalize,
    pub capped_fraction: f64,
    pub sum_weights: f64,
}

impl PreparedEstimate {
    fn statistic(&self) -> Statistic<'_> {
        Statistic {
            terms: &self.terms,
            n_groups: self.n_groups,
            finalize: self.finalize,
            name: self.name,
        }
    }

    pub fn estimate(&self) -> Result<f64, EstimatorError> {
        self.statistic().eval_full()
    }

    pub fn report(&self, bootstrap: &BootstrapConfig) -> Result<EstimatorReport, EstimatorError> {
        let estimate = self.estimate()?;
        let (ci_low, ci_high) = self.statistic().bootstrap_ci(bootstrap, estimate);
        Ok(EstimatorReport {
            estimator_name: self.name.to_owned(),
            estimate,
            ci_low,
            ci_high,
            n_used: self.terms.len() as u64,
            capped_fraction: self.capped_fraction,
            sum_weights: self.sum_weights,
        })
    }

    /// Uplift against a per-sample baseline (same resample indices on both
    /// sides), for offline A/B decisions.
    pub fn uplift_ci(
        &self,
        baseline: &[f64],
        bootstrap: &BootstrapConfig,
    ) -> Result<(f64, f64, f64), EstimatorError> {
        let estimate = self.estimate()?;
        let base_mean = baseline.iter().sum::<f64>() / baseline.len() as f64;
        let uplift = estimate - base_mean;
        let (lo, hi) = self
            .statistic()
            .bootstrap_uplift_ci(bootstrap, baseline, uplift);
        Ok((uplift, lo, hi))
    }
}

fn mean_terms(values: impl Iterator<Item = f64>) -> Vec<SampleTerm> {
    values
        .map(|num| SampleTerm {
            group: 0,
            num,
            den: 1.0,
        })
        .collect()
}

fn capped_diagnostics(weights: &[f64], capping: CappingRule) -> (f64, f64) {
    let capped = weights.iter().filter(|&&w| capping.is_capped(w)).count();
    let sum: f64 = weights.iter().map(|&w| capping.apply(w)).sum();
    (capped as f64 / weights.len() as f64, sum)
}

// ── Basic importance sampling ───────────────────────────────────────────

pub(crate) fn prepare_is(
    data: &LogDataset,
    weights: &[f64],
) -> PreparedEstimate {
    let terms = mean_terms(
        weights
            .iter()
            .zip(&data.samples)
            .map(|(&w, s)| w * s.reward),
    );
    PreparedEstimate {
        name: "is",
        terms,
        n_groups: 1,
        finalize: Finalize::Mean,
        capped_fraction: 0.0,
        sum_weights: weights.iter().sum(),
    }
}

/// Basic importance sampling: `(1/n) Σ w_i r_i`.
///
/// Weights come from the logged propensities or, with
/// [`WeightSource::Recompute`], from a supplied logging policy.
pub fn estimate_is(
    data: &LogDataset,
    target: &dyn Policy,
    source: WeightSource<'_>,
    bootstrap: &BootstrapConfig,
) -> Result<EstimatorReport, EstimatorError> {
    let weights = compute_weights(data, target, source)?;
    prepare_is(data, &weights).report(bootstrap)
}

// ── Normalized importance sampling ──────────────────────────────────────

pub(crate) fn prepare_nis(data: &LogDataset, weights: &[f64]) -> PreparedEstimate {
    let terms = weights
        .iter()
        .zip(&data.samples)
        .map(|(&w, s)| SampleTerm {
            group: 0,
            num: w * s.reward,
            den: w,
        })
        .collect();
    PreparedEstimate {
        name: "nis",
        terms,
        n_groups: 1,
        finalize: Finalize::Ratio,
        capped_fraction: 0.0,
        sum_weights: weights.iter().sum(),
    }
}

/// Normalized importance sampling: `Σ w_i r_i / Σ w_i`.
pub fn estimate_nis(
    data: &LogDataset,
    target: &dyn Policy,
    bootstrap: &BootstrapConfig,
) -> Result<EstimatorReport, EstimatorError> {
    let weights = compute_weights(data, target, WeightSource::FromLog)?;
    prepare_nis(data, &weights).report(bootstrap)
}

// ── Doubly robust ───────────────────────────────────────────────────────

pub(crate) fn prepare_dr(
    data: &LogDataset,
    target: &dyn Policy,
    weights: &[f64],
    reward_model: &dyn RewardModel,
    mc_samples: usize,
    stream: RandomStream,
) -> Result<PreparedEstimate, EstimatorError> {
    if mc_samples < 1 {
        return Err(EstimatorError::InvalidMcSamples(mc_samples));
    }
    let summands: Vec<Result<f64, EstimatorError>> = data
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, sample)| {
            let prepared = target.prepare(&sample.context)?;
            let m = prepared.n_items();
            let k = prepared.k();
            // E_t[r̄(A, x) | x]: exact marginalization when affordable,
            // Monte-Carlo from a per-sample derived stream otherwise.
            let inner = match ranking_count(m, k) {
                Some(count) if count <= DR_ENUMERATION_CAP => {
                    let mut acc = 0.0;
                    for ranking in enumerate_index_rankings(m, k) {
                        let action = RankedAction::from_indices(&sample.context, &ranking);
                        let p = prepared.log_prob_indices(&ranking).exp();
                        acc += p * reward_model.predict(&sample.context, &action);
                    }
                    acc
                }
                _ => {
                    let mut rng = stream.derive(i as u64).rng();
                    let mut idx = Vec::with_capacity(k);
                    let mut acc = 0.0;
                    for _ in 0..mc_samples {
                        prepared.sample_into(&mut rng, &mut idx);
                        let action = RankedAction::from_indices(&sample.context, &idx);
                        acc += reward_model.predict(&sample.context, &action);
                    }
                    acc / mc_samples as f64
                }
            };
            let residual = sample.reward - reward_model.predict(&sample.context, &sample.action);
            Ok(residual * weights[i] + inner)
        })
        .collect();
    let summands = summands.into_iter().collect::<Result<Vec<f64>, _>>()?;
    Ok(PreparedEstimate {
        name: "dr",
        terms: mean_terms(summands.into_iter()),
        n_groups: 1,
        finalize: Finalize::Mean,
        capped_fraction: 0.0,
        sum_weights: weights.iter().sum(),
    })
}

/// Doubly robust estimation: importance-weighted residuals around a reward
/// model plus the model's expected value under the target policy.
pub fn estimate_dr(
    data: &LogDataset,
    target: &dyn Policy,
    reward_model: &dyn RewardModel,
    mc_samples: usize,
    stream: RandomStream,
    bootstrap: &BootstrapConfig,
) -> Result<EstimatorReport, EstimatorError> {
    let weights = compute_weights(data, target, WeightSource::FromLog)?;
    prepare_dr(data, target, &weights, reward_model, mc_samples, stream)?.report(bootstrap)
}

// ── Capped importance sampling ──────────────────────────────────────────

pub(crate) fn prepare_cis(
    data: &LogDataset,
    weights: &[f64],
    capping: CappingRule,
) -> PreparedEstimate {
    let terms = mean_terms(
        weights
            .iter()
            .zip(&data.samples)
            .map(|(&w, s)| capping.apply(w) * s.reward),
    );
    let (capped_fraction, sum_weights) = capped_diagnostics(weights, capping);
    PreparedEstimate {
        name: "cis",
        terms,
        n_groups: 1,
        finalize: Finalize::Mean,
        capped_fraction,
        sum_weights,
    }
}

/// Capped importance sampling: `(1/n) Σ w̄_i r_i`.
pub fn estimate_cis(
    data: &LogDataset,
    target: &dyn Policy,
    capping: CappingRule,
    bootstrap: &BootstrapConfig,
) -> Result<EstimatorReport, EstimatorError> {
    let weights = compute_weights(data, target, WeightSource::FromLog)?;
    prepare_cis(data, &weights, capping).report(bootstrap)
}

// ── Normalized capped importance sampling ───────────────────────────────

pub(crate) fn prepare_ncis(
    data: &LogDataset,
    weights: &[f64],
    capping: CappingRule,
) -> PreparedEstimate {
    let terms = weights
        .iter()
        .zip(&data.samples)
        .map(|(&w, s)| {
            let capped = capping.apply(w);
            SampleTerm {
                group: 0,
                num: capped * s.reward,
                den: capped,
            }
        })
        .collect();
    let (capped_fraction, sum_weights) = capped_diagnostics(weights, capping);
    PreparedEstimate {
        name: "ncis",
        terms,
        n_groups: 1,
        finalize: Finalize::Ratio,
        capped_fraction,
        sum_weights,
    }
}

/// Normalized capped importance sampling: `Σ w̄_i r_i / Σ w̄_i`.
pub fn estimate_ncis(
    data: &LogDataset,
    target: &dyn Policy,
    capping: CappingRule,
    bootstrap: &BootstrapConfig,
) -> Result<EstimatorReport, EstimatorError> {
    let weights = compute_weights(data, target, WeightSource::FromLog)?;
    prepare_ncis(data, &weights, capping).report(bootstrap)
}

// ── Piecewise NCIS ──────────────────────────────────────────────────────

pub(crate) fn prepare_piece_ncis(
    data: &LogDataset,
    weights: &[f64],
    capping: CappingRule,
    partition: &Partition,
) -> Result<PreparedEstimate, EstimatorError> {
    // Dense group indices in first-appearance order over the dataset.
    let mut label_to_group: BTreeMap<i64, u32> = BTreeMap::new();
    let mut groups = Vec::with_capacity(data.samples.len());
    for sample in &data.samples {
        let label =
            partition
                .group_of(&sample.context)
                .ok_or_else(|| EstimatorError::PartitionGroupMissing {
                    context_id: sample.context.id.clone(),
                })?;
        let next = label_to_group.len() as u32;
        let group = *label_to_group.entry(label).or_insert(next);
        groups.push(group);
    }
    let terms = weights
        .iter()
        .zip(&data.samples)
        .zip(groups)
        .map(|((&w, s), group)| {
            let capped = capping.apply(w);
            SampleTerm {
                group,
                num: capped * s.reward,
                den: capped,
            }
        })
        .collect();
    let (capped_fraction, sum_weights) = capped_diagnostics(weights, capping);
    Ok(PreparedEstimate {
        name: "piece-ncis",
        terms,
        n_groups: label_to_group.len(),
        finalize: Finalize::Piecewise,
        capped_fraction,
        sum_weights,
    })
}

/// Piecewise NCIS: `Σ_g α̂_g · NCIS|_g` over a context partition, with
/// `α̂_g` the empirical share of group `g`.
pub fn estimate_piece_ncis(
    data: &LogDataset,
    target: &dyn Policy,
    capping: CappingRule,
    partition: &Partition,
    bootstrap: &BootstrapConfig,
) -> Result<EstimatorReport, EstimatorError> {
    let weights = compute_weights(data, target, WeightSource::FromLog)?;
    prepare_piece_ncis(data, &weights, capping, partition)?.report(bootstrap)
}

// ── Pointwise NCIS ──────────────────────────────────────────────────────

pub(crate) fn prepare_point_ncis(
    data: &LogDataset,
    target: &dyn Policy,
    logging: &dyn Policy,
    weights: &[f64],
    capping: CappingRule,
    mc: &McConfig,
    stream: RandomStream,
) -> Result<PreparedEstimate, EstimatorError> {
    if mc.n_mc < 1 {
        return Err(EstimatorError::InvalidMcSamples(mc.n_mc));
    }
    if mc.adaptive && capping.mode == CapMode::Zero {
        return Err(EstimatorError::ZeroModeAdaptive);
    }
    let summands: Vec<Result<(f64, f64), EstimatorError>> = data
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, sample)| {
            let w = weights[i];
            // Only positive rewards need the Monte-Carlo normalizer; the
            // capped weight is still accumulated for diagnostics.
            let rule = if mc.adaptive {
                super::diagnostics::shrink_capping(
                    &sample.context,
                    target,
                    logging,
                    capping,
                    mc.probe_samples,
                    stream.derive2(i as u64, 1),
                )?
            } else {
                capping
            };
            let capped = rule.apply(w);
            if sample.reward == 0.0 {
                return Ok((0.0, capped));
            }
            let target_prep = target.prepare(&sample.context)?;
            let logging_prep = logging.prepare(&sample.context)?;
            let mut rng = stream.derive2(i as u64, 0).rng();
            let mut scratch = Vec::new();
            let ip = midzuno_sen_prepared(
                target_prep.as_ref(),
                logging_prep.as_ref(),
                &sample.context.id,
                rule,
                mc.n_mc,
                mc.acceptance_budget,
                &mut rng,
                &mut scratch,
            )?;
            Ok((ip.value * capped * sample.reward, capped))
        })
        .collect();
    let mut nums = Vec::with_capacity(data.samples.len());
    let mut sum_weights = 0.0;
    for r in summands {
        let (num, capped) = r?;
        nums.push(num);
        sum_weights += capped;
    }
    let capped = weights.iter().filter(|&&w| capping.is_capped(w)).count();
    Ok(PreparedEstimate {
        name: "point-ncis",
        terms: mean_terms(nums.into_iter()),
        n_groups: 1,
        finalize: Finalize::Mean,
        capped_fraction: capped as f64 / weights.len() as f64,
        sum_weights,
    })
}

/// Pointwise NCIS: `(1/n) Σ ÎP_c(x_i) · w̄_i · r_i`, where `ÎP_c(x)` is the
/// Midzuno-Sen estimate of `1 / E_t[w̄/W | X = x]`.
///
/// Needs the logging policy itself (not just logged propensities) because
/// the normalizer weighs fresh draws from the target policy.
pub fn estimate_point_ncis(
    data: &LogDataset,
    target: &dyn Policy,
    logging: &dyn Policy,
    capping: CappingRule,
    mc: &McConfig,
    stream: RandomStream,
    bootstrap: &BootstrapConfig,
) -> Result<EstimatorReport, EstimatorError> {
    let weights = compute_weights(data, target, WeightSource::FromLog)?;
    prepare_point_ncis(data, target, logging, &weights, capping, mc, stream)?.report(bootstrap)
}
