//! Capping diagnostics: bias bounds, sweeps, weight quantiles, and the
//! adaptive capping shrink.

use serde::{Deserialize, Serialize};

use super::bootstrap::quantile_sorted;
use super::weights::{compute_weights, WeightSource};
use super::{CapMode, CappingRule, EstimatorError};
use crate::logmodel::LogDataset;
use crate::montecarlo::RandomStream;
use crate::policy::{Context, Policy};

/// Worst-case upper bound on the capping bias:
/// `r_max · P_t(W > c)`, with the tail probability estimated from the log
/// as `(1/n) Σ w_i·[w_i > c]`.
pub fn cis_bias_upper_bound(
    data: &LogDataset,
    target: &dyn Policy,
    capping: CappingRule,
) -> Result<f64, EstimatorError> {
    let weights = compute_weights(data, target, WeightSource::FromLog)?;
    Ok(bias_bound_from_weights(&weights, data.r_max, capping.c))
}

fn bias_bound_from_weights(weights: &[f64], r_max: f64, c: f64) -> f64 {
    let tail: f64 = weights.iter().filter(|&&w| w > c).sum();
    r_max * tail / weights.len() as f64
}

/// One row of a capping sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: f64,
    /// Plug-in variance of the CIS estimate: per-sample variance of
    /// `w̄ r` divided by n.
    pub variance: f64,
    pub bias_bound: f64,
    pub capped_fraction: f64,
}

/// Sweeps the capping parameter over a grid, reporting the variance /
/// bias-bound trade-off that decides whether any `c` is usable.
pub fn capping_sweep(
    data: &LogDataset,
    target: &dyn Policy,
    c_grid: &[f64],
    mode: CapMode,
) -> Result<Vec<SweepRow>, EstimatorError> {
    if c_grid.is_empty() {
        return Err(EstimatorError::EmptyGrid);
    }
    for &c in c_grid {
        CappingRule::new(mode, c)?;
    }
    let weights = compute_weights(data, target, WeightSource::FromLog)?;
    let n = weights.len() as f64;
    let rows = c_grid
        .iter()
        .map(|&c| {
            let rule = CappingRule { mode, c };
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut capped = 0u64;
            for (w, s) in weights.iter().zip(&data.samples) {
                let v = rule.apply(*w) * s.reward;
                sum += v;
                sum_sq += v * v;
                if rule.is_capped(*w) {
                    capped += 1;
                }
            }
            let mean = sum / n;
            let per_sample_var = (sum_sq / n - mean * mean).max(0.0);
            SweepRow {
                c,
                variance: per_sample_var / n,
                bias_bound: bias_bound_from_weights(&weights, data.r_max, c),
                capped_fraction: capped as f64 / n,
            }
        })
        .collect();
    Ok(rows)
}

/// Importance-weight quantiles under the target policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub quantiles: Vec<f64>,
    pub values: Vec<f64>,
    pub n_contexts: usize,
}

/// Default quantiles reported by [`weight_quantiles`].
pub const DEFAULT_QUANTILES: [f64; 3] = [0.1, 0.5, 0.9];

/// Samples one action per context from the target policy and reports the
/// requested quantiles of `w = π_t/π_p`. The quantile list must be sorted
/// ascending and within [0, 1].
pub fn weight_quantiles(
    logging: &dyn Policy,
    target: &dyn Policy,
    contexts: &[Context],
    quantiles: &[f64],
    stream: RandomStream,
) -> Result<QuantileTable, EstimatorError> {
    if contexts.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    for (i, &q) in quantiles.iter().enumerate() {
        if !(0.0..=1.0).contains(&q) {
            return Err(EstimatorError::InvalidQuantile(q));
        }
        if i > 0 && q < quantiles[i - 1] {
            return Err(EstimatorError::UnsortedQuantiles);
        }
    }
    let mut ws = Vec::with_capacity(contexts.len());
    let mut idx = Vec::new();
    for (i, ctx) in contexts.iter().enumerate() {
        let target_prep = target.prepare(ctx)?;
        let logging_prep = logging.prepare(ctx)?;
        let mut rng = stream.derive(i as u64).rng();
        target_prep.sample_into(&mut rng, &mut idx);
        let log_w = target_prep.log_prob_indices(&idx) - logging_prep.log_prob_indices(&idx);
        ws.push(log_w.exp());
    }
    ws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let values = quantiles.iter().map(|&q| quantile_sorted(&ws, q)).collect();
    Ok(QuantileTable {
        quantiles: quantiles.to_vec(),
        values,
        n_contexts: contexts.len(),
    })
}

/// Halvings tried before the adaptive shrink gives up.
pub const SHRINK_MAX_HALVINGS: usize = 200;

/// Finds the largest `c̃` in the geometric grid `{c, c/2, c/4, …}` whose
/// probe estimate of `c̃ / E_p[min(W, c̃) | x]` stays at or below `c`, so
/// PointNCIS effective weights cannot blow past the capping parameter.
///
/// Only max capping admits such a `c̃`; zero capping is rejected up front.
pub fn shrink_capping(
    context: &Context,
    target: &dyn Policy,
    logging: &dyn Policy,
    capping: CappingRule,
    probe_samples: usize,
    stream: RandomStream,
) -> Result<CappingRule, EstimatorError> {
    if capping.mode != CapMode::Max {
        return Err(EstimatorError::ZeroModeAdaptive);
    }
    if probe_samples < 1 {
        return Err(EstimatorError::InvalidMcSamples(probe_samples));
    }
    let target_prep = target.prepare(context)?;
    let logging_prep = logging.prepare(context)?;
    let mut rng = stream.rng();
    let mut idx = Vec::new();
    // One probe set reused across the grid keeps the bound estimate
    // monotone in c̃ and the scan cheap.
    let mut probe_weights = Vec::with_capacity(probe_samples);
    for _ in 0..probe_samples {
        logging_prep.sample_into(&mut rng, &mut idx);
        let log_w = target_prep.log_prob_indices(&idx) - logging_prep.log_prob_indices(&idx);
        probe_weights.push(log_w.exp());
    }
    let mut c_tilde = capping.c;
    for _ in 0..=SHRINK_MAX_HALVINGS {
        let mean_capped: f64 = probe_weights
            .iter()
            .map(|&w| w.min(c_tilde))
            .sum::<f64>()
            / probe_samples as f64;
        if mean_capped > 0.0 && c_tilde / mean_capped <= capping.c {
            return CappingRule::max(c_tilde);
        }
        c_tilde /= 2.0;
    }
    Err(EstimatorError::ProbeBudgetExhausted {
        context_id: context.id.clone(),
        halvings: SHRINK_MAX_HALVINGS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PlackettLuce;
    use std::collections::BTreeMap;

    fn two_action_pair(p0_logging: f64, p0_target: f64) -> (PlackettLuce, PlackettLuce, Context) {
        let build = |p0: f64| {
            let mut per_item = BTreeMap::new();
            per_item.insert("a0".to_string(), p0.ln());
            per_item.insert("a1".to_string(), (1.0 - p0).ln());
            let mut offsets = BTreeMap::new();
            offsets.insert(0, per_item);
            PlackettLuce::from_segment_offsets(1, offsets)
        };
        let ctx = Context {
            id: "x".into(),
            segment: 0,
            features: vec![],
            eligible_items: vec!["a0".into(), "a1".into()],
        };
        (build(p0_target), build(p0_logging), ctx)
    }

    #[test]
    fn shrink_keeps_c_when_policies_match() {
        let (pl, _, ctx) = two_action_pair(0.6, 0.6);
        let rule = CappingRule::max(3.0).unwrap();
        let shrunk =
            shrink_capping(&ctx, &pl, &pl, rule, 100, RandomStream::from_seed(5)).unwrap();
        assert_eq!(shrunk.c, 3.0);
    }

    #[test]
    fn shrink_two_action_bounds_effective_weight() {
        // p = 0.6: w(a0) = 2/3, w(a1) = 1.5. With c = 1.2 the first grid
        // point fails (1.2 / E_p[min(W,1.2)] = 1.2/0.88 > 1.2) and c̃ = 0.6
        // succeeds exactly (0.6 / 0.6 = 1).
        let (target, logging, ctx) = two_action_pair(0.6, 0.4);
        let rule = CappingRule::max(1.2).unwrap();
        let shrunk = shrink_capping(
            &ctx,
            &target,
            &logging,
            rule,
            4000,
            RandomStream::from_seed(17),
        )
        .unwrap();
        assert!((shrunk.c - 0.6).abs() < 1e-12, "got c̃ = {}", shrunk.c);
        // Enumerated effective weights under c̃ stay at or below c.
        let exact_mean = 0.6 * (2.0f64 / 3.0).min(0.6) + 0.4 * 1.5f64.min(0.6);
        for w in [2.0f64 / 3.0, 1.5] {
            assert!(w.min(0.6) / exact_mean <= 1.2 + 1e-12);
        }
    }

    #[test]
    fn shrink_rejects_zero_mode() {
        let (target, logging, ctx) = two_action_pair(0.6, 0.4);
        let rule = CappingRule::zero(1.2).unwrap();
        assert!(matches!(
            shrink_capping(&ctx, &target, &logging, rule, 100, RandomStream::from_seed(1)),
            Err(EstimatorError::ZeroModeAdaptive)
        ));
    }

    #[test]
    fn quantiles_validate_order_and_range() {
        let (target, logging, ctx) = two_action_pair(0.6, 0.4);
        let contexts = vec![ctx];
        assert!(matches!(
            weight_quantiles(
                &logging,
                &target,
                &contexts,
                &[0.9, 0.1],
                RandomStream::from_seed(1)
            ),
            Err(EstimatorError::UnsortedQuantiles)
        ));
        assert!(matches!(
            weight_quantiles(
                &logging,
                &target,
                &contexts,
                &[-0.1],
                RandomStream::from_seed(1)
            ),
            Err(EstimatorError::InvalidQuantile(_))
        ));
    }

    #[test]
    fn quantiles_on_identical_policies_are_exactly_one() {
        // Degenerate single-action instance: only one possible ranking.
        let pl = PlackettLuce::uniform(1);
        let ctx = Context {
            id: "only".into(),
            segment: 0,
            features: vec![],
            eligible_items: vec!["a".into()],
        };
        let contexts = vec![ctx; 40];
        let table = weight_quantiles(
            &pl,
            &pl,
            &contexts,
            &DEFAULT_QUANTILES,
            RandomStream::from_seed(2),
        )
        .unwrap();
        assert_eq!(table.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn two_action_quantiles_take_exact_weight_values() {
        // Draws from pi_t = (0.4, 0.6) yield w in {2/3, 1.5}; with
        // pi_t(a1) = 0.6 > 0.1 the 0.9-quantile must be 1.5.
        let (target, logging, ctx) = two_action_pair(0.6, 0.4);
        let contexts = vec![ctx; 500];
        let table = weight_quantiles(
            &logging,
            &target,
            &contexts,
            &DEFAULT_QUANTILES,
            RandomStream::from_seed(3),
        )
        .unwrap();
        for v in &table.values {
            assert!(
                (v - 2.0 / 3.0).abs() < 1e-12 || (v - 1.5).abs() < 1e-12,
                "unexpected quantile value {v}"
            );
        }
        assert!((table.values[2] - 1.5).abs() < 1e-12);
    }
}
