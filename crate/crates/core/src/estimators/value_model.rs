//! Context partitions and the value model that builds them.
//!
//! PieceNCIS needs a grouping of contexts that does not depend on the tested
//! policy. Hand-crafted splits (e.g. by segment) work; the default is to fit
//! a context-value model on held-out data and bucket its predictions
//! regularly in log space.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::logmodel::LogDataset;
use crate::policy::Context;

/// Predictions are clipped below this so log-bucketing stays defined.
pub const VALUE_MODEL_CLIP: f64 = 1e-6;

/// A context-value model: expected reward given the context only.
///
/// The default fit is the per-segment mean reward; fit it on data disjoint
/// from the evaluation log (e.g. a held-out half) or the partition leaks
/// reward information into the estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueModel {
    pub log_base: f64,
    pub segment_means: BTreeMap<u32, f64>,
    /// Used for segments never seen during fitting.
    pub fallback_mean: f64,
}

impl ValueModel {
    /// Fits per-segment mean rewards, clipped below at [`VALUE_MODEL_CLIP`].
    pub fn fit_per_segment(data: &LogDataset, log_base: f64) -> Self {
        let mut sums: BTreeMap<u32, (f64, u64)> = BTreeMap::new();
        let mut total = 0.0;
        for sample in &data.samples {
            let entry = sums.entry(sample.context.segment).or_insert((0.0, 0));
            entry.0 += sample.reward;
            entry.1 += 1;
            total += sample.reward;
        }
        let segment_means = sums
            .into_iter()
            .map(|(seg, (sum, count))| (seg, (sum / count as f64).max(VALUE_MODEL_CLIP)))
            .collect();
        let fallback_mean = (total / data.samples.len() as f64).max(VALUE_MODEL_CLIP);
        Self {
            log_base,
            segment_means,
            fallback_mean,
        }
    }

    /// Predicted expected reward for a context; always positive.
    pub fn predict(&self, ctx: &Context) -> f64 {
        self.segment_means
            .get(&ctx.segment)
            .copied()
            .unwrap_or(self.fallback_mean)
    }
}

/// A policy-independent grouping of contexts.
#[derive(Clone)]
pub struct Partition {
    group_of: Arc<dyn Fn(&Context) -> Option<i64> + Send + Sync>,
}

impl std::fmt::Debug for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Partition(..)")
    }
}

impl Partition {
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&Context) -> Option<i64> + Send + Sync + 'static,
    {
        Self {
            group_of: Arc::new(f),
        }
    }

    /// Everything in one stratum; PieceNCIS collapses onto NCIS.
    pub fn single_group() -> Self {
        Self::from_fn(|_| Some(0))
    }

    /// One stratum per context segment.
    pub fn by_segment() -> Self {
        Self::from_fn(|ctx| Some(i64::from(ctx.segment)))
    }

    pub fn group_of(&self, ctx: &Context) -> Option<i64> {
        (self.group_of)(ctx)
    }
}

/// Buckets contexts by `floor(log_b(predicted value))`.
pub fn build_value_partition(model: &ValueModel) -> Partition {
    let model = model.clone();
    Partition::from_fn(move |ctx| {
        let v = model.predict(ctx).max(VALUE_MODEL_CLIP);
        Some(v.log(model.log_base).floor() as i64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(segment: u32) -> Context {
        Context {
            id: format!("s{segment}"),
            segment,
            features: vec![],
            eligible_items: vec!["a".into()],
        }
    }

    fn model_with(preds: &[(u32, f64)], base: f64) -> ValueModel {
        ValueModel {
            log_base: base,
            segment_means: preds.iter().copied().collect(),
            fallback_mean: VALUE_MODEL_CLIP,
        }
    }

    #[test]
    fn log10_buckets() {
        let model = model_with(&[(0, 0.5), (1, 5.0), (2, 50.0)], 10.0);
        let partition = build_value_partition(&model);
        assert_eq!(partition.group_of(&ctx(0)), Some(-1));
        assert_eq!(partition.group_of(&ctx(1)), Some(0));
        assert_eq!(partition.group_of(&ctx(2)), Some(1));
    }

    #[test]
    fn constant_predictor_single_group() {
        let model = model_with(&[(0, 3.0), (1, 3.0), (2, 3.0)], 10.0);
        let partition = build_value_partition(&model);
        let g = partition.group_of(&ctx(0));
        assert_eq!(partition.group_of(&ctx(1)), g);
        assert_eq!(partition.group_of(&ctx(2)), g);
    }

    #[test]
    fn base2_refines_base4() {
        // Contexts in the same base-2 bucket must share a base-4 bucket.
        let preds: Vec<f64> = (0..200).map(|i| 0.001 * 1.21f64.powi(i)).collect();
        let pairs: Vec<(i64, i64)> = preds
            .iter()
            .map(|&v| {
                let b2 = v.log(2.0).floor() as i64;
                let b4 = v.log(4.0).floor() as i64;
                (b2, b4)
            })
            .collect();
        for (i, (b2a, b4a)) in pairs.iter().enumerate() {
            for (b2b, b4b) in &pairs[i + 1..] {
                if b2a == b2b {
                    assert_eq!(b4a, b4b, "base-2 bucket split across base-4 buckets");
                }
            }
        }
    }
}
