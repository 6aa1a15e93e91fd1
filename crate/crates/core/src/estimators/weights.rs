//! Per-sample importance weights for a dataset.

use rayon::prelude::*;

use super::EstimatorError;
use crate::logmodel::LogDataset;
use crate::policy::{Policy, PolicyError};

/// Where the logging propensities come from.
#[derive(Clone, Copy)]
pub enum WeightSource<'a> {
    /// Use the log-propensities recorded at decision time.
    FromLog,
    /// Recompute them from a supplied logging policy.
    Recompute(&'a dyn Policy),
}

/// Computes `w_i = exp(ln π_t(a_i|x_i) − ln π_p(a_i|x_i))` for every sample.
///
/// Chunked in parallel; the first failing sample (by index) wins, so error
/// reporting is deterministic.
pub(crate) fn compute_weights(
    data: &LogDataset,
    target: &dyn Policy,
    source: WeightSource<'_>,
) -> Result<Vec<f64>, EstimatorError> {
    if data.samples.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    let results: Vec<Result<f64, PolicyError>> = data
        .samples
        .par_iter()
        .map(|sample| {
            let lp_target = target.prepare(&sample.context)?.log_prob(&sample.action)?;
            let lp_logging = match source {
                WeightSource::FromLog => sample.logging_logprob,
                WeightSource::Recompute(logging) => {
                    logging.prepare(&sample.context)?.log_prob(&sample.action)?
                }
            };
            if !lp_target.is_finite() || !lp_logging.is_finite() {
                return Err(PolicyError::DegeneratePolicy {
                    context_id: sample.context.id.clone(),
                });
            }
            Ok((lp_target - lp_logging).exp())
        })
        .collect();
    results
        .into_iter()
        .collect::<Result<Vec<f64>, PolicyError>>()
        .map_err(EstimatorError::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logmodel::LoggedSample;
    use crate::policy::{Context, PlackettLuce, RankedAction};

    fn tiny_dataset() -> LogDataset {
        let ctx = Context {
            id: "x0".into(),
            segment: 0,
            features: vec![],
            eligible_items: vec!["a".into(), "b".into(), "c".into()],
        };
        let pl = PlackettLuce::uniform(1);
        let lp = crate::policy::log_prob(&pl, &ctx, &RankedAction::new(vec!["b".into()])).unwrap();
        LogDataset::new(
            vec![LoggedSample {
                context: ctx,
                action: RankedAction::new(vec!["b".into()]),
                logging_logprob: lp,
                reward: 0.4,
            }],
            1,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn identical_policies_give_unit_weights() {
        let data = tiny_dataset();
        let pl = PlackettLuce::uniform(1);
        let w = compute_weights(&data, &pl, WeightSource::FromLog).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12);
        let w2 = compute_weights(&data, &pl, WeightSource::Recompute(&pl)).unwrap();
        assert!((w2[0] - 1.0).abs() < 1e-12);
    }
}
