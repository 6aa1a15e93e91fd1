//! Midzuno-Sen estimator of a reciprocal conditional mean.
//!
//! For a context `x`, let `v(a) = w̄(a,x)/w(a,x) ∈ [0, 1]` be the capped
//! weight ratio. PointNCIS needs `1 / E_t[v(A) | X = x]`, and a plain
//! plug-in inverse of a Monte-Carlo mean would be biased. The Midzuno-Sen
//! scheme removes the bias with a size-biased first draw:
//!
//! 1. repeatedly draw `u ~ Uniform(0,1)` and `a ~ π_t(·|x)` until `u ≤ v(a)`,
//!    keep `v₁ = v(a)`;
//! 2. draw `a₂ … a_n` i.i.d. from `π_t(·|x)`;
//! 3. return `n / (v₁ + … + v_n)`.
//!
//! The expectation of the returned value is exactly `1 / E_t[v(A)|x]`.

use thiserror::Error;

use super::stream::{RandomStream, StreamRng};
use crate::estimators::CappingRule;
use crate::policy::{Context, Policy, PolicyError, PreparedPolicy};

/// Acceptance draws allowed before the overlap is declared degenerate.
pub const DEFAULT_ACCEPTANCE_BUDGET: usize = 10_000;

#[derive(Debug, Error)]
pub enum McError {
    #[error("n_mc must be at least 1, got {0}")]
    InvalidNmc(usize),

    #[error(
        "degenerate overlap on context {context_id:?}: no acceptance within {trials} draws"
    )]
    DegenerateOverlap { context_id: String, trials: usize },

    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// An unbiased estimate of `1 / E_t[w̄/W | X = x]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseMassEstimate {
    /// Estimated reciprocal mass; positive and finite.
    pub value: f64,
    /// Number of ratio draws averaged (the `n` above).
    pub n_mc: usize,
    /// Draws spent by the size-biased acceptance loop.
    pub acceptance_trials: usize,
}

/// Runs the Midzuno-Sen procedure for one context.
pub fn midzuno_sen_inverse(
    target: &dyn Policy,
    logging: &dyn Policy,
    context: &Context,
    capping: CappingRule,
    n_mc: usize,
    stream: RandomStream,
) -> Result<InverseMassEstimate, McError> {
    let target = target.prepare(context)?;
    let logging = logging.prepare(context)?;
    let mut rng = stream.rng();
    let mut scratch = Vec::new();
    midzuno_sen_prepared(
        target.as_ref(),
        logging.as_ref(),
        &context.id,
        capping,
        n_mc,
        DEFAULT_ACCEPTANCE_BUDGET,
        &mut rng,
        &mut scratch,
    )
}

/// Hot-path variant over already-prepared policies with reusable scratch.
#[allow(clippy::too_many_arguments)]
pub(crate) fn midzuno_sen_prepared(
    target: &dyn PreparedPolicy,
    logging: &dyn PreparedPolicy,
    context_id: &str,
    capping: CappingRule,
    n_mc: usize,
    acceptance_budget: usize,
    rng: &mut StreamRng,
    scratch: &mut Vec<usize>,
) -> Result<InverseMassEstimate, McError> {
    if n_mc < 1 {
        return Err(McError::InvalidNmc(n_mc));
    }
    let ratio = |idx: &[usize]| {
        let log_w = target.log_prob_indices(idx) - logging.log_prob_indices(idx);
        capping.ratio_from_log_weight(log_w)
    };

    // Size-biased first draw: accept a ~ pi_t with probability v(a).
    let mut acceptance_trials = 0;
    let first = loop {
        if acceptance_trials >= acceptance_budget {
            return Err(McError::DegenerateOverlap {
                context_id: context_id.to_owned(),
                trials: acceptance_trials,
            });
        }
        acceptance_trials += 1;
        let u = rng.open01();
        target.sample_into(rng, scratch);
        let v = ratio(scratch);
        if u <= v {
            break v;
        }
    };

    let mut values = Vec::with_capacity(n_mc);
    values.push(first);
    for _ in 1..n_mc {
        target.sample_into(rng, scratch);
        values.push(ratio(scratch));
    }
    // Summing in sorted order makes the result independent of draw order.
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sum: f64 = values.iter().sum();

    Ok(InverseMassEstimate {
        value: n_mc as f64 / sum,
        n_mc,
        acceptance_trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::CapMode;
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
    fn capping_never_binding_returns_exactly_one() {
        let (target, logging, ctx) = two_action_pair(0.5, 0.8);
        // max weight is 0.8/0.5 = 1.6 < c, so every ratio is 1.
        let capping = CappingRule::max(10.0).unwrap();
        for seed in 0..20 {
            let est = midzuno_sen_inverse(
                &target,
                &logging,
                &ctx,
                capping,
                7,
                RandomStream::from_seed(seed),
            )
            .unwrap();
            assert_eq!(est.value, 1.0);
            assert_eq!(est.acceptance_trials, 1);
        }
    }

    #[test]
    fn two_action_mean_matches_exact_inverse() {
        // pi_t = (0.4, 0.6), max capping c = 1 gives v = (1, 2/3):
        // E[v] = 0.4 + 0.6 * 2/3 = 0.8, so the estimator mean must be 1.25.
        let (target, logging, ctx) = two_action_pair(0.6, 0.4);
        let capping = CappingRule::max(1.0).unwrap();
        let root = RandomStream::from_seed(314);
        let runs = 100_000;
        let mean: f64 = (0..runs)
            .map(|i| {
                midzuno_sen_inverse(&target, &logging, &ctx, capping, 10, root.derive(i))
                    .unwrap()
                    .value
            })
            .sum::<f64>()
            / runs as f64;
        assert!(
            (mean - 1.25).abs() / 1.25 < 0.005,
            "mean {mean}, want 1.25 within 0.5%"
        );
    }

    #[test]
    fn single_draw_is_still_unbiased() {
        // n_mc = 1 returns 1/v1 with v1 size-biased; E[1/V_sb] = 1/E[V].
        let (target, logging, ctx) = two_action_pair(0.6, 0.4);
        let capping = CappingRule::max(1.0).unwrap();
        let root = RandomStream::from_seed(2718);
        let runs = 100_000;
        let mean: f64 = (0..runs)
            .map(|i| {
                midzuno_sen_inverse(&target, &logging, &ctx, capping, 1, root.derive(i))
                    .unwrap()
                    .value
            })
            .sum::<f64>()
            / runs as f64;
        assert!(
            (mean - 1.25).abs() / 1.25 < 0.01,
            "mean {mean}, want 1.25 within 1%"
        );
    }

    #[test]
    fn zero_capping_rejects_zero_ratio_first_draw() {
        // With zero capping and c below the larger weight, v(a1) = 0: the
        // first draw can only ever accept a0.
        let (target, logging, ctx) = two_action_pair(0.6, 0.4);
        let capping = CappingRule::zero(1.0).unwrap();
        for seed in 0..50 {
            let est = midzuno_sen_inverse(
                &target,
                &logging,
                &ctx,
                capping,
                1,
                RandomStream::from_seed(seed),
            )
            .unwrap();
            // v1 = 1 always, so the estimate is exactly 1.
            assert_eq!(est.value, 1.0);
        }
    }

    #[test]
    fn degenerate_overlap_exhausts_budget() {
        // Zero capping with c below BOTH weights: every v is 0, nothing accepts.
        let (target, logging, ctx) = two_action_pair(0.6, 0.4);
        let capping = CapMode::Zero.with_c(0.5).unwrap();
        let err = midzuno_sen_inverse(
            &target,
            &logging,
            &ctx,
            capping,
            5,
            RandomStream::from_seed(1),
        )
        .unwrap_err();
        match err {
            McError::DegenerateOverlap { context_id, trials } => {
                assert_eq!(context_id, "x");
                assert_eq!(trials, DEFAULT_ACCEPTANCE_BUDGET);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn invalid_n_mc() {
        let (target, logging, ctx) = two_action_pair(0.6, 0.4);
        let capping = CappingRule::max(1.0).unwrap();
        assert!(matches!(
            midzuno_sen_inverse(&target, &logging, &ctx, capping, 0, RandomStream::from_seed(1)),
            Err(McError::InvalidNmc(0))
        ));
    }
}
