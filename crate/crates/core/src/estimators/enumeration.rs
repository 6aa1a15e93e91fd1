//! Exact expectations on enumerable instances.
//!
//! An enumerable instance is a problem small enough that every
//! context × ranking pair can be summed over directly. These closed forms
//! are the oracles the sampling estimators are tested against, and
//! [`ncis_asymptotic_value`] doubles as the production formula for the NCIS
//! large-sample limit.

use std::sync::Arc;

use super::{CappingRule, EstimatorError};
use crate::policy::{enumerate_index_rankings, Context, Policy, RankedAction};

/// A finite context distribution plus an exact mean-reward function.
#[derive(Clone)]
pub struct EnumerableInstance {
    /// Contexts with their probabilities; probabilities must sum to 1.
    pub contexts: Vec<(Context, f64)>,
    /// Expected reward of an action in a context.
    pub mean_reward: Arc<dyn Fn(&Context, &RankedAction) -> f64 + Send + Sync>,
    pub r_max: f64,
}

impl std::fmt::Debug for EnumerableInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnumerableInstance")
            .field("contexts", &self.contexts.len())
            .field("r_max", &self.r_max)
            .finish()
    }
}

impl EnumerableInstance {
    /// Sums `f(x, P(x), a, π(a|x)-weights…)` over every context and ranking.
    fn sum_over<F>(&self, policy: &dyn Policy, mut f: F) -> Result<f64, EstimatorError>
    where
        F: FnMut(&Context, f64, &RankedAction, f64) -> f64,
    {
        let mut total = 0.0;
        for (ctx, p_ctx) in &self.contexts {
            let prepared = policy.prepare(ctx)?;
            for ranking in enumerate_index_rankings(prepared.n_items(), prepared.k()) {
                let action = RankedAction::from_indices(ctx, &ranking);
                let p_action = prepared.log_prob_indices(&ranking).exp();
                total += f(ctx, *p_ctx, &action, p_action);
            }
        }
        Ok(total)
    }

    fn reward(&self, ctx: &Context, action: &RankedAction) -> f64 {
        (self.mean_reward)(ctx, action)
    }
}

/// Exact policy value `E_π[R]`.
pub fn policy_value(
    instance: &EnumerableInstance,
    policy: &dyn Policy,
) -> Result<f64, EstimatorError> {
    instance.sum_over(policy, |ctx, p_ctx, action, p_action| {
        p_ctx * p_action * instance.reward(ctx, action)
    })
}

fn weight(
    target: &dyn Policy,
    logging: &dyn Policy,
    ctx: &Context,
    action: &RankedAction,
) -> Result<f64, EstimatorError> {
    let lp_t = target.prepare(ctx)?.log_prob(action)?;
    let lp_p = logging.prepare(ctx)?.log_prob(action)?;
    Ok((lp_t - lp_p).exp())
}

/// Exact CIS expectation `E_p[w̄ R] = E_t[R · w̄/W]`, computed on the
/// logging side.
pub fn cis_expected(
    instance: &EnumerableInstance,
    target: &dyn Policy,
    logging: &dyn Policy,
    capping: CappingRule,
) -> Result<f64, EstimatorError> {
    let mut total = 0.0;
    for (ctx, p_ctx) in &instance.contexts {
        let logging_prep = logging.prepare(ctx)?;
        let target_prep = target.prepare(ctx)?;
        for ranking in enumerate_index_rankings(logging_prep.n_items(), logging_prep.k()) {
            let action = RankedAction::from_indices(ctx, &ranking);
            let lp_p = logging_prep.log_prob_indices(&ranking);
            let w = (target_prep.log_prob_indices(&ranking) - lp_p).exp();
            total += p_ctx * lp_p.exp() * capping.apply(w) * instance.reward(ctx, &action);
        }
    }
    Ok(total)
}

/// Exact `E_t[w̄/W]`, computed on the target side.
pub fn expected_capped_ratio(
    instance: &EnumerableInstance,
    target: &dyn Policy,
    logging: &dyn Policy,
    capping: CappingRule,
) -> Result<f64, EstimatorError> {
    let mut total = 0.0;
    for (ctx, p_ctx) in &instance.contexts {
        total += p_ctx * context_capped_ratio(ctx, target, logging, capping)?;
    }
    Ok(total)
}

/// Exact `E_p[w̄]`, computed on the logging side; equals
/// [`expected_capped_ratio`] by the change-of-measure identity.
pub fn expected_capped_weight(
    instance: &EnumerableInstance,
    target: &dyn Policy,
    logging: &dyn Policy,
    capping: CappingRule,
) -> Result<f64, EstimatorError> {
    instance.sum_over(logging, |ctx, p_ctx, action, p_action| {
        let w = weight(target, logging, ctx, action).unwrap_or(f64::NAN);
        p_ctx * p_action * capping.apply(w)
    })
}

/// Exact `E_t[w̄/W | X = x]` for one context.
pub fn context_capped_ratio(
    ctx: &Context,
    target: &dyn Policy,
    logging: &dyn Policy,
    capping: CappingRule,
) -> Result<f64, EstimatorError> {
    let target_prep = target.prepare(ctx)?;
    let logging_prep = logging.prepare(ctx)?;
    let mut total = 0.0;
    for ranking in enumerate_index_rankings(target_prep.n_items(), target_prep.k()) {
        let lp_t = target_prep.log_prob_indices(&ranking);
        let log_w = lp_t - logging_prep.log_prob_indices(&ranking);
        total += lp_t.exp() * capping.ratio_from_log_weight(log_w);
    }
    Ok(total)
}

/// The NCIS large-sample limit `E_t[R·w̄/W] / E_t[w̄/W]`.
pub fn ncis_asymptotic_value(
    instance: &EnumerableInstance,
    target: &dyn Policy,
    logging: &dyn Policy,
    capping: CappingRule,
) -> Result<f64, EstimatorError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (ctx, p_ctx) in &instance.contexts {
        let target_prep = target.prepare(ctx)?;
        let logging_prep = logging.prepare(ctx)?;
        for ranking in enumerate_index_rankings(target_prep.n_items(), target_prep.k()) {
            let action = RankedAction::from_indices(ctx, &ranking);
            let lp_t = target_prep.log_prob_indices(&ranking);
            let log_w = lp_t - logging_prep.log_prob_indices(&ranking);
            let mass = p_ctx * lp_t.exp() * capping.ratio_from_log_weight(log_w);
            num += mass * instance.reward(ctx, &action);
            den += mass;
        }
    }
    if den == 0.0 {
        return Err(EstimatorError::ZeroDenominator { estimator: "ncis" });
    }
    Ok(num / den)
}

/// The PointNCIS large-sample limit
/// `Σ_x P(x) · E_t[R·w̄/W | x] / E_t[w̄/W | x]`.
pub fn point_ncis_asymptote(
    instance: &EnumerableInstance,
    target: &dyn Policy,
    logging: &dyn Policy,
    capping: CappingRule,
) -> Result<f64, EstimatorError> {
    let mut total = 0.0;
    for (ctx, p_ctx) in &instance.contexts {
        let target_prep = target.prepare(ctx)?;
        let logging_prep = logging.prepare(ctx)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for ranking in enumerate_index_rankings(target_prep.n_items(), target_prep.k()) {
            let action = RankedAction::from_indices(ctx, &ranking);
            let lp_t = target_prep.log_prob_indices(&ranking);
            let log_w = lp_t - logging_prep.log_prob_indices(&ranking);
            let mass = lp_t.exp() * capping.ratio_from_log_weight(log_w);
            num += mass * instance.reward(ctx, &action);
            den += mass;
        }
        if den == 0.0 {
            return Err(EstimatorError::ZeroDenominator {
                estimator: "point-ncis",
            });
        }
        total += p_ctx * num / den;
    }
    Ok(total)
}

/// Exact worst-case capping bias bound `r_max · P_t(W > c)`.
pub fn cis_bias_bound_exact(
    instance: &EnumerableInstance,
    target: &dyn Policy,
    logging: &dyn Policy,
    capping: CappingRule,
) -> Result<f64, EstimatorError> {
    let tail = instance.sum_over(target, |ctx, p_ctx, action, p_action| {
        let w = weight(target, logging, ctx, action).unwrap_or(f64::NAN);
        if w > capping.c {
            p_ctx * p_action
        } else {
            0.0
        }
    })?;
    Ok(instance.r_max * tail)
}
