//! Online A/B simulation, log generation and the decision rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::env::Environment;
use crate::estimators::EstimatorError;
use crate::logmodel::{LogDataset, LogError, LoggedSample};
use crate::montecarlo::RandomStream;
use crate::policy::{Policy, PolicyError, RankedAction};

/// 95th percentile of the standard normal; two-sided 90% intervals.
const Z_90: f64 = 1.6448536269514722;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("sample count must be at least 1")]
    ZeroSamples,

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error(transparent)]
    Policy(#[from] PolicyError),

    #[error(transparent)]
    Log(#[from] LogError),

    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Outcome of an A/B comparison under the CI-sign rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Positive,
    Neutral,
    Negative,
}

impl Decision {
    /// Row/column index in confusion tables.
    pub fn index(self) -> usize {
        match self {
            Decision::Positive => 0,
            Decision::Neutral => 1,
            Decision::Negative => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Decision::Positive => "positive",
            Decision::Neutral => "neutral",
            Decision::Negative => "negative",
        }
    }
}

/// Positive if the whole interval is above zero, negative if below,
/// neutral otherwise.
pub fn decide(ci_low: f64, ci_high: f64) -> Decision {
    if ci_low > 0.0 {
        Decision::Positive
    } else if ci_high < 0.0 {
        Decision::Negative
    } else {
        Decision::Neutral
    }
}

/// A simulated online A/B result: the ground-truth side of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineResult {
    pub uplift: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_prod: f64,
    pub mean_test: f64,
    pub n_per_arm: usize,
}

impl OnlineResult {
    pub fn decision(&self) -> Decision {
        decide(self.ci_low, self.ci_high)
    }
}

fn arm_mean_var(
    env: &Environment,
    policy: &dyn Policy,
    n: usize,
    stream: RandomStream,
) -> Result<(f64, f64), BenchError> {
    let rewards: Vec<Result<f64, BenchError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.derive(i as u64).rng();
            let ctx = env.sample_context(&mut rng, format!("x{i}"));
            let prepared = policy.prepare(&ctx)?;
            let action = prepared.sample(&mut rng);
            let mean = env.mean_reward(&ctx, &action);
            Ok(env.draw_reward(mean, &mut rng))
        })
        .collect();
    let rewards = rewards.into_iter().collect::<Result<Vec<f64>, _>>()?;
    let n_f = n as f64;
    let mean = rewards.iter().sum::<f64>() / n_f;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n_f;
    Ok((mean, var))
}

/// Splits simulated traffic across the two policies and measures the uplift
/// with a two-sample 90% normal interval.
pub fn simulate_online(
    env: &Environment,
    pi_p: &dyn Policy,
    pi_t: &dyn Policy,
    n_per_arm: usize,
    stream: RandomStream,
) -> Result<OnlineResult, BenchError> {
    env.validate().map_err(BenchError::InvalidEnvironment)?;
    if n_per_arm == 0 {
        return Err(BenchError::ZeroSamples);
    }
    let (mean_prod, var_prod) = arm_mean_var(env, pi_p, n_per_arm, stream.derive(0))?;
    let (mean_test, var_test) = arm_mean_var(env, pi_t, n_per_arm, stream.derive(1))?;
    let uplift = mean_test - mean_prod;
    let se = ((var_prod + var_test) / n_per_arm as f64).sqrt();
    Ok(OnlineResult {
        uplift,
        ci_low: uplift - Z_90 * se,
        ci_high: uplift + Z_90 * se,
        mean_prod,
        mean_test,
        n_per_arm,
    })
}

/// Simulates a production log: contexts from the environment, actions from
/// the logging policy, propensities recorded at decision time.
pub fn simulate_log(
    env: &Environment,
    pi_p: &dyn Policy,
    n: usize,
    stream: RandomStream,
) -> Result<LogDataset, BenchError> {
    env.validate().map_err(BenchError::InvalidEnvironment)?;
    if n == 0 {
        return Err(BenchError::ZeroSamples);
    }
    let samples: Vec<Result<LoggedSample, BenchError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.derive(i as u64).rng();
            let ctx = env.sample_context(&mut rng, format!("x{i}"));
            let (idx, logging_logprob) = {
                let prepared = pi_p.prepare(&ctx)?;
                let mut idx = Vec::with_capacity(prepared.k());
                prepared.sample_into(&mut rng, &mut idx);
                let lp = prepared.log_prob_indices(&idx);
                (idx, lp)
            };
            let action = RankedAction::from_indices(&ctx, &idx);
            let mean = env.mean_reward(&ctx, &action);
            let reward = env.draw_reward(mean, &mut rng);
            Ok(LoggedSample {
                context: ctx,
                action,
                logging_logprob,
                reward,
            })
        })
        .collect();
    let samples = samples.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(LogDataset::new(samples, pi_p.k(), env.r_max)?)
}
