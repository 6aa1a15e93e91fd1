//! Synthetic recommendation environments with exactly known expectations.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::estimators::EnumerableInstance;
use crate::montecarlo::StreamRng;
use crate::policy::{Context, ItemId, RankedAction};

/// How rewards are drawn around their conditional mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Reward equals its conditional mean; all noise comes from contexts
    /// and actions.
    Deterministic,
    /// Reward is `r_max` with probability `mean / r_max`, else 0 — the
    /// sparse-click regime.
    Bernoulli,
}

/// A sub-population of a segment with a common intent level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntentLevel {
    pub prob: f64,
    pub level: f64,
}

/// One customer segment: its share of traffic, catalogue and value profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub proportion: f64,
    /// Eligible items for every context in this segment.
    pub items: Vec<ItemId>,
    /// Segment-level reward scale.
    pub base_value: f64,
    /// How much an intent level of 1.0 multiplies the segment value.
    pub intent_value_boost: f64,
    /// Per-item quality.
    pub item_values: BTreeMap<ItemId, f64>,
    /// Per-item extra appeal to high-intent contexts.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub intent_affinity: BTreeMap<ItemId, f64>,
    pub intent_levels: Vec<IntentLevel>,
}

/// A synthetic environment: context distribution plus reward model.
///
/// Context features are `[segment one-hot…, intent level]`, so linear
/// scorers can react to both. The expected reward of showing ranking `a` to
/// context `x` in segment `s` with intent `λ` is
///
/// ```text
/// mean(x, a) = clamp( base_value_s · (1 + λ·boost_s)
///                     · Σ_j posw_j · value_s(a_j) · (1 + λ·affinity_s(a_j)),
///                     0, r_max )
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub r_max: f64,
    pub reward_kind: RewardKind,
    /// Weight of each display position; rankings longer than this list
    /// contribute nothing beyond it.
    pub position_weights: Vec<f64>,
    pub segments: Vec<SegmentSpec>,
}

impl Environment {
    /// Checks proportions, probabilities and value ranges.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.r_max.is_finite() && self.r_max > 0.0) {
            return Err(format!("r_max must be positive, got {}", self.r_max));
        }
        if self.segments.is_empty() {
            return Err("environment needs at least one segment".into());
        }
        let total: f64 = self.segments.iter().map(|s| s.proportion).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("segment proportions sum to {total}, expected 1"));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.items.is_empty() {
                return Err(format!("segment {i} has no items"));
            }
            let p: f64 = seg.intent_levels.iter().map(|l| l.prob).sum();
            if seg.intent_levels.is_empty() || (p - 1.0).abs() > 1e-9 {
                return Err(format!("segment {i} intent probabilities sum to {p}"));
            }
        }
        Ok(())
    }

    pub fn feature_len(&self) -> usize {
        self.segments.len() + 1
    }

    /// The canonical context for (segment, intent level) — the full context
    /// support when features carry no extra noise.
    pub fn context_template(&self, segment: usize, level_idx: usize, id: String) -> Context {
        let seg = &self.segments[segment];
        let mut features = vec![0.0; self.feature_len()];
        features[segment] = 1.0;
        *features.last_mut().unwrap() = seg.intent_levels[level_idx].level;
        Context {
            id,
            segment: segment as u32,
            features,
            eligible_items: seg.items.clone(),
        }
    }

    /// Draws a context.
    pub fn sample_context(&self, rng: &mut StreamRng, id: String) -> Context {
        let u = rng.open01();
        let mut acc = 0.0;
        let mut segment = self.segments.len() - 1;
        for (i, seg) in self.segments.iter().enumerate() {
            acc += seg.proportion;
            if u <= acc {
                segment = i;
                break;
            }
        }
        let seg = &self.segments[segment];
        let u = rng.open01();
        let mut acc = 0.0;
        let mut level_idx = seg.intent_levels.len() - 1;
        for (i, level) in seg.intent_levels.iter().enumerate() {
            acc += level.prob;
            if u <= acc {
                level_idx = i;
                break;
            }
        }
        self.context_template(segment, level_idx, id)
    }

    /// Expected reward of `action` at `ctx`.
    pub fn mean_reward(&self, ctx: &Context, action: &RankedAction) -> f64 {
        let seg = &self.segments[ctx.segment as usize];
        let level = *ctx.features.last().unwrap_or(&0.0);
        let mut slate = 0.0;
        for (item, &posw) in action.items.iter().zip(&self.position_weights) {
            let value = seg.item_values.get(item).copied().unwrap_or(0.0);
            let affinity = seg.intent_affinity.get(item).copied().unwrap_or(0.0);
            slate += posw * value * (1.0 + level * affinity);
        }
        let mean = seg.base_value * (1.0 + level * seg.intent_value_boost) * slate;
        mean.clamp(0.0, self.r_max)
    }

    /// Draws a reward with the configured noise around `mean_reward`.
    pub fn draw_reward(&self, mean: f64, rng: &mut StreamRng) -> f64 {
        match self.reward_kind {
            RewardKind::Deterministic => mean,
            RewardKind::Bernoulli => {
                if rng.open01() < mean / self.r_max {
                    self.r_max
                } else {
                    0.0
                }
            }
        }
    }

    /// The finite context distribution with this environment's exact reward
    /// means, for enumeration oracles.
    pub fn enumerable(&self) -> EnumerableInstance {
        let mut contexts = Vec::new();
        for (si, seg) in self.segments.iter().enumerate() {
            for (li, level) in seg.intent_levels.iter().enumerate() {
                let ctx = self.context_template(si, li, format!("s{si}l{li}"));
                contexts.push((ctx, seg.proportion * level.prob));
            }
        }
        let env = self.clone();
        EnumerableInstance {
            contexts,
            mean_reward: Arc::new(move |ctx, action| env.mean_reward(ctx, action)),
            r_max: self.r_max,
        }
    }

    /// Loads an environment specification from a JSON file.
    pub fn from_file(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let env: Self = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        env.validate()?;
        Ok(env)
    }

    /// Writes this environment specification as pretty JSON.
    pub fn to_file(&self, path: &std::path::Path) -> Result<(), String> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| e.to_string())?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::RandomStream;

    fn toy_env() -> Environment {
        Environment {
            r_max: 1.0,
            reward_kind: RewardKind::Bernoulli,
            position_weights: vec![1.0, 0.5],
            segments: vec![
                SegmentSpec {
                    proportion: 0.25,
                    items: vec!["a".into(), "b".into(), "c".into()],
                    base_value: 0.2,
                    intent_value_boost: 1.0,
                    item_values: [("a", 1.0), ("b", 0.5), ("c", 0.1)]
                        .into_iter()
                        .map(|(k, v)| (k.to_string(), v))
                        .collect(),
                    intent_affinity: BTreeMap::new(),
                    intent_levels: vec![
                        IntentLevel { prob: 0.5, level: 0.0 },
                        IntentLevel { prob: 0.5, level: 1.0 },
                    ],
                },
                SegmentSpec {
                    proportion: 0.75,
                    items: vec!["x".into(), "y".into(), "z".into()],
                    base_value: 0.05,
                    intent_value_boost: 0.0,
                    item_values: [("x", 1.0), ("y", 1.0), ("z", 1.0)]
                        .into_iter()
                        .map(|(k, v)| (k.to_string(), v))
                        .collect(),
                    intent_affinity: BTreeMap::new(),
                    intent_levels: vec![IntentLevel { prob: 1.0, level: 0.0 }],
                },
            ],
        }
    }

    #[test]
    fn validates() {
        toy_env().validate().unwrap();
        let mut bad = toy_env();
        bad.segments[0].proportion = 0.9;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn segment_frequencies_match_proportions() {
        let env = toy_env();
        let mut rng = RandomStream::from_seed(4).rng();
        let n = 50_000;
        let seg0 = (0..n)
            .filter(|i| env.sample_context(&mut rng, format!("x{i}")).segment == 0)
            .count();
        let frac = seg0 as f64 / n as f64;
        assert!((frac - 0.25).abs() < 0.01, "segment-0 share {frac}");
    }

    #[test]
    fn mean_reward_uses_positions_and_intent() {
        let env = toy_env();
        let low = env.context_template(0, 0, "l".into());
        let high = env.context_template(0, 1, "h".into());
        let action = RankedAction::new(vec!["a".into(), "b".into()]);
        let m_low = env.mean_reward(&low, &action);
        let m_high = env.mean_reward(&high, &action);
        assert!((m_low - 0.2 * (1.0 + 0.5 * 0.5)).abs() < 1e-12);
        assert!((m_high - 2.0 * m_low).abs() < 1e-12, "boost doubles value");
    }

    #[test]
    fn bernoulli_rewards_hit_the_mean() {
        let env = toy_env();
        let mut rng = RandomStream::from_seed(9).rng();
        let mean = 0.23;
        let n = 200_000;
        let avg: f64 = (0..n).map(|_| env.draw_reward(mean, &mut rng)).sum::<f64>() / n as f64;
        assert!((avg - mean).abs() < 0.005, "empirical mean {avg}");
    }

    #[test]
    fn enumerable_covers_all_subpopulations() {
        let inst = toy_env().enumerable();
        assert_eq!(inst.contexts.len(), 3);
        let total: f64 = inst.contexts.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
