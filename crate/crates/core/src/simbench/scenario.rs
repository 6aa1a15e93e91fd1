//! Built-in scenarios and the synthetic A/B suite generator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bench::AbTestSpec;
use super::env::{Environment, IntentLevel, RewardKind, SegmentSpec};
use crate::estimators::{CapMode, CappingRule, EstimatorKind};
use crate::montecarlo::RandomStream;
use crate::policy::{ItemId, PlackettLuce};

fn offsets_from_probs(segment: u32, items: &[&str], probs: &[f64]) -> PlackettLuce {
    let per_item: BTreeMap<ItemId, f64> = items
        .iter()
        .zip(probs)
        .map(|(item, p)| (item.to_string(), p.ln()))
        .collect();
    let mut offsets = BTreeMap::new();
    offsets.insert(segment, per_item);
    PlackettLuce::from_segment_offsets(1, offsets)
}

/// The two-segment economy that makes NCIS mis-rank the policies.
#[derive(Debug, Clone)]
pub struct Table1Scenario {
    pub env: Environment,
    pub pi_p: PlackettLuce,
    pub pi_t: PlackettLuce,
    /// The capping under which the registered segment keeps only 70% of its
    /// importance mass.
    pub capping: CappingRule,
}

/// Builds the heterogeneous-segment counter-example scenario.
///
/// Registered customers (10% of traffic) are worth 10 under the production
/// policy and 12 under the test policy; unknown customers (90%) are worth 1
/// under both. The test policy shifts mass onto deal items for registered
/// customers beyond `c` times the production propensity, so capping keeps
/// `E_t[w̄/W] = 0.7` there and `1.0` elsewhere. The expected rewards are
/// then 1.9 (production) and 2.1 (test), while the NCIS limit works out to
/// `(0.1·12·0.7 + 0.9·1) / (0.1·0.7 + 0.9) ≈ 1.794`: the global
/// renormalization borrows the cheap segment's scale and flips the decision.
pub fn table1_scenario() -> Table1Scenario {
    let registered_items = ["deal_a", "plain_a", "deal_b", "plain_b"];
    let unknown_items = ["u0", "u1", "u2", "u3"];

    // Registered rewards (16, 16, 4, 4) with the probabilities below give
    // exactly E_p[R] = 10, E_t[R] = 12 and E_t[w̄/W] = 0.7 at c = 2, with
    // reward and capping uncorrelated inside the segment (the capped share
    // is 1/2 of the target mass at both reward levels).
    let p_probs = [1.0 / 15.0, 13.0 / 30.0, 1.0 / 30.0, 7.0 / 15.0];
    let t_probs = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];

    let mut pi_p = offsets_from_probs(0, &registered_items, &p_probs);
    let mut pi_t = offsets_from_probs(0, &registered_items, &t_probs);
    let uniform: BTreeMap<ItemId, f64> = unknown_items
        .iter()
        .map(|item| (item.to_string(), 0.0))
        .collect();
    pi_p.scorer.segment_offsets.insert(1, uniform.clone());
    pi_t.scorer.segment_offsets.insert(1, uniform);

    let registered = SegmentSpec {
        proportion: 0.1,
        items: registered_items.iter().map(|s| s.to_string()).collect(),
        base_value: 1.0,
        intent_value_boost: 0.0,
        item_values: registered_items
            .iter()
            .zip([16.0, 16.0, 4.0, 4.0])
            .map(|(item, v)| (item.to_string(), v))
            .collect(),
        intent_affinity: BTreeMap::new(),
        intent_levels: vec![IntentLevel { prob: 1.0, level: 0.0 }],
    };
    let unknown = SegmentSpec {
        proportion: 0.9,
        items: unknown_items.iter().map(|s| s.to_string()).collect(),
        base_value: 1.0,
        intent_value_boost: 0.0,
        item_values: unknown_items
            .iter()
            .map(|item| (item.to_string(), 1.0))
            .collect(),
        intent_affinity: BTreeMap::new(),
        intent_levels: vec![IntentLevel { prob: 1.0, level: 0.0 }],
    };
    let env = Environment {
        r_max: 20.0,
        reward_kind: RewardKind::Deterministic,
        position_weights: vec![1.0],
        segments: vec![registered, unknown],
    };
    Table1Scenario {
        env,
        pi_p,
        pi_t,
        capping: CappingRule {
            mode: CapMode::Max,
            c: 2.0,
        },
    }
}

/// A scenario whose importance weights span several decades.
///
/// The production policy prefers the tail of the catalogue while the test
/// policy concentrates hard on the head, so the weight distribution is
/// heavy-tailed: small caps throw away most of the target mass (large bias
/// bound), caps large enough to pass the mass through admit enormous
/// summands (large variance), and no middle ground exists.
pub fn heavy_tail_scenario() -> (Environment, PlackettLuce, PlackettLuce) {
    let m = 10;
    let items: Vec<String> = (0..m).map(|j| format!("item{j}")).collect();
    let item_values: BTreeMap<ItemId, f64> = items
        .iter()
        .enumerate()
        .map(|(j, item)| (item.clone(), 0.1 + 0.14 * j as f64))
        .collect();
    let offsets = |slope: f64| -> BTreeMap<u32, BTreeMap<ItemId, f64>> {
        let per_item = items
            .iter()
            .enumerate()
            .map(|(j, item)| (item.clone(), slope * j as f64))
            .collect();
        let mut map = BTreeMap::new();
        map.insert(0, per_item);
        map
    };
    let mut pi_p = PlackettLuce::from_segment_offsets(2, offsets(-0.4));
    let mut pi_t = PlackettLuce::from_segment_offsets(2, offsets(2.0));
    pi_p.k = 2;
    pi_t.k = 2;
    let env = Environment {
        r_max: 2.0,
        reward_kind: RewardKind::Deterministic,
        position_weights: vec![1.0, 0.5],
        segments: vec![SegmentSpec {
            proportion: 1.0,
            items,
            base_value: 1.0,
            intent_value_boost: 0.0,
            item_values,
            intent_affinity: BTreeMap::new(),
            intent_levels: vec![IntentLevel { prob: 1.0, level: 0.0 }],
        }],
    };
    (env, pi_p, pi_t)
}

/// How many tests of each flavour a generated suite contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationMix {
    /// Aggressive deals targeted at high-intent users of one segment.
    pub intent_deals: usize,
    /// Aggressive deals targeted at every user of one segment.
    pub segment_deals: usize,
    /// Aggressive catalogue-wide promotions.
    pub global_deals: usize,
    /// Small catalogue-wide promotions that barely move the policy.
    pub mild_deals: usize,
    /// Catalogue-wide degradations.
    pub degradations: usize,
    /// Near-identical policies.
    pub neutral: usize,
}

impl PerturbationMix {
    pub fn total(&self) -> usize {
        self.intent_deals
            + self.segment_deals
            + self.global_deals
            + self.mild_deals
            + self.degradations
            + self.neutral
    }
}

/// Specification of a generated benchmark suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    #[serde(default = "default_n_log")]
    pub n_log: usize,
    #[serde(default = "default_n_online")]
    pub n_online: usize,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_cap")]
    pub cap: f64,
    #[serde(default = "default_cap_mode")]
    pub cap_mode: CapMode,
    #[serde(default = "default_value_log_base")]
    pub value_log_base: f64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_mix")]
    pub mix: PerturbationMix,
    /// Offset added to deal items, drawn uniformly from this range.
    #[serde(default = "default_deal_magnitude")]
    pub deal_magnitude: (f64, f64),
    #[serde(default = "default_mild_magnitude")]
    pub mild_magnitude: (f64, f64),
    #[serde(default = "default_degrade_magnitude")]
    pub degrade_magnitude: (f64, f64),
    #[serde(default = "default_neutral_jitter")]
    pub neutral_jitter: f64,
}

fn default_n_log() -> usize {
    100_000
}
fn default_n_online() -> usize {
    150_000
}
fn default_n_mc() -> usize {
    50
}
fn default_bootstrap() -> usize {
    1000
}
fn default_cap() -> f64 {
    3.0
}
fn default_cap_mode() -> CapMode {
    CapMode::Max
}
fn default_value_log_base() -> f64 {
    10.0
}
fn default_estimators() -> Vec<EstimatorKind> {
    vec![
        EstimatorKind::Cis,
        EstimatorKind::Ncis,
        EstimatorKind::PieceNcis,
        EstimatorKind::PointNcis,
    ]
}
fn default_mix() -> PerturbationMix {
    PerturbationMix {
        intent_deals: 7,
        segment_deals: 5,
        global_deals: 3,
        mild_deals: 6,
        degradations: 5,
        neutral: 4,
    }
}
fn default_deal_magnitude() -> (f64, f64) {
    (2.2, 3.2)
}
fn default_mild_magnitude() -> (f64, f64) {
    (0.06, 0.3)
}
fn default_degrade_magnitude() -> (f64, f64) {
    (0.5, 1.1)
}
fn default_neutral_jitter() -> f64 {
    0.04
}

impl Default for SuiteConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are complete")
    }
}

impl SuiteConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    }

    pub fn capping(&self) -> CappingRule {
        CappingRule {
            mode: self.cap_mode,
            c: self.cap,
        }
    }
}

/// The two-segment environment shared by all generated tests: a small
/// high-value segment and a large low-value one, each with high- and
/// low-intent sub-populations and a few deal items that resonate with
/// intent.
fn suite_environment() -> Environment {
    let seg = |prefix: &str, proportion: f64, base_value: f64| -> SegmentSpec {
        let items: Vec<String> = (0..8).map(|j| format!("{prefix}{j}")).collect();
        let item_values = items
            .iter()
            .enumerate()
            .map(|(j, item)| (item.clone(), 0.4 + 0.2 * j as f64))
            .collect();
        // items 4..8 appeal strongly to high-intent users
        let intent_affinity = items
            .iter()
            .enumerate()
            .filter(|(j, _)| *j >= 4)
            .map(|(_, item)| (item.clone(), 1.0))
            .collect();
        SegmentSpec {
            proportion,
            items,
            base_value,
            intent_value_boost: 1.2,
            item_values,
            intent_affinity,
            intent_levels: vec![
                IntentLevel { prob: 0.5, level: 0.0 },
                IntentLevel { prob: 0.5, level: 1.0 },
            ],
        }
    };
    Environment {
        r_max: 1.0,
        reward_kind: RewardKind::Bernoulli,
        position_weights: vec![1.0, 0.6, 0.3],
        segments: vec![seg("p", 0.3, 0.020), seg("c", 0.7, 0.0034)],
    }
}

/// The production policy for the suite environment: mildly aligned with
/// item quality in both segments.
fn suite_base_policy(env: &Environment) -> PlackettLuce {
    let mut offsets = BTreeMap::new();
    for (si, seg) in env.segments.iter().enumerate() {
        let per_item = seg
            .items
            .iter()
            .map(|item| (item.clone(), 0.45 * seg.item_values[item]))
            .collect();
        offsets.insert(si as u32, per_item);
    }
    let mut pl = PlackettLuce::from_segment_offsets(3, offsets);
    pl.k = 3;
    pl
}

fn uniform_in(rng: &mut crate::montecarlo::StreamRng, range: (f64, f64)) -> f64 {
    range.0 + (range.1 - range.0) * rng.open01()
}

/// Generates a seeded suite of A/B tests by perturbing the base policy.
pub fn generate_suite(cfg: &SuiteConfig, stream: RandomStream) -> Vec<AbTestSpec> {
    let env = suite_environment();
    let pi_p = suite_base_policy(&env);
    let level_dim = env.feature_len() - 1;

    #[derive(Clone, Copy)]
    enum Kind {
        IntentDeal,
        SegmentDeal,
        GlobalDeal,
        MildDeal,
        Degrade,
        Neutral,
    }
    let mut kinds = Vec::new();
    kinds.extend(std::iter::repeat(Kind::IntentDeal).take(cfg.mix.intent_deals));
    kinds.extend(std::iter::repeat(Kind::SegmentDeal).take(cfg.mix.segment_deals));
    kinds.extend(std::iter::repeat(Kind::GlobalDeal).take(cfg.mix.global_deals));
    kinds.extend(std::iter::repeat(Kind::MildDeal).take(cfg.mix.mild_deals));
    kinds.extend(std::iter::repeat(Kind::Degrade).take(cfg.mix.degradations));
    kinds.extend(std::iter::repeat(Kind::Neutral).take(cfg.mix.neutral));

    kinds
        .iter()
        .enumerate()
        .map(|(t, kind)| {
            let mut rng = stream.derive(t as u64).rng();
            let mut pi_t = pi_p.clone();
            let segment_count = env.segments.len();
            let label;
            match kind {
                Kind::IntentDeal => {
                    // Push high-affinity items to high-intent users of one
                    // segment through the intent feature.
                    let si = rng.index(segment_count);
                    let mag = uniform_in(&mut rng, cfg.deal_magnitude);
                    for item in env.segments[si].intent_affinity.keys() {
                        let weights = pi_t
                            .scorer
                            .feature_weights
                            .entry(item.clone())
                            .or_insert_with(|| vec![0.0; env.feature_len()]);
                        weights[level_dim] += mag;
                    }
                    label = format!("intent-deal-s{si}");
                }
                Kind::SegmentDeal => {
                    let si = rng.index(segment_count);
                    let mag = uniform_in(&mut rng, cfg.deal_magnitude);
                    let seg = &env.segments[si];
                    // boost the two best items of the segment
                    for item in seg.items.iter().rev().take(2) {
                        *pi_t.scorer.segment_offsets.get_mut(&(si as u32)).unwrap()
                            .get_mut(item)
                            .unwrap() += mag;
                    }
                    label = format!("segment-deal-s{si}");
                }
                Kind::GlobalDeal => {
                    let mag = uniform_in(&mut rng, cfg.deal_magnitude);
                    for (si, seg) in env.segments.iter().enumerate() {
                        for item in seg.items.iter().rev().take(2) {
                            *pi_t.scorer.segment_offsets.get_mut(&(si as u32)).unwrap()
                                .get_mut(item)
                                .unwrap() += mag;
                        }
                    }
                    label = "global-deal".to_string();
                }
                Kind::MildDeal => {
                    // Small genuine improvement with hardly any policy
                    // divergence: weights stay below the cap, online power
                    // is marginal.
                    let mag = uniform_in(&mut rng, cfg.mild_magnitude);
                    for (si, seg) in env.segments.iter().enumerate() {
                        for item in seg.items.iter().rev().take(2) {
                            *pi_t.scorer.segment_offsets.get_mut(&(si as u32)).unwrap()
                                .get_mut(item)
                                .unwrap() += mag;
                        }
                    }
                    label = "mild-deal".to_string();
                }
                Kind::Degrade => {
                    let mag = uniform_in(&mut rng, cfg.degrade_magnitude);
                    for (si, seg) in env.segments.iter().enumerate() {
                        for item in seg.items.iter().rev().take(3) {
                            *pi_t.scorer.segment_offsets.get_mut(&(si as u32)).unwrap()
                                .get_mut(item)
                                .unwrap() -= mag;
                        }
                    }
                    label = "degrade".to_string();
                }
                Kind::Neutral => {
                    let jitter = cfg.neutral_jitter;
                    for per_item in pi_t.scorer.segment_offsets.values_mut() {
                        for offset in per_item.values_mut() {
                            *offset += jitter * (2.0 * rng.open01() - 1.0);
                        }
                    }
                    label = "neutral".to_string();
                }
            }
            AbTestSpec {
                id: format!("t{t:02}-{label}"),
                env: env.clone(),
                pi_p: pi_p.clone(),
                pi_t,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::enumeration::{
        context_capped_ratio, ncis_asymptotic_value, point_ncis_asymptote, policy_value,
    };
    use crate::policy::Policy;

    #[test]
    fn table1_values_are_exact() {
        let sc = table1_scenario();
        sc.env.validate().unwrap();
        let inst = sc.env.enumerable();
        let true_t = policy_value(&inst, &sc.pi_t).unwrap();
        let true_p = policy_value(&inst, &sc.pi_p).unwrap();
        assert!((true_t - 2.1).abs() < 1e-12, "E_t[R] = {true_t}");
        assert!((true_p - 1.9).abs() < 1e-12, "E_p[R] = {true_p}");

        // per-segment capped ratios: 0.7 on registered, 1.0 on unknown
        let reg = sc.env.context_template(0, 0, "reg".into());
        let unk = sc.env.context_template(1, 0, "unk".into());
        let ratio_reg = context_capped_ratio(&reg, &sc.pi_t, &sc.pi_p, sc.capping).unwrap();
        let ratio_unk = context_capped_ratio(&unk, &sc.pi_t, &sc.pi_p, sc.capping).unwrap();
        assert!((ratio_reg - 0.7).abs() < 1e-12, "registered ratio {ratio_reg}");
        assert!((ratio_unk - 1.0).abs() < 1e-12, "unknown ratio {ratio_unk}");

        let ncis = ncis_asymptotic_value(&inst, &sc.pi_t, &sc.pi_p, sc.capping).unwrap();
        assert!(
            (ncis - 1.74 / 0.97).abs() < 1e-12,
            "NCIS limit {ncis}, want {}",
            1.74 / 0.97
        );

        // the pointwise normalization recovers the truth exactly
        let point = point_ncis_asymptote(&inst, &sc.pi_t, &sc.pi_p, sc.capping).unwrap();
        assert!((point - 2.1).abs() < 1e-12, "PointNCIS limit {point}");
    }

    #[test]
    fn heavy_tail_weights_span_decades() {
        let (env, pi_p, pi_t) = heavy_tail_scenario();
        env.validate().unwrap();
        let inst = env.enumerable();
        let ctx = &inst.contexts[0].0;
        let target = pi_t.prepare(ctx).unwrap();
        let logging = pi_p.prepare(ctx).unwrap();
        let mut max_w: f64 = 0.0;
        let mut min_w = f64::INFINITY;
        for ranking in crate::policy::enumerate_index_rankings(10, 2) {
            let w = (target.log_prob_indices(&ranking) - logging.log_prob_indices(&ranking)).exp();
            max_w = max_w.max(w);
            min_w = min_w.min(w);
        }
        assert!(max_w > 1e5, "max weight {max_w}");
        assert!(min_w < 1e-3, "min weight {min_w}");
    }

    #[test]
    fn suite_has_requested_shape() {
        let cfg = SuiteConfig::default();
        let suite = generate_suite(&cfg, RandomStream::from_seed(8));
        assert_eq!(suite.len(), cfg.mix.total());
        for spec in &suite {
            spec.env.validate().unwrap();
            assert_eq!(spec.pi_p.k, 3);
        }
        // generation is deterministic
        let again = generate_suite(&cfg, RandomStream::from_seed(8));
        assert_eq!(
            suite.iter().map(|s| &s.id).collect::<Vec<_>>(),
            again.iter().map(|s| &s.id).collect::<Vec<_>>()
        );
        assert_eq!(suite[0].pi_t, again[0].pi_t);
    }
}
