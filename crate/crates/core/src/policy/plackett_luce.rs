//! Plackett-Luce ranking policies with a linear scorer.
//!
//! A ranking is built position by position: each slot is filled by sampling
//! among the remaining items with probability proportional to
//! `exp(score/temperature)`. Equivalently (and how `sample` is implemented),
//! perturb every item's scaled score with i.i.d. Gumbel noise and keep the K
//! largest. Low temperatures concentrate on the top-scored ranking, high
//! temperatures approach uniform.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Context, ItemId, Policy, PolicyError, PreparedPolicy, RankedAction};
use crate::montecarlo::StreamRng;

/// Linear scorer: per-item feature weights plus per-(segment, item) offsets.
///
/// `score(x, item) = feature_weights[item] · x.features
///                 + segment_offsets[x.segment][item]`.
///
/// An item absent from both tables scores `default_score`; with no default,
/// scoring it is an error, which is how a policy declares its catalogue.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_score: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub feature_weights: BTreeMap<ItemId, Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub segment_offsets: BTreeMap<u32, BTreeMap<ItemId, f64>>,
}

impl LinearScorer {
    /// Scorer assigning `score` to every item.
    pub fn constant(score: f64) -> Self {
        Self {
            default_score: Some(score),
            ..Self::default()
        }
    }

    pub fn score(&self, ctx: &Context, item: &str) -> Result<f64, PolicyError> {
        let weights = self.feature_weights.get(item);
        let offset = self
            .segment_offsets
            .get(&ctx.segment)
            .and_then(|per_item| per_item.get(item));
        if weights.is_none() && offset.is_none() {
            return match self.default_score {
                Some(d) => Ok(d),
                None => Err(PolicyError::UndefinedScore {
                    context_id: ctx.id.clone(),
                    item: item.to_owned(),
                }),
            };
        }
        let mut s = 0.0;
        if let Some(w) = weights {
            if w.len() != ctx.features.len() {
                return Err(PolicyError::FeatureLengthMismatch {
                    item: item.to_owned(),
                    expected: ctx.features.len(),
                    got: w.len(),
                });
            }
            s += w.iter().zip(&ctx.features).map(|(a, b)| a * b).sum::<f64>();
        }
        if let Some(o) = offset {
            s += o;
        }
        Ok(s)
    }
}

/// Errors reading or writing a policy specification file.
#[derive(Debug, Error)]
pub enum PolicyFileError {
    #[error("cannot access policy file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed policy file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] PolicyError),
}

/// A Plackett-Luce distribution over top-K rankings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlackettLuce {
    pub k: usize,
    pub temperature: f64,
    pub scorer: LinearScorer,
}

impl PlackettLuce {
    pub fn new(scorer: LinearScorer, temperature: f64, k: usize) -> Result<Self, PolicyError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(PolicyError::InvalidTemperature(temperature));
        }
        Ok(Self {
            k,
            temperature,
            scorer,
        })
    }

    /// Uniform distribution over top-K rankings.
    pub fn uniform(k: usize) -> Self {
        Self {
            k,
            temperature: 1.0,
            scorer: LinearScorer::constant(0.0),
        }
    }

    /// Policy defined purely by per-(segment, item) offsets at temperature 1.
    pub fn from_segment_offsets(k: usize, offsets: BTreeMap<u32, BTreeMap<ItemId, f64>>) -> Self {
        Self {
            k,
            temperature: 1.0,
            scorer: LinearScorer {
                default_score: Some(0.0),
                feature_weights: BTreeMap::new(),
                segment_offsets: offsets,
            },
        }
    }

    /// Reads a policy specification from a JSON file.
    pub fn from_file(path: &Path) -> Result<Self, PolicyFileError> {
        let text = std::fs::read_to_string(path)?;
        let policy: Self = serde_json::from_str(&text)?;
        if !(policy.temperature.is_finite() && policy.temperature > 0.0) {
            return Err(PolicyError::InvalidTemperature(policy.temperature).into());
        }
        Ok(policy)
    }

    /// Writes this policy specification as pretty JSON.
    pub fn to_file(&self, path: &Path) -> Result<(), PolicyFileError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

impl Policy for PlackettLuce {
    fn k(&self) -> usize {
        self.k
    }

    fn prepare<'a>(
        &'a self,
        ctx: &'a Context,
    ) -> Result<Box<dyn PreparedPolicy + 'a>, PolicyError> {
        ctx.validate()?;
        let mut z = Vec::with_capacity(ctx.eligible_items.len());
        for item in &ctx.eligible_items {
            z.push(self.scorer.score(ctx, item)? / self.temperature);
        }
        let lse_full = log_sum_exp_skipping(&z, &[]);
        Ok(Box::new(PreparedPlackettLuce {
            ctx,
            z,
            k: self.k,
            lse_full,
            lse_without: std::sync::OnceLock::new(),
        }))
    }
}

/// `ln Σ exp(z_i)` over indices not in `skip`, max-subtracted.
fn log_sum_exp_skipping(z: &[f64], skip: &[usize]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (i, &zi) in z.iter().enumerate() {
        if !skip.contains(&i) && zi > max {
            max = zi;
        }
    }
    let mut sum = 0.0;
    for (i, &zi) in z.iter().enumerate() {
        if !skip.contains(&i) {
            sum += (zi - max).exp();
        }
    }
    max + sum.ln()
}

/// A Plackett-Luce policy resolved on one context: scaled scores only.
///
/// Monte-Carlo callers hammer `log_prob_indices`, so the normalizers for
/// the first two ranking positions are cached: the full log-sum-exp
/// eagerly, the leave-one-out table on first use.
struct PreparedPlackettLuce<'a> {
    ctx: &'a Context,
    /// `score / temperature` per eligible item, in eligible-list order.
    z: Vec<f64>,
    k: usize,
    lse_full: f64,
    lse_without: std::sync::OnceLock<Vec<f64>>,
}

impl PreparedPlackettLuce<'_> {
    fn lse_without(&self) -> &[f64] {
        self.lse_without.get_or_init(|| {
            (0..self.z.len())
                .map(|i| log_sum_exp_skipping(&self.z, &[i]))
                .collect()
        })
    }
}

/// Top-K selections up to this K run on the stack.
const STACK_K: usize = 8;

impl PreparedPolicy for PreparedPlackettLuce<'_> {
    fn k(&self) -> usize {
        self.k
    }

    fn n_items(&self) -> usize {
        self.z.len()
    }

    fn log_prob_indices(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.k);
        match idx {
            [first] => self.z[*first] - self.lse_full,
            [first, second] => {
                self.z[*first] - self.lse_full + self.z[*second] - self.lse_without()[*first]
            }
            _ => {
                let mut lp = 0.0;
                for j in 0..idx.len() {
                    lp += self.z[idx[j]] - log_sum_exp_skipping(&self.z, &idx[..j]);
                }
                lp
            }
        }
    }

    fn sample_into(&self, rng: &mut StreamRng, out: &mut Vec<usize>) {
        out.clear();
        let m = self.z.len();
        let k = self.k.min(m);
        if k <= STACK_K {
            // Insertion select of the top-k perturbed scores. Strict `>`
            // keeps earlier indices ahead on exact key ties.
            let mut key = [f64::NEG_INFINITY; STACK_K];
            let mut idx = [usize::MAX; STACK_K];
            for (i, &zi) in self.z.iter().enumerate() {
                let g = zi + rng.gumbel();
                if g > key[k - 1] {
                    let mut pos = k - 1;
                    while pos > 0 && g > key[pos - 1] {
                        key[pos] = key[pos - 1];
                        idx[pos] = idx[pos - 1];
                        pos -= 1;
                    }
                    key[pos] = g;
                    idx[pos] = i;
                }
            }
            out.extend_from_slice(&idx[..k]);
        } else {
            let mut perturbed: Vec<(f64, usize)> = self
                .z
                .iter()
                .enumerate()
                .map(|(i, &zi)| (zi + rng.gumbel(), i))
                .collect();
            perturbed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            out.extend(perturbed[..k].iter().map(|&(_, i)| i));
        }
    }

    fn log_prob(&self, action: &RankedAction) -> Result<f64, PolicyError> {
        action.validate_for(self.ctx, self.k)?;
        let idx = action.to_indices(self.ctx)?;
        Ok(self.log_prob_indices(&idx))
    }

    fn sample(&self, rng: &mut StreamRng) -> RankedAction {
        let mut idx = Vec::with_capacity(self.k);
        self.sample_into(rng, &mut idx);
        RankedAction::from_indices(self.ctx, &idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::RandomStream;
    use crate::policy::{enumerate_index_rankings, importance_weight, log_prob, sample};

    fn ctx(m: usize) -> Context {
        Context {
            id: "c0".into(),
            segment: 0,
            features: vec![1.0, -0.5],
            eligible_items: (0..m).map(|i| format!("item{i}")).collect(),
        }
    }

    /// Independent oracle: sequential-softmax probability computed in plain
    /// probability space, no log-sum-exp tricks shared with the library path.
    fn brute_force_prob(z: &[f64], ranking: &[usize]) -> f64 {
        let mut remaining: Vec<usize> = (0..z.len()).collect();
        let mut p = 1.0;
        for &pick in ranking {
            let total: f64 = remaining.iter().map(|&i| z[i].exp()).sum();
            p *= z[pick].exp() / total;
            remaining.retain(|&i| i != pick);
        }
        p
    }

    #[test]
    fn uniform_scores_m4_k2_is_one_twelfth() {
        let pl = PlackettLuce::uniform(2);
        let c = ctx(4);
        let a = RankedAction::new(vec!["item2".into(), "item0".into()]);
        let lp = log_prob(&pl, &c, &a).unwrap();
        assert!((lp - (1.0f64 / 12.0).ln()).abs() < 1e-12, "lp = {lp}");
    }

    #[test]
    fn k1_reduces_to_softmax() {
        let scores = [0.3, -1.2, 2.0, 0.0];
        let mut offsets = BTreeMap::new();
        let mut per_item = BTreeMap::new();
        for (i, s) in scores.iter().enumerate() {
            per_item.insert(format!("item{i}"), *s);
        }
        offsets.insert(0, per_item);
        let pl = PlackettLuce::from_segment_offsets(1, offsets);
        let c = ctx(4);
        let total: f64 = scores.iter().map(|s| s.exp()).sum();
        for (i, s) in scores.iter().enumerate() {
            let a = RankedAction::new(vec![format!("item{i}")]);
            let lp = log_prob(&pl, &c, &a).unwrap();
            assert!((lp - (s.exp() / total).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_enumeration_oracle_m5_k3() {
        let z = [0.7, -0.3, 1.1, 0.2, -1.5];
        let mut per_item = BTreeMap::new();
        for (i, s) in z.iter().enumerate() {
            per_item.insert(format!("item{i}"), *s);
        }
        let mut offsets = BTreeMap::new();
        offsets.insert(0, per_item);
        let pl = PlackettLuce::from_segment_offsets(3, offsets);
        let c = ctx(5);

        let all = enumerate_index_rankings(5, 3);
        assert_eq!(all.len(), 60);
        let mut total = 0.0;
        for ranking in &all {
            let oracle = brute_force_prob(&z, ranking);
            total += oracle;
            let a = RankedAction::from_indices(&c, ranking);
            let lp = log_prob(&pl, &c, &a).unwrap();
            assert!(
                (lp - oracle.ln()).abs() < 1e-10,
                "ranking {ranking:?}: {lp} vs {}",
                oracle.ln()
            );
        }
        assert!((total - 1.0).abs() < 1e-12, "oracle probs sum to {total}");
    }

    #[test]
    fn score_shift_invariance() {
        let c = ctx(4);
        let a = RankedAction::new(vec!["item1".into(), "item3".into()]);
        let build = |shift: f64| {
            let mut per_item = BTreeMap::new();
            for (i, s) in [0.4, -0.8, 1.3, 0.0].iter().enumerate() {
                per_item.insert(format!("item{i}"), s + shift);
            }
            let mut offsets = BTreeMap::new();
            offsets.insert(0, per_item);
            PlackettLuce::from_segment_offsets(2, offsets)
        };
        let lp0 = log_prob(&build(0.0), &c, &a).unwrap();
        let lp7 = log_prob(&build(7.5), &c, &a).unwrap();
        assert!((lp0 - lp7).abs() < 1e-10);
    }

    #[test]
    fn near_zero_temperature_is_deterministic_top_k() {
        let mut per_item = BTreeMap::new();
        for (i, s) in [0.1, 0.9, 0.5, 0.3].iter().enumerate() {
            per_item.insert(format!("item{i}"), *s);
        }
        let mut offsets = BTreeMap::new();
        offsets.insert(0, per_item);
        let mut pl = PlackettLuce::from_segment_offsets(2, offsets);
        pl.temperature = 1e-9;
        let c = ctx(4);
        for rep in 0..50 {
            let mut rng = RandomStream::from_seed(rep).rng();
            let a = sample(&pl, &c, &mut rng).unwrap();
            assert_eq!(a.items, vec!["item1".to_string(), "item2".to_string()]);
        }
    }

    #[test]
    fn fixed_seed_reproduces_ranking() {
        let pl = PlackettLuce::uniform(3);
        let c = ctx(6);
        let draw = || {
            let mut rng = RandomStream::from_seed(99).rng();
            sample(&pl, &c, &mut rng).unwrap()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn sample_rejects_k_larger_than_m() {
        let pl = PlackettLuce::uniform(5);
        let c = ctx(3);
        let mut rng = RandomStream::from_seed(1).rng();
        assert!(matches!(
            sample(&pl, &c, &mut rng),
            Err(PolicyError::TooFewEligible { m: 3, k: 5 })
        ));
    }

    #[test]
    fn log_prob_rejects_invalid_actions() {
        let pl = PlackettLuce::uniform(2);
        let c = ctx(4);
        let dup = RankedAction::new(vec!["item1".into(), "item1".into()]);
        assert!(matches!(
            log_prob(&pl, &c, &dup),
            Err(PolicyError::DuplicateItem(_))
        ));
        let alien = RankedAction::new(vec!["item1".into(), "mystery".into()]);
        assert!(matches!(
            log_prob(&pl, &c, &alien),
            Err(PolicyError::IneligibleItem(_))
        ));
        let short = RankedAction::new(vec!["item1".into()]);
        assert!(matches!(
            log_prob(&pl, &c, &short),
            Err(PolicyError::WrongActionLength { .. })
        ));
    }

    #[test]
    fn undefined_item_errors_without_default() {
        let scorer = LinearScorer {
            default_score: None,
            ..LinearScorer::default()
        };
        let pl = PlackettLuce::new(scorer, 1.0, 1).unwrap();
        let c = ctx(2);
        let a = RankedAction::new(vec!["item0".into()]);
        assert!(matches!(
            log_prob(&pl, &c, &a),
            Err(PolicyError::UndefinedScore { .. })
        ));
    }

    #[test]
    fn identical_policies_weight_one() {
        let pl = PlackettLuce::uniform(2);
        let c = ctx(4);
        let a = RankedAction::new(vec!["item0".into(), "item3".into()]);
        let w = importance_weight(&pl, &pl, &c, &a).unwrap();
        assert!((w.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_action_weights_match_appendix_counterexample() {
        // Two actions, pi_p(a0) = 0.6, pi_t(a0) = 0.4:
        // w(a0) = (1-p)/p = 2/3 and w(a1) = p/(1-p) = 1.5.
        let p = 0.6f64;
        let build = |p0: f64| {
            let mut per_item = BTreeMap::new();
            per_item.insert("item0".to_string(), p0.ln());
            per_item.insert("item1".to_string(), (1.0 - p0).ln());
            let mut offsets = BTreeMap::new();
            offsets.insert(0, per_item);
            PlackettLuce::from_segment_offsets(1, offsets)
        };
        let logging = build(p);
        let target = build(1.0 - p);
        let c = ctx(2);
        let w0 = importance_weight(&target, &logging, &c, &RankedAction::new(vec!["item0".into()]))
            .unwrap();
        let w1 = importance_weight(&target, &logging, &c, &RankedAction::new(vec!["item1".into()]))
            .unwrap();
        assert!((w0.value - 2.0 / 3.0).abs() < 1e-12);
        assert!((w1.value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn policy_file_round_trip() {
        let mut per_item = BTreeMap::new();
        per_item.insert("item0".to_string(), 0.25);
        let mut offsets = BTreeMap::new();
        offsets.insert(1, per_item);
        let mut fw = BTreeMap::new();
        fw.insert("item0".to_string(), vec![0.5, -1.0]);
        let pl = PlackettLuce {
            k: 2,
            temperature: 0.7,
            scorer: LinearScorer {
                default_score: Some(0.0),
                feature_weights: fw,
                segment_offsets: offsets,
            },
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        pl.to_file(&path).unwrap();
        let loaded = PlackettLuce::from_file(&path).unwrap();
        assert_eq!(pl, loaded);
    }
}
