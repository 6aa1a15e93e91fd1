//! Percentile bootstrap over logged samples.
//!
//! The resampling unit is the logged sample. Resample index sequences are a
//! function of (stream, resample number) only — never of the estimator — so
//! intervals computed for different estimators on the same dataset share
//! their resampling pattern and are directly comparable.

use rayon::prelude::*;

use super::fold::Partial;
use super::EstimatorError;
use crate::montecarlo::RandomStream;

/// Bootstrap settings: how many resamples, and the stream that seeds them.
#[derive(Debug, Clone, Copy)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub stream: RandomStream,
}

impl BootstrapConfig {
    pub fn new(resamples: usize, stream: RandomStream) -> Self {
        Self { resamples, stream }
    }

    /// Disables bootstrapping; intervals collapse onto the point estimate.
    pub fn none() -> Self {
        Self {
            resamples: 0,
            stream: RandomStream::from_seed(0),
        }
    }
}

/// Per-sample terms plus the rule turning sums into an estimate.
#[derive(Clone, Copy)]
pub(crate) enum Finalize {
    Mean,
    Ratio,
    Piecewise,
}

pub(crate) struct Statistic<'a> {
    pub terms: &'a [super::fold::SampleTerm],
    pub n_groups: usize,
    pub finalize: Finalize,
    pub name: &'static str,
}

impl Statistic<'_> {
    pub fn finalize(&self, partial: &Partial) -> Result<f64, EstimatorError> {
        let value = match self.finalize {
            Finalize::Mean => partial.finalize_mean(),
            Finalize::Ratio => partial.finalize_ratio(),
            Finalize::Piecewise => partial.finalize_piecewise(),
        };
        value.ok_or(EstimatorError::ZeroDenominator {
            estimator: self.name,
        })
    }

    /// Full-data estimate through the deterministic chunked fold.
    pub fn eval_full(&self) -> Result<f64, EstimatorError> {
        let partial = super::fold::fold_terms(self.terms, self.n_groups);
        self.finalize(&partial)
    }

    /// 90% percentile interval around `estimate`.
    pub fn bootstrap_ci(&self, cfg: &BootstrapConfig, estimate: f64) -> (f64, f64) {
        percentile_interval(self.replicates(cfg, None), estimate)
    }

    /// 90% percentile interval for `estimate - mean(baseline)`, resampling
    /// both sides on the same indices.
    pub fn bootstrap_uplift_ci(
        &self,
        cfg: &BootstrapConfig,
        baseline: &[f64],
        uplift: f64,
    ) -> (f64, f64) {
        percentile_interval(self.replicates(cfg, Some(baseline)), uplift)
    }

    /// One estimate per resample. Layouts are specialized per finalize rule
    /// so the inner loop touches as little memory as possible; a resample
    /// whose denominator collapses to zero is dropped from the interval.
    fn replicates(&self, cfg: &BootstrapConfig, baseline: Option<&[f64]>) -> Vec<f64> {
        let n = self.terms.len();
        let for_each_resample = |eval: &(dyn Fn(&mut crate::montecarlo::StreamRng) -> Option<f64>
              + Sync)|
         -> Vec<f64> {
            (0..cfg.resamples)
                .into_par_iter()
                .map(|b| {
                    let mut rng = cfg.stream.derive(b as u64).rng();
                    eval(&mut rng)
                })
                .collect::<Vec<Option<f64>>>()
                .into_iter()
                .flatten()
                .collect()
        };
        match (self.finalize, baseline) {
            (Finalize::Mean, baseline) => {
                // With shared indices, mean(num) - mean(base) folds into one
                // difference array.
                let values: Vec<f64> = match baseline {
                    None => self.terms.iter().map(|t| t.num).collect(),
                    Some(base) => self
                        .terms
                        .iter()
                        .zip(base)
                        .map(|(t, b)| t.num - b)
                        .collect(),
                };
                for_each_resample(&|rng| {
                    let mut sum = 0.0;
                    for _ in 0..n {
                        sum += values[rng.index(n)];
                    }
                    Some(sum / n as f64)
                })
            }
            (Finalize::Ratio, None) => {
                let pairs: Vec<(f64, f64)> = self.terms.iter().map(|t| (t.num, t.den)).collect();
                for_each_resample(&|rng| {
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for _ in 0..n {
                        let (a, b) = pairs[rng.index(n)];
                        num += a;
                        den += b;
                    }
                    (den != 0.0).then(|| num / den)
                })
            }
            (Finalize::Ratio, Some(base)) => {
                let triples: Vec<(f64, f64, f64)> = self
                    .terms
                    .iter()
                    .zip(base)
                    .map(|(t, b)| (t.num, t.den, *b))
                    .collect();
                for_each_resample(&|rng| {
                    let mut num = 0.0;
                    let mut den = 0.0;
                    let mut base_sum = 0.0;
                    for _ in 0..n {
                        let (a, b, c) = triples[rng.index(n)];
                        num += a;
                        den += b;
                        base_sum += c;
                    }
                    (den != 0.0).then(|| num / den - base_sum / n as f64)
                })
            }
            (Finalize::Piecewise, baseline) => {
                let n_groups = self.n_groups.max(1);
                for_each_resample(&|rng| {
                    let mut counts = vec![0u64; n_groups];
                    let mut nums = vec![0.0; n_groups];
                    let mut dens = vec![0.0; n_groups];
                    let mut base_sum = 0.0;
                    for _ in 0..n {
                        let idx = rng.index(n);
                        let t = &self.terms[idx];
                        let g = t.group as usize;
                        counts[g] += 1;
                        nums[g] += t.num;
                        dens[g] += t.den;
                        if let Some(base) = baseline {
                            base_sum += base[idx];
                        }
                    }
                    let value = piecewise_plain(&counts, &nums, &dens, n as u64)?;
                    Some(match baseline {
                        Some(_) => value - base_sum / n as f64,
                        None => value,
                    })
                })
            }
        }
    }
}

/// Plain-summation version of the stratified finalizer for resamples.
fn piecewise_plain(counts: &[u64], nums: &[f64], dens: &[f64], n: u64) -> Option<f64> {
    if n == 0 {
        return None;
    }
    let num_total: f64 = nums.iter().sum();
    let den_total: f64 = dens.iter().sum();
    let global = (den_total != 0.0).then(|| num_total / den_total);
    let mut total = 0.0;
    for ((&count, &num), &den) in counts.iter().zip(nums).zip(dens) {
        if count == 0 {
            continue;
        }
        let share = count as f64 / n as f64;
        if den != 0.0 {
            total += share * (num / den);
        } else {
            total += share * global?;
        }
    }
    Some(total)
}

fn percentile_interval(mut replicates: Vec<f64>, estimate: f64) -> (f64, f64) {
    if replicates.is_empty() {
        return (estimate, estimate);
    }
    replicates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let low = quantile_sorted(&replicates, 0.05);
    let high = quantile_sorted(&replicates, 0.95);
    // The interval always contains the point estimate.
    (low.min(estimate), high.max(estimate))
}

/// Nearest-rank (inverted CDF) quantile of an ascending-sorted slice.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = (p * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

#[cfg(test)]
mod tests {
    use super::super::fold::SampleTerm;
    use super::*;

    fn mean_stat(values: &[f64]) -> Vec<SampleTerm> {
        values
            .iter()
            .map(|&v| SampleTerm {
                group: 0,
                num: v,
                den: 1.0,
            })
            .collect()
    }

    #[test]
    fn quantiles_nearest_rank() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 0.25), 1.0);
        assert_eq!(quantile_sorted(&xs, 0.26), 2.0);
        assert_eq!(quantile_sorted(&xs, 0.5), 2.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
    }

    #[test]
    fn interval_contains_estimate_and_shrinks_with_n() {
        let small = mean_stat(&(0..50).map(|i| (i % 7) as f64).collect::<Vec<_>>());
        let large = mean_stat(&(0..5000).map(|i| (i % 7) as f64).collect::<Vec<_>>());
        let cfg = BootstrapConfig::new(500, RandomStream::from_seed(5));
        for (terms, other) in [(&small, &large), (&large, &small)] {
            let stat = Statistic {
                terms,
                n_groups: 1,
                finalize: Finalize::Mean,
                name: "test",
            };
            let est = stat.eval_full().unwrap();
            let (lo, hi) = stat.bootstrap_ci(&cfg, est);
            assert!(lo <= est && est <= hi);
            let _ = other;
        }
        let stat_small = Statistic {
            terms: &small,
            n_groups: 1,
            finalize: Finalize::Mean,
            name: "s",
        };
        let stat_large = Statistic {
            terms: &large,
            n_groups: 1,
            finalize: Finalize::Mean,
            name: "l",
        };
        let e1 = stat_small.eval_full().unwrap();
        let e2 = stat_large.eval_full().unwrap();
        let w1 = {
            let (lo, hi) = stat_small.bootstrap_ci(&cfg, e1);
            hi - lo
        };
        let w2 = {
            let (lo, hi) = stat_large.bootstrap_ci(&cfg, e2);
            hi - lo
        };
        assert!(w2 < w1, "more data must tighten the interval: {w2} !< {w1}");
    }

    #[test]
    fn shared_stream_gives_identical_indices_across_statistics() {
        // Two different statistics bootstrapped with the same config must
        // see the same resamples: check via two identical Mean statistics.
        let values: Vec<f64> = (0..200).map(|i| (i as f64).sqrt()).collect();
        let t1 = mean_stat(&values);
        let t2 = mean_stat(&values);
        let cfg = BootstrapConfig::new(64, RandomStream::from_seed(9));
        let s1 = Statistic {
            terms: &t1,
            n_groups: 1,
            finalize: Finalize::Mean,
            name: "a",
        };
        let s2 = Statistic {
            terms: &t2,
            n_groups: 1,
            finalize: Finalize::Mean,
            name: "b",
        };
        assert_eq!(s1.replicates(&cfg, None), s2.replicates(&cfg, None));
    }

    #[test]
    fn zero_resamples_degenerate_interval() {
        let terms = mean_stat(&[1.0, 2.0, 3.0]);
        let stat = Statistic {
            terms: &terms,
            n_groups: 1,
            finalize: Finalize::Mean,
            name: "m",
        };
        let est = stat.eval_full().unwrap();
        assert_eq!(stat.bootstrap_ci(&BootstrapConfig::none(), est), (est, est));
    }
}
