//! Mergeable streaming aggregates.
//!
//! Every estimator in this crate reduces to folding per-sample terms
//! `(group, numerator, denominator)` into a [`Partial`] and finalizing. The
//! fold is associative up to floating-point noise (compensated summation
//! keeps the noise at the last-bit level), so a dataset may be split into
//! chunks, folded independently and merged — the basis of the parallelism
//! contract. Parallel evaluation always uses fixed-size chunks merged in
//! index order, which makes results bit-identical for any worker count.

use rayon::prelude::*;

/// Fixed chunk length for parallel folds.
pub const FOLD_CHUNK: usize = 4096;

/// Neumaier compensated sum: mergeable, order-insensitive to ~1 ulp.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.compensation += other.compensation;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// One sample's contribution to an estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleTerm {
    /// Stratum index; global estimators use group 0.
    pub group: u32,
    pub num: f64,
    pub den: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct GroupSums {
    count: u64,
    num: KahanSum,
    den: KahanSum,
}

/// A partial aggregate over any subset of the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Partial {
    n: u64,
    groups: Vec<GroupSums>,
}

impl Partial {
    pub fn new(n_groups: usize) -> Self {
        Self {
            n: 0,
            groups: vec![GroupSums::default(); n_groups.max(1)],
        }
    }

    #[inline]
    pub fn absorb(&mut self, term: &SampleTerm) {
        self.n += 1;
        let g = &mut self.groups[term.group as usize];
        g.count += 1;
        g.num.add(term.num);
        g.den.add(term.den);
    }

    pub fn merge(&mut self, other: &Partial) {
        assert_eq!(self.groups.len(), other.groups.len());
        self.n += other.n;
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            a.count += b.count;
            a.num.merge(&b.num);
            a.den.merge(&b.den);
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn group_count(&self, group: usize) -> u64 {
        self.groups[group].count
    }

    pub fn num_total(&self) -> f64 {
        let mut acc = KahanSum::default();
        for g in &self.groups {
            acc.merge(&g.num);
        }
        acc.value()
    }

    pub fn den_total(&self) -> f64 {
        let mut acc = KahanSum::default();
        for g in &self.groups {
            acc.merge(&g.den);
        }
        acc.value()
    }

    /// Mean of numerators over all absorbed samples.
    pub fn finalize_mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.num_total() / self.n as f64)
    }

    /// Self-normalized ratio `Σ num / Σ den`; `None` on a zero denominator.
    pub fn finalize_ratio(&self) -> Option<f64> {
        let den = self.den_total();
        (self.n > 0 && den != 0.0).then(|| self.num_total() / den)
    }

    /// Stratified ratio `Σ_g (count_g / n) · (num_g / den_g)`.
    ///
    /// A stratum with samples but zero denominator mass falls back to the
    /// global ratio, so no population mass is dropped; empty strata
    /// contribute nothing. `None` when the global denominator is zero too.
    pub fn finalize_piecewise(&self) -> Option<f64> {
        if self.n == 0 {
            return None;
        }
        let global = self.finalize_ratio();
        let n = self.n as f64;
        let mut total = 0.0;
        for g in &self.groups {
            if g.count == 0 {
                continue;
            }
            let share = g.count as f64 / n;
            let den = g.den.value();
            if den != 0.0 {
                total += share * (g.num.value() / den);
            } else {
                total += share * global?;
            }
        }
        Some(total)
    }
}

/// Folds terms chunk-by-chunk in parallel and merges in index order.
pub fn fold_terms(terms: &[SampleTerm], n_groups: usize) -> Partial {
    let partials: Vec<Partial> = terms
        .par_chunks(FOLD_CHUNK)
        .map(|chunk| {
            let mut p = Partial::new(n_groups);
            for t in chunk {
                p.absorb(t);
            }
            p
        })
        .collect();
    let mut acc = Partial::new(n_groups);
    for p in &partials {
        acc.merge(p);
    }
    acc
}
