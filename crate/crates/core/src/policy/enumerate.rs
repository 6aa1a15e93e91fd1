//! Exhaustive enumeration of top-K rankings for small instances.

use itertools::Itertools;

/// Number of top-`k` rankings over `m` items, `m·(m-1)···(m-k+1)`.
/// `None` if `k > m` or the count overflows u64.
pub fn ranking_count(m: usize, k: usize) -> Option<u64> {
    if k > m {
        return None;
    }
    let mut count: u64 = 1;
    for i in 0..k {
        count = count.checked_mul((m - i) as u64)?;
    }
    Some(count)
}

/// All top-`k` rankings over item indices `0..m`, in lexicographic order of
/// the index sequences produced by the permutation generator.
pub fn enumerate_index_rankings(m: usize, k: usize) -> Vec<Vec<usize>> {
    (0..m).permutations(k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_enumeration() {
        for m in 1..=6 {
            for k in 1..=m {
                let n = enumerate_index_rankings(m, k).len() as u64;
                assert_eq!(Some(n), ranking_count(m, k), "m={m} k={k}");
            }
        }
    }

    #[test]
    fn k_larger_than_m_is_none() {
        assert_eq!(ranking_count(3, 4), None);
    }

    #[test]
    fn rankings_are_distinct_and_duplicate_free() {
        let all = enumerate_index_rankings(5, 3);
        assert_eq!(all.len(), 60);
        for r in &all {
            assert_eq!(r.len(), 3);
            assert!(r[0] != r[1] && r[1] != r[2] && r[0] != r[2]);
        }
        for (i, r) in all.iter().enumerate() {
            assert!(!all[..i].contains(r));
        }
    }
}
