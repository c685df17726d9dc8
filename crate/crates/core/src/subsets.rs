//! Colexicographic enumeration of fixed-size index subsets.
//!
//! Enumeration is colex-ordered and resumable from an arbitrary rank, so long
//! runs can be partitioned into disjoint rank ranges across workers and
//! reduced deterministically regardless of worker count.

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        match acc.checked_mul((n - i) as u128) {
            Some(v) => acc = v / (i as u128 + 1),
            None => return u128::MAX,
        }
    }
    acc
}

/// Colex rank of a strictly increasing index set: Σᵢ C(c_i, i+1).
pub fn colex_rank(subset: &[usize]) -> u128 {
    subset
        .iter()
        .enumerate()
        .map(|(i, &c)| binomial(c as u64, i as u64 + 1))
        .sum()
}

/// Inverse of [`colex_rank`]: the `rank`-th size-`k` subset of {0..m} in
/// colex order.
pub fn colex_unrank(m: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let mut subset = vec![0usize; k];
    for i in (1..=k).rev() {
        // largest c with C(c, i) <= rank
        let mut c = i - 1;
        while c + 1 < m && binomial(c as u64 + 1, i as u64) <= rank {
            c += 1;
        }
        rank -= binomial(c as u64, i as u64);
        subset[i - 1] = c;
    }
    subset
}

/// Advance `subset` to its colex successor in place. Returns false when the
/// enumeration is exhausted.
fn colex_next(subset: &mut [usize], m: usize) -> bool {
    let k = subset.len();
    for i in 0..k {
        let limit = if i + 1 < k { subset[i + 1] } else { m };
        if subset[i] + 1 < limit {
            subset[i] += 1;
            for (j, slot) in subset.iter_mut().enumerate().take(i) {
                *slot = j;
            }
            return true;
        }
    }
    false
}

/// Visit `count` size-`k` subsets of {0..m} in colex order starting from
/// `start_rank`, calling `f(rank, subset)` for each. The subset slice is
/// reused between calls.
pub fn enumerate_subsets<F>(m: usize, k: usize, start_rank: u128, count: u128, mut f: F)
where
    F: FnMut(u128, &[usize]),
{
    let total = binomial(m as u64, k as u64);
    if k == 0 {
        if start_rank == 0 && count > 0 {
            f(0, &[]);
        }
        return;
    }
    if start_rank >= total || count == 0 {
        return;
    }
    let mut subset = colex_unrank(m, k, start_rank);
    let end = total.min(start_rank + count);
    let mut rank = start_rank;
    loop {
        f(rank, &subset);
        rank += 1;
        if rank >= end || !colex_next(&mut subset, m) {
            break;
        }
    }
}
