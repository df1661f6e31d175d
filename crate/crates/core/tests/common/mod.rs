//! Brute-force reference computations, written against plain row vectors so
//! they share no code with the engine.

#![allow(dead_code)]

use choicectx::{Catalog, ChoiceSpace, ItemId, UtilityMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rows_of(m: &UtilityMatrix) -> Vec<Vec<f64>> {
    m.rows()
}

/// `a_kk + (sum of a_ki over the other members)`, straight from the definition.
pub fn utility(rows: &[Vec<f64>], k: usize, members: &[usize]) -> f64 {
    let others: f64 = members
        .iter()
        .filter(|&&i| i != k)
        .map(|&i| rows[k][i])
        .sum();
    rows[k][k] + others
}

/// First member (ascending index) with the strictly largest utility.
pub fn argmax(rows: &[Vec<f64>], members: &[usize]) -> usize {
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    let mut best = sorted[0];
    for &k in &sorted[1..] {
        if utility(rows, k, &sorted) > utility(rows, best, &sorted) {
            best = k;
        }
    }
    best
}

pub fn members_of_mask(base: &[usize], pool: &[usize], mask: u32) -> Vec<usize> {
    let mut v = base.to_vec();
    v.extend(
        pool.iter()
            .enumerate()
            .filter(|(b, _)| mask >> b & 1 == 1)
            .map(|(_, &i)| i),
    );
    v.sort_unstable();
    v
}

/// Every subset of `pool`, filtered to the qualifying ones, then to those with
/// no qualifying proper subset. Sorted by size, then index lists.
pub fn tipping_antichain(
    rows: &[Vec<f64>],
    current: usize,
    target: usize,
    base: &[usize],
    pool: &[usize],
    validate_full: bool,
) -> Vec<Vec<usize>> {
    let qualifies = |mask: u32| {
        let m = members_of_mask(base, pool, mask);
        if validate_full {
            argmax(rows, &m) == target
        } else {
            utility(rows, target, &m) > utility(rows, current, &m)
        }
    };
    let good: Vec<u32> = (0..1u32 << pool.len()).filter(|&m| qualifies(m)).collect();
    let minimal = good
        .iter()
        .filter(|&&m| !good.iter().any(|&o| o != m && o & m == o))
        .map(|&m| {
            let mut s: Vec<usize> = pool
                .iter()
                .enumerate()
                .filter(|(b, _)| m >> b & 1 == 1)
                .map(|(_, &i)| i)
                .collect();
            s.sort_unstable();
            s
        });
    let mut out: Vec<Vec<usize>> = minimal.collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

pub fn ids(catalog: &Catalog, idx: &[usize]) -> Vec<ItemId> {
    idx.iter().map(|&i| catalog.item(i).clone()).collect()
}

pub fn space(catalog: &Catalog, idx: &[usize]) -> ChoiceSpace {
    ChoiceSpace::new(ids(catalog, idx)).unwrap()
}

pub fn indices(catalog: &Catalog, items: &[ItemId]) -> Vec<usize> {
    let mut v: Vec<usize> = items.iter().map(|i| catalog.index_of(i).unwrap()).collect();
    v.sort_unstable();
    v
}

/// Random non-empty subset of `0..n` with size in `[lo, hi]`.
pub fn random_subset(rng: &mut ChaCha8Rng, n: usize, lo: usize, hi: usize) -> Vec<usize> {
    let size = rng.random_range(lo..=hi.min(n));
    let mut all: Vec<usize> = (0..n).collect();
    for i in 0..size {
        let j = rng.random_range(i..n);
        all.swap(i, j);
    }
    let mut s = all[..size].to_vec();
    s.sort_unstable();
    s
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Brute-force inconsistency oracle: for a chosen item `q` in `members`, is
/// there a `p` the earlier non-retracted history picked over `q` at share
/// >= theta with at least `min_support` joint picks?
pub fn inconsistent(
    history: &[(Vec<usize>, usize, bool)],
    members: &[usize],
    q: usize,
    theta: f64,
    min_support: usize,
) -> bool {
    members.iter().filter(|&&p| p != q).any(|&p| {
        let (mut np, mut n) = (0usize, 0usize);
        for (space, chosen, retracted) in history {
            if *retracted || !space.contains(&p) || !space.contains(&q) {
                continue;
            }
            if *chosen == p {
                np += 1;
                n += 1;
            } else if *chosen == q {
                n += 1;
            }
        }
        n >= min_support && np as f64 / n as f64 >= theta
    })
}
