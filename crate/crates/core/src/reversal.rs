//! Preference-reversal analysis.
//!
//! Given a current choice and a target item inside a base space, these
//! functions work out which external items push the target ahead, the
//! largest achievable gap, and the inclusion-minimal additions that tip the
//! choice. Under additivity the gap after adding a set `S` is the base gap
//! plus the sum of each member's delta `a[target][m] - a[current][m]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Catalog, ChoiceSpace, ItemId, UtilityMatrix};

/// Largest pool searched exhaustively by [`minimal_tipping_sets`].
pub const DEFAULT_ENUMERATION_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub current: ItemId,
    pub target: ItemId,
    pub space: ChoiceSpace,
    /// `U(target) - U(current)` in `space`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDelta {
    pub item: ItemId,
    pub delta: f64,
}

/// Antichain of minimal additions that satisfy a reversal criterion. Each
/// set is in catalog order; sets are ordered by size, then lexicographically
/// by catalog index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TippingBase {
    pub sets: Vec<Vec<ItemId>>,
}

impl TippingBase {
    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OutcomeClass {
    Unchanged,
    ReversalToPriorItem,
    NewItemChosen,
    OtherReversal,
}

struct Pair {
    current: usize,
    target: usize,
}

fn pair(matrix: &UtilityMatrix, current: &ItemId, target: &ItemId) -> Result<Pair> {
    if current == target {
        return Err(Error::SameItem(current.to_string()));
    }
    let cat = matrix.catalog();
    Ok(Pair {
        current: cat.index_of(current)?,
        target: cat.index_of(target)?,
    })
}

fn require_in(space: &ChoiceSpace, item: &ItemId) -> Result<()> {
    if space.contains(item) {
        Ok(())
    } else {
        Err(Error::ItemNotInSpace {
            item: item.to_string(),
        })
    }
}

fn delta(matrix: &UtilityMatrix, p: &Pair, m: usize) -> f64 {
    matrix.get(p.target, m) - matrix.get(p.current, m)
}

/// Resolves a pool to catalog indices, rejecting overlap with `forbidden`.
fn resolve_pool(cat: &Catalog, pool: &[ItemId], forbidden: &[&ItemId]) -> Result<Vec<usize>> {
    for item in pool {
        if forbidden.contains(&item) {
            return Err(Error::PoolOverlap(item.to_string()));
        }
    }
    cat.resolve_ids(pool)
}

fn ids(cat: &Catalog, idx: impl IntoIterator<Item = usize>) -> Vec<ItemId> {
    idx.into_iter().map(|i| cat.item(i).clone()).collect()
}

pub fn gap(
    matrix: &UtilityMatrix,
    current: &ItemId,
    target: &ItemId,
    space: &ChoiceSpace,
) -> Result<Gap> {
    let p = pair(matrix, current, target)?;
    let idx = matrix.catalog().resolve(space)?;
    require_in(space, current)?;
    require_in(space, target)?;
    Ok(Gap {
        current: current.clone(),
        target: target.clone(),
        space: space.clone(),
        value: matrix.utility_at(p.target, &idx) - matrix.utility_at(p.current, &idx),
    })
}

/// Pool items whose delta is strictly positive, by descending delta with
/// ties in catalog order.
pub fn positive_d_items(
    matrix: &UtilityMatrix,
    current: &ItemId,
    target: &ItemId,
    pool: &[ItemId],
) -> Result<Vec<ItemDelta>> {
    let p = pair(matrix, current, target)?;
    let cat = matrix.catalog();
    let pool = resolve_pool(cat, pool, &[current, target])?;
    let mut out: Vec<(usize, f64)> = pool
        .into_iter()
        .map(|m| (m, delta(matrix, &p, m)))
        .filter(|(_, d)| *d > 0.0)
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(out
        .into_iter()
        .map(|(m, d)| ItemDelta {
            item: cat.item(m).clone(),
            delta: d,
        })
        .collect())
}

/// Adds every positive-delta pool item to the base space; under additivity
/// no other addition yields a larger gap.
pub fn max_gap_augmentation(
    matrix: &UtilityMatrix,
    current: &ItemId,
    target: &ItemId,
    base_space: &ChoiceSpace,
    pool: &[ItemId],
) -> Result<(Vec<ItemId>, Gap)> {
    let positive = positive_d_items(matrix, current, target, pool)?;
    let added = matrix
        .catalog()
        .ordered(positive.into_iter().map(|d| d.item))?;
    let space = base_space.union(&added);
    let g = gap(matrix, current, target, &space)?;
    Ok((added, g))
}

/// Inclusion-minimal subsets `S` of `pool` such that adding `S` to
/// `base_space` reverses the choice toward `target`.
///
/// With `validate_full` off, `S` qualifies when the target strictly beats
/// the current item. With it on, the target must be the overall winner of
/// the augmented space (so a third item overtaking both disqualifies `S`).
pub fn minimal_tipping_sets(
    matrix: &UtilityMatrix,
    current: &ItemId,
    target: &ItemId,
    base_space: &ChoiceSpace,
    pool: &[ItemId],
    validate_full: bool,
) -> Result<TippingBase> {
    minimal_tipping_sets_capped(
        matrix,
        current,
        target,
        base_space,
        pool,
        validate_full,
        DEFAULT_ENUMERATION_CAP,
    )
}

pub fn minimal_tipping_sets_capped(
    matrix: &UtilityMatrix,
    current: &ItemId,
    target: &ItemId,
    base_space: &ChoiceSpace,
    pool: &[ItemId],
    validate_full: bool,
    cap: usize,
) -> Result<TippingBase> {
    let p = pair(matrix, current, target)?;
    let cat = matrix.catalog();
    let base = cat.resolve(base_space)?;
    require_in(base_space, target)?;
    require_in(base_space, current)?;
    let in_base: Vec<&ItemId> = base_space.iter().collect();
    let pool = resolve_pool(cat, pool, &in_base)?;
    if pool.len() > cap {
        return Err(Error::PoolTooLarge {
            size: pool.len(),
            cap,
        });
    }

    // Visit masks by popcount so every proper subset is seen before its supersets.
    let k = pool.len();
    let mut masks: Vec<u32> = (0..(1u32 << k)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));

    let mut minimal: Vec<u32> = Vec::new();
    let mut space = Vec::with_capacity(base.len() + k);
    for mask in masks {
        if minimal.iter().any(|&b| b & !mask == 0) {
            continue;
        }
        space.clear();
        space.extend_from_slice(&base);
        space.extend((0..k).filter(|i| mask >> i & 1 == 1).map(|i| pool[i]));
        space.sort_unstable();
        let qualifies = if validate_full {
            matrix.argmax_at(&space) == p.target
        } else {
            matrix.utility_at(p.target, &space) - matrix.utility_at(p.current, &space) > 0.0
        };
        if qualifies {
            minimal.push(mask);
        }
    }

    let mut sets: Vec<Vec<usize>> = minimal
        .into_iter()
        .map(|mask| {
            (0..k)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| pool[i])
                .collect()
        })
        .collect();
    sets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let sets = sets.into_iter().map(|s| ids(cat, s)).collect();
    Ok(TippingBase { sets })
}

/// Approximation for pools beyond the enumeration cap: add items by
/// descending delta until the gap turns strictly positive. Returns `None`
/// when even the full positive-delta set does not tip. The result tips but
/// is not guaranteed to be minimal.
pub fn greedy_tipping_set(
    matrix: &UtilityMatrix,
    current: &ItemId,
    target: &ItemId,
    base_space: &ChoiceSpace,
    pool: &[ItemId],
) -> Result<Option<Vec<ItemId>>> {
    let mut running = gap(matrix, current, target, base_space)?.value;
    let in_base: Vec<&ItemId> = base_space.iter().collect();
    resolve_pool(matrix.catalog(), pool, &in_base)?;
    let mut chosen = Vec::new();
    for d in positive_d_items(matrix, current, target, pool)? {
        if running > 0.0 {
            break;
        }
        running += d.delta;
        chosen.push(d.item);
    }
    if running > 0.0 {
        Ok(Some(matrix.catalog().ordered(chosen)?))
    } else {
        Ok(None)
    }
}

/// Classifies what happens to the chosen item when the space grows or
/// shrinks from `old_space` to `new_space`.
pub fn classify_outcome(
    matrix: &UtilityMatrix,
    old_space: &ChoiceSpace,
    new_space: &ChoiceSpace,
    target: Option<&ItemId>,
) -> Result<OutcomeClass> {
    if !(old_space.is_subset(new_space) || new_space.is_subset(old_space)) {
        return Err(Error::SpacesNotNested);
    }
    let old_winner = matrix.best_choice(old_space)?;
    let new_winner = matrix.best_choice(new_space)?;
    Ok(if old_winner == new_winner {
        OutcomeClass::Unchanged
    } else if !old_space.contains(&new_winner) {
        OutcomeClass::NewItemChosen
    } else {
        match target {
            Some(t) if *t != new_winner => OutcomeClass::OtherReversal,
            _ => OutcomeClass::ReversalToPriorItem,
        }
    })
}

/// JSON analysis report shared by the CLI and the service.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub gap: f64,
    pub positive_d: Vec<ItemDelta>,
    pub max_gap: MaxGap,
    pub base: TippingBase,
    pub outcome_class: OutcomeClass,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxGap {
    pub added: Vec<ItemId>,
    pub gap: f64,
}

/// Runs the whole analysis for one (current, target) question. The outcome
/// class describes moving from the base space to its max-gap augmentation.
pub fn analyze(
    matrix: &UtilityMatrix,
    current: &ItemId,
    target: &ItemId,
    base_space: &ChoiceSpace,
    pool: &[ItemId],
    validate_full: bool,
) -> Result<AnalysisReport> {
    let g = gap(matrix, current, target, base_space)?;
    let positive_d = positive_d_items(matrix, current, target, pool)?;
    let (added, max) = max_gap_augmentation(matrix, current, target, base_space, pool)?;
    let base = minimal_tipping_sets(matrix, current, target, base_space, pool, validate_full)?;
    let outcome_class = classify_outcome(matrix, base_space, &max.space, Some(target))?;
    Ok(AnalysisReport {
        gap: g.value,
        positive_d,
        max_gap: MaxGap {
            added,
            gap: max.value,
        },
        base,
        outcome_class,
    })
}
