//! Translation of observed selections into linear constraints over matrix
//! entries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::log::{ChoiceLog, Observation};
use super::LearnerConfig;
use crate::error::{Error, Result};
use crate::model::{Catalog, ChoiceSpace, ItemId, UtilityMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub row: ItemId,
    pub col: ItemId,
    pub coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Relation {
    /// `lhs > rhs`
    Greater,
    /// `|lhs - rhs| <= epsilon`
    EqualWithin { epsilon: f64 },
}

/// Where a constraint came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Choice {
        observation: usize,
        chosen: ItemId,
        over: ItemId,
    },
    Rating {
        observation: usize,
        item: ItemId,
    },
    Frequency {
        space: ChoiceSpace,
        first: ItemId,
        second: ItemId,
        support: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub terms: Vec<Term>,
    pub relation: Relation,
    pub rhs: f64,
    pub provenance: Provenance,
}

pub type ConstraintSet = Vec<LinearConstraint>;

impl LinearConstraint {
    pub fn is_strict(&self) -> bool {
        matches!(self.relation, Relation::Greater)
    }

    pub fn lhs(&self, matrix: &UtilityMatrix) -> Result<f64> {
        self.terms
            .iter()
            .map(|t| Ok(t.coef * matrix.entry(&t.row, &t.col)?))
            .sum()
    }

    /// Positive when satisfied: `lhs - rhs` for strict constraints,
    /// `epsilon - |lhs - rhs|` for equalities.
    pub fn slack(&self, matrix: &UtilityMatrix) -> Result<f64> {
        let lhs = self.lhs(matrix)?;
        Ok(match self.relation {
            Relation::Greater => lhs - self.rhs,
            Relation::EqualWithin { epsilon } => epsilon - (lhs - self.rhs).abs(),
        })
    }

    pub fn is_satisfied(&self, matrix: &UtilityMatrix) -> Result<bool> {
        let s = self.slack(matrix)?;
        Ok(match self.relation {
            Relation::Greater => s > 0.0,
            Relation::EqualWithin { .. } => s >= 0.0,
        })
    }
}

/// Terms of `U(a in space) - U(b in space)`.
fn utility_difference(catalog: &Catalog, space: &[usize], a: usize, b: usize) -> Vec<Term> {
    let row = |r: usize, sign: f64| {
        space.iter().map(move |&c| Term {
            row: catalog.item(r).clone(),
            col: catalog.item(c).clone(),
            coef: sign,
        })
    };
    row(a, 1.0).chain(row(b, -1.0)).collect()
}

/// One strict constraint per non-chosen item in the space, plus a diagonal
/// equality when the observation carries a context-free rating. Retracted
/// observations contribute nothing.
///
/// `rating_anchor` is the rating that maps to a diagonal of 1; when absent,
/// the observation's own rating anchors itself.
pub fn constraints_from_observation(
    obs: &Observation,
    observation: usize,
    catalog: &Catalog,
    rating_anchor: Option<f64>,
    config: &LearnerConfig,
) -> Result<Vec<LinearConstraint>> {
    obs.validate()?;
    let space = catalog.resolve(&obs.space)?;
    if obs.retracted {
        return Ok(Vec::new());
    }
    let chosen = catalog.index_of(&obs.chosen)?;
    let mut out: Vec<LinearConstraint> = space
        .iter()
        .filter(|&&j| j != chosen)
        .map(|&j| LinearConstraint {
            terms: utility_difference(catalog, &space, chosen, j),
            relation: Relation::Greater,
            rhs: 0.0,
            provenance: Provenance::Choice {
                observation,
                chosen: obs.chosen.clone(),
                over: catalog.item(j).clone(),
            },
        })
        .collect();
    if let Some(rating) = obs.context_free_rating {
        let anchor = rating_anchor.unwrap_or(rating);
        out.push(ingest_rating(
            obs,
            observation,
            catalog,
            anchor,
            config.eps_diag,
        )?);
    }
    Ok(out)
}

/// Pins the chosen item's diagonal near `rating / anchor_rating`.
pub fn ingest_rating(
    obs: &Observation,
    observation: usize,
    catalog: &Catalog,
    anchor_rating: f64,
    eps_diag: f64,
) -> Result<LinearConstraint> {
    let rating = obs
        .context_free_rating
        .ok_or_else(|| Error::InvalidParameter("observation has no rating".into()))?;
    if !rating.is_finite() || rating <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "rating must be positive, got {rating}"
        )));
    }
    if !anchor_rating.is_finite() || anchor_rating <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "anchor rating must be positive, got {anchor_rating}"
        )));
    }
    catalog.index_of(&obs.chosen)?;
    Ok(LinearConstraint {
        terms: vec![Term {
            row: obs.chosen.clone(),
            col: obs.chosen.clone(),
            coef: 1.0,
        }],
        relation: Relation::EqualWithin { epsilon: eps_diag },
        rhs: rating / anchor_rating,
        provenance: Provenance::Rating {
            observation,
            item: obs.chosen.clone(),
        },
    })
}

/// Near-tie equalities from repeated observations of the same space.
///
/// For every space seen at least `min_support` times (non-retracted), the
/// two most chosen items are compared; if the leader's two-way share is
/// within `near_tie_band` of one half, their contextual utilities in that
/// space are constrained to be equal within `eps_eq`.
pub fn frequency_equalities(
    log: &ChoiceLog,
    catalog: &Catalog,
    min_support: usize,
    near_tie_band: f64,
    eps_eq: f64,
) -> Result<Vec<LinearConstraint>> {
    if min_support < 2 {
        return Err(Error::InvalidParameter(format!(
            "min_support must be at least 2, got {min_support}"
        )));
    }
    let mut by_space: BTreeMap<Vec<usize>, (ChoiceSpace, BTreeMap<usize, usize>, usize)> =
        BTreeMap::new();
    for obs in log.observations().iter().filter(|o| !o.retracted) {
        let idx = catalog.resolve(&obs.space)?;
        let chosen = catalog.index_of(&obs.chosen)?;
        let entry = by_space
            .entry(idx)
            .or_insert_with(|| (obs.space.clone(), BTreeMap::new(), 0));
        *entry.1.entry(chosen).or_insert(0) += 1;
        entry.2 += 1;
    }

    let mut out = Vec::new();
    for (idx, (space, counts, support)) in by_space {
        if support < min_support || idx.len() < 2 {
            continue;
        }
        let mut ranked: Vec<(usize, usize)> = idx
            .iter()
            .map(|&i| (i, counts.get(&i).copied().unwrap_or(0)))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let (first, c1) = ranked[0];
        let (second, c2) = ranked[1];
        if c1 + c2 == 0 {
            continue;
        }
        let share = c1 as f64 / (c1 + c2) as f64;
        if (share - 0.5).abs() > near_tie_band {
            continue;
        }
        out.push(LinearConstraint {
            terms: utility_difference(catalog, &idx, first, second),
            relation: Relation::EqualWithin { epsilon: eps_eq },
            rhs: 0.0,
            provenance: Provenance::Frequency {
                space,
                first: catalog.item(first).clone(),
                second: catalog.item(second).clone(),
                support,
            },
        });
    }
    Ok(out)
}

/// Full constraint set for a log: per-observation constraints (the first
/// rating anchors the diagonal scale) plus frequency equalities, which
/// replace the strict constraints between the tied pair in their space.
pub fn constraints_from_log(
    log: &ChoiceLog,
    catalog: &Catalog,
    config: &LearnerConfig,
) -> Result<ConstraintSet> {
    let anchor = log
        .observations()
        .iter()
        .find(|o| !o.retracted && o.context_free_rating.is_some())
        .and_then(|o| o.context_free_rating);

    let mut out = Vec::new();
    for (i, obs) in log.observations().iter().enumerate() {
        out.extend(constraints_from_observation(
            obs, i, catalog, anchor, config,
        )?);
    }

    let ties = frequency_equalities(
        log,
        catalog,
        config.min_support,
        config.near_tie_band,
        config.eps_eq,
    )?;
    for tie in &ties {
        let Provenance::Frequency {
            space,
            first,
            second,
            ..
        } = &tie.provenance
        else {
            unreachable!("frequency_equalities only emits frequency provenance");
        };
        let obs = log.observations();
        out.retain(|c| match &c.provenance {
            Provenance::Choice {
                observation,
                chosen,
                over,
            } => {
                let same_pair =
                    (chosen == first && over == second) || (chosen == second && over == first);
                !(same_pair && obs[*observation].space == *space)
            }
            _ => true,
        });
    }
    out.extend(ties);
    Ok(out)
}
