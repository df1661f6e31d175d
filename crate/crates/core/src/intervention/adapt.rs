use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::detector::regret_risk;
use crate::error::{Error, Result};
use crate::learner::{ChoiceLog, MatrixEstimate};
use crate::model::{ChoiceSpace, ItemId};
use crate::reversal::DEFAULT_ENUMERATION_CAP;

pub const DEFAULT_RHO_MAX: f64 = 0.6;

fn default_rho_max() -> f64 {
    DEFAULT_RHO_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptParams {
    pub pool: Vec<ItemId>,
    pub k: usize,
    #[serde(default)]
    pub required: Vec<ItemId>,
    #[serde(default)]
    pub protect: Option<ItemId>,
    #[serde(default = "default_rho_max")]
    pub rho_max: f64,
}

/// What the detector knows: the user's history (for regret risk) and the
/// current suspect items.
#[derive(Debug, Clone, Default)]
pub struct DetectorContext<'a> {
    pub history: Option<&'a ChoiceLog>,
    pub suspects: Vec<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub regret_risk: f64,
    pub suspects_included: Vec<ItemId>,
    /// The predicted winner is the protected item (true when none is given).
    pub inconsistency_safe: bool,
    pub safe: bool,
    /// One line per violated criterion; empty for a safe plan.
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationPlan {
    pub choice_set: ChoiceSpace,
    pub predicted_winner: ItemId,
    /// Top-two utility gap of the winner; absent for a single-item set.
    pub margin: Option<f64>,
    pub safety: SafetyReport,
    pub alternatives_considered: usize,
}

struct Candidate {
    idx: Vec<usize>,
    winner: usize,
    margin: f64,
    risk: f64,
    risk_ok: bool,
    extra_suspects: usize,
    suspects: Vec<usize>,
    protect_ok: bool,
}

impl Candidate {
    fn n_violations(&self) -> usize {
        usize::from(!self.risk_ok)
            + usize::from(self.extra_suspects > 0)
            + usize::from(!self.protect_ok)
    }

    fn is_safe(&self) -> bool {
        self.n_violations() == 0
    }

    fn rank_safe(&self, other: &Self) -> Ordering {
        other
            .margin
            .total_cmp(&self.margin)
            .then(self.suspects.len().cmp(&other.suspects.len()))
            .then_with(|| self.idx.cmp(&other.idx))
    }

    fn rank_fallback(&self, other: &Self) -> Ordering {
        self.n_violations()
            .cmp(&other.n_violations())
            .then(other.protect_ok.cmp(&self.protect_ok))
            .then(self.extra_suspects.cmp(&other.extra_suspects))
            .then(self.risk.total_cmp(&other.risk))
            .then_with(|| self.rank_safe(other))
    }
}

/// Picks the size-`k` superset of `required` from `pool` that best serves the
/// protected preference: sets above the regret ceiling, sets with unrequired
/// suspects and sets whose predicted winner is not `protect` are discarded;
/// the survivor with the widest top-two margin wins. With no survivor, the
/// least-bad set is returned and its safety report lists what failed.
pub fn adapt_choice_set(
    estimate: &MatrixEstimate,
    params: &AdaptParams,
    context: &DetectorContext<'_>,
) -> Result<AdaptationPlan> {
    let matrix = &estimate.matrix;
    let catalog = matrix.catalog();
    let pool = catalog.resolve_ids(&params.pool)?;
    if pool.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("pool contains duplicates".into()));
    }
    if pool.len() > DEFAULT_ENUMERATION_CAP {
        return Err(Error::PoolTooLarge {
            size: pool.len(),
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    let mut required = catalog.resolve_ids(&params.required)?;
    required.dedup();
    if let Some(r) = required.iter().find(|r| !pool.contains(r)) {
        return Err(Error::InvalidParameter(format!(
            "required item `{}` is not in the pool",
            catalog.item(*r)
        )));
    }
    if params.k == 0 || params.k < required.len() || params.k > pool.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {} must lie in [{}, {}]",
            params.k,
            required.len().max(1),
            pool.len()
        )));
    }
    if !(params.rho_max >= 0.0 && params.rho_max <= 1.0) {
        return Err(Error::InvalidParameter("rho_max must lie in [0, 1]".into()));
    }
    let protect = params
        .protect
        .as_ref()
        .map(|p| catalog.index_of(p))
        .transpose()?;
    let suspects = catalog.resolve_ids(context.suspects.iter().filter(|s| catalog.contains(s)))?;
    let empty_log;
    let history = match context.history {
        Some(h) => h,
        None => {
            empty_log = ChoiceLog::new("");
            &empty_log
        }
    };

    let optional: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|i| !required.contains(i))
        .collect();
    let extra = params.k - required.len();
    let mut candidates = Vec::new();
    for mask in 0u32..(1u32 << optional.len()) {
        if mask.count_ones() as usize != extra {
            continue;
        }
        let mut idx = required.clone();
        idx.extend(
            optional
                .iter()
                .enumerate()
                .filter(|(b, _)| mask & (1 << b) != 0)
                .map(|(_, &i)| i),
        );
        idx.sort_unstable();

        let winner = matrix.argmax_at(&idx);
        let top = matrix.utility_at(winner, &idx);
        let margin = idx
            .iter()
            .filter(|&&i| i != winner)
            .map(|&i| top - matrix.utility_at(i, &idx))
            .min_by(f64::total_cmp)
            .unwrap_or(f64::INFINITY);
        let space = ChoiceSpace::new(idx.iter().map(|&i| catalog.item(i).clone()))?;
        let risk = regret_risk(history, &space).risk;
        let in_set: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|i| suspects.contains(i))
            .collect();
        let extra_suspects = in_set.iter().filter(|i| !required.contains(i)).count();
        candidates.push(Candidate {
            winner,
            margin,
            risk,
            risk_ok: risk <= params.rho_max,
            extra_suspects,
            suspects: in_set,
            protect_ok: protect.is_none_or(|p| p == winner),
            idx,
        });
    }

    let considered = candidates.len();
    let best = match candidates
        .iter()
        .filter(|c| c.is_safe())
        .min_by(|a, b| a.rank_safe(b))
    {
        Some(c) => c,
        None => candidates
            .iter()
            .min_by(|a, b| a.rank_fallback(b))
            .expect("at least one candidate"),
    };

    let mut violations = Vec::new();
    if !best.risk_ok {
        violations.push(format!(
            "regret risk {:.3} exceeds the ceiling {:.3}",
            best.risk, params.rho_max
        ));
    }
    if best.extra_suspects > 0 {
        violations.push(format!(
            "{} suspect item(s) beyond the required ones",
            best.extra_suspects
        ));
    }
    if let (false, Some(p)) = (best.protect_ok, protect) {
        violations.push(format!(
            "predicted winner `{}` is not the protected item `{}`",
            catalog.item(best.winner),
            catalog.item(p)
        ));
    }

    Ok(AdaptationPlan {
        choice_set: ChoiceSpace::new(best.idx.iter().map(|&i| catalog.item(i).clone()))?,
        predicted_winner: catalog.item(best.winner).clone(),
        margin: best.margin.is_finite().then_some(best.margin),
        safety: SafetyReport {
            regret_risk: best.risk,
            suspects_included: best
                .suspects
                .iter()
                .map(|&i| catalog.item(i).clone())
                .collect(),
            inconsistency_safe: best.protect_ok,
            safe: violations.is_empty(),
            violations,
        },
        alternatives_considered: considered,
    })
}
