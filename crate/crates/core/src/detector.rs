//! Heuristics for spotting undesirable preference shifts in choice logs:
//! choices that go against a prevalent pairwise preference, constellations
//! whose choices tend to be retracted, and items associated with such events
//! across many users.
//!
//! None of these is a verdict; they are thresholds over counts.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{ChoiceLog, Observation};
use crate::model::{Catalog, ChoiceSpace, ItemId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Share at which a pairwise preference counts as prevalent.
    pub theta: f64,
    /// Co-presence count needed before a pairwise preference is trusted.
    pub min_support: usize,
    pub min_users: usize,
    pub min_lift: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            theta: 0.9,
            min_support: 5,
            min_users: 3,
            min_lift: 2.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.5 && self.theta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "theta must be in (0.5, 1], got {}",
                self.theta
            )));
        }
        if self.min_users < 2 {
            return Err(Error::InvalidParameter(
                "min_users must be at least 2".into(),
            ));
        }
        if self.min_lift.is_nan() || self.min_lift <= 1.0 {
            return Err(Error::InvalidParameter("min_lift must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseStats {
    pub p: ItemId,
    pub q: ItemId,
    /// Non-retracted observations offering both where one of them was chosen.
    pub n_together: usize,
    /// How many of those chose `p`.
    pub n_p: usize,
    pub share_p: f64,
}

/// Directed pairwise win counts: `wins[(a, b)]` counts non-retracted
/// observations offering both where `a` was chosen.
#[derive(Debug, Default, Clone)]
struct DominanceIndex {
    wins: HashMap<(ItemId, ItemId), usize>,
}

impl DominanceIndex {
    fn record(&mut self, obs: &Observation) {
        if obs.retracted {
            return;
        }
        for other in obs.space.iter().filter(|o| **o != obs.chosen) {
            *self
                .wins
                .entry((obs.chosen.clone(), other.clone()))
                .or_insert(0) += 1;
        }
    }

    fn stats(&self, p: &ItemId, q: &ItemId) -> PairwiseStats {
        let get =
            |a: &ItemId, b: &ItemId| self.wins.get(&(a.clone(), b.clone())).copied().unwrap_or(0);
        let n_p = get(p, q);
        let n_together = n_p + get(q, p);
        PairwiseStats {
            p: p.clone(),
            q: q.clone(),
            n_together,
            n_p,
            share_p: if n_together == 0 {
                0.0
            } else {
                n_p as f64 / n_together as f64
            },
        }
    }
}

pub fn pairwise_stats(log: &ChoiceLog, p: &ItemId, q: &ItemId) -> Result<PairwiseStats> {
    if p == q {
        return Err(Error::SameItem(p.to_string()));
    }
    let mut index = DominanceIndex::default();
    for obs in log.observations() {
        index.record(obs);
    }
    Ok(index.stats(p, q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InconsistencyFlag {
    pub dominant: ItemId,
    pub chosen: ItemId,
    pub stats: PairwiseStats,
}

fn catalog_rank(catalog: &Catalog, id: &ItemId) -> usize {
    catalog.index_of(id).unwrap_or(usize::MAX)
}

fn check_against(
    index: &DominanceIndex,
    obs: &Observation,
    catalog: &Catalog,
    theta: f64,
    min_support: usize,
) -> Option<InconsistencyFlag> {
    obs.space
        .iter()
        .filter(|p| **p != obs.chosen)
        .map(|p| index.stats(p, &obs.chosen))
        .filter(|s| s.share_p >= theta && s.n_together >= min_support)
        .min_by(|a, b| {
            b.share_p
                .total_cmp(&a.share_p)
                .then_with(|| catalog_rank(catalog, &a.p).cmp(&catalog_rank(catalog, &b.p)))
        })
        .map(|stats| InconsistencyFlag {
            dominant: stats.p.clone(),
            chosen: obs.chosen.clone(),
            stats,
        })
}

/// Flags `obs` when some other offered item `p` has historically beaten the
/// chosen item at a share of at least `theta` over at least `min_support`
/// co-presences. The strongest such `p` is named (ties: catalog order).
pub fn flag_inconsistency(
    history: &ChoiceLog,
    obs: &Observation,
    catalog: &Catalog,
    theta: f64,
    min_support: usize,
) -> Option<InconsistencyFlag> {
    let mut index = DominanceIndex::default();
    for o in history.observations() {
        index.record(o);
    }
    check_against(&index, obs, catalog, theta, min_support)
}

/// Inconsistency flag for every observation, each judged against the
/// strictly earlier part of the log.
pub fn scan_inconsistencies(
    log: &ChoiceLog,
    catalog: &Catalog,
    theta: f64,
    min_support: usize,
) -> Vec<Option<InconsistencyFlag>> {
    let mut index = DominanceIndex::default();
    log.observations()
        .iter()
        .map(|obs| {
            let flag = check_against(&index, obs, catalog, theta, min_support);
            index.record(obs);
            flag
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstellationRecord {
    pub fingerprint: Vec<ItemId>,
    pub n_seen: usize,
    pub n_retracted: usize,
}

/// Seen/retracted counts per exact offered set, keyed by sorted ids.
pub fn constellations(log: &ChoiceLog) -> Vec<ConstellationRecord> {
    let mut map: BTreeMap<Vec<ItemId>, (usize, usize)> = BTreeMap::new();
    for obs in log.observations() {
        let e = map
            .entry(obs.space.iter().cloned().collect())
            .or_insert((0, 0));
        e.0 += 1;
        e.1 += usize::from(obs.retracted);
    }
    map.into_iter()
        .map(|(fingerprint, (n_seen, n_retracted))| ConstellationRecord {
            fingerprint,
            n_seen,
            n_retracted,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskBasis {
    /// The exact offered set has history.
    Exact,
    /// Averaged over item pairs of the set that have history.
    PairwiseBackoff,
    /// No relevant history.
    Prior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretAssessment {
    pub space: ChoiceSpace,
    pub risk: f64,
    pub basis: RiskBasis,
    /// Counts behind the estimate (summed over pairs under backoff).
    pub n_seen: usize,
    pub n_retracted: usize,
}

fn smoothed(retracted: usize, seen: usize) -> f64 {
    (retracted as f64 + 1.0) / (seen as f64 + 2.0)
}

/// Laplace-smoothed retraction rate of the exact offered set, backing off to
/// the mean pairwise rate and finally to 1/2.
pub fn regret_risk(log: &ChoiceLog, space: &ChoiceSpace) -> RegretAssessment {
    let (mut seen, mut retracted) = (0, 0);
    for obs in log.observations().iter().filter(|o| o.space == *space) {
        seen += 1;
        retracted += usize::from(obs.retracted);
    }
    if seen > 0 {
        return RegretAssessment {
            space: space.clone(),
            risk: smoothed(retracted, seen),
            basis: RiskBasis::Exact,
            n_seen: seen,
            n_retracted: retracted,
        };
    }

    let items: Vec<&ItemId> = space.iter().collect();
    let mut rates = Vec::new();
    let (mut total_seen, mut total_retracted) = (0, 0);
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let (mut s, mut r) = (0, 0);
            for obs in log.observations() {
                if obs.space.contains(items[i]) && obs.space.contains(items[j]) {
                    s += 1;
                    r += usize::from(obs.retracted);
                }
            }
            if s > 0 {
                rates.push(smoothed(r, s));
                total_seen += s;
                total_retracted += r;
            }
        }
    }
    if rates.is_empty() {
        return RegretAssessment {
            space: space.clone(),
            risk: 0.5,
            basis: RiskBasis::Prior,
            n_seen: 0,
            n_retracted: 0,
        };
    }
    RegretAssessment {
        space: space.clone(),
        risk: rates.iter().sum::<f64>() / rates.len() as f64,
        basis: RiskBasis::PairwiseBackoff,
        n_seen: total_seen,
        n_retracted: total_retracted,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspectReport {
    pub item: ItemId,
    pub n_users: usize,
    pub lift: f64,
}

/// Per observation: was it retracted or flagged as inconsistent?
pub fn flagged_events(log: &ChoiceLog, catalog: &Catalog, config: &DetectorConfig) -> Vec<bool> {
    scan_inconsistencies(log, catalog, config.theta, config.min_support)
        .into_iter()
        .zip(log.observations())
        .map(|(flag, obs)| obs.retracted || flag.is_some())
        .collect()
}

/// Items whose presence goes with flagged events across enough users and at
/// a high enough lift. `lift = rate(flagged | present) / rate(flagged | absent)`
/// with +1/+2 smoothing on both rates. Sorted by descending lift.
pub fn suspect_items(
    logs: &[ChoiceLog],
    catalog: &Catalog,
    config: &DetectorConfig,
) -> Result<Vec<SuspectReport>> {
    config.validate()?;
    if logs.len() < config.min_users {
        return Ok(Vec::new());
    }

    #[derive(Default)]
    struct Tally {
        present: usize,
        flagged_present: usize,
        users: BTreeSet<usize>,
    }
    let mut tallies: Vec<Tally> = (0..catalog.len()).map(|_| Tally::default()).collect();
    let (mut total, mut total_flagged) = (0usize, 0usize);

    for (user, log) in logs.iter().enumerate() {
        let flags = flagged_events(log, catalog, config);
        for (obs, flagged) in log.observations().iter().zip(flags) {
            total += 1;
            total_flagged += usize::from(flagged);
            for k in catalog.resolve(&obs.space)? {
                let t = &mut tallies[k];
                t.present += 1;
                if flagged {
                    t.flagged_present += 1;
                    t.users.insert(user);
                }
            }
        }
    }

    let mut out: Vec<(usize, SuspectReport)> = tallies
        .into_iter()
        .enumerate()
        .filter_map(|(k, t)| {
            let absent = total - t.present;
            let flagged_absent = total_flagged - t.flagged_present;
            let lift = smoothed(t.flagged_present, t.present) / smoothed(flagged_absent, absent);
            (t.users.len() >= config.min_users && lift >= config.min_lift).then(|| {
                (
                    k,
                    SuspectReport {
                        item: catalog.item(k).clone(),
                        n_users: t.users.len(),
                        lift,
                    },
                )
            })
        })
        .collect();
    out.sort_by(|a, b| b.1.lift.total_cmp(&a.1.lift).then(a.0.cmp(&b.0)));
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagEntry {
    #[serde(rename = "type")]
    pub kind: String,
    pub observation: usize,
    pub dominant: ItemId,
    pub chosen: ItemId,
    pub evidence: PairwiseStats,
}

/// Detector report: `{flags, regret_risk, suspects}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub flags: Vec<FlagEntry>,
    pub regret_risk: f64,
    pub regret: Option<RegretAssessment>,
    pub suspects: Vec<SuspectReport>,
}

/// Flags over the whole log, regret risk for `focus` (defaulting to the most
/// recent observation's space), and suspects over `population`.
pub fn detector_report(
    log: &ChoiceLog,
    population: &[ChoiceLog],
    catalog: &Catalog,
    config: &DetectorConfig,
    focus: Option<&ChoiceSpace>,
) -> Result<DetectorReport> {
    config.validate()?;
    let flags = scan_inconsistencies(log, catalog, config.theta, config.min_support)
        .into_iter()
        .enumerate()
        .filter_map(|(i, f)| {
            f.map(|f| FlagEntry {
                kind: "PREVALENT_INCONSISTENCY".into(),
                observation: i,
                dominant: f.dominant,
                chosen: f.chosen,
                evidence: f.stats,
            })
        })
        .collect();
    let focus = focus.or_else(|| log.observations().last().map(|o| &o.space));
    let regret = focus.map(|s| regret_risk(log, s));
    Ok(DetectorReport {
        flags,
        regret_risk: regret.as_ref().map_or(0.5, |r| r.risk),
        regret,
        suspects: suspect_items(population, catalog, config)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn obs(space: &str, chosen: &str, t: i64) -> Observation {
        Observation::new(
            ChoiceSpace::parse(space).unwrap(),
            ItemId::new(chosen).unwrap(),
            Utc.timestamp_opt(1_700_000_000 + t, 0).unwrap(),
        )
        .unwrap()
    }

    fn id(s: &str) -> ItemId {
        ItemId::new(s).unwrap()
    }

    fn log_of(entries: &[(&str, &str)]) -> ChoiceLog {
        let mut log = ChoiceLog::new("u");
        for (t, (s, c)) in entries.iter().enumerate() {
            log.push(obs(s, c, t as i64)).unwrap();
        }
        log
    }

    fn pq_history(p_wins: usize, q_wins: usize) -> ChoiceLog {
        let mut e = vec![("P,Q", "P"); p_wins];
        e.extend(vec![("P,Q", "Q"); q_wins]);
        log_of(&e)
    }

    fn cat() -> Catalog {
        Catalog::from_ids(&["P", "Q", "T"]).unwrap()
    }

    #[test]
    fn pairwise_counts() {
        let s = pairwise_stats(&pq_history(10, 0), &id("P"), &id("Q")).unwrap();
        assert_eq!((s.n_together, s.share_p), (10, 1.0));
        let s = pairwise_stats(&pq_history(6, 4), &id("P"), &id("Q")).unwrap();
        assert_eq!((s.n_together, s.share_p), (10, 0.6));
        // T chosen every time: neither P nor Q ever chosen while co-present.
        let log = log_of(&[("P,Q,T", "T"), ("P,Q,T", "T")]);
        let s = pairwise_stats(&log, &id("P"), &id("Q")).unwrap();
        assert_eq!((s.n_together, s.share_p), (0, 0.0));
        assert!(pairwise_stats(&log, &id("P"), &id("P")).is_err());
    }

    #[test]
    fn retracted_choices_do_not_count() {
        let mut log = pq_history(3, 0);
        log.push(obs("P,Q", "Q", 10).retracted()).unwrap();
        let s = pairwise_stats(&log, &id("P"), &id("Q")).unwrap();
        assert_eq!((s.n_together, s.n_p), (3, 3));
    }

    #[test]
    fn flags_reversal_of_dominant_preference() {
        let history = pq_history(10, 0);
        let f = flag_inconsistency(&history, &obs("P,Q,T", "Q", 20), &cat(), 0.9, 5).unwrap();
        assert_eq!((f.dominant.as_str(), f.chosen.as_str()), ("P", "Q"));
        assert_eq!(f.stats.n_p, 10);
    }

    #[test]
    fn no_flag_below_threshold_or_support() {
        let o = obs("P,Q,T", "Q", 20);
        assert!(flag_inconsistency(&pq_history(6, 4), &o, &cat(), 0.9, 5).is_none());
        assert!(flag_inconsistency(&pq_history(2, 0), &o, &cat(), 0.9, 5).is_none());
    }

    #[test]
    fn strongest_dominant_is_named() {
        let cat = Catalog::from_ids(&["A", "B", "C"]).unwrap();
        let mut e = vec![("A,C", "A"); 9];
        e.push(("A,C", "C"));
        e.extend(vec![("B,C", "B"); 10]);
        let f = flag_inconsistency(&log_of(&e), &obs("A,B,C", "C", 99), &cat, 0.9, 5).unwrap();
        assert_eq!(f.dominant.as_str(), "B");
        let mut e = vec![("A,C", "A"); 10];
        e.extend(vec![("B,C", "B"); 10]);
        let f = flag_inconsistency(&log_of(&e), &obs("A,B,C", "C", 99), &cat, 0.9, 5).unwrap();
        assert_eq!(f.dominant.as_str(), "A", "ties go to catalog order");
    }

    #[test]
    fn regret_risk_exact_backoff_prior() {
        let mut log = ChoiceLog::new("u");
        for t in 0..4 {
            let o = obs("A,B,C", "B", t);
            log.push(if t < 3 { o.retracted() } else { o }).unwrap();
        }
        let exact = regret_risk(&log, &ChoiceSpace::parse("A,B,C").unwrap());
        assert_eq!(exact.basis, RiskBasis::Exact);
        assert!((exact.risk - 2.0 / 3.0).abs() < 1e-15);

        let backoff = regret_risk(&log, &ChoiceSpace::parse("A,B").unwrap());
        assert_eq!(backoff.basis, RiskBasis::PairwiseBackoff);
        assert!((backoff.risk - 2.0 / 3.0).abs() < 1e-15);

        let empty = regret_risk(&ChoiceLog::new("u"), &ChoiceSpace::parse("A,B").unwrap());
        assert_eq!((empty.risk, empty.basis), (0.5, RiskBasis::Prior));
    }

    #[test]
    fn constellation_counts() {
        let mut log = log_of(&[("A,B", "A"), ("B,A", "B")]);
        log.push(obs("A,B,C", "C", 5).retracted()).unwrap();
        let recs = constellations(&log);
        assert_eq!(recs.len(), 2);
        assert_eq!((recs[0].n_seen, recs[0].n_retracted), (2, 0));
        assert_eq!((recs[1].n_seen, recs[1].n_retracted), (1, 1));
    }

    #[test]
    fn single_user_has_no_suspects() {
        let log = log_of(&[("P,Q,T", "T")]);
        assert!(suspect_items(&[log], &cat(), &DetectorConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn evenly_present_item_has_no_lift() {
        let cat = Catalog::from_ids(&["A", "B", "C"]).unwrap();
        let logs: Vec<ChoiceLog> = (0..4)
            .map(|_| {
                let mut log = ChoiceLog::new("u");
                log.push(obs("A,B", "A", 0).retracted()).unwrap();
                log.push(obs("A,C", "A", 1)).unwrap();
                log
            })
            .collect();
        let out = suspect_items(&logs, &cat, &DetectorConfig::default()).unwrap();
        assert!(out.iter().all(|s| s.item.as_str() != "A"));
    }

    #[test]
    fn config_validation() {
        let bad = DetectorConfig {
            theta: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(DetectorConfig::default().validate().is_ok());
    }
}
