//! Synthetic choosers with known matrices, and end-to-end evaluations of the
//! learner and detector against them. Everything is a pure function of its
//! inputs and seed.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{scan_inconsistencies, suspect_items, DetectorConfig};
use crate::error::{Error, Result};
use crate::learner::{
    constraints_from_log, estimate_matrix, ChoiceLog, LearnerConfig, Observation,
};
use crate::model::{Catalog, ChoiceSpace, ItemId, UtilityMatrix};

/// Catalog `I1..In`.
pub fn synthetic_catalog(n: usize) -> Result<Catalog> {
    let ids: Vec<String> = (1..=n).map(|i| format!("I{i}")).collect();
    Catalog::from_ids(&ids)
}

/// Random matrix: diagonal uniform on (1, 10]; each off-diagonal entry is 0
/// with probability `sparsity`, otherwise uniform on [-5, 15].
pub fn sample_matrix(n: usize, seed: u64, sparsity: f64) -> Result<UtilityMatrix> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "n must be at least 2, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::InvalidParameter(format!(
            "sparsity must lie in [0, 1], got {sparsity}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![vec![0.0; n]; n];
    for (r, row) in rows.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = if r == c {
                10.0 - 9.0 * rng.random::<f64>()
            } else if rng.random::<f64>() < sparsity {
                0.0
            } else {
                rng.random_range(-5.0..=15.0)
            };
        }
    }
    UtilityMatrix::new(synthetic_catalog(n)?, rows)
}

/// `count` random spaces over `items`, sizes uniform in `[min_size, max_size]`.
pub fn sample_spaces(
    items: &[ItemId],
    count: usize,
    min_size: usize,
    max_size: usize,
    seed: u64,
) -> Result<Vec<ChoiceSpace>> {
    if min_size == 0 || min_size > max_size || max_size > items.len() {
        return Err(Error::InvalidParameter(format!(
            "space sizes [{min_size}, {max_size}] do not fit {} items",
            items.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let size = rng.random_range(min_size..=max_size);
            ChoiceSpace::new(items.choose_multiple(&mut rng, size).cloned())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Policy {
    Deterministic,
    Softmax { tau: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChooserModel {
    pub truth: UtilityMatrix,
    pub policy: Policy,
    /// Retraction probability when the choice ranks worse by its diagonal
    /// than it did in context.
    pub retraction: f64,
    pub seed: u64,
}

impl ChooserModel {
    pub fn deterministic(truth: UtilityMatrix) -> Self {
        Self {
            truth,
            policy: Policy::Deterministic,
            retraction: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Policy::Softmax { tau } = self.policy {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "tau must be positive, got {tau}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.retraction) {
            return Err(Error::InvalidParameter(format!(
                "retraction probability must lie in [0, 1], got {}",
                self.retraction
            )));
        }
        Ok(())
    }
}

fn session_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

/// 1-based rank of `k` among `idx` by `score`, counting strictly better items.
fn rank(k: usize, idx: &[usize], score: impl Fn(usize) -> f64) -> usize {
    let s = score(k);
    1 + idx.iter().filter(|&&i| score(i) > s).count()
}

/// One observation per space, one minute apart.
pub fn simulate_session(model: &ChooserModel, spaces: &[ChoiceSpace]) -> Result<ChoiceLog> {
    model.validate()?;
    let truth = &model.truth;
    let catalog = truth.catalog();
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let mut log = ChoiceLog::new(format!("sim-{}", model.seed));
    for (t, space) in spaces.iter().enumerate() {
        let idx = catalog.resolve(space)?;
        let utilities: Vec<f64> = idx.iter().map(|&k| truth.utility_at(k, &idx)).collect();
        let pos = match model.policy {
            Policy::Deterministic => {
                let best = truth.argmax_at(&idx);
                idx.iter()
                    .position(|&k| k == best)
                    .expect("argmax is in space")
            }
            Policy::Softmax { tau } => {
                let top = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = utilities.iter().map(|u| ((u - top) / tau).exp()).collect();
                let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
                let mut pick = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                pick
            }
        };
        let chosen = idx[pos];
        let in_context = rank(chosen, &idx, |i| truth.utility_at(i, &idx));
        let context_free = rank(chosen, &idx, |i| truth.get(i, i));
        let retract = context_free > in_context && rng.random::<f64>() < model.retraction;

        let mut obs = Observation::new(
            space.clone(),
            catalog.item(chosen).clone(),
            session_start() + Duration::minutes(t as i64),
        )?;
        obs.retracted = retract;
        log.push(obs)?;
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerEvaluation {
    pub seed: u64,
    pub n: usize,
    pub n_train: usize,
    pub n_heldout: usize,
    pub n_constraints: usize,
    pub n_strict: usize,
    /// Share of learner constraints satisfied by the truth rescaled to
    /// `a_11 = 1`.
    pub truth_satisfaction: f64,
    pub margin: f64,
    pub training_consistency: f64,
    /// 1.0 by convention when there are no held-out spaces.
    pub heldout_accuracy: f64,
}

/// Replays a deterministic chooser on `train`, fits the learner and scores
/// its predictions on both splits.
pub fn evaluate_learner(
    truth: &UtilityMatrix,
    train: &[ChoiceSpace],
    heldout: &[ChoiceSpace],
    seed: u64,
) -> Result<LearnerEvaluation> {
    let model = ChooserModel {
        seed,
        ..ChooserModel::deterministic(truth.clone())
    };
    evaluate_model(&model, train, heldout, &LearnerConfig::default())
}

pub fn evaluate_model(
    model: &ChooserModel,
    train: &[ChoiceSpace],
    heldout: &[ChoiceSpace],
    config: &LearnerConfig,
) -> Result<LearnerEvaluation> {
    let train_set: BTreeSet<&ChoiceSpace> = train.iter().collect();
    if heldout.iter().any(|s| train_set.contains(s)) {
        return Err(Error::OverlappingSplit);
    }
    let truth = &model.truth;
    let catalog = truth.catalog();
    let log = simulate_session(model, train)?;
    let constraints = constraints_from_log(&log, catalog, config)?;
    let estimate = estimate_matrix(&constraints, catalog, config.bounds)?;

    let rescaled = truth.scale(1.0 / truth.get(0, 0))?;
    let mut satisfied = 0;
    for c in &constraints {
        satisfied += usize::from(c.is_satisfied(&rescaled)?);
    }
    let live: Vec<&Observation> = log.observations().iter().filter(|o| !o.retracted).collect();
    let consistent = live
        .iter()
        .map(|o| {
            estimate
                .predict_choice(&o.space)
                .map(|p| p.item == o.chosen)
        })
        .collect::<Result<Vec<bool>>>()?;
    let correct = heldout
        .iter()
        .map(|s| Ok(estimate.predict_choice(s)?.item == truth.best_choice(s)?))
        .collect::<Result<Vec<bool>>>()?;

    Ok(LearnerEvaluation {
        seed: model.seed,
        n: catalog.len(),
        n_train: train.len(),
        n_heldout: heldout.len(),
        n_constraints: constraints.len(),
        n_strict: constraints.iter().filter(|c| c.is_strict()).count(),
        truth_satisfaction: fraction(satisfied, constraints.len()),
        margin: estimate.margin,
        training_consistency: fraction(consistent.iter().filter(|b| **b).count(), consistent.len()),
        heldout_accuracy: fraction(correct.iter().filter(|b| **b).count(), correct.len()),
    })
}

fn fraction(hits: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}

/// Scripted population for detector evaluation. Item roles: the last catalog
/// item is the planted suspect; each violation user gets a random dominant
/// pair; all other choices come from a context-free chooser, which never
/// contradicts itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorPlant {
    pub catalog_size: usize,
    /// Users with one planted violation of a dominant preference each.
    pub violation_users: usize,
    /// Length of the dominance history before the violation.
    pub dominance: usize,
    /// Consistent filler observations per user.
    pub fillers: usize,
    pub control_users: usize,
    /// Users with retracted choices involving the suspect item.
    pub suspect_users: usize,
    pub suspect_retractions: usize,
}

impl Default for DetectorPlant {
    fn default() -> Self {
        Self {
            catalog_size: 8,
            violation_users: 10,
            dominance: 10,
            fillers: 10,
            control_users: 10,
            suspect_users: 5,
            suspect_retractions: 3,
        }
    }
}

impl DetectorPlant {
    pub fn validate(&self) -> Result<()> {
        if self.catalog_size < 6 {
            return Err(Error::MalformedPlant(
                "catalog_size must be at least 6".into(),
            ));
        }
        if self.violation_users > 0 && self.dominance == 0 {
            return Err(Error::MalformedPlant(
                "violations need a dominance history".into(),
            ));
        }
        if self.suspect_users > 0 && self.suspect_retractions == 0 {
            return Err(Error::MalformedPlant(
                "suspect users need retractions".into(),
            ));
        }
        if self.violation_users + self.control_users + self.suspect_users == 0 {
            return Err(Error::MalformedPlant("plant has no users".into()));
        }
        Ok(())
    }
}

/// Logs built from a plant, with the ground truth.
#[derive(Debug, Clone)]
pub struct PlantedPopulation {
    pub catalog: Catalog,
    pub logs: Vec<ChoiceLog>,
    /// `(log, observation)` of every planted violation.
    pub planted: BTreeSet<(usize, usize)>,
    /// Indices of control logs.
    pub controls: Vec<usize>,
    pub suspect: ItemId,
}

pub fn build_population(seed: u64, plant: &DetectorPlant) -> Result<PlantedPopulation> {
    plant.validate()?;
    let n = plant.catalog_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = sample_matrix(n, seed, 1.0)?;
    let catalog = truth.catalog().clone();
    let suspect = catalog.item(n - 1).clone();
    let ordinary: Vec<ItemId> = catalog.items()[..n - 1].to_vec();
    let chooser = |spaces: &[ChoiceSpace]| {
        simulate_session(&ChooserModel::deterministic(truth.clone()), spaces)
    };
    let mut logs = Vec::new();
    let mut planted = BTreeSet::new();
    let mut controls = Vec::new();

    let append = |log: &mut ChoiceLog,
                  space: ChoiceSpace,
                  chosen: &ItemId,
                  retracted: bool|
     -> Result<usize> {
        let at = session_start() + Duration::minutes(log.len() as i64);
        let mut obs = Observation::new(space, chosen.clone(), at)?;
        obs.retracted = retracted;
        log.push(obs)
    };
    let refill = |log: &mut ChoiceLog, filler: ChoiceLog| -> Result<()> {
        for o in filler.observations() {
            let at = session_start() + Duration::minutes(log.len() as i64);
            log.push(Observation::new(o.space.clone(), o.chosen.clone(), at)?)?;
        }
        Ok(())
    };

    for u in 0..plant.violation_users {
        let pair: Vec<ItemId> = ordinary.choose_multiple(&mut rng, 2).cloned().collect();
        let (p, q) = (&pair[0], &pair[1]);
        let rest: Vec<ItemId> = ordinary
            .iter()
            .filter(|i| *i != p && *i != q)
            .cloned()
            .collect();
        let mut log = ChoiceLog::new(format!("violation-{u}"));
        for _ in 0..plant.dominance {
            append(
                &mut log,
                ChoiceSpace::new([p.clone(), q.clone()])?,
                p,
                false,
            )?;
        }
        let spaces = sample_spaces(&rest, plant.fillers, 2, rest.len().min(4), rng.random())?;
        refill(&mut log, chooser(&spaces)?)?;
        let x = rest
            .choose(&mut rng)
            .expect("at least three ordinary items")
            .clone();
        let at = append(
            &mut log,
            ChoiceSpace::new([p.clone(), q.clone(), x])?,
            q,
            false,
        )?;
        planted.insert((logs.len(), at));
        logs.push(log);
    }

    for u in 0..plant.suspect_users {
        let mut log = ChoiceLog::new(format!("suspect-{u}"));
        for _ in 0..plant.suspect_retractions {
            let other = ordinary.choose(&mut rng).expect("ordinary items").clone();
            append(
                &mut log,
                ChoiceSpace::new([suspect.clone(), other])?,
                &suspect,
                true,
            )?;
        }
        let spaces = sample_spaces(&ordinary, plant.fillers, 2, 4, rng.random())?;
        refill(&mut log, chooser(&spaces)?)?;
        logs.push(log);
    }

    let control_len = plant.dominance + plant.fillers + 1;
    for u in 0..plant.control_users {
        let mut log = ChoiceLog::new(format!("control-{u}"));
        let spaces = sample_spaces(&ordinary, control_len, 2, 4, rng.random())?;
        refill(&mut log, chooser(&spaces)?)?;
        controls.push(logs.len());
        logs.push(log);
    }

    Ok(PlantedPopulation {
        catalog,
        logs,
        planted,
        controls,
        suspect,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorEvaluation {
    pub seed: u64,
    pub planted: usize,
    pub flagged: usize,
    pub true_positives: usize,
    /// Undefined (null) when nothing was flagged.
    pub flags_precision: Option<f64>,
    /// Undefined (null) when nothing was planted.
    pub flags_recall: Option<f64>,
    pub control_flags: usize,
    pub suspects: Vec<ItemId>,
    /// 1-based rank of the planted suspect, if reported.
    pub suspect_rank: Option<usize>,
}

pub fn evaluate_detector(
    seed: u64,
    plant: &DetectorPlant,
    config: &DetectorConfig,
) -> Result<DetectorEvaluation> {
    config.validate()?;
    let pop = build_population(seed, plant)?;
    let mut flagged = BTreeSet::new();
    for (u, log) in pop.logs.iter().enumerate() {
        for (i, f) in scan_inconsistencies(log, &pop.catalog, config.theta, config.min_support)
            .into_iter()
            .enumerate()
        {
            if f.is_some() {
                flagged.insert((u, i));
            }
        }
    }
    let tp = flagged.intersection(&pop.planted).count();
    let control_flags = flagged
        .iter()
        .filter(|(u, _)| pop.controls.contains(u))
        .count();
    let suspects: Vec<ItemId> = suspect_items(&pop.logs, &pop.catalog, config)?
        .into_iter()
        .map(|s| s.item)
        .collect();
    Ok(DetectorEvaluation {
        seed,
        planted: pop.planted.len(),
        flagged: flagged.len(),
        true_positives: tp,
        flags_precision: (!flagged.is_empty()).then(|| tp as f64 / flagged.len() as f64),
        flags_recall: (!pop.planted.is_empty()).then(|| tp as f64 / pop.planted.len() as f64),
        control_flags,
        suspect_rank: suspects
            .iter()
            .position(|s| *s == pop.suspect)
            .map(|p| p + 1),
        suspects,
    })
}

/// Parameter counts of the two representations over `n` items: matrix
/// entries (`n^2`) and full-method values, one per (item, space containing
/// it) pair (`n * 2^(n-1)`).
pub fn representation_counts(n: u32) -> (u128, u128) {
    let n = u128::from(n);
    (n * n, n << (n - 1).min(126))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpaceSampler {
    pub count: usize,
    pub heldout: usize,
    pub min_size: usize,
    /// Defaults to `n` when absent.
    pub max_size: Option<usize>,
}

impl Default for SpaceSampler {
    fn default() -> Self {
        Self {
            count: 200,
            heldout: 0,
            min_size: 2,
            max_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n: usize,
    pub seeds: Vec<u64>,
    pub sparsity: f64,
    pub policy: Policy,
    pub rho: f64,
    /// Fixed training spaces (item ids `I1..In`); overrides the sampler.
    pub spaces: Option<Vec<Vec<ItemId>>>,
    pub space_sampler: SpaceSampler,
    pub learner: LearnerConfig,
    pub detector: DetectorConfig,
    /// Runs the detector evaluation per seed when present.
    pub detector_plant: Option<DetectorPlant>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 5,
            seeds: (1..=10).collect(),
            sparsity: 0.3,
            policy: Policy::Deterministic,
            rho: 0.0,
            spaces: None,
            space_sampler: SpaceSampler::default(),
            learner: LearnerConfig::default(),
            detector: DetectorConfig::default(),
            detector_plant: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub runs: usize,
    pub training_consistency: f64,
    pub training_consistency_min: f64,
    pub heldout_accuracy: f64,
    pub truth_satisfaction_min: f64,
    pub margin_min: f64,
    pub flags_precision: Option<f64>,
    pub flags_recall: Option<f64>,
    pub control_flags: usize,
    pub suspect_ranked_first: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub summary: ExperimentSummary,
    pub learner: Vec<LearnerEvaluation>,
    pub detector: Vec<DetectorEvaluation>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub runtime_ms: Option<u64>,
}

fn learner_spaces(
    config: &ExperimentConfig,
    catalog: &Catalog,
    seed: u64,
) -> Result<(Vec<ChoiceSpace>, Vec<ChoiceSpace>)> {
    if let Some(fixed) = &config.spaces {
        let train = fixed
            .iter()
            .map(|ids| ChoiceSpace::new(ids.iter().cloned()))
            .collect::<Result<Vec<_>>>()?;
        return Ok((train, Vec::new()));
    }
    let s = &config.space_sampler;
    let max = s.max_size.unwrap_or(config.n);
    let train = sample_spaces(catalog.items(), s.count, s.min_size, max, seed)?;
    let seen: BTreeSet<&ChoiceSpace> = train.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut heldout = Vec::new();
    let mut tried = BTreeSet::new();
    let mut attempts = 0;
    while heldout.len() < s.heldout && attempts < 100 * (s.heldout + 1) {
        attempts += 1;
        let size = rng.random_range(s.min_size..=max);
        let mut items = catalog.items().to_vec();
        items.shuffle(&mut rng);
        let space = ChoiceSpace::new(items.into_iter().take(size))?;
        if !seen.contains(&space) && tried.insert(space.clone()) {
            heldout.push(space);
        }
    }
    Ok((train, heldout))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

pub fn run_experiment(config: &ExperimentConfig, with_runtime: bool) -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut learner = Vec::new();
    let mut detector = Vec::new();
    for &seed in &config.seeds {
        let truth = sample_matrix(config.n, seed, config.sparsity)?;
        let (train, heldout) = learner_spaces(config, truth.catalog(), seed)?;
        let model = ChooserModel {
            truth,
            policy: config.policy,
            retraction: config.rho,
            seed,
        };
        learner.push(evaluate_model(&model, &train, &heldout, &config.learner)?);
        if let Some(plant) = &config.detector_plant {
            detector.push(evaluate_detector(seed, plant, &config.detector)?);
        }
    }

    let planted: usize = detector.iter().map(|d| d.planted).sum();
    let flagged: usize = detector.iter().map(|d| d.flagged).sum();
    let tp: usize = detector.iter().map(|d| d.true_positives).sum();
    let summary = ExperimentSummary {
        runs: learner.len(),
        training_consistency: mean(learner.iter().map(|r| r.training_consistency)).unwrap_or(1.0),
        training_consistency_min: learner
            .iter()
            .map(|r| r.training_consistency)
            .fold(1.0, f64::min),
        heldout_accuracy: mean(learner.iter().map(|r| r.heldout_accuracy)).unwrap_or(1.0),
        truth_satisfaction_min: learner
            .iter()
            .map(|r| r.truth_satisfaction)
            .fold(1.0, f64::min),
        margin_min: learner
            .iter()
            .map(|r| r.margin)
            .fold(f64::INFINITY, f64::min)
            .min(config.learner.bounds),
        flags_precision: (flagged > 0).then(|| tp as f64 / flagged as f64),
        flags_recall: (planted > 0).then(|| tp as f64 / planted as f64),
        control_flags: detector.iter().map(|d| d.control_flags).sum(),
        suspect_ranked_first: mean(
            detector
                .iter()
                .filter(|_| {
                    config
                        .detector_plant
                        .as_ref()
                        .is_some_and(|p| p.suspect_users > 0)
                })
                .map(|d| f64::from(u8::from(d.suspect_rank == Some(1)))),
        ),
    };
    Ok(ExperimentReport {
        summary,
        learner,
        detector,
        runtime_ms: with_runtime.then(|| started.elapsed().as_millis() as u64),
    })
}

impl ExperimentReport {
    pub fn to_table(&self) -> String {
        let s = &self.summary;
        let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        let mut out = String::new();
        let rows = [
            ("runs", s.runs.to_string()),
            (
                "training_consistency (mean)",
                format!("{:.4}", s.training_consistency),
            ),
            (
                "training_consistency (min)",
                format!("{:.4}", s.training_consistency_min),
            ),
            (
                "heldout_accuracy (mean)",
                format!("{:.4}", s.heldout_accuracy),
            ),
            (
                "truth_satisfaction (min)",
                format!("{:.4}", s.truth_satisfaction_min),
            ),
            ("margin (min)", format!("{:.6}", s.margin_min)),
            ("flags_precision", opt(s.flags_precision)),
            ("flags_recall", opt(s.flags_recall)),
            ("control_flags", s.control_flags.to_string()),
            ("suspect_ranked_first", opt(s.suspect_ranked_first)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        if let Some(ms) = self.runtime_ms {
            let _ = writeln!(out, "{:<width$}  {ms}", "runtime_ms");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn sample_matrix_is_seeded_and_bounded() {
        let a = sample_matrix(3, 7, 0.5).unwrap();
        assert_eq!(a, sample_matrix(3, 7, 0.5).unwrap());
        assert_ne!(a, sample_matrix(3, 8, 0.5).unwrap());
        let m = sample_matrix(6, 1, 0.3).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                let v = m.get(r, c);
                if r == c {
                    assert!(v > 1.0 && v <= 10.0);
                } else {
                    assert!((-5.0..=15.0).contains(&v));
                }
            }
        }
        assert!(sample_matrix(1, 1, 0.0).is_err());
    }

    #[test]
    fn sparsity_extremes() {
        let full = sample_matrix(5, 3, 1.0).unwrap();
        let none = sample_matrix(5, 3, 0.0).unwrap();
        for r in 0..5 {
            for c in (0..5).filter(|c| *c != r) {
                assert_eq!(full.get(r, c), 0.0);
                assert_ne!(none.get(r, c), 0.0);
            }
        }
    }

    #[test]
    fn replays_the_reversal() {
        let spaces = [
            ChoiceSpace::parse("H,R").unwrap(),
            ChoiceSpace::parse("H,R,F").unwrap(),
        ];
        let log =
            simulate_session(&ChooserModel::deterministic(fixtures::table1()), &spaces).unwrap();
        let chosen: Vec<&str> = log
            .observations()
            .iter()
            .map(|o| o.chosen.as_str())
            .collect();
        assert_eq!(chosen, ["R", "H"]);
    }

    #[test]
    fn cold_softmax_agrees_with_argmax() {
        let truth = sample_matrix(5, 11, 0.3).unwrap();
        let spaces = sample_spaces(truth.catalog().items(), 1000, 2, 5, 4).unwrap();
        let model = ChooserModel {
            truth: truth.clone(),
            policy: Policy::Softmax { tau: 0.01 },
            retraction: 0.0,
            seed: 9,
        };
        let log = simulate_session(&model, &spaces).unwrap();
        let agree = log
            .observations()
            .iter()
            .filter(|o| truth.best_choice(&o.space).unwrap() == o.chosen)
            .count();
        assert!(agree >= 990, "agreement {agree}/1000");
    }

    #[test]
    fn zero_rho_never_retracts() {
        let truth = sample_matrix(5, 2, 0.0).unwrap();
        let spaces = sample_spaces(truth.catalog().items(), 200, 2, 5, 2).unwrap();
        let model = ChooserModel {
            truth,
            policy: Policy::Deterministic,
            retraction: 0.0,
            seed: 1,
        };
        assert!(simulate_session(&model, &spaces)
            .unwrap()
            .observations()
            .iter()
            .all(|o| !o.retracted));
    }

    #[test]
    fn learner_on_pairs_of_m1() {
        let train: Vec<ChoiceSpace> = ["H,R", "H,F", "R,F"]
            .iter()
            .map(|s| ChoiceSpace::parse(s).unwrap())
            .collect();
        let heldout = [ChoiceSpace::parse("H,R,F").unwrap()];
        let r = evaluate_learner(&fixtures::table1(), &train, &heldout, 1).unwrap();
        assert_eq!(r.training_consistency, 1.0);
        assert_eq!(r.truth_satisfaction, 1.0);
        assert!(r.margin > 0.0);
        let r = evaluate_learner(&fixtures::table1(), &train, &[], 1).unwrap();
        assert_eq!((r.heldout_accuracy, r.n_heldout), (1.0, 0));
        assert!(matches!(
            evaluate_learner(&fixtures::table1(), &train, &train[..1], 1),
            Err(Error::OverlappingSplit)
        ));
    }

    #[test]
    fn detector_plant_is_recovered() {
        let eval =
            evaluate_detector(3, &DetectorPlant::default(), &DetectorConfig::default()).unwrap();
        assert_eq!(eval.flags_recall, Some(1.0));
        assert_eq!(eval.control_flags, 0);
        assert_eq!(eval.suspect_rank, Some(1));
    }

    #[test]
    fn controls_alone_raise_nothing() {
        let plant = DetectorPlant {
            violation_users: 0,
            suspect_users: 0,
            ..Default::default()
        };
        let eval = evaluate_detector(5, &plant, &DetectorConfig::default()).unwrap();
        assert_eq!((eval.flagged, eval.flags_precision), (0, None));
        assert!(eval.suspects.is_empty());
    }

    #[test]
    fn malformed_plants() {
        let bad = DetectorPlant {
            catalog_size: 3,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::MalformedPlant(_))));
    }

    #[test]
    fn experiment_is_reproducible() {
        let cfg = ExperimentConfig {
            seeds: vec![1, 2],
            detector_plant: Some(DetectorPlant::default()),
            ..Default::default()
        };
        let a = serde_json::to_string(&run_experiment(&cfg, false).unwrap()).unwrap();
        let b = serde_json::to_string(&run_experiment(&cfg, false).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(!a.contains("runtime_ms"));
    }

    #[test]
    fn counts_grow_as_expected() {
        assert_eq!(representation_counts(4), (16, 32));
    }
}
