use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::detector::{
    detector_report, flag_inconsistency, pairwise_stats, regret_risk, suspect_items,
    DetectorConfig, DetectorReport, PairwiseStats, RiskBasis,
};
use crate::intervention::{
    adapt_choice_set, compose_warning, AdaptParams, AdaptationPlan, DetectorContext,
    ReversalEvidence, Warning, WarningInput, DEFAULT_RHO_MAX,
};
use crate::learner::{fit_log, ChoiceLog, LearnerConfig, MatrixEstimate, Observation};
use crate::model::{Catalog, ChoiceSpace, ItemId};

fn default_rho_max() -> f64 {
    DEFAULT_RHO_MAX
}

/// Thresholds bundle for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default = "default_rho_max")]
    pub rho_max: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            learner: LearnerConfig::default(),
            detector: DetectorConfig::default(),
            rho_max: DEFAULT_RHO_MAX,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        self.detector.validate()?;
        if self.learner.bounds.is_nan() || self.learner.bounds <= 0.0 {
            return Err(ServiceError::invalid("learner.bounds must be positive"));
        }
        if !(0.0..=1.0).contains(&self.rho_max) {
            return Err(ServiceError::invalid("rho_max must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: ItemId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Everything about a session except its log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub id: String,
    pub catalog: Vec<CatalogEntry>,
    pub config: SessionConfig,
    pub choice_sets: BTreeMap<String, ChoiceSpace>,
    pub next_choice_set: u64,
}

/// Offer either explicit `items` or adaptive parameters (`pool`, `k`, ...).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OfferRequest {
    #[serde(default)]
    pub items: Option<Vec<ItemId>>,
    #[serde(default)]
    pub pool: Option<Vec<ItemId>>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub required: Option<Vec<ItemId>>,
    #[serde(default)]
    pub protect: Option<ItemId>,
    #[serde(default)]
    pub rho_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferResponse {
    pub choice_set_id: String,
    pub items: ChoiceSpace,
    pub warnings: Vec<Warning>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<AdaptationPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub warnings: Vec<Warning>,
    pub committed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<usize>,
}

/// Live state of one session. Everything but the manifest fields is derived
/// from the log.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub catalog: Catalog,
    pub config: SessionConfig,
    pub log: ChoiceLog,
    pub estimate: MatrixEstimate,
    pub choice_sets: BTreeMap<String, ChoiceSpace>,
    next_choice_set: u64,
}

impl Session {
    pub fn new(id: String, catalog: Catalog, config: SessionConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let estimate = MatrixEstimate::prior(catalog.clone(), config.learner.bounds);
        Ok(Self {
            log: ChoiceLog::new(id.clone()),
            id,
            catalog,
            config,
            estimate,
            choice_sets: BTreeMap::new(),
            next_choice_set: 1,
        })
    }

    /// Reconstructs a session from its manifest and log.
    pub fn rebuild(manifest: SessionManifest, log: ChoiceLog) -> Result<Self, ServiceError> {
        let ids: Vec<ItemId> = manifest.catalog.iter().map(|e| e.id.clone()).collect();
        let labels = manifest
            .catalog
            .iter()
            .filter_map(|e| e.label.clone().map(|l| (e.id.clone(), l)))
            .collect();
        let catalog = Catalog::new(ids)?.with_labels(labels)?;
        let mut session = Self::new(manifest.id, catalog, manifest.config)?;
        session.choice_sets = manifest.choice_sets;
        session.next_choice_set = manifest.next_choice_set;
        session.log = log;
        session.log.user = session.id.clone();
        session.refresh()?;
        Ok(session)
    }

    pub fn manifest(&self) -> SessionManifest {
        SessionManifest {
            id: self.id.clone(),
            catalog: self
                .catalog
                .items()
                .iter()
                .map(|id| CatalogEntry {
                    id: id.clone(),
                    label: self.catalog.labels().get(id).cloned(),
                })
                .collect(),
            config: self.config.clone(),
            choice_sets: self.choice_sets.clone(),
            next_choice_set: self.next_choice_set,
        }
    }

    fn refresh(&mut self) -> Result<(), ServiceError> {
        self.estimate = fit_log(&self.log, &self.catalog, &self.config.learner)?;
        Ok(())
    }

    fn choice_set(&self, id: &str) -> Result<&ChoiceSpace, ServiceError> {
        self.choice_sets
            .get(id)
            .ok_or_else(|| ServiceError::ChoiceSetNotFound(id.to_string()))
    }

    fn regret_warning(&self, space: &ChoiceSpace) -> Result<Option<Warning>, ServiceError> {
        let risk = regret_risk(&self.log, space);
        if risk.basis == RiskBasis::Prior
            || risk.n_retracted == 0
            || risk.risk <= self.config.rho_max
        {
            return Ok(None);
        }
        Ok(Some(compose_warning(
            &WarningInput::Regret(risk),
            &self.catalog,
        )?))
    }

    fn predicted_reversal(&self, space: &ChoiceSpace) -> Result<Option<Warning>, ServiceError> {
        if space.len() < 2 {
            return Ok(None);
        }
        let prediction = self.estimate.predict_choice(space)?;
        let d = &self.config.detector;
        let mut best = None;
        for p in space.iter().filter(|p| **p != prediction.item) {
            let stats = pairwise_stats(&self.log, p, &prediction.item)?;
            if stats.share_p >= d.theta && stats.n_together >= d.min_support {
                let better = best
                    .as_ref()
                    .is_none_or(|b: &PairwiseStats| stats.share_p > b.share_p);
                if better {
                    best = Some(stats);
                }
            }
        }
        let Some(history) = best else {
            return Ok(None);
        };
        let evidence = ReversalEvidence {
            space: space.clone(),
            predicted: prediction.item,
            confidence: prediction.confidence,
            history,
        };
        Ok(Some(compose_warning(
            &WarningInput::PredictedReversal(evidence),
            &self.catalog,
        )?))
    }

    /// Warnings attached when a set is offered.
    pub fn offer_warnings(
        &self,
        space: &ChoiceSpace,
        population: &[ChoiceLog],
    ) -> Result<Vec<Warning>, ServiceError> {
        let mut out = Vec::new();
        for s in suspect_items(population, &self.catalog, &self.config.detector)? {
            if space.contains(&s.item) {
                out.push(compose_warning(&WarningInput::Suspect(s), &self.catalog)?);
            }
        }
        out.extend(self.regret_warning(space)?);
        out.extend(self.predicted_reversal(space)?);
        Ok(out)
    }

    fn register(&mut self, space: ChoiceSpace) -> String {
        let id = format!("cs-{}", self.next_choice_set);
        self.next_choice_set += 1;
        self.choice_sets.insert(id.clone(), space);
        id
    }

    pub fn offer(
        &mut self,
        req: &OfferRequest,
        population: &[ChoiceLog],
    ) -> Result<OfferResponse, ServiceError> {
        let adaptive = req.pool.is_some()
            || req.k.is_some()
            || req.required.is_some()
            || req.protect.is_some();
        let (space, plan) = match (&req.items, adaptive) {
            (Some(items), false) => {
                let space = ChoiceSpace::new(items.iter().cloned())?;
                if space.len() != items.len() {
                    return Err(ServiceError::invalid("items contain duplicates"));
                }
                self.catalog.resolve(&space)?;
                (space, None)
            }
            (None, true) => {
                let params = AdaptParams {
                    pool: req
                        .pool
                        .clone()
                        .ok_or_else(|| ServiceError::invalid("adaptive offers need a pool"))?,
                    k: req
                        .k
                        .ok_or_else(|| ServiceError::invalid("adaptive offers need k"))?,
                    required: req.required.clone().unwrap_or_default(),
                    protect: req.protect.clone(),
                    rho_max: req.rho_max.unwrap_or(self.config.rho_max),
                };
                let suspects = suspect_items(population, &self.catalog, &self.config.detector)?
                    .into_iter()
                    .map(|s| s.item)
                    .collect();
                let context = DetectorContext {
                    history: Some(&self.log),
                    suspects,
                };
                let plan = adapt_choice_set(&self.estimate, &params, &context)?;
                (plan.choice_set.clone(), Some(plan))
            }
            _ => return Err(ServiceError::invalid(
                "give either explicit items or adaptive parameters (pool, k, required, protect)",
            )),
        };
        let warnings = self.offer_warnings(&space, population)?;
        let choice_set_id = self.register(space.clone());
        Ok(OfferResponse {
            choice_set_id,
            items: space,
            warnings,
            plan,
        })
    }

    /// Warnings for choosing `chosen` from a registered set. Never mutates.
    pub fn preview(
        &self,
        choice_set_id: &str,
        chosen: &ItemId,
    ) -> Result<Vec<Warning>, ServiceError> {
        let space = self.choice_set(choice_set_id)?;
        if !space.contains(chosen) {
            return Err(crate::Error::ItemNotInSpace {
                item: chosen.to_string(),
            }
            .into());
        }
        let d = &self.config.detector;
        let probe = Observation::new(
            space.clone(),
            chosen.clone(),
            self.log.last_at().unwrap_or_default(),
        )?;
        let mut out = Vec::new();
        if let Some(flag) =
            flag_inconsistency(&self.log, &probe, &self.catalog, d.theta, d.min_support)
        {
            out.push(compose_warning(
                &WarningInput::Inconsistency(flag),
                &self.catalog,
            )?);
        }
        out.extend(self.regret_warning(space)?);
        Ok(out)
    }

    /// The observation a commit would append.
    pub fn pending_observation(
        &self,
        choice_set_id: &str,
        chosen: &ItemId,
        now: DateTime<Utc>,
    ) -> Result<Observation, ServiceError> {
        let space = self.choice_set(choice_set_id)?;
        let at = self.log.last_at().map_or(now, |last| last.max(now));
        Ok(Observation::new(space.clone(), chosen.clone(), at)?)
    }

    pub fn commit(&mut self, obs: Observation) -> Result<usize, ServiceError> {
        let index = self.log.push(obs)?;
        self.refresh()?;
        Ok(index)
    }

    pub fn check_retractable(&self, index: usize) -> Result<(), ServiceError> {
        match self.log.observations().get(index) {
            None => Err(ServiceError::ObservationNotFound(index)),
            Some(o) if o.retracted => Err(ServiceError::AlreadyRetracted(index)),
            Some(_) => Ok(()),
        }
    }

    pub fn retract(&mut self, index: usize) -> Result<(), ServiceError> {
        self.check_retractable(index)?;
        self.log.retract(index)?;
        self.refresh()
    }

    pub fn report(&self, population: &[ChoiceLog]) -> Result<DetectorReport, ServiceError> {
        Ok(detector_report(
            &self.log,
            population,
            &self.catalog,
            &self.config.detector,
            None,
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::intervention::{Directive, WarningKind};
    use chrono::TimeZone;

    fn session() -> Session {
        Session::new(
            "s".into(),
            fixtures::table1().catalog().clone(),
            SessionConfig::default(),
        )
        .unwrap()
    }

    fn explicit(ids: &str) -> OfferRequest {
        OfferRequest {
            items: Some(crate::model::parse_ids(ids).unwrap()),
            ..Default::default()
        }
    }

    fn id(s: &str) -> ItemId {
        ItemId::new(s).unwrap()
    }

    fn commit(s: &mut Session, set: &str, chosen: &str, minute: i64) {
        let at = Utc.timestamp_opt(1_700_000_000 + 60 * minute, 0).unwrap();
        let obs = s.pending_observation(set, &id(chosen), at).unwrap();
        s.commit(obs).unwrap();
    }

    #[test]
    fn dry_run_confirm_against_dominance() {
        let mut s = session();
        let hr = s.offer(&explicit("H,R"), &[]).unwrap().choice_set_id;
        for t in 0..6 {
            commit(&mut s, &hr, "R", t);
        }
        let hrf = s.offer(&explicit("H,R,F"), &[]).unwrap().choice_set_id;
        let before = s.log.clone();
        let w = s.preview(&hrf, &id("H")).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].directive, Directive::Confirm);
        assert_eq!(s.log, before);
    }

    #[test]
    fn predicted_reversal_on_offer() {
        let mut s = session();
        let hr = s.offer(&explicit("H,R"), &[]).unwrap().choice_set_id;
        for t in 0..10 {
            commit(&mut s, &hr, "R", t);
        }
        let hrf = s.offer(&explicit("H,R,F"), &[]).unwrap().choice_set_id;
        commit(&mut s, &hrf, "H", 20);
        let offer = s.offer(&explicit("H,R,F"), &[]).unwrap();
        assert!(offer
            .warnings
            .iter()
            .any(|w| w.kind == WarningKind::PredictedReversal && w.directive == Directive::Inform));
    }

    #[test]
    fn adaptive_offer_protects() {
        let mut s = session();
        s.estimate.matrix = fixtures::table1();
        let req = OfferRequest {
            pool: Some(crate::model::parse_ids("H,R,F").unwrap()),
            k: Some(2),
            protect: Some(id("R")),
            required: Some(vec![id("R")]),
            ..Default::default()
        };
        let offer = s.offer(&req, &[]).unwrap();
        assert_eq!(offer.items, ChoiceSpace::parse("H,R").unwrap());
    }

    #[test]
    fn offer_modes_are_exclusive() {
        let mut s = session();
        let mut req = explicit("H,R");
        req.k = Some(2);
        assert!(s.offer(&req, &[]).is_err());
        assert!(s.offer(&OfferRequest::default(), &[]).is_err());
        assert!(s.offer(&explicit("H,Z"), &[]).is_err());
    }

    #[test]
    fn retraction_rules() {
        let mut s = session();
        let hr = s.offer(&explicit("H,R"), &[]).unwrap().choice_set_id;
        commit(&mut s, &hr, "H", 0);
        assert_ne!(
            s.estimate.matrix,
            MatrixEstimate::prior(s.catalog.clone(), 100.0).matrix
        );
        s.retract(0).unwrap();
        assert_eq!(s.estimate, MatrixEstimate::prior(s.catalog.clone(), 100.0));
        assert!(matches!(
            s.retract(0),
            Err(ServiceError::AlreadyRetracted(0))
        ));
        assert!(matches!(
            s.retract(5),
            Err(ServiceError::ObservationNotFound(5))
        ));
    }

    #[test]
    fn chosen_outside_set_is_rejected() {
        let mut s = session();
        let hr = s.offer(&explicit("H,R"), &[]).unwrap().choice_set_id;
        assert!(s.preview(&hr, &id("F")).is_err());
        assert!(s.pending_observation(&hr, &id("F"), Utc::now()).is_err());
        assert!(matches!(
            s.preview("cs-99", &id("H")),
            Err(ServiceError::ChoiceSetNotFound(_))
        ));
    }
}
