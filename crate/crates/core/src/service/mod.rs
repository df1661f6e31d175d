//! Live choice sessions over HTTP. Each session owns its log; estimates and
//! detector output are always recomputed from it.

mod config;
mod http;
mod session;
mod store;

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock as SyncRwLock};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::RwLock;

pub use config::ServeConfig;
pub use http::{router, serve};
pub use session::{
    CatalogEntry, OfferRequest, OfferResponse, Session, SessionConfig, SessionManifest,
    SubmitResponse,
};
pub use store::Store;

use crate::detector::DetectorReport;
use crate::learner::{ChoiceLog, EstimateFile, Observation};
use crate::model::{Catalog, ChoiceSpace, ItemId};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session `{0}` not found")]
    SessionNotFound(String),
    #[error("choice set `{0}` not found")]
    ChoiceSetNotFound(String),
    #[error("observation {0} not found")]
    ObservationNotFound(usize),
    #[error("observation {0} is already retracted")]
    AlreadyRetracted(usize),
    #[error("malformed request: {0}")]
    BadRequest(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Domain(#[from] crate::Error),
}

impl ServiceError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::Invalid(msg.into())
    }

    pub fn status(&self) -> u16 {
        use crate::Error as E;
        match self {
            Self::SessionNotFound(_)
            | Self::ChoiceSetNotFound(_)
            | Self::ObservationNotFound(_) => 404,
            Self::AlreadyRetracted(_) => 409,
            Self::BadRequest(_) => 400,
            Self::Invalid(_) => 422,
            Self::Domain(E::Io(_) | E::Json(_) | E::Solver(_) | E::LogLine { .. }) => 500,
            Self::Domain(_) => 422,
        }
    }

    pub fn code(&self) -> &'static str {
        use crate::Error as E;
        match self {
            Self::SessionNotFound(_) => "session_not_found",
            Self::ChoiceSetNotFound(_) => "choice_set_not_found",
            Self::ObservationNotFound(_) => "observation_not_found",
            Self::AlreadyRetracted(_) => "already_retracted",
            Self::BadRequest(_) => "bad_request",
            Self::Invalid(_) => "validation_error",
            Self::Domain(e) => match e {
                E::EmptyCatalog => "empty_catalog",
                E::UnknownItem(_) => "unknown_item",
                E::ItemNotInSpace { .. } => "item_not_in_set",
                E::Io(_) | E::Json(_) | E::LogLine { .. } => "storage_error",
                E::Solver(_) => "solver_error",
                _ => "validation_error",
            },
        }
    }

    pub fn details(&self) -> Value {
        use crate::Error as E;
        match self {
            Self::SessionNotFound(id) => json!({ "session_id": id }),
            Self::ChoiceSetNotFound(id) => json!({ "choice_set_id": id }),
            Self::ObservationNotFound(i) | Self::AlreadyRetracted(i) => json!({ "observation": i }),
            Self::Domain(E::UnknownItem(id)) => json!({ "item": id }),
            Self::Domain(E::ItemNotInSpace { item }) => json!({ "item": item }),
            _ => json!({}),
        }
    }

    pub fn body(&self) -> Value {
        json!({ "code": self.code(), "message": self.to_string(), "details": self.details() })
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub catalog: Vec<ItemId>,
    #[serde(default)]
    pub labels: BTreeMap<ItemId, String>,
    #[serde(default)]
    pub config: Option<SessionConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub choice_set_id: String,
    pub chosen: ItemId,
    #[serde(default)]
    pub commit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetractRequest {
    pub observation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetractResponse {
    pub observation: usize,
    pub retracted: bool,
}

/// Session snapshot returned by `POST /v1/sessions` and `GET /v1/sessions/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub catalog: Vec<CatalogEntry>,
    pub config: SessionConfig,
    pub observations: Vec<Observation>,
    pub choice_sets: BTreeMap<String, ChoiceSpace>,
}

impl SessionState {
    fn of(session: &Session) -> Self {
        let manifest = session.manifest();
        Self {
            session_id: manifest.id,
            catalog: manifest.catalog,
            config: manifest.config,
            observations: session.log.observations().to_vec(),
            choice_sets: manifest.choice_sets,
        }
    }
}

type Shared = Arc<RwLock<Session>>;

/// All live sessions. The map lock is held only to look a session up; each
/// session has its own lock, so distinct sessions never wait on each other.
#[derive(Debug)]
pub struct Service {
    sessions: SyncRwLock<BTreeMap<String, Shared>>,
    store: Store,
    defaults: SessionConfig,
}

impl Service {
    /// Opens the store and rebuilds every persisted session from its log.
    pub fn new(store: Store, defaults: SessionConfig) -> ServiceResult<Self> {
        defaults.validate()?;
        let sessions = store
            .load_all()?
            .into_iter()
            .map(|s| (s.id.clone(), Arc::new(RwLock::new(s))))
            .collect();
        Ok(Self {
            sessions: SyncRwLock::new(sessions),
            store,
            defaults,
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn get(&self, id: &str) -> ServiceResult<Shared> {
        self.sessions
            .read()
            .expect("session map lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::SessionNotFound(id.to_string()))
    }

    fn handles(&self) -> Vec<(String, Shared)> {
        self.sessions
            .read()
            .expect("session map lock poisoned")
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    /// Logs of every session but `id`, each read under its own lock in turn.
    async fn others(&self, id: &str) -> Vec<(String, ChoiceLog)> {
        let mut out = Vec::new();
        for (other, handle) in self.handles() {
            if other != id {
                out.push((other, handle.read().await.log.clone()));
            }
        }
        out
    }

    fn population(mut others: Vec<(String, ChoiceLog)>, own: &Session) -> Vec<ChoiceLog> {
        others.push((own.id.clone(), own.log.clone()));
        others.sort_by(|a, b| a.0.cmp(&b.0));
        others.into_iter().map(|(_, log)| log).collect()
    }

    pub async fn create_session(&self, req: CreateSessionRequest) -> ServiceResult<SessionState> {
        let catalog = Catalog::new(req.catalog)?.with_labels(req.labels)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::new(
            id.clone(),
            catalog,
            req.config.unwrap_or_else(|| self.defaults.clone()),
        )?;
        self.store.save_manifest(&session)?;
        let state = SessionState::of(&session);
        self.sessions
            .write()
            .expect("session map lock poisoned")
            .insert(id, Arc::new(RwLock::new(session)));
        Ok(state)
    }

    pub async fn state(&self, id: &str) -> ServiceResult<SessionState> {
        let handle = self.get(id)?;
        let session = handle.read().await;
        Ok(SessionState::of(&session))
    }

    pub async fn offer(&self, id: &str, req: &OfferRequest) -> ServiceResult<OfferResponse> {
        let handle = self.get(id)?;
        let others = self.others(id).await;
        let mut session = handle.write().await;
        let population = Self::population(others, &session);
        let mut next = session.clone();
        let response = next.offer(req, &population)?;
        self.store.save_manifest(&next)?;
        *session = next;
        Ok(response)
    }

    pub async fn submit(&self, id: &str, req: &SubmitRequest) -> ServiceResult<SubmitResponse> {
        let handle = self.get(id)?;
        if !req.commit {
            let session = handle.read().await;
            return Ok(SubmitResponse {
                warnings: session.preview(&req.choice_set_id, &req.chosen)?,
                committed: false,
                observation: None,
            });
        }
        let mut session = handle.write().await;
        let warnings = session.preview(&req.choice_set_id, &req.chosen)?;
        let obs = session.pending_observation(&req.choice_set_id, &req.chosen, Utc::now())?;
        let mut next = session.clone();
        let index = next.commit(obs.clone())?;
        self.store.append(id, &obs)?;
        *session = next;
        Ok(SubmitResponse {
            warnings,
            committed: true,
            observation: Some(index),
        })
    }

    pub async fn retract(&self, id: &str, req: &RetractRequest) -> ServiceResult<RetractResponse> {
        let handle = self.get(id)?;
        let mut session = handle.write().await;
        let mut next = session.clone();
        next.retract(req.observation)?;
        self.store.rewrite_log(id, &next.log)?;
        *session = next;
        Ok(RetractResponse {
            observation: req.observation,
            retracted: true,
        })
    }

    pub async fn estimate(&self, id: &str) -> ServiceResult<EstimateFile> {
        let handle = self.get(id)?;
        let session = handle.read().await;
        Ok(session.estimate.to_file())
    }

    pub async fn report(&self, id: &str) -> ServiceResult<DetectorReport> {
        let handle = self.get(id)?;
        let others = self.others(id).await;
        let session = handle.read().await;
        session.report(&Self::population(others, &session))
    }
}
