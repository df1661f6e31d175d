use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tower_http::services::ServeDir;

use super::{
    CreateSessionRequest, OfferRequest, RetractRequest, ServeConfig, Service, ServiceError, Store,
    SubmitRequest,
};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(self.body())).into_response()
    }
}

type Body<T> = Result<Json<T>, JsonRejection>;

fn body<T>(b: Body<T>) -> Result<T, ServiceError> {
    b.map(|Json(v)| v)
        .map_err(|e| ServiceError::BadRequest(e.body_text()))
}

type Reply = Result<Response, ServiceError>;

fn ok<T: serde::Serialize>(v: T) -> Reply {
    Ok(Json(v).into_response())
}

async fn create(State(svc): State<Arc<Service>>, req: Body<CreateSessionRequest>) -> Reply {
    ok(svc.create_session(body(req)?).await?)
}

async fn state(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Reply {
    ok(svc.state(&id).await?)
}

async fn offer(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    req: Body<OfferRequest>,
) -> Reply {
    ok(svc.offer(&id, &body(req)?).await?)
}

async fn submit(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    req: Body<SubmitRequest>,
) -> Reply {
    ok(svc.submit(&id, &body(req)?).await?)
}

async fn retract(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    req: Body<RetractRequest>,
) -> Reply {
    ok(svc.retract(&id, &body(req)?).await?)
}

async fn estimate(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Reply {
    ok(svc.estimate(&id).await?)
}

async fn report(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Reply {
    ok(svc.report(&id).await?)
}

/// The `/v1` API, plus the web console bundle when `static_dir` is given.
pub fn router(service: Arc<Service>, static_dir: Option<&std::path::Path>) -> Router {
    let api = Router::new()
        .route("/v1/sessions", post(create))
        .route("/v1/sessions/{id}", get(state))
        .route("/v1/sessions/{id}/choice-sets", post(offer))
        .route("/v1/sessions/{id}/choices", post(submit))
        .route("/v1/sessions/{id}/retractions", post(retract))
        .route("/v1/sessions/{id}/estimate", get(estimate))
        .route("/v1/sessions/{id}/report", get(report))
        .with_state(service);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Runs the service until Ctrl-C.
pub async fn serve(config: ServeConfig) -> crate::Result<()> {
    let store = match &config.data_dir {
        Some(dir) => Store::on_disk(dir).map_err(into_domain)?,
        None => Store::in_memory(),
    };
    let service = Arc::new(Service::new(store, config.session.clone()).map_err(into_domain)?);
    let app = router(service, config.static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(config.addr()?).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn into_domain(e: ServiceError) -> crate::Error {
    match e {
        ServiceError::Domain(d) => d,
        other => crate::Error::InvalidParameter(other.to_string()),
    }
}
