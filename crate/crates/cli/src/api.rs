//! HTTP service over the engine. Handlers run engine calls on the blocking
//! pool; bodies are the persisted document schemas.

use std::collections::HashMap;
use std::future::Future;
use std::sync::Arc;

use ace_core::analyzer::AnalysisMode;
use ace_core::{AceError, Engine};
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::ops::{
    self, AnalyzeRequest, CommitRequest, CreateProject, NewAnnotation, RefineRequest, StartSession, SuggestRequest,
    TextBody,
};

/// Error body returned by every failing request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    pub http_status: u16,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>, http_status: u16) -> Self {
        Self { code: code.to_string(), message: message.into(), http_status }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new("bad_request", message, 400)
    }
}

impl From<AceError> for ApiError {
    fn from(e: AceError) -> Self {
        Self::new(e.code(), e.to_string(), e.http_status())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// JSON body extractor whose rejections use the [`ApiError`] shape.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(rejection) => Err(ApiError::bad_request(rejection.body_text())),
        }
    }
}

type Shared = Arc<Engine>;
type ApiResult = Result<Response, ApiError>;

async fn blocking<T, F>(engine: Shared, f: F) -> ApiResult
where
    T: Serialize + Send + 'static,
    F: FnOnce(&Engine) -> Result<T, AceError> + Send + 'static,
{
    let value = tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ApiError::new("internal_error", e.to_string(), 500))??;
    Ok(Json(value).into_response())
}

fn analysis_mode(query: &HashMap<String, String>) -> Result<AnalysisMode, ApiError> {
    match query.get("mode") {
        Some(m) => m.parse().map_err(ApiError::bad_request),
        None => Ok(AnalysisMode::Heuristic),
    }
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
}

async fn healthz() -> Json<Health> {
    Json(Health { status: "ok" })
}

async fn not_found() -> ApiError {
    ApiError::new("not_found", "no such route", 404)
}

async fn method_not_allowed() -> ApiError {
    ApiError::new("method_not_allowed", "method not allowed on this route", 405)
}

/// Builds the router with every engine operation mounted.
pub fn router(engine: Shared) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route(
            "/projects",
            get(|State(e): State<Shared>| blocking(e, |e| e.projects())).post(
                |State(e): State<Shared>, Body(b): Body<CreateProject>| {
                    blocking(e, move |e| e.create_project(&b.name, &b.brief))
                },
            ),
        )
        .route("/projects/{pid}", get(|State(e): State<Shared>, Path(pid): Path<String>| blocking(e, move |e| e.project(&pid))))
        .route(
            "/projects/{pid}/versions",
            get(|State(e): State<Shared>, Path(pid): Path<String>| blocking(e, move |e| e.versions(&pid))).post(
                |State(e): State<Shared>, Path(pid): Path<String>, Body(b): Body<CommitRequest>| {
                    blocking(e, move |e| ops::commit(e, &pid, b))
                },
            ),
        )
        .route(
            "/projects/{pid}/cycles",
            get(|State(e): State<Shared>, Path(pid): Path<String>| blocking(e, move |e| e.design_cycles(&pid))),
        )
        .route(
            "/projects/{pid}/elicitation",
            post(|State(e): State<Shared>, Path(pid): Path<String>| blocking(e, move |e| e.start_elicitation(&pid))),
        )
        .route(
            "/projects/{pid}/elicitation/{sid}",
            get(|State(e): State<Shared>, Path((pid, sid)): Path<(String, String)>| {
                blocking(e, move |e| {
                    ops::elicitation_in_project(e, &pid, &sid)?;
                    e.elicitation(&sid)
                })
            }),
        )
        .route(
            "/projects/{pid}/elicitation/{sid}/messages",
            post(|State(e): State<Shared>, Path((pid, sid)): Path<(String, String)>, Body(b): Body<TextBody>| {
                blocking(e, move |e| {
                    ops::elicitation_in_project(e, &pid, &sid)?;
                    e.elicitation_message(&sid, &b.text)
                })
            }),
        )
        .route(
            "/projects/{pid}/elicitation/{sid}/finalize",
            post(|State(e): State<Shared>, Path((pid, sid)): Path<(String, String)>| {
                blocking(e, move |e| {
                    ops::elicitation_in_project(e, &pid, &sid)?;
                    e.finalize_elicitation(&sid)
                })
            }),
        )
        .route(
            "/projects/{pid}/elicitation/{sid}/abandon",
            post(|State(e): State<Shared>, Path((pid, sid)): Path<(String, String)>| {
                blocking(e, move |e| {
                    ops::elicitation_in_project(e, &pid, &sid)?;
                    e.abandon_elicitation(&sid)
                })
            }),
        )
        .route(
            "/projects/{pid}/sessions",
            post(|State(e): State<Shared>, Path(pid): Path<String>, Body(b): Body<StartSession>| {
                blocking(e, move |e| ops::start_session(e, &pid, &b.prompt_version_id))
            }),
        )
        .route("/sessions/{sid}", get(|State(e): State<Shared>, Path(sid): Path<String>| blocking(e, move |e| e.session(&sid))))
        .route(
            "/sessions/{sid}/turns",
            post(|State(e): State<Shared>, Path(sid): Path<String>, Body(b): Body<TextBody>| {
                blocking(e, move |e| e.user_turn(&sid, &b.text))
            }),
        )
        .route(
            "/sessions/{sid}/end",
            post(|State(e): State<Shared>, Path(sid): Path<String>| blocking(e, move |e| e.end_session(&sid))),
        )
        .route(
            "/transcripts/{tid}",
            get(|State(e): State<Shared>, Path(tid): Path<String>| blocking(e, move |e| e.transcript(&tid))),
        )
        .route(
            "/transcripts/{tid}/annotations",
            get(|State(e): State<Shared>, Path(tid): Path<String>| blocking(e, move |e| e.annotations(&tid))).post(
                |State(e): State<Shared>, Path(tid): Path<String>, Body(b): Body<NewAnnotation>| {
                    blocking(e, move |e| e.add_annotation(&tid, b.span, &b.tags, b.comment))
                },
            ),
        )
        .route(
            "/transcripts/{tid}/conflicts",
            get(|State(e): State<Shared>, Path(tid): Path<String>| blocking(e, move |e| e.conflicts(&tid))),
        )
        .route(
            "/transcripts/{tid}/digest",
            get(|State(e): State<Shared>, Path(tid): Path<String>| blocking(e, move |e| ops::digest(e, &tid))),
        )
        .route(
            "/suggestions/{sid}",
            get(|State(e): State<Shared>, Path(sid): Path<String>| blocking(e, move |e| e.suggestion_set(&sid))),
        )
        .route(
            "/suggestions/{sid}/edit",
            post(
                |State(e): State<Shared>,
                 Path(sid): Path<String>,
                 Body(b): Body<ace_core::refinement::SuggestionLists>| {
                    blocking(e, move |e| e.edit_suggestions(&sid, b))
                },
            ),
        )
        .route("/versions/{vid}", get(|State(e): State<Shared>, Path(vid): Path<String>| blocking(e, move |e| e.version(&vid))))
        .route(
            "/versions/{vid}/suggestions",
            post(|State(e): State<Shared>, Path(vid): Path<String>, Body(b): Body<SuggestRequest>| {
                blocking(e, move |e| e.generate_suggestions(&vid, &b.transcript_id))
            }),
        )
        .route(
            "/versions/{vid}/refine",
            post(|State(e): State<Shared>, Path(vid): Path<String>, Body(b): Body<RefineRequest>| {
                blocking(e, move |e| e.refine(&vid, &b.suggestion_set_id, b.edited))
            }),
        )
        .route(
            "/versions/{vid}/revert",
            post(|State(e): State<Shared>, Path(vid): Path<String>| blocking(e, move |e| e.revert(&vid))),
        )
        .route(
            "/versions/{vid}/lineage",
            get(|State(e): State<Shared>, Path(vid): Path<String>| blocking(e, move |e| e.lineage(&vid))),
        )
        .route(
            "/versions/{vid}/analysis",
            get(
                |State(e): State<Shared>, Path(vid): Path<String>, Query(q): Query<HashMap<String, String>>| async move {
                    let mode = analysis_mode(&q)?;
                    blocking(e, move |e| e.analyze_version(&vid, mode)).await
                },
            ),
        )
        .route(
            "/versions/{a}/diff/{b}",
            get(|State(e): State<Shared>, Path((a, b)): Path<(String, String)>| blocking(e, move |e| ops::diff(e, &a, &b))),
        )
        .route(
            "/analyze",
            post(|State(e): State<Shared>, Body(b): Body<AnalyzeRequest>| {
                blocking(e, move |e| e.analyze_text(&b.text, b.mode))
            }),
        )
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(engine)
}

/// Binds a listener, mapping failure to [`CliError::Bind`].
pub async fn bind(addr: &str) -> Result<tokio::net::TcpListener, CliError> {
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Bind { addr: addr.to_string(), message: e.to_string() })
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve_until<F>(engine: Shared, listener: tokio::net::TcpListener, shutdown: F) -> Result<(), CliError>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| CliError::Io(e.to_string()))
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

/// Runs the service on a fresh runtime until a shutdown signal arrives.
pub fn serve(engine: Engine, addr: &str) -> Result<(), CliError> {
    let runtime =
        tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| CliError::Io(e.to_string()))?;
    let engine = Arc::new(engine);
    let result = runtime.block_on(async {
        let listener = bind(addr).await?;
        let local = listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?;
        tracing::info!(%local, "listening");
        eprintln!("listening on http://{local}");
        serve_until(engine.clone(), listener, shutdown_signal()).await
    });
    drop(runtime);
    result
}
