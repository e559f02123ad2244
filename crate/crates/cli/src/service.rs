//! HTTP/JSON evaluation service.
//!
//! Routes live under `/api/v1`; anything else is served from the static
//! directory when one is configured. Every response depends only on the
//! databases and the query.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use quixo_core::play::{self, Policy};
use quixo_core::{Database, Error};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::{eval_view, EvalView, MoveView, Position};

#[derive(Clone)]
pub struct AppState {
    dbs: Arc<BTreeMap<usize, Arc<Database>>>,
}

impl AppState {
    /// Later databases of the same size replace earlier ones.
    pub fn new(dbs: impl IntoIterator<Item = Database>) -> AppState {
        let dbs = dbs.into_iter().map(|d| (d.n(), Arc::new(d))).collect();
        AppState { dbs: Arc::new(dbs) }
    }

    fn db(&self, size: usize) -> Result<Arc<Database>, ApiError> {
        self.dbs.get(&size).cloned().ok_or_else(|| ApiError {
            status: StatusCode::NOT_FOUND,
            message: format!("no database loaded for size {size}"),
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl From<Error> for ApiError {
    fn from(e: Error) -> ApiError {
        let status = match e {
            Error::Parse { .. } | Error::IllegalMove(_) => StatusCode::BAD_REQUEST,
            Error::TerminalState | Error::PolicyInapplicable { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(serde_json::json!({ "error": self.message }));
        (self.status, body).into_response()
    }
}

#[derive(Deserialize)]
struct EvalQuery {
    size: usize,
    state: String,
}

#[derive(Deserialize)]
struct BestMoveQuery {
    size: usize,
    state: String,
    policy: Option<String>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct BestMoveView {
    size: usize,
    policy: Policy,
    #[serde(rename = "move")]
    mv: MoveView,
    board_after: String,
    /// Value of the chosen move for the player making it.
    outcome: quixo_core::Outcome,
    step: Option<u8>,
}

#[derive(Serialize)]
struct SizeInfo {
    size: usize,
    with_steps: bool,
    complete: bool,
    classes: usize,
}

#[derive(Serialize)]
struct MetaView {
    version: &'static str,
    sizes: Vec<SizeInfo>,
    policies: Vec<&'static str>,
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: e.to_string(),
    })?
}

async fn eval(
    State(app): State<AppState>,
    Query(q): Query<EvalQuery>,
) -> Result<Json<EvalView>, ApiError> {
    let db = app.db(q.size)?;
    blocking(move || {
        let pos = Position::parse(db.board(), &q.state)?;
        Ok(Json(eval_view(&db, pos)?.1))
    })
    .await
}

async fn bestmove(
    State(app): State<AppState>,
    Query(q): Query<BestMoveQuery>,
) -> Result<Json<BestMoveView>, ApiError> {
    let db = app.db(q.size)?;
    let policy = match q.policy.as_deref() {
        None => Policy::FastestWin,
        Some(p) => Policy::parse(p).ok_or_else(|| ApiError {
            status: StatusCode::BAD_REQUEST,
            message: format!("unknown policy {p:?}"),
        })?,
    };
    blocking(move || {
        let board = db.board();
        let pos = Position::parse(board, &q.state)?;
        let eval = play::evaluate(&db, pos.state)?;
        let mut rng = match q.seed {
            Some(seed) => rand::rngs::StdRng::seed_from_u64(seed),
            None => rand::rngs::StdRng::from_entropy(),
        };
        let mv = play::choose(&eval, policy, &mut rng)?;
        let chosen = eval
            .moves
            .iter()
            .find(|m| m.mv == mv)
            .expect("chosen from the evaluation");
        Ok(Json(BestMoveView {
            size: board.n(),
            policy,
            mv: MoveView::new(board, mv),
            board_after: pos.after(chosen.child).render(board),
            outcome: chosen.outcome,
            step: chosen.step,
        }))
    })
    .await
}

async fn meta(State(app): State<AppState>) -> Json<MetaView> {
    let sizes = app
        .dbs
        .values()
        .map(|db| SizeInfo {
            size: db.n(),
            with_steps: db.has_steps(),
            complete: db.manifest().complete,
            classes: db.manifest().classes.len(),
        })
        .collect();
    Json(MetaView {
        version: env!("CARGO_PKG_VERSION"),
        sizes,
        policies: Policy::ALL.iter().map(|p| p.name()).collect(),
    })
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/eval", get(eval))
        .route("/bestmove", get(bestmove))
        .route("/meta", get(meta));
    let app = Router::new().nest("/api/v1", api).with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

pub async fn serve(
    addr: SocketAddr,
    state: AppState,
    static_dir: Option<PathBuf>,
) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, static_dir)).await?;
    Ok(())
}
