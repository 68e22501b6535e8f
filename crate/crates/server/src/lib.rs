//! HTTP sessions in which a person plays the matcher against a director.
//!
//! `POST /sessions` opens a game and plays the director's opening turn,
//! `POST /sessions/{id}/matcher` takes a clarification or a selection and
//! `GET /sessions/{id}` returns a snapshot. The target and the posterior stay
//! hidden until the matcher selects.

pub mod error;
pub mod session;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, Method, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use tower_http::cors::{Any, CorsLayer};

use refcomm::color::{generate_context, Condition, GenerationConfig};
use refcomm::harness::eval::make_director;
use refcomm::lexicon::Lexicon;
use refcomm::parser::Parser;
use refcomm::policies::PolicyKind;
use refcomm::rl::reward::RewardParams;

pub use error::ApiError;
pub use session::{MatcherInput, Session, SessionStore, SessionView, Status};

pub const DEFAULT_TTL: Duration = Duration::from_secs(30 * 60);

pub struct ServerConfig {
    /// Directory that `dqn:<name>` policies are resolved against.
    pub policy_dir: PathBuf,
    pub ttl: Duration,
    pub generation: GenerationConfig,
    pub rewards: RewardParams,
    pub lexicon: Lexicon,
    pub parser: Parser,
}

impl ServerConfig {
    pub fn new(policy_dir: impl Into<PathBuf>) -> refcomm::Result<Self> {
        let lexicon = Lexicon::default();
        let parser = Parser::with_lexicon(&lexicon)?;
        Ok(ServerConfig {
            policy_dir: policy_dir.into(),
            ttl: DEFAULT_TTL,
            generation: GenerationConfig::default(),
            rewards: RewardParams::default(),
            lexicon,
            parser,
        })
    }
}

pub struct App {
    config: ServerConfig,
    store: SessionStore,
}

impl App {
    pub fn new(config: ServerConfig) -> Arc<App> {
        let store = SessionStore::new(config.ttl);
        Arc::new(App { config, store })
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    /// `dqn:<name>` becomes a path inside the policy directory. Names that
    /// could escape it are rejected.
    fn resolve_policy(&self, raw: &str) -> Result<PolicyKind, ApiError> {
        let policy: PolicyKind = raw
            .parse()
            .map_err(|_| ApiError::BadRequest(format!("unknown policy {raw:?}")))?;
        let PolicyKind::Learned(name) = policy else {
            return Ok(policy);
        };
        let p = Path::new(&name);
        let plain = p.components().count() == 1
            && matches!(p.components().next(), Some(std::path::Component::Normal(_)));
        if !plain {
            return Err(ApiError::BadRequest(format!("policy name {name:?} must be a plain file name")));
        }
        let dir = &self.config.policy_dir;
        let path = [dir.join(&name), dir.join(format!("{name}.json"))]
            .into_iter()
            .find(|c| c.is_file())
            .ok_or_else(|| ApiError::NotFound(format!("weight artifact {name:?} not found")))?;
        Ok(PolicyKind::Learned(path.display().to_string()))
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    pub policy: String,
    #[serde(default)]
    pub condition: Option<String>,
    /// Fixes the generated context; random when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::BadRequest(e.body_text()))
}

async fn create_session(
    State(app): State<Arc<App>>,
    payload: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let req = body(payload)?;
    let mut rng = match req.seed {
        Some(s) => ChaCha8Rng::seed_from_u64(s),
        None => ChaCha8Rng::from_rng(&mut rand::rng()),
    };
    let condition = match req.condition.as_deref() {
        Some(c) => c
            .parse::<Condition>()
            .map_err(|_| ApiError::BadRequest(format!("unknown condition {c:?}")))?,
        None => Condition::ALL[rng.random_range(0..3)],
    };
    let policy = app.resolve_policy(&req.policy)?;
    let director = make_director(&policy)?;
    let context = generate_context(condition, &app.config.generation, &mut rng)?;
    let id = uuid::Uuid::new_v4().to_string();
    let session = Session::start(id, policy, director, context, &app.config.lexicon)?;
    let view = session.view();
    let now = Instant::now();
    app.store.evict_expired(now);
    app.store.insert(session, now);
    Ok((StatusCode::CREATED, Json(view)))
}

fn lookup(app: &App, id: &str) -> Result<Arc<std::sync::Mutex<Session>>, ApiError> {
    app.store
        .get(id, Instant::now())
        .ok_or_else(|| ApiError::NotFound(format!("no session {id:?}")))
}

async fn get_session(
    State(app): State<Arc<App>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SessionView>, ApiError> {
    let session = lookup(&app, &id)?;
    let view = session.lock().expect("session lock").view();
    Ok(Json(view))
}

async fn matcher_move(
    State(app): State<Arc<App>>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<MatcherInput>, JsonRejection>,
) -> Result<Json<SessionView>, ApiError> {
    let session = lookup(&app, &id)?;
    let input = body(payload)?;
    let mut s = session.lock().expect("session lock");
    s.matcher_move(&input, &app.config.parser, &app.config.lexicon, &app.config.rewards)?;
    Ok(Json(s.view()))
}

pub fn router(app: Arc<App>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/matcher", post(matcher_move))
        .layer(cors)
        .with_state(app)
}

/// Serve until the process is stopped, evicting idle sessions once a minute.
pub async fn serve(addr: SocketAddr, config: ServerConfig) -> std::io::Result<()> {
    let app = App::new(config);
    let sweeper = app.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            sweeper.store.evict_expired(Instant::now());
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(app)).await
}
