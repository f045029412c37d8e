//! HTTP routes: search, analytics, client info and crawl administration.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{ConnectInfo, Path, Query, State};
use axum::http::header::{COOKIE, SET_COOKIE, USER_AGENT};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use blogsearch_core::activity::{ActivityLog, ClientInfo, LogError, SearchLogEntry};
use blogsearch_core::analyzer::{Taxonomy, TaxonomyAnalyzer};
use blogsearch_core::cluster::{cluster_results, ClusterNode};
use blogsearch_core::doc_model::BlogPostDocument;
use blogsearch_core::index::{Index, IndexError};
use blogsearch_core::parser::{RuleError, RuleSet};
use blogsearch_core::query::{
    execute, parse_query_with, set_filter, Query as ParsedQuery, QueryError,
};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tower_http::services::ServeDir;
use url::Url;

use crate::config::ServiceConfig;
use crate::jobs::{CrawlContext, JobQueue, JobStatus};

pub const USER_COOKIE: &str = "uid";
/// Largest `size` accepted by /search.
pub const MAX_PAGE_SIZE: usize = 100;
const DEFAULT_LIST_LEN: usize = 10;
/// Filter parameters in the order they are echoed into the logged query.
pub const FILTER_PARAMS: [&str; 7] = [
    "host", "year", "author", "category", "keyword", "title", "url",
];

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Taxonomy(#[from] blogsearch_core::analyzer::TaxonomyError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
}

struct Shared {
    config: ServiceConfig,
    index: Index,
    log: Mutex<ActivityLog>,
    jobs: JobQueue,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    /// Opens (or creates) the index and log named by `config` and starts the
    /// crawl worker. Must run inside a tokio runtime.
    pub fn new(config: ServiceConfig) -> Result<AppState, StartupError> {
        config.prepare_dirs()?;
        let index = Index::open_or_create(&config.index_dir)?;
        let log = ActivityLog::open(&config.log_path, config.log_max_entries)?;
        let rules = match &config.rules_path {
            Some(p) => RuleSet::load(p)?,
            None => RuleSet::default(),
        };
        let taxonomy = match &config.taxonomy_path {
            Some(p) => Taxonomy::load(p)?,
            None => Taxonomy::default(),
        };
        let jobs = JobQueue::start(CrawlContext {
            index: index.clone(),
            rules: Arc::new(rules),
            analyzer: Arc::new(TaxonomyAnalyzer::new(taxonomy)),
            delay: config.crawl_delay,
            user_agent: config.user_agent.clone(),
            fixture_dir: config.fixture_dir.clone(),
        });
        Ok(AppState(Arc::new(Shared {
            config,
            index,
            log: Mutex::new(log),
            jobs,
        })))
    }

    pub fn index(&self) -> &Index {
        &self.0.index
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.0.config
    }
}

pub fn router(state: AppState) -> Router {
    let mut app = Router::new()
        .route("/search", get(search))
        .route("/analytics/recent", get(recent))
        .route("/analytics/top", get(top))
        .route("/whoami", get(whoami))
        .route("/admin/crawl", post(admin_crawl))
        .route("/admin/jobs/{id}", get(admin_job));
    if let Some(dir) = &state.config().ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    app.with_state(state)
}

/// JSON error body `{"error": {"code", "message"}}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        let status = match e {
            QueryError::Index(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<IndexError> for ApiError {
    fn from(e: IndexError) -> Self {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "index_error",
            e.to_string(),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

/// The caller's user token and whether it has to be issued.
struct UserToken {
    token: String,
    fresh: bool,
}

fn valid_token(t: &str) -> bool {
    URL_SAFE_NO_PAD.decode(t).is_ok_and(|b| b.len() == 16)
}

fn user_token(headers: &HeaderMap) -> UserToken {
    let existing = headers
        .get_all(COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .filter_map(|pair| pair.trim().split_once('='))
        .find(|(name, value)| *name == USER_COOKIE && valid_token(value));
    match existing {
        Some((_, value)) => UserToken {
            token: value.to_string(),
            fresh: false,
        },
        None => UserToken {
            token: URL_SAFE_NO_PAD.encode(rand::random::<[u8; 16]>()),
            fresh: true,
        },
    }
}

impl UserToken {
    fn attach(&self, mut response: Response) -> Response {
        if self.fresh {
            let cookie = format!(
                "{USER_COOKIE}={}; Path=/; HttpOnly; SameSite=Lax",
                self.token
            );
            if let Ok(v) = HeaderValue::from_str(&cookie) {
                response.headers_mut().append(SET_COOKIE, v);
            }
        }
        response
    }
}

fn client_info(headers: &HeaderMap, peer: SocketAddr) -> ClientInfo {
    let ua = headers
        .get(USER_AGENT)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("");
    ClientInfo::from_request(ua, Some(peer.ip()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum View {
    Traditional,
    Clustered,
}

#[derive(Debug, Serialize)]
struct HitView {
    rank: usize,
    doc: u32,
    score: f64,
    title: String,
    link: String,
    snippet: String,
    date: Option<String>,
    categories: Vec<String>,
    keywords: Vec<String>,
    author: String,
    blog_title: String,
    blog_url: String,
    generator: String,
    comment_count: usize,
    matched_fields: Vec<&'static str>,
}

/// The query string as typed plus the filter parameters, as recorded in the log.
fn logged_query(params: &HashMap<String, String>) -> String {
    let mut parts = Vec::new();
    if let Some(q) = params.get("q").map(|q| q.trim()).filter(|q| !q.is_empty()) {
        parts.push(q.to_string());
    }
    for key in FILTER_PARAMS {
        if let Some(v) = params.get(key).map(|v| v.trim()).filter(|v| !v.is_empty()) {
            if v.contains(char::is_whitespace) {
                parts.push(format!("{key}:\"{v}\""));
            } else {
                parts.push(format!("{key}:{v}"));
            }
        }
    }
    parts.join(" ")
}

fn number_param(params: &HashMap<String, String>, key: &str) -> Result<Option<usize>, ApiError> {
    match params.get(key).map(|v| v.trim()).filter(|v| !v.is_empty()) {
        None => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|_| {
            ApiError::bad_request(
                "invalid_parameter",
                format!("{key} must be a non-negative integer"),
            )
        }),
    }
}

fn build_query(
    state: &AppState,
    params: &HashMap<String, String>,
) -> Result<ParsedQuery, ApiError> {
    let reader = state.index().reader();
    let mut query = match params.get("q").map(|q| q.trim()).filter(|q| !q.is_empty()) {
        Some(q) => match parse_query_with(q, reader.tokenizer()) {
            Ok(query) => query,
            // Stopword-only text may still be narrowed by filter parameters.
            Err(QueryError::EmptyQuery) => ParsedQuery::default(),
            Err(e) => return Err(e.into()),
        },
        None => ParsedQuery::default(),
    };
    for key in FILTER_PARAMS {
        if let Some(v) = params.get(key).map(|v| v.trim()).filter(|v| !v.is_empty()) {
            if !set_filter(&mut query.filters, key, v) {
                return Err(ApiError::bad_request(
                    "invalid_filter",
                    format!("invalid value for filter {key}: {v:?}"),
                ));
            }
        }
    }
    if query.is_empty() {
        return Err(QueryError::EmptyQuery.into());
    }
    Ok(query)
}

fn run_search(state: &AppState, params: &HashMap<String, String>) -> Result<Value, ApiError> {
    let view = match params.get("view").map(String::as_str) {
        None | Some("") | Some("traditional") => View::Traditional,
        Some("clustered") => View::Clustered,
        Some(other) => {
            return Err(ApiError::bad_request(
                "invalid_view",
                format!("view must be traditional or clustered, not {other:?}"),
            ))
        }
    };
    let page = number_param(params, "page")?.unwrap_or(1);
    let size = number_param(params, "size")?.unwrap_or(state.config().page_size);
    if size > MAX_PAGE_SIZE {
        return Err(ApiError::bad_request(
            "invalid_page_size",
            format!("size must be at most {MAX_PAGE_SIZE}"),
        ));
    }
    let max_clusters = number_param(params, "max_clusters")?;
    let query = build_query(state, params)?;

    let reader = state.index().reader();
    let result = execute(&query, &reader, page, size)?;
    let docs = result
        .hits
        .iter()
        .map(|h| reader.stored_document(h.doc))
        .collect::<Result<Vec<BlogPostDocument>, _>>()?;
    let pages: Vec<usize> = (1..=result.total_pages).collect();
    let mut body = json!({
        "view": if view == View::Clustered { "clustered" } else { "traditional" },
        "query": logged_query(params),
        "total": result.total,
        "page": result.page,
        "size": result.size,
        "total_pages": result.total_pages,
        "pages": pages,
    });
    match view {
        View::Traditional => {
            let first_rank = (result.page - 1) * result.size + 1;
            let hits: Vec<HitView> = result
                .hits
                .iter()
                .zip(docs)
                .enumerate()
                .map(|(i, (hit, doc))| HitView {
                    rank: first_rank + i,
                    doc: hit.doc,
                    score: hit.score,
                    date: doc.post_date.map(|d| d.format("%Y-%m-%d").to_string()),
                    title: doc.post_title,
                    link: doc.post_url,
                    snippet: hit.snippet.clone(),
                    categories: doc.categories,
                    keywords: doc.keywords,
                    author: doc.post_author,
                    blog_title: doc.blog_title,
                    blog_url: doc.blog_url,
                    generator: doc.generator.as_str().to_string(),
                    comment_count: doc.post_comments.len(),
                    matched_fields: hit.matched_fields.clone(),
                })
                .collect();
            body["hits"] = json!(hits);
        }
        View::Clustered => {
            let mut tree = cluster_results(&result.hits, &docs);
            if let Some(max) = max_clusters {
                tree.truncate(max);
            }
            let clusters: &[ClusterNode] = &tree.clusters;
            body["clusters"] = json!(clusters);
        }
    }
    Ok(body)
}

async fn search(
    State(state): State<AppState>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let user = user_token(&headers);
    let outcome = run_search(&state, &params);
    let entry = SearchLogEntry {
        user: user.token.clone(),
        query: logged_query(&params),
        timestamp: Utc::now(),
        client: client_info(&headers, peer),
    };
    if let Err(e) = state.0.log.lock().unwrap().record_search(entry) {
        log::error!("search log: {e}");
    }
    let response = match outcome {
        Ok(body) => Json(body).into_response(),
        Err(e) => e.into_response(),
    };
    user.attach(response)
}

fn list_len(params: &HashMap<String, String>) -> Result<usize, ApiError> {
    Ok(number_param(params, "n")?.unwrap_or(DEFAULT_LIST_LEN))
}

async fn recent(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let user = user_token(&headers);
    let response = match list_len(&params) {
        Ok(n) => {
            let queries = if user.fresh {
                Vec::new()
            } else {
                state.0.log.lock().unwrap().recent_searches(&user.token, n)
            };
            Json(queries).into_response()
        }
        Err(e) => e.into_response(),
    };
    user.attach(response)
}

#[derive(Debug, Serialize)]
struct TopQuery {
    query: String,
    count: u64,
}

async fn top(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<Vec<TopQuery>>, ApiError> {
    let n = list_len(&params)?;
    let top = state.0.log.lock().unwrap().top_queries(n);
    Ok(Json(
        top.into_iter()
            .map(|(query, count)| TopQuery { query, count })
            .collect(),
    ))
}

async fn whoami(
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
) -> Json<ClientInfo> {
    Json(client_info(&headers, peer))
}

#[derive(Debug, Deserialize)]
struct CrawlRequest {
    root_url: String,
    max_pages: Option<usize>,
}

fn require_local(state: &AppState, peer: SocketAddr) -> Result<(), ApiError> {
    if state.config().admin_localhost_only && !peer.ip().is_loopback() {
        return Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "forbidden",
            "admin routes are only available from localhost",
        ));
    }
    Ok(())
}

async fn admin_crawl(
    State(state): State<AppState>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    body: Result<Json<CrawlRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    require_local(&state, peer)?;
    let Json(req) = body.map_err(|e| ApiError::bad_request("invalid_request", e.body_text()))?;
    let url = Url::parse(req.root_url.trim())
        .ok()
        .filter(|u| matches!(u.scheme(), "http" | "https") && u.host().is_some())
        .ok_or_else(|| {
            ApiError::bad_request(
                "invalid_url",
                format!("not an http(s) URL: {:?}", req.root_url),
            )
        })?;
    let max_pages = req.max_pages.unwrap_or(state.config().crawl_max_pages);
    if max_pages == 0 {
        return Err(ApiError::bad_request(
            "invalid_request",
            "max_pages must be at least 1",
        ));
    }
    let id = state.0.jobs.submit(url, max_pages).map_err(|_| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "queue_full",
            "crawl queue is full",
        )
    })?;
    Ok((StatusCode::ACCEPTED, Json(json!({"job_id": id}))))
}

async fn admin_job(
    State(state): State<AppState>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    Path(id): Path<String>,
) -> Result<Json<JobStatus>, ApiError> {
    require_local(&state, peer)?;
    id.parse()
        .ok()
        .and_then(|id| state.0.jobs.status(id))
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_job", format!("no job {id}")))
}
