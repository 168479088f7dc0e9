//! Read-only HTTP API over a loaded graph.
//!
//! | route                                  | answer                          |
//! |----------------------------------------|---------------------------------|
//! | `GET /api/graph?limit=&offset=`        | nodes and links                 |
//! | `GET /api/query?q=`                    | [`QueryResponse`]               |
//! | `GET /api/component/{id}`              | versions, relation count, stats |
//! | `GET /api/relation?a=&va=&b=&vb=`      | one relation with its posts     |
//! | `GET /api/stats/top?k=`                | per-layer top components        |
//! | `POST /api/check`                      | environment issues              |
//!
//! Every body carries `schema_version`. Failures are 4xx with
//! `{schema_version, code, message}`.

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query as UrlQuery, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};

use crate::checker::{check_with_unknown, EntryInput, EnvironmentSpec, Issue, UnknownPair};
use crate::dictionary::{Dictionary, Layer};
use crate::error::{Error, Result};
use crate::graph::{load_graph, KnowledgeGraph, LinkRecord, GRAPH_FORMAT_VERSION};
use crate::inference::Label;
use crate::pipeline::read_posts;
use crate::query::{parse_query, resolve, top_components, LayerStats, QueryResponse};
use crate::recognizer::{Recognizer, VersionedComponent};
use crate::version::Version;
use crate::SCHEMA_VERSION;

pub const DEFAULT_URL_TEMPLATE: &str = "https://stackoverflow.com/questions/{id}";
pub const DEFAULT_PORT: u16 = 8080;

/// Library metadata shown next to a component.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub component_id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub license: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dependencies: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homepage: Option<String>,
}

/// Reads a JSON array of [`ComponentStats`]; ids go through the dictionary.
pub fn load_stats(path: &Path, dict: &Dictionary) -> Result<BTreeMap<String, ComponentStats>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let list: Vec<ComponentStats> =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    let mut out = BTreeMap::new();
    for mut s in list {
        let id = dict
            .resolve(&s.component_id)
            .ok_or_else(|| Error::format(path, format!("unknown component {:?}", s.component_id)))?
            .id
            .clone();
        s.component_id = id.clone();
        if out.insert(id.clone(), s).is_some() {
            return Err(Error::format(path, format!("{id} listed twice")));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PostRef {
    pub post_id: u64,
    pub title: String,
    pub url: String,
    pub votes: i64,
    pub label: Label,
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub graph: PathBuf,
    pub stats: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    /// Corpus file used for post titles in relation details.
    pub posts: Option<PathBuf>,
    pub cors_origin: Option<String>,
    pub url_template: String,
}

impl ServiceConfig {
    pub fn new(graph: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            graph: graph.into(),
            stats: None,
            dictionary: None,
            posts: None,
            cors_origin: None,
            url_template: DEFAULT_URL_TEMPLATE.into(),
        }
    }
}

/// Everything a handler reads. Immutable once built.
pub struct AppState {
    pub graph: KnowledgeGraph,
    pub recognizer: Recognizer,
    pub stats: BTreeMap<String, ComponentStats>,
    pub titles: HashMap<u64, String>,
    pub url_template: String,
}

impl AppState {
    pub fn new(graph: KnowledgeGraph, dict: Dictionary) -> AppState {
        AppState {
            graph,
            recognizer: Recognizer::new(dict),
            stats: BTreeMap::new(),
            titles: HashMap::new(),
            url_template: DEFAULT_URL_TEMPLATE.into(),
        }
    }

    pub fn load(cfg: &ServiceConfig) -> Result<AppState> {
        let dict = Dictionary::load_or_builtin(cfg.dictionary.as_deref())?;
        let graph = load_graph(&cfg.graph)?;
        let mut state = AppState::new(graph, dict);
        if let Some(p) = &cfg.stats {
            state.stats = load_stats(p, state.recognizer.dictionary())?;
        }
        if let Some(p) = &cfg.posts {
            let posts = read_posts(p)?;
            let question_titles: HashMap<u64, String> =
                posts.iter().map(|p| (p.id, p.title.clone())).collect();
            for post in &posts {
                let title = match (post.title.is_empty(), post.parent_id) {
                    (true, Some(parent)) => {
                        question_titles.get(&parent).cloned().unwrap_or_default()
                    }
                    _ => post.title.clone(),
                };
                state.titles.insert(post.id, title);
            }
        }
        state.url_template = cfg.url_template.clone();
        Ok(state)
    }

    fn post_url(&self, id: u64) -> String {
        self.url_template.replace("{id}", &id.to_string())
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code,
            message: message.into(),
        }
    }

    fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            code,
            message: message.into(),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    schema_version: u32,
    code: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            schema_version: SCHEMA_VERSION,
            code: self.code,
            message: &self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type Params = UrlQuery<HashMap<String, String>>;
type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

fn param<'a>(
    params: &'a HashMap<String, String>,
    name: &str,
) -> std::result::Result<&'a str, ApiError> {
    params
        .get(name)
        .map(String::as_str)
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| {
            ApiError::bad_request(
                "missing_parameter",
                format!("query parameter {name:?} is required"),
            )
        })
}

fn number(
    params: &HashMap<String, String>,
    name: &str,
    default: usize,
) -> std::result::Result<usize, ApiError> {
    match params.get(name) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| {
            ApiError::bad_request(
                "invalid_parameter",
                format!("{name} must be a non-negative integer, got {v:?}"),
            )
        }),
    }
}

#[derive(Serialize)]
struct GraphResponse {
    schema_version: u32,
    format_version: u32,
    total_nodes: usize,
    total_links: usize,
    nodes: Vec<VersionedComponent>,
    links: Vec<LinkRecord>,
}

async fn graph_handler(
    State(st): State<Arc<AppState>>,
    UrlQuery(params): Params,
) -> ApiResult<GraphResponse> {
    let g = &st.graph;
    let offset = number(&params, "offset", 0)?;
    let limit = number(&params, "limit", usize::MAX)?;
    let paged = params.contains_key("offset") || params.contains_key("limit");
    let links: Vec<LinkRecord> = g
        .links()
        .iter()
        .skip(offset)
        .take(limit)
        .map(LinkRecord::from)
        .collect();
    let nodes = if paged {
        let mut touched: Vec<VersionedComponent> = links
            .iter()
            .flat_map(|l| [l.a.clone(), l.b.clone()])
            .collect();
        touched.sort_by_key(VersionedComponent::key);
        touched.dedup();
        touched
    } else {
        g.nodes().to_vec()
    };
    Ok(Json(GraphResponse {
        schema_version: SCHEMA_VERSION,
        format_version: GRAPH_FORMAT_VERSION,
        total_nodes: g.nodes().len(),
        total_links: g.links().len(),
        nodes,
        links,
    }))
}

/// The query path shared with the command line.
pub fn answer_query(state: &AppState, text: &str) -> Result<QueryResponse> {
    let q = parse_query(text, &state.recognizer)?;
    Ok(resolve(&state.graph, &q))
}

async fn query_handler(
    State(st): State<Arc<AppState>>,
    UrlQuery(params): Params,
) -> ApiResult<QueryResponse> {
    let text = param(&params, "q")?;
    answer_query(&st, text)
        .map(Json)
        .map_err(|e| ApiError::bad_request("unrecognized_query", e.to_string()))
}

#[derive(Serialize)]
struct ComponentResponse {
    schema_version: u32,
    component: String,
    layer: Layer,
    versions: Vec<Version>,
    relations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    stats: Option<ComponentStats>,
}

async fn component_handler(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<ComponentResponse> {
    let entry = st.recognizer.dictionary().resolve(&id).ok_or_else(|| {
        ApiError::not_found("unknown_component", format!("no component named {id:?}"))
    })?;
    let nodes = st.graph.nodes_of(&entry.id);
    let mut links: Vec<usize> = nodes
        .iter()
        .flat_map(|&n| st.graph.incident(n).iter().copied())
        .collect();
    links.sort_unstable();
    links.dedup();
    Ok(Json(ComponentResponse {
        schema_version: SCHEMA_VERSION,
        component: entry.id.clone(),
        layer: entry.layer,
        versions: nodes
            .iter()
            .map(|&n| st.graph.node(n).version.clone())
            .collect(),
        relations: links.len(),
        stats: st.stats.get(&entry.id).cloned(),
    }))
}

#[derive(Serialize)]
struct RelationResponse {
    schema_version: u32,
    a: VersionedComponent,
    b: VersionedComponent,
    label: Label,
    confidence: f64,
    n_compatible: u64,
    n_incompatible: u64,
    posts: Vec<PostRef>,
}

async fn relation_handler(
    State(st): State<Arc<AppState>>,
    UrlQuery(params): Params,
) -> ApiResult<RelationResponse> {
    let node = |name: &str, ver: &str| -> std::result::Result<VersionedComponent, ApiError> {
        let name = param(&params, name)?;
        let ver = param(&params, ver)?;
        let entry = st.recognizer.dictionary().resolve(name).ok_or_else(|| {
            ApiError::not_found("unknown_component", format!("no component named {name:?}"))
        })?;
        let version = Version::parse(ver).map_err(|_| {
            ApiError::bad_request("invalid_version", format!("not a version: {ver:?}"))
        })?;
        Ok(VersionedComponent::new(&entry.id, entry.layer, version))
    };
    let (x, y) = (node("a", "va")?, node("b", "vb")?);
    let rel = st.graph.relation_between(&x, &y).ok_or_else(|| {
        ApiError::not_found("no_relation", format!("no relation between {x} and {y}"))
    })?;
    let posts = rel
        .evidence
        .iter()
        .map(|e| PostRef {
            post_id: e.post_id,
            title: st.titles.get(&e.post_id).cloned().unwrap_or_default(),
            url: st.post_url(e.post_id),
            votes: e.votes,
            label: match e.label {
                crate::graph::Stance::Compatible => Label::Compatible,
                crate::graph::Stance::Incompatible => Label::Incompatible,
            },
        })
        .collect();
    Ok(Json(RelationResponse {
        schema_version: SCHEMA_VERSION,
        a: rel.a.clone(),
        b: rel.b.clone(),
        label: rel.label(),
        confidence: rel.confidence().value(),
        n_compatible: rel.n_compatible,
        n_incompatible: rel.n_incompatible,
        posts,
    }))
}

#[derive(Serialize)]
struct TopResponse {
    schema_version: u32,
    k: usize,
    layers: Vec<LayerStats>,
}

async fn top_handler(
    State(st): State<Arc<AppState>>,
    UrlQuery(params): Params,
) -> ApiResult<TopResponse> {
    let k = number(&params, "k", 5)?;
    Ok(Json(TopResponse {
        schema_version: SCHEMA_VERSION,
        k,
        layers: top_components(&st.graph, k),
    }))
}

/// Body of `POST /api/check`: structured entries or requirements-style text.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckRequest {
    #[serde(default)]
    pub entries: Vec<EntryInput>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub report_unknown: bool,
}

#[derive(Serialize)]
struct CheckResponse {
    schema_version: u32,
    entries: Vec<VersionedComponent>,
    issues: Vec<Issue>,
    diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    unknown_pairs: Option<Vec<UnknownPair>>,
}

async fn check_handler(
    State(st): State<Arc<AppState>>,
    body: std::result::Result<Json<CheckRequest>, JsonRejection>,
) -> ApiResult<CheckResponse> {
    let Json(req) = body.map_err(|e| ApiError::bad_request("invalid_body", e.body_text()))?;
    let dict = st.recognizer.dictionary();
    let env = match (&req.text, req.entries.is_empty()) {
        (Some(_), false) => {
            return Err(ApiError::bad_request(
                "invalid_body",
                "give either entries or text, not both",
            ))
        }
        (Some(text), true) => EnvironmentSpec::parse_str(text, "request", dict),
        (None, _) => EnvironmentSpec::from_entries(&req.entries, "request", dict),
    }
    .map_err(|e| ApiError::bad_request("empty_environment", e.to_string()))?;
    let (issues, unknown) = check_with_unknown(&st.graph, &env);
    Ok(Json(CheckResponse {
        schema_version: SCHEMA_VERSION,
        entries: env.entries,
        issues,
        diagnostics: env.diagnostics,
        unknown_pairs: req.report_unknown.then_some(unknown),
    }))
}

async fn not_found() -> ApiError {
    ApiError::not_found("not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>, cors_origin: Option<&str>) -> Result<Router> {
    let cors = match cors_origin {
        None => CorsLayer::new().allow_origin(Any),
        Some(origin) => CorsLayer::new().allow_origin(
            origin
                .parse::<HeaderValue>()
                .map_err(|_| Error::Config(format!("invalid CORS origin {origin:?}")))?,
        ),
    }
    .allow_methods(Any)
    .allow_headers(Any);
    Ok(Router::new()
        .route("/api/graph", get(graph_handler))
        .route("/api/query", get(query_handler))
        .route("/api/component/{id}", get(component_handler))
        .route("/api/relation", get(relation_handler))
        .route("/api/stats/top", get(top_handler))
        .route("/api/check", post(check_handler))
        .fallback(not_found)
        .layer(cors)
        .with_state(state))
}

/// Binds and serves until `shutdown` resolves, then drains open requests.
pub async fn serve<F>(cfg: &ServiceConfig, shutdown: F) -> Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    let state = Arc::new(AppState::load(cfg)?);
    let app = router(state, cfg.cors_origin.as_deref())?;
    let addr: SocketAddr = format!("{}:{}", cfg.host, cfg.port)
        .parse()
        .map_err(|_| Error::Config(format!("invalid address {}:{}", cfg.host, cfg.port)))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    log::info!(
        "listening on http://{}",
        listener
            .local_addr()
            .map_err(|e| Error::io(addr.to_string(), e))?
    );
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Evidence, Relation, Stance};
    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use serde_json::Value;
    use tower::ServiceExt;

    fn vc(id: &str, v: &str) -> VersionedComponent {
        let dict = Dictionary::builtin();
        VersionedComponent::new(id, dict.get(id).unwrap().layer, Version::parse(v).unwrap())
    }

    fn state() -> Arc<AppState> {
        let ev = |post_id, votes, label| Evidence {
            post_id,
            votes,
            label,
        };
        let g = KnowledgeGraph::build(vec![
            Relation::from_evidence(
                vc("tensorflow", "1.13"),
                vc("cuda", "10.1"),
                vec![
                    ev(7, 2, Stance::Incompatible),
                    ev(9, 5, Stance::Incompatible),
                ],
            ),
            Relation::from_evidence(
                vc("python", "3.6.8"),
                vc("ubuntu", "16.04.6"),
                vec![ev(3, 1, Stance::Compatible)],
            ),
        ])
        .unwrap();
        let mut st = AppState::new(g, Dictionary::builtin());
        st.titles.insert(9, "tf 1.13 on cuda 10.1".into());
        st.stats.insert(
            "tensorflow".into(),
            ComponentStats {
                component_id: "tensorflow".into(),
                keywords: vec!["deep-learning".into()],
                license: Some("Apache-2.0".into()),
                dependencies: vec!["numpy".into()],
                homepage: None,
            },
        );
        Arc::new(st)
    }

    async fn call(req: Request<Body>) -> (StatusCode, Value) {
        let app = router(state(), None).unwrap();
        let resp = app.oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, serde_json::from_slice(&bytes).unwrap())
    }

    async fn get_json(uri: &str) -> (StatusCode, Value) {
        call(Request::get(uri).body(Body::empty()).unwrap()).await
    }

    async fn post_json(uri: &str, body: &str) -> (StatusCode, Value) {
        call(
            Request::post(uri)
                .header("content-type", "application/json")
                .body(Body::from(body.to_string()))
                .unwrap(),
        )
        .await
    }

    #[tokio::test]
    async fn graph_listing() {
        let (status, v) = get_json("/api/graph").await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["nodes"].as_array().unwrap().len(), 4);
        assert_eq!(v["links"].as_array().unwrap().len(), 2);

        let (_, v) = get_json("/api/graph?limit=1&offset=1").await;
        assert_eq!(v["links"].as_array().unwrap().len(), 1);
        assert_eq!(v["nodes"].as_array().unwrap().len(), 2);
        assert_eq!(v["total_links"], 2);

        let (status, v) = get_json("/api/graph?limit=x").await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(v["code"], "invalid_parameter");
    }

    #[tokio::test]
    async fn pair_query() {
        let (status, v) =
            get_json("/api/query?q=Does%20python%203.6.8%20work%20with%20ubuntu%2016.04.6%3F")
                .await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(v["kind"], "pair");
        assert_eq!(v["summary"]["verdict"], "compatible");
        assert_eq!(v["subgraph"]["links"].as_array().unwrap().len(), 1);
    }

    #[tokio::test]
    async fn query_errors() {
        let (status, v) = get_json("/api/query").await;
        assert_eq!(
            (status, v["code"].as_str()),
            (StatusCode::BAD_REQUEST, Some("missing_parameter"))
        );
        let (status, v) = get_json("/api/query?q=banana%20bread").await;
        assert_eq!(
            (status, v["code"].as_str()),
            (StatusCode::BAD_REQUEST, Some("unrecognized_query"))
        );
        assert!(v["message"].as_str().unwrap().contains("tensorflow"));
    }

    #[tokio::test]
    async fn component_detail() {
        let (status, v) = get_json("/api/component/tf").await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(v["component"], "tensorflow");
        assert_eq!(v["versions"], serde_json::json!(["1.13"]));
        assert_eq!(v["stats"]["license"], "Apache-2.0");
        let (_, v) = get_json("/api/component/docker").await;
        assert_eq!(v["relations"], 0);
        assert!(v.get("stats").is_none());
        let (status, _) = get_json("/api/component/leftpad").await;
        assert_eq!(status, StatusCode::NOT_FOUND);
    }

    #[tokio::test]
    async fn relation_detail_keeps_evidence_order() {
        let (status, v) = get_json("/api/relation?a=cuda&va=10.1&b=tensorflow&vb=1.13").await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(v["label"], "incompatible");
        let posts = v["posts"].as_array().unwrap();
        assert_eq!(posts[0]["post_id"], 9);
        assert_eq!(posts[0]["title"], "tf 1.13 on cuda 10.1");
        assert_eq!(posts[0]["url"], "https://stackoverflow.com/questions/9");
        assert_eq!(posts[1]["post_id"], 7);
        let (status, v) = get_json("/api/relation?a=cuda&va=9.0&b=tensorflow&vb=1.13").await;
        assert_eq!(
            (status, v["code"].as_str()),
            (StatusCode::NOT_FOUND, Some("no_relation"))
        );
        let (status, _) = get_json("/api/relation?a=cuda&va=10.1").await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
    }

    #[tokio::test]
    async fn top_stats() {
        let (_, v) = get_json("/api/stats/top?k=5").await;
        let layers = v["layers"].as_array().unwrap();
        assert_eq!(layers.len(), 5);
        assert_eq!(layers[0]["layer"], "library");
        assert_eq!(layers[0]["top"][0]["component"], "tensorflow");
    }

    #[tokio::test]
    async fn check_endpoint() {
        let (status, v) = post_json(
            "/api/check",
            r#"{"entries": [{"component": "tensorflow", "version": "1.13"}, {"component": "cuda", "version": "10.1", "layer": "driver"}, {"component": "leftpad", "version": "1.0"}], "report_unknown": true}"#,
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(v["issues"].as_array().unwrap().len(), 1);
        assert_eq!(v["diagnostics"].as_array().unwrap().len(), 1);
        assert_eq!(v["unknown_pairs"].as_array().unwrap().len(), 0);

        let (_, v) = post_json("/api/check", r#"{"text": "tensorflow==1.13\ncuda 10.1\n"}"#).await;
        assert_eq!(v["issues"].as_array().unwrap().len(), 1);

        let (status, v) = post_json("/api/check", "{not json").await;
        assert_eq!(
            (status, v["code"].as_str()),
            (StatusCode::BAD_REQUEST, Some("invalid_body"))
        );
        let (status, v) = post_json("/api/check", r#"{"entries": []}"#).await;
        assert_eq!(
            (status, v["code"].as_str()),
            (StatusCode::BAD_REQUEST, Some("empty_environment"))
        );
    }

    #[tokio::test]
    async fn unknown_route_is_json_404() {
        let (status, v) = get_json("/api/nothing").await;
        assert_eq!(
            (status, v["code"].as_str()),
            (StatusCode::NOT_FOUND, Some("not_found"))
        );
    }

    #[tokio::test]
    async fn cors_origin_is_configurable() {
        let app = router(state(), Some("http://localhost:5173")).unwrap();
        let resp = app
            .oneshot(
                Request::get("/api/graph")
                    .header("origin", "http://localhost:5173")
                    .body(Body::empty())
                    .unwrap(),
            )
            .await
            .unwrap();
        assert_eq!(
            resp.headers()["access-control-allow-origin"],
            "http://localhost:5173"
        );
        assert!(router(state(), Some("bad\norigin")).is_err());
    }

    #[tokio::test]
    async fn serves_and_shuts_down() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        crate::graph::save_graph(&state().graph, &path).unwrap();
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        drop(listener);
        let mut cfg = ServiceConfig::new(&path);
        cfg.port = port;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let server = tokio::spawn(async move {
            serve(&cfg, async {
                let _ = rx.await;
            })
            .await
        });
        let url = format!("http://127.0.0.1:{port}/api/stats/top");
        let body = tokio::task::spawn_blocking(move || {
            for _ in 0..50 {
                if let Ok(mut r) = ureq::get(&url).call() {
                    return r.body_mut().read_to_string().unwrap();
                }
                std::thread::sleep(std::time::Duration::from_millis(50));
            }
            panic!("server did not come up");
        })
        .await
        .unwrap();
        assert!(body.contains("\"schema_version\":1"));
        tx.send(()).unwrap();
        server.await.unwrap().unwrap();
    }
}
