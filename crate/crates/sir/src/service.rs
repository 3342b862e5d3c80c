//! JSON-over-HTTP API.

use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path as UrlPath, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use sir_core::query::run_query;
use sir_core::rules::{simulate, Combine, ImageThreshold, Seed};
use sir_core::variants::{generate, title_corpus, SoSParams};
use sir_core::{
    CodecConfig, EmbeddingVector, IngestRecord, Query, QueryTarget, RollingStore, Rule, SearchParams, StoreConfig,
    TextPredicate, Timestamp,
};
use tokio::sync::OnceCell;

use crate::bench::{self, BenchSpec};
use crate::clock::{utc_now, MonotonicClock};
use crate::error::{Result, SirError};
use crate::formats::{join_records, parse_jsonl, MetaRecord};
use crate::jobs::{Jobs, StoredItem, SweepInput};
use crate::rulebook::RuleBook;
use crate::sirv::SirvReader;
use crate::storedir::StoreDir;
use crate::stream::ConsumeStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub store_dir: PathBuf,
    pub codec: CodecConfig,
    #[serde(default = "default_window")]
    pub window_days: i64,
    #[serde(default = "default_bucket")]
    pub bucket_days: i64,
    #[serde(default = "yes")]
    pub store_embeddings: bool,
    /// Snapshot directory of the sampled store used for rule simulation.
    #[serde(default)]
    pub sample_dir: Option<PathBuf>,
    /// Static files served at `/` (the analyst console build).
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    /// Take a snapshot once this many records have been logged.
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: u64,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}
fn default_window() -> i64 {
    StoreConfig::DEFAULT_WINDOW_DAYS
}
fn default_bucket() -> i64 {
    StoreConfig::DEFAULT_BUCKET_DAYS
}
fn yes() -> bool {
    true
}
fn default_checkpoint() -> u64 {
    100_000
}

impl ServiceConfig {
    pub fn new(store_dir: impl Into<PathBuf>, codec: CodecConfig) -> Self {
        Self {
            listen: default_listen(),
            store_dir: store_dir.into(),
            codec,
            window_days: default_window(),
            bucket_days: default_bucket(),
            store_embeddings: true,
            sample_dir: None,
            static_dir: None,
            checkpoint_every: default_checkpoint(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(SirError::io(path))?;
        serde_json::from_slice(&bytes).map_err(|e| SirError::parse(path.display().to_string(), e))
    }

    pub fn store_config(&self) -> StoreConfig {
        StoreConfig {
            codec: self.codec,
            window_days: self.window_days,
            bucket_days: self.bucket_days,
            store_embeddings: self.store_embeddings,
        }
    }
}

type NowFn = Arc<dyn Fn() -> Timestamp + Send + Sync>;

struct Cached {
    fingerprint: [u8; 32],
    status: StatusCode,
    content_type: Option<HeaderValue>,
    body: Bytes,
}

#[derive(Default)]
struct IdempotencyCache {
    entries: HashMap<String, Arc<OnceCell<Cached>>>,
    order: VecDeque<String>,
}

const IDEMPOTENCY_CAPACITY: usize = 10_000;

pub struct AppState {
    store: RwLock<StoreDir>,
    sample: Option<RollingStore>,
    rules: Mutex<RuleBook>,
    jobs: Jobs,
    idempotency: Mutex<IdempotencyCache>,
    clock: MonotonicClock,
    now: NowFn,
    checkpoint_every: u64,
    pending: Mutex<u64>,
}

impl AppState {
    pub fn open(config: &ServiceConfig) -> Result<Self> {
        Self::open_with_clock(config, Arc::new(utc_now))
    }

    /// Opens the store with an injected wall clock.
    pub fn open_with_clock(config: &ServiceConfig, now: NowFn) -> Result<Self> {
        let dir = StoreDir::open(&config.store_dir, Some(config.store_config()), now())?;
        let rules = RuleBook::open(&dir.rules_dir())?;
        let sample = match &config.sample_dir {
            Some(path) => {
                let (store, manifest) = crate::persist::load(path)?
                    .ok_or_else(|| SirError::Invalid(format!("no sample snapshot at {}", path.display())))?;
                if manifest.config.codec != config.codec {
                    return Err(SirError::ConfigConflict("sample store uses a different codec".into()));
                }
                Some(store)
            }
            None => None,
        };
        Ok(Self {
            store: RwLock::new(dir),
            sample,
            rules: Mutex::new(rules),
            jobs: Jobs::new(),
            idempotency: Mutex::new(IdempotencyCache::default()),
            clock: MonotonicClock::new(),
            now,
            checkpoint_every: config.checkpoint_every,
            pending: Mutex::new(0),
        })
    }

    pub fn checkpoint(&self) -> Result<()> {
        self.store.write().expect("store lock").checkpoint()?;
        *self.pending.lock().expect("pending") = 0;
        Ok(())
    }

    pub fn item_count(&self) -> usize {
        self.store.read().expect("store lock").store().item_count()
    }
}

pub struct ApiError(SirError);

impl<E: Into<SirError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let code = self.0.code();
        let status = match code {
            "not_found" => StatusCode::NOT_FOUND,
            "config_conflict" | "conflict" => StatusCode::CONFLICT,
            "io_error" | "integrity_error" => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        (status, Json(json!({ "code": code, "message": self.0.to_string() }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(SirError::Invalid(msg.into()))
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// JSON body extractor that reports rejections in the API error shape.
pub struct Body_<T>(pub T);

impl<S: Send + Sync, T: serde::de::DeserializeOwned> FromRequest<S> for Body_<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> ApiResult<Self> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| bad_request(e.body_text()))?;
        let value = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}".as_slice() } else { &bytes[..] };
        serde_json::from_slice(value)
            .map(Body_)
            .map_err(|e| ApiError(SirError::parse("request body", e)))
    }
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/status", get(status))
        .route("/items", post(post_items))
        .route("/search", post(search))
        .route("/rules", post(create_rule).get(list_rules))
        .route("/rules/{id}", get(get_rule).patch(update_rule))
        .route("/rules/{id}/simulate", post(simulate_rule))
        .route("/rules/{id}/finalize", post(finalize_rule))
        .route("/sweeps", post(start_sweep))
        .route("/sweeps/{id}", get(sweep_status))
        .route("/variants/generate", post(variants))
        .route("/bench", post(run_bench))
        .layer(middleware::from_fn_with_state(state.clone(), idempotency))
        .layer(DefaultBodyLimit::max(512 << 20))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Replays the stored response for a repeated `Idempotency-Key`. A key
/// reused with a different request body is rejected.
async fn idempotency(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if req.method() == Method::GET {
        return next.run(req).await;
    }
    let Some(key) = req.headers().get("idempotency-key").and_then(|v| v.to_str().ok()).map(String::from) else {
        return next.run(req).await;
    };
    let (parts, body) = req.into_parts();
    let bytes = match to_bytes(body, usize::MAX).await {
        Ok(b) => b,
        Err(e) => return bad_request(e.to_string()).into_response(),
    };
    let fingerprint: [u8; 32] = Sha256::digest(&bytes).into();
    let slot = format!("{} {} {key}", parts.method, parts.uri.path());
    let cell = {
        let mut cache = state.idempotency.lock().expect("idempotency cache");
        if !cache.entries.contains_key(&slot) {
            if cache.order.len() >= IDEMPOTENCY_CAPACITY {
                if let Some(old) = cache.order.pop_front() {
                    cache.entries.remove(&old);
                }
            }
            cache.order.push_back(slot.clone());
        }
        cache.entries.entry(slot).or_default().clone()
    };
    let req = Request::from_parts(parts, Body::from(bytes));
    let cached = cell
        .get_or_init(|| async move {
            let resp = next.run(req).await;
            let status = resp.status();
            let content_type = resp.headers().get(header::CONTENT_TYPE).cloned();
            let body = to_bytes(resp.into_body(), usize::MAX).await.unwrap_or_default();
            Cached {
                fingerprint,
                status,
                content_type,
                body,
            }
        })
        .await;
    if cached.fingerprint != fingerprint {
        return (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({"code": "idempotency_key_reused", "message": "the key was used with a different request body"})),
        )
            .into_response();
    }
    let mut resp = Response::new(Body::from(cached.body.clone()));
    *resp.status_mut() = cached.status;
    if let Some(ct) = &cached.content_type {
        resp.headers_mut().insert(header::CONTENT_TYPE, ct.clone());
    }
    resp
}

async fn status(State(state): State<Arc<AppState>>) -> Json<Value> {
    let dir = state.store.read().expect("store lock");
    let s = dir.store();
    let c = s.codec();
    Json(json!({
        "item_count": s.item_count(),
        "segment_count": s.segment_count(),
        "window_days": s.config().window_days,
        "bucket_days": s.config().bucket_days,
        "store_embeddings": s.config().store_embeddings,
        "codec": {"D": c.dim, "B": c.code_bits, "m": c.subcode_count, "seed": c.projection_seed},
    }))
}

#[derive(Debug, Serialize)]
struct IngestResponse {
    ingested: u64,
    inserted: u64,
    updated: u64,
    unchanged: u64,
    rejected: u64,
    errors: Vec<String>,
}

const MAX_REPORTED_ERRORS: usize = 100;

async fn post_items(State(state): State<Arc<AppState>>, headers: HeaderMap, req: Request) -> ApiResult<Json<IngestResponse>> {
    let content_type = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_ascii_lowercase();
    let records: Vec<Result<IngestRecord>> = if content_type.starts_with("multipart/form-data") {
        let mut form = Multipart::from_request(req, &()).await.map_err(|e| bad_request(e.body_text()))?;
        let mut vectors = None;
        let mut meta = None;
        while let Some(field) = form.next_field().await.map_err(|e| bad_request(e.body_text()))? {
            let name = field.name().unwrap_or("").to_string();
            let data = field.bytes().await.map_err(|e| bad_request(e.body_text()))?;
            match name.as_str() {
                "vectors" => vectors = Some(data),
                "meta" => meta = Some(data),
                other => return Err(bad_request(format!("unexpected form field {other:?}"))),
            }
        }
        let (Some(vectors), Some(meta)) = (vectors, meta) else {
            return Err(bad_request("multipart upload needs `vectors` and `meta` fields"));
        };
        let reader = SirvReader::new(&vectors[..], "vectors")?;
        let vecs: Vec<_> = reader.collect();
        if let Some(Err(e)) = vecs.iter().find(|r| r.is_err()) {
            return Err(bad_request(e.to_string()));
        }
        let metas: Vec<Result<MetaRecord>> = parse_jsonl(&meta[..], "meta")?;
        join_records(vecs, metas)
    } else {
        let body = to_bytes(req.into_body(), usize::MAX).await.map_err(|e| bad_request(e.to_string()))?;
        parse_jsonl(&body[..], "body")?
    };

    let mut stats = ConsumeStats::default();
    let mut errors = Vec::new();
    let mut good = Vec::with_capacity(records.len());
    for r in records {
        match r {
            Ok(r) => good.push(r),
            Err(e) => {
                stats.rejected += 1;
                if errors.len() < MAX_REPORTED_ERRORS {
                    errors.push(e.to_string());
                }
            }
        }
    }
    let logged = good.len() as u64;
    let outcomes = {
        let mut dir = state.store.write().expect("store lock");
        dir.ingest_batch(good, (state.now)())?
    };
    for o in &outcomes {
        if let Err(e) = o {
            if errors.len() < MAX_REPORTED_ERRORS {
                errors.push(e.to_string());
            }
        }
        stats.add(o);
    }
    let due = {
        let mut pending = state.pending.lock().expect("pending");
        *pending += logged;
        *pending >= state.checkpoint_every
    };
    if due {
        state.checkpoint()?;
    }
    Ok(Json(IngestResponse {
        ingested: stats.ingested(),
        inserted: stats.inserted,
        updated: stats.updated,
        unchanged: stats.unchanged,
        rejected: stats.rejected,
        errors,
    }))
}

#[derive(Debug, Deserialize)]
pub struct SearchRequest {
    #[serde(default)]
    pub item_id: Option<String>,
    #[serde(default)]
    pub embedding: Option<EmbeddingVector>,
    #[serde(default = "default_search_k")]
    pub k: usize,
    #[serde(default)]
    pub radius: Option<usize>,
    #[serde(default)]
    pub threshold: Option<u32>,
    #[serde(default)]
    pub filter: Option<TextPredicate>,
    #[serde(default)]
    pub rerank_depth: usize,
}

fn default_search_k() -> usize {
    10
}

impl SearchRequest {
    pub fn into_query(self, codec: &CodecConfig) -> ApiResult<Query> {
        let target = match (self.item_id, self.embedding) {
            (Some(id), None) => QueryTarget::ItemRef(id),
            (None, Some(v)) => QueryTarget::Embedding(v),
            _ => return Err(bad_request("give exactly one of item_id and embedding")),
        };
        let mut params = SearchParams::new(self.k, self.radius.unwrap_or(codec.default_radius()));
        params.rerank_depth = self.rerank_depth;
        Ok(Query {
            target,
            params,
            predicate: self.filter,
            threshold: self.threshold,
        })
    }
}

async fn search(State(state): State<Arc<AppState>>, Body_(req): Body_<SearchRequest>) -> ApiResult<Json<Value>> {
    let dir = state.store.read().expect("store lock");
    let q = req.into_query(dir.store().codec())?;
    let page = run_query(dir.store(), &q, &state.clock)?;
    Ok(Json(serde_json::to_value(page).expect("page serializes")))
}

#[derive(Debug, Deserialize)]
pub struct SeedInput {
    pub id: String,
    pub embedding: EmbeddingVector,
}

#[derive(Debug, Deserialize)]
pub struct RuleRequest {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed_item_ids: Vec<String>,
    #[serde(default)]
    pub seed_embeddings: Vec<SeedInput>,
    pub threshold: ImageThreshold,
    #[serde(default)]
    pub predicate: Option<TextPredicate>,
    #[serde(default)]
    pub combine: Combine,
}

/// Resolves seeds against the live store, then the sample store.
fn resolve_seeds(state: &AppState, item_ids: &[String], embeddings: Vec<SeedInput>) -> ApiResult<Vec<Seed>> {
    let dir = state.store.read().expect("store lock");
    let mut seeds = Vec::new();
    for id in item_ids {
        let from_live = Seed::from_store(dir.store(), id);
        let seed = match (from_live, &state.sample) {
            (Ok(s), _) => s,
            (Err(_), Some(sample)) => Seed::from_store(sample, id)?,
            (Err(e), None) => return Err(e.into()),
        };
        seeds.push(seed);
    }
    for s in embeddings {
        seeds.push(Seed::from_embedding(s.id, s.embedding, dir.store().plan())?);
    }
    Ok(seeds)
}

pub fn build_rule(state: &AppState, req: RuleRequest, id: String) -> ApiResult<Rule> {
    let seeds = resolve_seeds(state, &req.seed_item_ids, req.seed_embeddings)?;
    let name = req.name.unwrap_or_else(|| id.clone());
    Ok(Rule::new(id, name, seeds, req.threshold, req.predicate, req.combine, (state.now)())?)
}

async fn create_rule(State(state): State<Arc<AppState>>, Body_(req): Body_<RuleRequest>) -> ApiResult<(StatusCode, Json<Rule>)> {
    let id = match &req.id {
        Some(id) => id.clone(),
        None => {
            let rules = state.rules.lock().expect("rules");
            (1..).map(|n| format!("rule-{n:04}")).find(|c| rules.get(c).is_none()).expect("free id")
        }
    };
    let rule = build_rule(&state, req, id)?;
    let mut rules = state.rules.lock().expect("rules");
    let stored = rules.create(rule)?.clone();
    Ok((StatusCode::CREATED, Json(stored)))
}

async fn list_rules(State(state): State<Arc<AppState>>) -> Json<Vec<Rule>> {
    Json(state.rules.lock().expect("rules").list().cloned().collect())
}

async fn get_rule(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Rule>> {
    Ok(Json(state.rules.lock().expect("rules").require(&id)?.clone()))
}

#[derive(Debug, Default, Deserialize)]
pub struct RuleChanges {
    #[serde(default)]
    pub threshold: Option<ImageThreshold>,
    /// `null` clears the predicate; absent leaves it.
    #[serde(default, with = "double_option")]
    pub predicate: Option<Option<TextPredicate>>,
    #[serde(default)]
    pub combine: Option<Combine>,
}

mod double_option {
    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, T: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<Option<Option<T>>, D::Error> {
        Option::<T>::deserialize(d).map(Some)
    }
}

fn apply_changes(rule: &mut Rule, changes: RuleChanges, now: Timestamp) -> sir_core::Result<()> {
    if let Some(t) = changes.threshold {
        rule.set_threshold(t, now)?;
    }
    if let Some(p) = changes.predicate {
        rule.set_predicate(p, now)?;
    }
    if let Some(c) = changes.combine {
        if rule.is_finalized() {
            return Err(sir_core::Error::Rule(format!("rule {} is finalized", rule.id)));
        }
        rule.combine = c;
        rule.validate()?;
        rule.updated = now;
    }
    Ok(())
}

async fn update_rule(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Body_(changes): Body_<RuleChanges>,
) -> ApiResult<Json<Rule>> {
    let now = (state.now)();
    let mut rules = state.rules.lock().expect("rules");
    Ok(Json(rules.update(&id, |r| apply_changes(r, changes, now))?.clone()))
}

#[derive(Debug, Deserialize)]
pub struct SimulateRequest {
    #[serde(default = "default_limit")]
    pub limit: usize,
    /// Evaluated without saving, for interactive tuning.
    #[serde(flatten)]
    pub changes: RuleChanges,
}

fn default_limit() -> usize {
    20
}

async fn simulate_rule(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Body_(req): Body_<SimulateRequest>,
) -> ApiResult<Json<Value>> {
    let mut rule = state.rules.lock().expect("rules").require(&id)?.clone();
    if rule.is_finalized() && (req.changes.threshold.is_some() || req.changes.predicate.is_some() || req.changes.combine.is_some()) {
        return Err(sir_core::Error::Rule(format!("rule {id} is finalized")).into());
    }
    let stamp = rule.updated;
    apply_changes(&mut rule, req.changes, stamp)?;
    let report = match &state.sample {
        Some(sample) => simulate(&rule, sample, req.limit, &state.clock)?,
        None => simulate(&rule, state.store.read().expect("store lock").store(), req.limit, &state.clock)?,
    };
    Ok(Json(serde_json::to_value(report).expect("report serializes")))
}

async fn finalize_rule(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Rule>> {
    let now = (state.now)();
    let mut rules = state.rules.lock().expect("rules");
    if rules.require(&id)?.is_finalized() {
        return Ok(Json(rules.require(&id)?.clone()));
    }
    Ok(Json(rules.update(&id, |r| r.finalize(now))?.clone()))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum CorpusRef {
    /// `"store"`: the live store's items.
    Named(String),
    Dir { dir: PathBuf },
    Files { vectors: PathBuf, meta: PathBuf },
}

#[derive(Debug, Deserialize)]
pub struct SweepRequest {
    pub rule_ids: Vec<String>,
    #[serde(default = "default_corpus")]
    pub corpus_ref: CorpusRef,
}

fn default_corpus() -> CorpusRef {
    CorpusRef::Named("store".into())
}

pub fn store_items(store: &RollingStore) -> Vec<StoredItem> {
    let mut items: Vec<StoredItem> = store
        .items()
        .map(|v| StoredItem {
            id: v.meta.id.clone(),
            code: v.code.to_vec(),
            embedding: v.embedding.cloned(),
            title: v.meta.tokens.clone(),
        })
        .collect();
    items.sort_by(|a, b| a.id.cmp(&b.id));
    items
}

async fn start_sweep(State(state): State<Arc<AppState>>, Body_(req): Body_<SweepRequest>) -> ApiResult<(StatusCode, Json<Value>)> {
    let rules: Vec<Rule> = {
        let book = state.rules.lock().expect("rules");
        req.rule_ids.iter().map(|id| book.require(id).cloned()).collect::<Result<_>>()?
    };
    let plan = state.store.read().expect("store lock").store().plan().clone();
    let input = match req.corpus_ref {
        CorpusRef::Named(name) if name == "store" => {
            SweepInput::Items(store_items(state.store.read().expect("store lock").store()))
        }
        CorpusRef::Named(name) if name == "sample" => match &state.sample {
            Some(sample) => SweepInput::Items(store_items(sample)),
            None => return Err(bad_request("no sample store configured")),
        },
        CorpusRef::Named(other) => return Err(bad_request(format!("unknown corpus {other:?}"))),
        CorpusRef::Dir { dir } => SweepInput::Records(crate::formats::read_pair(&dir.join("vectors.sirv"), &dir.join("meta.jsonl"))?),
        CorpusRef::Files { vectors, meta } => SweepInput::Records(crate::formats::read_pair(&vectors, &meta)?),
    };
    let job_id = state.jobs.spawn(rules, plan, input)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id }))))
}

async fn sweep_status(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let status = state
        .jobs
        .status(&id)
        .ok_or_else(|| sir_core::Error::NotFound(format!("sweep {id}")))?;
    Ok(Json(serde_json::to_value(status).expect("status serializes")))
}

#[derive(Debug, Deserialize)]
pub struct VariantsRequest {
    pub item_id: String,
    pub n: usize,
    pub k: usize,
    #[serde(default)]
    pub radius: Option<usize>,
}

async fn variants(State(state): State<Arc<AppState>>, Body_(req): Body_<VariantsRequest>) -> ApiResult<Json<Value>> {
    let dir = state.store.read().expect("store lock");
    let store = dir.store();
    let corpus = title_corpus(store);
    let params = SoSParams {
        n: req.n,
        k: req.k,
        radius: req.radius.unwrap_or(store.codec().default_radius()),
    };
    let set = generate(store, &corpus, &req.item_id, params)?;
    Ok(Json(serde_json::to_value(set).expect("set serializes")))
}

#[derive(Debug, Deserialize)]
pub struct BenchRequest {
    pub spec: BenchSpec,
}

async fn run_bench(Body_(req): Body_<BenchRequest>) -> ApiResult<Json<Value>> {
    let out = tokio::task::spawn_blocking(move || bench::run(&req.spec))
        .await
        .map_err(|e| bad_request(e.to_string()))??;
    Ok(Json(json!({
        "rows": out.rows,
        "quality_csv": out.quality_csv()?,
        "latency_csv": out.latency_csv()?,
    })))
}

/// Serves until ctrl-c or SIGTERM, then writes a final snapshot.
pub async fn serve(config: ServiceConfig) -> Result<()> {
    let state = Arc::new(AppState::open(&config)?);
    let addr: SocketAddr = config
        .listen
        .parse()
        .map_err(|e| SirError::Invalid(format!("listen address {:?}: {e}", config.listen)))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(SirError::io(format!("bind {addr}")))?;
    tracing::info!(%addr, items = state.item_count(), "serving");
    let app = router(state.clone(), config.static_dir.as_deref());
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(SirError::io("server"))?;
    tracing::info!("shutting down, writing snapshot");
    state.checkpoint()
}

async fn shutdown_signal() {
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
