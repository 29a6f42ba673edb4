use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::{BytesRejection, JsonRejection};
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use edm_core::event_log::{
    events_from_json, parse_csv, parse_xes, AttributeValue, CsvMapping, EventLog, ParsedLog, ValueKind, CASE_PREFIX,
};
use edm_core::explain::{
    explain_instance, global_bundle, global_explanation, local_bundle, Background, GlobalExplanation, Grouping,
    Method, PlotBundle, SamplingConfig, ShapExplanation, DEFAULT_PERMUTATIONS,
};
use edm_core::learners::{CvReport, DecisionMapping, ModelKind, Params, TrainedDecisionModel};
use edm_core::pipeline::{mine_table_with_progress, MineOptions};
use edm_core::process_model::{decision_point, decision_points, export_dot, export_pnml, import_pnml};
use edm_core::process_model::{discover_inductive, DecisionPoint, LabeledPetriNet, PlaceId, TransitionId};
use edm_core::situation::{
    extract_situation_table, features_for_prefix, mapping_from_json, FeatureMapping, FeatureSpec, SituationTable,
};

use crate::config::Config;
use crate::error::{ApiError, ApiResult};
use crate::jobs::{JobState, JobStatus, Jobs};
use crate::store::{DecisionPointArtifacts, NetArtifacts, Session, Store};

#[derive(Clone)]
pub struct AppState {
    pub config: Arc<Config>,
    pub store: Arc<Store>,
    pub jobs: Arc<Jobs>,
}

impl AppState {
    pub fn new(config: Config) -> std::io::Result<AppState> {
        let store = Store::open(&config.data_dir)?;
        Ok(AppState {
            config: Arc::new(config),
            store: Arc::new(store),
            jobs: Arc::new(Jobs::default()),
        })
    }
}

fn rejection(status: StatusCode, text: String) -> ApiError {
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(status, "payload_too_large", text)
    } else {
        ApiError::bad_request("bad_request", text)
    }
}

/// JSON body whose rejections use the service error shape.
pub struct ApiJson<T>(pub T);

impl<T, S> FromRequest<S> for ApiJson<T>
where
    Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(r) => Err(rejection(r.status(), r.body_text())),
        }
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

/// Like [`blocking`] but bounded by the configured explanation budget.
async fn budgeted<T: Send + 'static>(st: &AppState, f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    let secs = st.config.explain_timeout_secs;
    match tokio::time::timeout(Duration::from_secs(secs), blocking(f)).await {
        Ok(r) => r,
        Err(_) => Err(ApiError::new(
            StatusCode::GATEWAY_TIMEOUT,
            "timeout",
            format!("explanation exceeded the {secs} s budget; retry with method \"sampled\" and fewer permutations"),
        )),
    }
}

// ---------------------------------------------------------------------------
// Loading

fn session(st: &AppState, id: &str) -> ApiResult<Session> {
    st.store
        .session(id)?
        .ok_or_else(|| ApiError::not_found("session_not_found", format!("no session {id}")))
}

fn load_log(store: &Store, s: &Session) -> ApiResult<EventLog> {
    Ok(EventLog::from_json(&store.get_string(&s.log)?)?)
}

fn load_net(store: &Store, s: &Session) -> ApiResult<LabeledPetriNet> {
    let net = s.net.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::CONFLICT,
            "not_discovered",
            format!("session {} has no discovered net; POST /sessions/{}/discover first", s.id, s.id),
        )
    })?;
    Ok(import_pnml(&store.get(&net.pnml)?)?)
}

fn find_decision_point(net: &LabeledPetriNet, place: &str) -> ApiResult<DecisionPoint> {
    decision_point(net, &PlaceId::new(place))
        .map_err(|_| ApiError::not_found("unknown_decision_point", format!("{place} is not a decision point")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub transition: TransitionId,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPointView {
    pub place: PlaceId,
    pub alternatives: Vec<Alternative>,
    pub trained: bool,
}

fn alternatives(net: &LabeledPetriNet, ts: &[TransitionId]) -> Vec<Alternative> {
    ts.iter()
        .map(|t| Alternative {
            transition: t.clone(),
            label: net.label(t).map(str::to_string),
        })
        .collect()
}

fn views(net: &LabeledPetriNet, s: &Session) -> Vec<DecisionPointView> {
    decision_points(net)
        .into_iter()
        .map(|dp| DecisionPointView {
            trained: s.decision_points.contains_key(dp.place.as_str()),
            alternatives: alternatives(net, &dp.alternatives),
            place: dp.place,
        })
        .collect()
}

/// A stored model with what serving needs around it.
struct Served {
    artifacts: DecisionPointArtifacts,
    model: TrainedDecisionModel,
    background: Background,
    net: LabeledPetriNet,
}

fn load_served(store: &Store, s: &Session, place: &str) -> ApiResult<Served> {
    let net = load_net(store, s)?;
    find_decision_point(&net, place)?;
    let artifacts = s.decision_points.get(place).cloned().ok_or_else(|| {
        ApiError::not_found("not_trained", format!("decision point {place} has no trained model"))
    })?;
    let model = TrainedDecisionModel::from_json(&store.get_string(&artifacts.model)?)?;
    let background: Background =
        serde_json::from_slice(&store.get(&artifacts.background)?).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Served {
        artifacts,
        model,
        background,
        net,
    })
}

async fn served(st: &AppState, id: &str, place: &str) -> ApiResult<Arc<Served>> {
    let s = session(st, id)?;
    let store = st.store.clone();
    let place = place.to_string();
    blocking(move || load_served(&store, &s, &place).map(Arc::new)).await
}

// ---------------------------------------------------------------------------
// Sessions

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogFormat {
    Xes,
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UploadRequest {
    pub format: LogFormat,
    pub content: String,
    #[serde(default)]
    pub mapping: Option<CsvMapping>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub schema: BTreeMap<String, ValueKind>,
    pub traces: usize,
    pub events: usize,
    pub warnings: Vec<String>,
}

fn parse_upload(body: &[u8], json: bool) -> ApiResult<ParsedLog> {
    if !json {
        return Ok(parse_xes(body)?);
    }
    let req: UploadRequest =
        serde_json::from_slice(body).map_err(|e| ApiError::bad_request("bad_request", e.to_string()))?;
    Ok(match req.format {
        LogFormat::Xes => parse_xes(req.content.as_bytes())?,
        LogFormat::Csv => {
            let mapping = req
                .mapping
                .ok_or_else(|| ApiError::bad_request("bad_mapping", "a CSV upload needs a column mapping"))?;
            parse_csv(req.content.as_bytes(), &mapping)?
        }
        LogFormat::Json => ParsedLog {
            log: EventLog::from_json(&req.content)?,
            warnings: Vec::new(),
        },
    })
}

/// `POST /sessions`: a JSON envelope (`application/json`) or a raw XES body.
pub async fn create_session(
    State(st): State<AppState>,
    headers: HeaderMap,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let body = body.map_err(|r| rejection(r.status(), r.body_text()))?;
    let json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let store = st.store.clone();
    let created = blocking(move || {
        let parsed = parse_upload(&body, json)?;
        let log = parsed.log;
        if log.traces().is_empty() {
            return Err(ApiError::bad_request("empty_log", "the uploaded log contains no traces"));
        }
        let hash = store.put(log.to_json().as_bytes())?;
        let s = store.create_session(hash, log.traces().len(), log.num_events())?;
        Ok(SessionCreated {
            session_id: s.id,
            schema: log.schema().clone(),
            traces: s.traces,
            events: s.events,
            warnings: parsed.warnings,
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

pub async fn list_sessions(State(st): State<AppState>) -> ApiResult<Json<Vec<Session>>> {
    Ok(Json(st.store.sessions()?))
}

pub async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Session>> {
    Ok(Json(session(&st, &id)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discovered {
    pub session_id: String,
    pub pnml: String,
    pub dot: String,
    pub decision_points: Vec<DecisionPointView>,
}

pub async fn discover(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Discovered>> {
    let s = session(&st, &id)?;
    let store = st.store.clone();
    let out = blocking(move || {
        let log = load_log(&store, &s)?;
        let net = discover_inductive(&log)?;
        let (pnml, dot) = (export_pnml(&net), export_dot(&net));
        let artifacts = NetArtifacts {
            pnml: store.put(pnml.as_bytes())?,
            dot: store.put(dot.as_bytes())?,
        };
        let s = store.update_session(&s.id, |s| {
            if s.net.as_ref() != Some(&artifacts) {
                s.decision_points.clear();
            }
            s.net = Some(artifacts);
        })?;
        Ok(Discovered {
            session_id: s.id.clone(),
            decision_points: views(&net, &s),
            pnml,
            dot,
        })
    })
    .await?;
    Ok(Json(out))
}

pub async fn list_decision_points(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<DecisionPointView>>> {
    let s = session(&st, &id)?;
    let store = st.store.clone();
    blocking(move || Ok(Json(views(&load_net(&store, &s)?, &s)))).await
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    #[serde(default)]
    pub feature_spec: Option<FeatureSpec>,
    #[serde(default)]
    pub kinds: Option<Vec<ModelKind>>,
    #[serde(default)]
    pub grid: Option<BTreeMap<ModelKind, Vec<Params>>>,
    #[serde(default)]
    pub folds: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub background_size: Option<usize>,
}

fn validate_spec(spec: &FeatureSpec, log: &EventLog) -> ApiResult<()> {
    let schema = log.schema();
    let activities: BTreeSet<&str> = log.traces().iter().flat_map(|t| t.activities()).collect();
    for f in &spec.case_features {
        if !schema.contains_key(&format!("{CASE_PREFIX}{f}")) {
            return Err(ApiError::bad_request("unknown_feature", format!("no case attribute {f:?} in the log")));
        }
    }
    for f in &spec.event_features {
        let (attr, activity) = f.split_once('@').map_or((f.as_str(), None), |(a, b)| (a, Some(b)));
        if !schema.contains_key(attr) {
            return Err(ApiError::bad_request("unknown_feature", format!("no event attribute {attr:?} in the log")));
        }
        if let Some(a) = activity.filter(|a| !activities.contains(a)) {
            return Err(ApiError::bad_request("unknown_feature", format!("no activity {a:?} in the log")));
        }
    }
    Ok(())
}

fn mine_options(config: &Config, req: TrainRequest) -> ApiResult<MineOptions> {
    let mut grids = config.grids.clone();
    for (kind, grid) in req.grid.unwrap_or_default() {
        if let Some(p) = grid.iter().find(|p| p.kind() != kind) {
            return Err(ApiError::bad_request(
                "invalid_argument",
                format!("grid for {kind} contains parameters of {}", p.kind()),
            ));
        }
        grids.insert(kind, grid);
    }
    let opts = MineOptions {
        kinds: req.kinds.unwrap_or_else(|| ModelKind::ALL.to_vec()),
        grids,
        folds: req.folds.unwrap_or(config.folds),
        seed: req.seed.unwrap_or(config.seed),
        background_size: req.background_size.unwrap_or(config.background_size),
    };
    if opts.kinds.is_empty() {
        return Err(ApiError::bad_request("invalid_argument", "kinds must not be empty"));
    }
    if opts.folds < 2 || opts.background_size == 0 {
        return Err(ApiError::bad_request("invalid_argument", "folds must be >= 2 and background_size >= 1"));
    }
    Ok(opts)
}

/// `POST .../train`: validates synchronously, then trains in the background.
pub async fn train(
    State(st): State<AppState>,
    Path((id, place)): Path<(String, String)>,
    ApiJson(req): ApiJson<TrainRequest>,
) -> ApiResult<(StatusCode, Json<JobStatus>)> {
    let s = session(&st, &id)?;
    let store = st.store.clone();
    let (log, net, dp) = blocking(move || {
        let net = load_net(&store, &s)?;
        let dp = find_decision_point(&net, &place)?;
        Ok((load_log(&store, &s)?, net, dp))
    })
    .await?;
    let spec = req.feature_spec.clone().unwrap_or_else(|| FeatureSpec::all_from_log(&log));
    validate_spec(&spec, &log)?;
    let opts = mine_options(&st.config, req)?;
    let job = st.jobs.create(&id, dp.place.as_str());
    tokio::spawn(run_training(st.clone(), job.job_id.clone(), id, dp.place, spec, opts, log, net));
    Ok((StatusCode::ACCEPTED, Json(job)))
}

#[allow(clippy::too_many_arguments)]
async fn run_training(
    st: AppState,
    job_id: String,
    session_id: String,
    place: PlaceId,
    spec: FeatureSpec,
    opts: MineOptions,
    log: EventLog,
    net: LabeledPetriNet,
) {
    let lock = st.jobs.lock_for(&session_id, place.as_str());
    let _guard = lock.lock().await;
    st.jobs.update(&job_id, |s| s.state = JobState::Running);
    let (jobs, store, jid) = (st.jobs.clone(), st.store.clone(), job_id.clone());
    let result = tokio::task::spawn_blocking(move || -> Result<(), String> {
        let table = extract_situation_table(&log, &net, &place, &spec).map_err(|e| e.to_string())?;
        let outcome = mine_table_with_progress(&table, &opts, |p| jobs.update(&jid, |s| s.progress = 0.99 * p))
            .map_err(|e| e.to_string())?;
        let put = |bytes: &[u8]| store.put(bytes).map_err(|e| e.to_string());
        let reports = serde_json::to_string_pretty(&outcome.reports).map_err(|e| e.to_string())?;
        let background = serde_json::to_string(&outcome.background).map_err(|e| e.to_string())?;
        let artifacts = DecisionPointArtifacts {
            feature_spec: spec,
            table: put(table.to_json().as_bytes())?,
            reports: put(reports.as_bytes())?,
            model: put(outcome.model.to_json().as_bytes())?,
            background: put(background.as_bytes())?,
            suggested: outcome.suggested,
            degenerate: outcome.degenerate(),
            trained_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        };
        store
            .update_session(&session_id, |s| {
                s.decision_points.insert(place.as_str().to_string(), artifacts);
            })
            .map_err(|e| e.to_string())?;
        Ok(())
    })
    .await;
    let error = match result {
        Ok(Ok(())) => None,
        Ok(Err(e)) => Some(e),
        Err(e) => Some(format!("training task failed: {e}")),
    };
    if let Some(e) = &error {
        log::warn!("job {job_id} failed: {e}");
    }
    st.jobs.update(&job_id, |s| match error {
        None => {
            s.state = JobState::Done;
            s.progress = 1.0;
        }
        Some(e) => {
            s.state = JobState::Failed;
            s.error = Some(e);
        }
    });
}

pub async fn job(State(st): State<AppState>, Path(job_id): Path<String>) -> ApiResult<Json<JobStatus>> {
    st.jobs
        .get(&job_id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found("job_not_found", format!("no job {job_id}")))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kind: ModelKind,
    pub params: Params,
    pub training_rows: usize,
    pub classes: Vec<Alternative>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub session_id: String,
    pub decision_point: String,
    pub suggested: Option<ModelKind>,
    pub degenerate: bool,
    pub trained_at: String,
    pub feature_spec: FeatureSpec,
    pub model: ModelSummary,
    pub reports: Vec<CvReport>,
}

pub async fn report(State(st): State<AppState>, Path((id, place)): Path<(String, String)>) -> ApiResult<Json<Report>> {
    let sv = served(&st, &id, &place).await?;
    let store = st.store.clone();
    let reports_hash = sv.artifacts.reports.clone();
    let reports: Vec<CvReport> = blocking(move || {
        serde_json::from_slice(&store.get(&reports_hash)?).map_err(|e| ApiError::internal(e.to_string()))
    })
    .await?;
    Ok(Json(Report {
        session_id: id,
        decision_point: place,
        suggested: sv.artifacts.suggested,
        degenerate: sv.artifacts.degenerate,
        trained_at: sv.artifacts.trained_at.clone(),
        feature_spec: sv.artifacts.feature_spec.clone(),
        model: ModelSummary {
            kind: sv.model.kind,
            params: sv.model.params.clone(),
            training_rows: sv.model.training_rows,
            classes: alternatives(&sv.net, &sv.model.classes),
        },
        reports,
    }))
}

// ---------------------------------------------------------------------------
// Online phase

/// A running case as its events so far, or a feature mapping given directly.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    #[serde(default)]
    pub events: Option<Value>,
    #[serde(default)]
    pub features: Option<Map<String, Value>>,
}

fn instance_features(model: &TrainedDecisionModel, inst: &Instance) -> ApiResult<FeatureMapping> {
    match (&inst.events, &inst.features) {
        (Some(events), None) => {
            let events = events_from_json(events, "running")?;
            Ok(features_for_prefix(&events, &model.feature_spec))
        }
        (None, Some(obj)) => mapping_from_json(obj, &model.feature_spec)
            .map_err(|e| ApiError::bad_request("unknown_feature", e.to_string())),
        _ => Err(ApiError::bad_request("bad_request", "provide exactly one of \"events\" or \"features\"")),
    }
}

fn mapping_json(f: &FeatureMapping) -> Map<String, Value> {
    f.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub decision_mapping: DecisionMapping,
    pub argmax: TransitionId,
    pub argmax_label: Option<String>,
    pub features: Map<String, Value>,
}

fn prediction(sv: &Served, f: &FeatureMapping) -> Prediction {
    let mapping = sv.model.predict(f);
    let argmax = mapping.argmax().clone();
    Prediction {
        argmax_label: sv.net.label(&argmax).map(str::to_string),
        argmax,
        decision_mapping: mapping,
        features: mapping_json(f),
    }
}

pub async fn predict(
    State(st): State<AppState>,
    Path((id, place)): Path<(String, String)>,
    ApiJson(inst): ApiJson<Instance>,
) -> ApiResult<Json<Prediction>> {
    let sv = served(&st, &id, &place).await?;
    let f = instance_features(&sv.model, &inst)?;
    Ok(Json(prediction(&sv, &f)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    #[default]
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
pub struct MethodOptions {
    #[serde(default)]
    pub method: MethodName,
    #[serde(default)]
    pub n_permutations: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub redistribute: Option<bool>,
}

impl MethodOptions {
    fn method(&self) -> ApiResult<Method> {
        match self.method {
            MethodName::Exact => Ok(Method::Exact),
            MethodName::Sampled => {
                let n = self.n_permutations.unwrap_or(DEFAULT_PERMUTATIONS);
                if n == 0 {
                    return Err(ApiError::bad_request("invalid_argument", "n_permutations must be >= 1"));
                }
                Ok(Method::Sampled(SamplingConfig {
                    n_permutations: n,
                    seed: self.seed.unwrap_or(0),
                    redistribute: self.redistribute.unwrap_or(true),
                }))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExplainRequest {
    pub instance: Instance,
    #[serde(default)]
    pub target: Option<TransitionId>,
    #[serde(default)]
    pub grouping: Grouping,
    #[serde(flatten)]
    pub method: MethodOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainResponse {
    pub explanation: ShapExplanation,
    pub plots: PlotBundle,
}

fn check_target(model: &TrainedDecisionModel, target: Option<&TransitionId>) -> ApiResult<()> {
    match target {
        Some(t) if model.class_index(t).is_none() => Err(ApiError::bad_request(
            "unknown_target",
            format!("{t} is not an alternative of {}", model.decision_point),
        )),
        _ => Ok(()),
    }
}

pub async fn explain(
    State(st): State<AppState>,
    Path((id, place)): Path<(String, String)>,
    ApiJson(req): ApiJson<ExplainRequest>,
) -> ApiResult<Json<ExplainResponse>> {
    let sv = served(&st, &id, &place).await?;
    let f = instance_features(&sv.model, &req.instance)?;
    check_target(&sv.model, req.target.as_ref())?;
    let method = req.method.method()?;
    budgeted(&st, move || {
        let e = explain_instance(&sv.model, &f, req.target.as_ref(), &sv.background, req.grouping, method)?;
        Ok(Json(ExplainResponse {
            plots: local_bundle(&e),
            explanation: e,
        }))
    })
    .await
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalQuery {
    #[serde(default)]
    pub method: Option<MethodName>,
    #[serde(default)]
    pub grouping: Option<Grouping>,
    #[serde(default)]
    pub instances: Option<usize>,
    #[serde(default)]
    pub n_permutations: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalResponse {
    pub global: GlobalExplanation,
    pub plots: PlotBundle,
}

/// Evenly spaced rows, at most `n`, in table order.
fn spread(table: &SituationTable, n: usize) -> Vec<FeatureMapping> {
    let len = table.len();
    let n = n.min(len);
    (0..n).map(|i| table.rows[i * len / n].features.clone()).collect()
}

/// `GET .../global-explanation`: over the training situations, grouped by
/// source unless asked otherwise.
pub async fn global(
    State(st): State<AppState>,
    Path((id, place)): Path<(String, String)>,
    Query(q): Query<GlobalQuery>,
) -> ApiResult<Json<GlobalResponse>> {
    let sv = served(&st, &id, &place).await?;
    let method = MethodOptions {
        method: q.method.unwrap_or_default(),
        n_permutations: q.n_permutations,
        seed: q.seed,
        redistribute: None,
    }
    .method()?;
    let grouping = q.grouping.unwrap_or(Grouping::BySource);
    let n = q.instances.unwrap_or(100);
    if n == 0 {
        return Err(ApiError::bad_request("invalid_argument", "instances must be >= 1"));
    }
    let store = st.store.clone();
    budgeted(&st, move || {
        let table = SituationTable::from_json(&store.get_string(&sv.artifacts.table)?)?;
        let g = global_explanation(&sv.model, &spread(&table, n), &sv.background, grouping, method)?;
        Ok(Json(GlobalResponse {
            plots: global_bundle(&g),
            global: g,
        }))
    })
    .await
}

#[derive(Debug, Clone, Deserialize)]
pub struct WhatIfRequest {
    pub instance: Instance,
    #[serde(default)]
    pub overrides: Map<String, Value>,
    #[serde(default)]
    pub target: Option<TransitionId>,
    #[serde(default)]
    pub grouping: Grouping,
    #[serde(flatten)]
    pub method: MethodOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(flatten)]
    pub prediction: Prediction,
    pub explanation: ShapExplanation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub target: TransitionId,
    pub before: Scenario,
    pub after: Scenario,
    /// After minus before, per alternative.
    pub delta: BTreeMap<TransitionId, f64>,
}

fn apply_overrides(model: &TrainedDecisionModel, base: &FeatureMapping, overrides: &Map<String, Value>) -> ApiResult<FeatureMapping> {
    let known: BTreeSet<String> = model.feature_spec.feature_names().into_iter().collect();
    let mut out = base.clone();
    for (name, value) in overrides {
        if !known.contains(name) {
            return Err(ApiError::bad_request("unknown_feature", format!("unknown feature {name:?}")));
        }
        if value.is_null() {
            out.remove(name);
            continue;
        }
        let v = AttributeValue::from_json(value)
            .ok_or_else(|| ApiError::bad_request("unknown_feature", format!("feature {name:?} is not a scalar")))?;
        out.insert(name.clone(), v);
    }
    Ok(out)
}

/// `POST .../whatif`: both scenarios are explained for the same target, the
/// given one or the original prediction.
pub async fn whatif(
    State(st): State<AppState>,
    Path((id, place)): Path<(String, String)>,
    ApiJson(req): ApiJson<WhatIfRequest>,
) -> ApiResult<Json<WhatIfResponse>> {
    let sv = served(&st, &id, &place).await?;
    let before = instance_features(&sv.model, &req.instance)?;
    let after = apply_overrides(&sv.model, &before, &req.overrides)?;
    check_target(&sv.model, req.target.as_ref())?;
    let method = req.method.method()?;
    budgeted(&st, move || {
        let target = req.target.unwrap_or_else(|| sv.model.predict(&before).argmax().clone());
        let scenario = |f: &FeatureMapping| -> ApiResult<Scenario> {
            Ok(Scenario {
                prediction: prediction(&sv, f),
                explanation: explain_instance(&sv.model, f, Some(&target), &sv.background, req.grouping, method)?,
            })
        };
        let (b, a) = (scenario(&before)?, scenario(&after)?);
        let delta = sv
            .model
            .classes
            .iter()
            .map(|t| (t.clone(), a.prediction.decision_mapping.get(t) - b.prediction.decision_mapping.get(t)))
            .collect();
        Ok(Json(WhatIfResponse {
            target,
            before: b,
            after: a,
            delta,
        }))
    })
    .await
}
