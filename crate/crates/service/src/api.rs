use crate::AppState;
use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use dsm_core::store::StoreError;
use dsm_core::{
    Designation, MatrixTable, ObservationRecord, OperatorCommand, Payload, RawSource,
    RegistryError, ReplacementDecision, SourceId, SourceStatus, SystemError, SystemEvent,
    Timestamp, Weights,
};
use futures::Stream;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::convert::Infallible;
use tokio::sync::broadcast::error::RecvError;

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<SystemError> for ApiError {
    fn from(e: SystemError) -> Self {
        let status = match &e {
            SystemError::UnknownSource(_) => StatusCode::NOT_FOUND,
            SystemError::NotAvailable { .. } => StatusCode::CONFLICT,
            SystemError::Registry(RegistryError::DuplicateSource(_)) => StatusCode::CONFLICT,
            SystemError::InvalidWeights(_) | SystemError::Registry(_) => StatusCode::BAD_REQUEST,
            SystemError::Replacement(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SystemError::Store(_) | SystemError::Snapshot { .. } => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        ApiError(status, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

pub fn router(state: AppState) -> Router {
    let protected = Router::new()
        .route("/registry", get(registry))
        .route("/sources", post(add_source))
        .route("/matrix", get(matrix))
        .route("/weights", put(set_weights))
        .route("/active", get(active))
        .route("/decisions", get(decisions))
        .route("/observations", post(observations))
        .route("/commands/{command}", post(command))
        .route("/events", get(events))
        .route_layer(middleware::from_fn_with_state(state.clone(), auth));
    Router::new()
        .route("/health", get(health))
        .merge(protected)
        .with_state(state)
}

async fn auth(State(state): State<AppState>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_ref()) {
            return ApiError(
                StatusCode::UNAUTHORIZED,
                "missing or invalid bearer token".into(),
            )
            .into_response();
        }
    }
    next.run(request).await
}

async fn health(State(state): State<AppState>) -> Json<Value> {
    let system = state.lock();
    Json(json!({
        "status": "ok",
        "registry-version": system.registry().content_version(),
        "matrix-version": system.pack().matrix.version(),
        "records": system.store().len(),
        "last-sequence": system.store().last_sequence(),
        "alarms": system.alarms(),
    }))
}

async fn registry(State(state): State<AppState>) -> Json<Value> {
    let doc = state.lock().registry().to_document();
    Json(serde_json::to_value(doc).expect("registry serializes"))
}

async fn add_source(
    State(state): State<AppState>,
    Json(source): Json<RawSource>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let now = state.now();
    let outcome = state
        .lock()
        .command(OperatorCommand::RegisterSource { source }, now)?;
    Ok((StatusCode::CREATED, Json(json!(outcome))))
}

#[derive(Deserialize)]
struct MatrixQuery {
    data_type: Option<String>,
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct MatrixResponse {
    matrix_version: String,
    registry_version: String,
    tables: Vec<MatrixTable>,
    matrix: dsm_core::AssessmentMatrix,
}

async fn matrix(
    State(state): State<AppState>,
    Query(q): Query<MatrixQuery>,
) -> ApiResult<MatrixResponse> {
    let system = state.lock();
    let matrix = &system.pack().matrix;
    let data_types: Vec<_> = match &q.data_type {
        Some(dt) => {
            let dt = dt.as_str().into();
            if matrix.sources_of(&dt).next().is_none() {
                return Err(ApiError(
                    StatusCode::NOT_FOUND,
                    format!("unknown data type {:?}", dt.as_str()),
                ));
            }
            vec![dt]
        }
        None => system.registry().data_types(),
    };
    Ok(Json(MatrixResponse {
        matrix_version: matrix.version(),
        registry_version: matrix.registry_version.clone(),
        tables: data_types.iter().map(|dt| matrix.table(dt)).collect(),
        matrix: matrix.clone(),
    }))
}

async fn set_weights(
    State(state): State<AppState>,
    Json(weights): Json<Weights>,
) -> ApiResult<Value> {
    let now = state.now();
    let outcome = state
        .lock()
        .command(OperatorCommand::SetWeights { weights }, now)?;
    Ok(Json(json!(outcome)))
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct ActiveResponse {
    at: Timestamp,
    designations: BTreeMap<dsm_core::DataType, Designation>,
    alarms: Vec<dsm_core::DataType>,
    statuses: Vec<SourceStatus>,
}

async fn active(State(state): State<AppState>) -> Json<ActiveResponse> {
    let system = state.lock();
    Json(ActiveResponse {
        at: state.now(),
        designations: system.designations().clone(),
        alarms: system.alarms(),
        statuses: system.statuses().values().cloned().collect(),
    })
}

#[derive(Deserialize)]
struct DecisionsQuery {
    since: Option<u64>,
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct LoggedDecision {
    sequence: u64,
    decision: ReplacementDecision,
}

async fn decisions(
    State(state): State<AppState>,
    Query(q): Query<DecisionsQuery>,
) -> Json<Vec<LoggedDecision>> {
    let system = state.lock();
    Json(
        system
            .store()
            .decisions_since(q.since.unwrap_or(0))
            .map(|(sequence, d)| LoggedDecision {
                sequence,
                decision: d.clone(),
            })
            .collect(),
    )
}

/// Observation as posted; arrival time defaults to the time of receipt.
#[derive(Deserialize)]
#[serde(rename_all = "kebab-case")]
struct ObservationInput {
    source_id: SourceId,
    event_time: Timestamp,
    #[serde(default)]
    arrival_time: Option<Timestamp>,
    payload: Payload,
    #[serde(default)]
    quality: Option<f64>,
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct Rejected {
    line: usize,
    error: String,
}

async fn observations(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let text = std::str::from_utf8(&body).map_err(|e| bad_request(e.to_string()))?;
    let ndjson = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/x-ndjson"));
    let lines: Vec<(usize, &str)> = if ndjson {
        text.lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect()
    } else {
        vec![(1, text)]
    };
    let now = state.now();
    let mut accepted = 0;
    let mut rejected = Vec::new();
    let mut system = state.lock();
    for (line, raw) in lines {
        let input: ObservationInput = match serde_json::from_str(raw) {
            Ok(v) => v,
            Err(e) if !ndjson => return Err(bad_request(format!("invalid observation: {e}"))),
            Err(e) => {
                rejected.push(Rejected {
                    line,
                    error: e.to_string(),
                });
                continue;
            }
        };
        let record = ObservationRecord {
            source_id: input.source_id,
            event_time: input.event_time,
            arrival_time: input.arrival_time.unwrap_or(now),
            payload: input.payload,
            quality: input.quality,
        };
        match system.ingest(record, now) {
            Ok(()) => accepted += 1,
            Err(e @ SystemError::UnknownSource(_)) => rejected.push(Rejected {
                line,
                error: e.to_string(),
            }),
            Err(e) => return Err(e.into()),
        }
    }
    drop(system);
    let status = if accepted == 0 && !rejected.is_empty() {
        StatusCode::UNPROCESSABLE_ENTITY
    } else {
        StatusCode::ACCEPTED
    };
    Ok((
        status,
        Json(json!({ "accepted": accepted, "rejected": rejected })),
    ))
}

#[derive(Deserialize)]
struct SourceArg {
    source: SourceId,
}

async fn command(
    State(state): State<AppState>,
    Path(name): Path<String>,
    body: Bytes,
) -> ApiResult<Value> {
    let source = || -> Result<SourceId, ApiError> {
        serde_json::from_slice::<SourceArg>(&body)
            .map(|a| a.source)
            .map_err(|e| bad_request(format!("expected {{\"source\": ...}}: {e}")))
    };
    let cmd = match name.as_str() {
        "pre-activate" => OperatorCommand::PreActivate { source: source()? },
        "force-switch" => OperatorCommand::ForceSwitch { source: source()? },
        "close-segment" => OperatorCommand::CloseSegment,
        other => {
            return Err(ApiError(
                StatusCode::NOT_FOUND,
                format!("unknown command {other:?}"),
            ))
        }
    };
    let now = state.now();
    let outcome = state.lock().command(cmd, now)?;
    Ok(Json(json!(outcome)))
}

fn sse_event(event: &SystemEvent) -> Event {
    let data = match event {
        SystemEvent::Transition(t) => json!(t),
        SystemEvent::Decision { sequence, decision } => {
            json!({ "sequence": sequence, "decision": decision })
        }
        SystemEvent::MatrixUpdated {
            at,
            matrix_version,
            registry_version,
        } => json!({
            "at": at,
            "matrix-version": matrix_version,
            "registry-version": registry_version,
        }),
        SystemEvent::Alarm {
            data_type,
            at,
            rationale,
        } => json!({ "data-type": data_type, "at": at, "rationale": rationale }),
    };
    let out = Event::default().event(event.name()).data(data.to_string());
    match event {
        SystemEvent::Decision { sequence, .. } => out.id(sequence.to_string()),
        _ => out,
    }
}

async fn events(
    State(state): State<AppState>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = state.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        match rx.recv().await {
            Ok(event) => Some((Ok(sse_event(&event)), rx)),
            Err(RecvError::Lagged(n)) => {
                Some((Ok(Event::default().event("lagged").data(n.to_string())), rx))
            }
            Err(RecvError::Closed) => None,
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}
