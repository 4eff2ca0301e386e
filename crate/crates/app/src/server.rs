//! HTTP steering service.
//!
//! The model and maps are loaded once and shared read-only; every request
//! builds its own overlay and decode session, so concurrent requests with
//! different steering never see each other.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use npti::corpus::Trait;
use npti::decoding::{greedy_decode_streaming, GenerationParams, StopReason};
use npti::model::{TokenId, ToyModel};
use npti::steering::{ActiveCounts, Direction, SteeringItem, SteeringSpec};
use npti::tokenizer::{detokenize, tokenize};
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, Semaphore};

use crate::registry::MapRegistry;

pub const MAX_GAMMA: f64 = 4.0;

pub struct AppState {
    pub model: Arc<ToyModel>,
    pub maps: MapRegistry,
    pub params: GenerationParams,
    /// Upper bound on `max_tokens` a request may ask for.
    pub max_tokens_cap: usize,
    pub in_flight: Arc<Semaphore>,
}

impl AppState {
    pub fn new(model: ToyModel, maps: MapRegistry, params: GenerationParams, max_in_flight: usize) -> Self {
        Self {
            model: Arc::new(model),
            maps,
            max_tokens_cap: params.max_tokens.max(1024),
            params,
            in_flight: Arc::new(Semaphore::new(max_in_flight.max(1))),
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/maps", get(list_maps))
        .route("/v1/generate", post(generate))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(state)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MapSummary {
    #[serde(rename = "trait")]
    pub trait_: Trait,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neg_threshold: Option<f64>,
    pub entries: usize,
    pub pos: usize,
    pub neg: usize,
}

async fn list_maps(State(state): State<Arc<AppState>>) -> Json<Vec<MapSummary>> {
    Json(
        state
            .maps
            .iter()
            .map(|(t, m)| MapSummary {
                trait_: t,
                threshold: m.threshold,
                neg_threshold: m.neg_threshold,
                entries: m.len(),
                pos: m.count(npti::NeuronClass::Pos),
                neg: m.count(npti::NeuronClass::Neg),
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SteeringRequest {
    #[serde(rename = "trait")]
    pub trait_: String,
    pub direction: String,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenerateRequest {
    pub prompt: String,
    #[serde(default)]
    pub steering: Vec<SteeringRequest>,
    #[serde(default)]
    pub max_tokens: Option<usize>,
    #[serde(default)]
    pub stream: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SteeringEcho {
    #[serde(rename = "trait")]
    pub trait_: Trait,
    pub direction: Direction,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenerateResponse {
    pub text: String,
    pub tokens: Vec<TokenId>,
    pub steering_echo: Vec<SteeringEcho>,
    pub per_trait_active_neuron_counts: BTreeMap<Trait, ActiveCounts>,
    pub stop_reason: StopReason,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

/// Clamps γ into `[0, MAX_GAMMA]`; non-finite values are rejected.
pub fn clamp_gamma(gamma: f64) -> Option<f64> {
    gamma.is_finite().then(|| gamma.clamp(0.0, MAX_GAMMA))
}

/// Validated request: the bound spec plus what gets echoed back.
pub struct PreparedRequest {
    pub prompt: Vec<TokenId>,
    pub spec: SteeringSpec,
    pub echo: Vec<SteeringEcho>,
    pub counts: BTreeMap<Trait, ActiveCounts>,
    pub params: GenerationParams,
}

pub fn prepare(state: &AppState, req: &GenerateRequest) -> Result<PreparedRequest, ApiError> {
    let mut items = Vec::with_capacity(req.steering.len());
    let mut echo = Vec::with_capacity(req.steering.len());
    let mut counts = BTreeMap::new();
    for (i, s) in req.steering.iter().enumerate() {
        let t = Trait::from_str(&s.trait_).map_err(|_| ApiError::bad_request(format!("unknown trait {:?}", s.trait_)))?;
        let map = state
            .maps
            .get(t)
            .ok_or_else(|| ApiError::bad_request(format!("no neuron map loaded for trait {t}")))?;
        let direction = Direction::from_str(&s.direction)
            .map_err(|_| ApiError::bad_request(format!("steering[{i}]: unknown direction {:?}", s.direction)))?;
        let gamma = clamp_gamma(s.gamma).ok_or_else(|| ApiError::bad_request(format!("steering[{i}]: gamma must be finite")))?;
        let item = SteeringItem::new(Arc::clone(map), direction, gamma);
        counts.insert(t, item.active_counts());
        items.push(item);
        echo.push(SteeringEcho {
            trait_: t,
            direction,
            gamma,
        });
    }
    let max_tokens = req.max_tokens.unwrap_or(state.params.max_tokens);
    if max_tokens == 0 || max_tokens > state.max_tokens_cap {
        return Err(ApiError::bad_request(format!(
            "max_tokens must be between 1 and {}",
            state.max_tokens_cap
        )));
    }
    let prompt = tokenize(&req.prompt, true);
    if prompt.len() > state.model.config().max_seq_len {
        return Err(ApiError::bad_request(format!(
            "prompt is {} tokens, the model accepts {}",
            prompt.len(),
            state.model.config().max_seq_len
        )));
    }
    Ok(PreparedRequest {
        prompt,
        spec: SteeringSpec {
            items,
            weight_fn: Default::default(),
        },
        echo,
        counts,
        params: GenerationParams {
            max_tokens,
            ..state.params.clone()
        },
    })
}

/// Runs one steered decode on the calling thread.
pub fn run_generation(
    model: &ToyModel,
    prepared: PreparedRequest,
    on_token: &mut dyn FnMut(TokenId),
) -> Result<GenerateResponse, ApiError> {
    let bound = prepared
        .spec
        .bind(model.config())
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let overlay: Option<&dyn npti::GateOverlay> = if bound.is_identity() { None } else { Some(&bound) };
    let generation = greedy_decode_streaming(model, &prepared.prompt, &prepared.params, overlay, on_token)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let text = detokenize(&generation.tokens).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(GenerateResponse {
        text,
        tokens: generation.tokens,
        steering_echo: prepared.echo,
        per_trait_active_neuron_counts: prepared.counts,
        stop_reason: generation.stop_reason,
    })
}

async fn generate(
    State(state): State<Arc<AppState>>,
    body: Result<Json<GenerateRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let permit = Arc::clone(&state.in_flight).try_acquire_owned().map_err(|_| ApiError {
        status: StatusCode::TOO_MANY_REQUESTS,
        message: "too many generations in flight, retry later".into(),
    })?;
    let prepared = prepare(&state, &req)?;
    let model = Arc::clone(&state.model);

    if !req.stream {
        let resp = tokio::task::spawn_blocking(move || {
            let _permit = permit;
            run_generation(&model, prepared, &mut |_| {})
        })
        .await
        .map_err(|e| ApiError::internal(format!("generation task failed: {e}")))??;
        return Ok(Json(resp).into_response());
    }

    // NDJSON: one {"token","text"} line per token, then the full response
    // with "done": true.
    let (tx, rx) = mpsc::unbounded_channel::<Bytes>();
    tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let token_tx = tx.clone();
        let mut on_token = |t: TokenId| {
            let piece = detokenize(&[t]).unwrap_or_default();
            let line = serde_json::json!({ "token": t, "text": piece });
            let _ = token_tx.send(Bytes::from(format!("{line}\n")));
        };
        let last = match run_generation(&model, prepared, &mut on_token) {
            Ok(resp) => {
                let mut v = serde_json::to_value(&resp).expect("response serializes");
                v["done"] = serde_json::Value::Bool(true);
                v
            }
            Err(e) => serde_json::json!({ "done": true, "error": e.message }),
        };
        let _ = tx.send(Bytes::from(format!("{last}\n")));
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|b| (Ok::<_, Infallible>(b), rx))
    });
    Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .body(Body::from_stream(stream))
        .map_err(|e| ApiError::internal(e.to_string()))
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
