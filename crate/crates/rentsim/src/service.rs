//! HTTP service driven by the scenario workbench.
//!
//! The base run is computed (or reused from disk) at start-up; each `POST /scenarios`
//! becomes a paired scenario run against it, queued behind a job semaphore.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rentsim_core::scenario::{diff_geojson, Scenario, ScenarioDiff};
use rentsim_core::world::{FacilityGeometry, World};
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use crate::config::RunConfig;
use crate::pipeline::{self, BaseRun, Inputs, RunArtifact};
use crate::RunError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunInfo {
    pub run_id: String,
    /// `base` or `scenario`
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub status: Status,
    /// every status the run has been in, oldest first
    pub history: Vec<Status>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    seq: u64,
    #[serde(skip)]
    result: Option<Arc<DiffPayload>>,
}

impl RunInfo {
    fn set(&mut self, status: Status) {
        self.status = status;
        self.history.push(status);
    }
}

#[derive(Debug, Serialize)]
pub struct DiffPayload {
    pub run_id: String,
    pub base_run_id: String,
    pub scenario: String,
    pub zones: Vec<rentsim_core::scenario::ZoneDiff>,
    pub summary: rentsim_core::scenario::DiffSummary,
    pub geojson: Value,
}

pub struct AppState {
    inputs: Inputs,
    base: BaseRun,
    world_payload: Value,
    runs: Mutex<BTreeMap<String, RunInfo>>,
    jobs: Semaphore,
}

impl AppState {
    /// Loads the config and computes (or reuses) its base run.
    pub fn build(config: &RunConfig) -> Result<(Arc<AppState>, RunArtifact), RunError> {
        let config = config.with_scenario(None);
        let inputs = Inputs::load(&config)?;
        let base = pipeline::run_base(&inputs)?;
        let artifact = pipeline::persist(&inputs, &base, None)?;
        let mut runs = BTreeMap::new();
        runs.insert(
            base.run_id.clone(),
            RunInfo {
                run_id: base.run_id.clone(),
                kind: "base",
                scenario: None,
                status: Status::Done,
                history: vec![Status::Done],
                error: None,
                seq: 0,
                result: None,
            },
        );
        let state = AppState {
            world_payload: world_payload(&inputs.world, &config),
            jobs: Semaphore::new(config.max_jobs),
            inputs,
            base,
            runs: Mutex::new(runs),
        };
        Ok((Arc::new(state), artifact))
    }

    pub fn base_run_id(&self) -> &str {
        &self.base.run_id
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut RunInfo)) {
        if let Some(info) = self.runs.lock().expect("run table poisoned").get_mut(id) {
            f(info);
        }
    }
}

fn ring(ls: &geo_types::LineString<f64>) -> Vec<[f64; 2]> {
    ls.0.iter().map(|c| [c.x, c.y]).collect()
}

fn world_payload(world: &World, config: &RunConfig) -> Value {
    let zones: Vec<Value> = world
        .zones()
        .iter()
        .map(|z| {
            let mut rings = vec![ring(z.boundary.exterior())];
            rings.extend(z.boundary.interiors().iter().map(ring));
            json!({
                "type": "Feature",
                "id": z.id.0,
                "geometry": {"type": "Polygon", "coordinates": rings},
                "properties": {
                    "zone_id": z.id.0,
                    "centroid": [z.centroid.x, z.centroid.y],
                    "area_km2": z.area,
                    "res_area_km2": z.residential_area,
                    "rent_per_m2": z.rent,
                    "air_class": z.air_class,
                    "noise_class": z.noise_class,
                    "traffic_class": z.traffic_class,
                },
            })
        })
        .collect();
    let facilities: Vec<Value> = world
        .facilities()
        .iter()
        .map(|f| {
            json!({
                "id": f.id,
                "mode": f.mode.as_str(),
                "geometry_wkt": f.geometry.to_wkt(),
                "service_radius_km": f.service_radius,
                "access_points": match &f.geometry {
                    FacilityGeometry::Line(_) => f.access_points.iter().map(|p| [p.x, p.y]).collect(),
                    FacilityGeometry::Point(_) => Vec::new(),
                },
            })
        })
        .collect();
    let sites: Vec<Value> = world
        .sites()
        .iter()
        .map(|s| json!({"id": s.id, "type": s.kind.as_str(), "x_km": s.location.x, "y_km": s.location.y, "area_km2": s.area}))
        .collect();
    let defaults = Scenario::empty("defaults").to_spec();
    json!({
        "zones": {"type": "FeatureCollection", "features": zones},
        "facilities": facilities,
        "sites": sites,
        "defaults": {
            "service_radius_km": config.world.service_radii,
            "rent_bands": defaults.rent_bands,
            "neighborhood_radius_km": defaults.neighborhood_radius_km,
        },
    })
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": message.into()}))).into_response()
}

async fn get_world(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(state.world_payload.clone())
}

async fn list_runs(State(state): State<Arc<AppState>>) -> Json<Vec<RunInfo>> {
    let runs = state.runs.lock().expect("run table poisoned");
    let mut list: Vec<RunInfo> = runs.values().cloned().collect();
    list.sort_by_key(|r| r.seq);
    Json(list)
}

async fn run_status(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.runs.lock().expect("run table poisoned").get(&id) {
        Some(info) => Json(info.clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown run {id}")),
    }
}

async fn run_diff(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let runs = state.runs.lock().expect("run table poisoned");
    let Some(info) = runs.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown run {id}"));
    };
    match (&info.result, info.status) {
        (Some(payload), _) => Json(payload.as_ref()).into_response(),
        (None, _) if info.kind == "base" => error(StatusCode::NOT_FOUND, "the base run has no diff"),
        (None, status) => (
            StatusCode::CONFLICT,
            Json(json!({"run_id": id, "status": status, "error": info.error})),
        )
            .into_response(),
    }
}

fn compute(state: &AppState, scenario: &Scenario) -> Result<DiffPayload, RunError> {
    let run = pipeline::run_scenario(&state.inputs, &state.base, scenario)?;
    pipeline::persist(&state.inputs, &state.base, Some(&run))?;
    let geojson = diff_geojson(&run.diff, &run.world).map_err(RunError::at("scenario"))?;
    let ScenarioDiff { scenario, zones, summary } = run.diff;
    Ok(DiffPayload {
        run_id: run.run_id,
        base_run_id: state.base.run_id.clone(),
        scenario,
        zones,
        summary,
        geojson,
    })
}

async fn post_scenario(State(state): State<Arc<AppState>>, body: String) -> Response {
    let scenario = match pipeline::parse_scenario(&body, &state.inputs.world, &state.inputs.config) {
        Ok(s) => s,
        Err(RunError::Scenario(errors)) => {
            return (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({"errors": errors}))).into_response()
        }
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    };
    let run_id = state.inputs.run_id(Some(&scenario));
    {
        let mut runs = state.runs.lock().expect("run table poisoned");
        if let Some(info) = runs.get(&run_id) {
            return (StatusCode::OK, Json(json!({"run_id": run_id, "status": info.status}))).into_response();
        }
        let seq = runs.len() as u64;
        runs.insert(
            run_id.clone(),
            RunInfo {
                run_id: run_id.clone(),
                kind: "scenario",
                scenario: Some(scenario.name.clone()),
                status: Status::Queued,
                history: vec![Status::Queued],
                error: None,
                seq,
                result: None,
            },
        );
    }
    let job_state = state.clone();
    let id = run_id.clone();
    tokio::spawn(async move {
        let Ok(_permit) = job_state.jobs.acquire().await else {
            return;
        };
        job_state.update(&id, |r| r.set(Status::Running));
        let worker = job_state.clone();
        let outcome = tokio::task::spawn_blocking(move || compute(&worker, &scenario)).await;
        match outcome {
            Ok(Ok(payload)) => job_state.update(&id, |r| {
                r.result = Some(Arc::new(payload));
                r.set(Status::Done);
            }),
            Ok(Err(e)) => job_state.update(&id, |r| {
                r.error = Some(e.to_string());
                r.set(Status::Failed);
            }),
            Err(e) => job_state.update(&id, |r| {
                r.error = Some(format!("job aborted: {e}"));
                r.set(Status::Failed);
            }),
        }
    });
    (StatusCode::ACCEPTED, Json(json!({"run_id": run_id, "status": Status::Queued}))).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/world", get(get_world))
        .route("/runs", get(list_runs))
        .route("/scenarios", post(post_scenario))
        .route("/runs/{id}/diff", get(run_diff))
        .route("/runs/{id}/status", get(run_status))
        .with_state(state)
}

/// Builds the base run, then serves until the process is stopped.
pub async fn serve(config: &RunConfig, addr: SocketAddr) -> anyhow::Result<()> {
    let cfg = config.clone();
    let (state, artifact) = tokio::task::spawn_blocking(move || AppState::build(&cfg)).await??;
    log::info!("base run {} at {}", artifact.run_id, artifact.dir.display());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
