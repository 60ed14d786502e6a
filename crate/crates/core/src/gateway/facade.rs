//! Read-only HTTP view of the registry index, consumed by the web console.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;

use super::ApiError;
use crate::registry::{load_index, ModelFilter, ModelSummary, RegistryEntry, RegistryError, RegistryIndex};

pub const REGISTRY_ROUTE: &str = "/registry";

/// The index is re-read on every request so `add` shows up without a restart.
pub fn registry_router(index_path: PathBuf) -> Router {
    Router::new()
        .route("/registry/models", get(list))
        .route("/registry/models/{name}", get(entry))
        .with_state(Arc::new(index_path))
}

fn load(path: &PathBuf) -> Result<RegistryIndex, ApiError> {
    load_index(path).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "corrupt_index", e.to_string()))
}

async fn list(State(path): State<Arc<PathBuf>>, Query(filter): Query<ModelFilter>) -> Result<Json<Vec<ModelSummary>>, ApiError> {
    Ok(Json(load(&path)?.list_models(&filter)))
}

async fn entry(State(path): State<Arc<PathBuf>>, UrlPath(name): UrlPath<String>) -> Result<Json<RegistryEntry>, ApiError> {
    let index = load(&path)?;
    match index.get_entry(&name) {
        Ok(e) => Ok(Json(e.clone())),
        Err(err @ RegistryError::NotFound(_)) => Err(ApiError::new(StatusCode::NOT_FOUND, "no_such_model", err.to_string())
            .details(json!({ "nearest": index.nearest_names(&name, 3) }))),
        Err(err) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "registry_error", err.to_string())),
    }
}
