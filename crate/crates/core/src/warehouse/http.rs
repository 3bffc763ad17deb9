//! HTTP surface of the warehouse:
//!
//! * `POST /sparql`: query text in the body, SPARQL results JSON back;
//!   400 with a plain-text message when the query is rejected
//! * `GET /metrics`: [`MetricsReport`](crate::metrics::MetricsReport) JSON
//! * `GET /health`: `ok`

use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

use super::Warehouse;

pub const RESULTS_MEDIA_TYPE: &str = "application/sparql-results+json";

pub fn router(warehouse: Arc<Warehouse>) -> Router {
    Router::new()
        .route("/sparql", post(post_sparql))
        .route("/metrics", get(get_metrics))
        .route("/health", get(|| async { "ok\n" }))
        .with_state(warehouse)
}

async fn post_sparql(State(wh): State<Arc<Warehouse>>, body: String) -> Response {
    let result = tokio::task::spawn_blocking(move || wh.sparql_query(&body)).await;
    match result {
        Ok(Ok(table)) => ([(header::CONTENT_TYPE, RESULTS_MEDIA_TYPE)], table.to_json()).into_response(),
        Ok(Err(e)) => (StatusCode::BAD_REQUEST, format!("{e}\n")).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, format!("{e}\n")).into_response(),
    }
}

async fn get_metrics(State(wh): State<Arc<Warehouse>>) -> Json<crate::metrics::MetricsReport> {
    Json(wh.metrics_snapshot())
}
