//! HTTP surface of a [`TrsServer`]:
//!
//! * `GET /trs`: [`TrsDocument`]
//! * `GET /trs/base?page=n`: [`BasePageDocument`]
//! * `GET /trs/changelog?page=n`: [`ChangeLogPageDocument`]
//! * `GET /resources/{id}`: `application/n-triples`, 404 once deleted

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;

use super::wire::{BasePageDocument, ChangeLogPageDocument, TrsDocument};
use super::{BasePage, ChangeLogPage, TrsDescriptor, TrsServer};
use crate::rdf::ntriples::{self, MEDIA_TYPE};

pub fn trs_document(descriptor: &TrsDescriptor, base_url: &str) -> TrsDocument {
    TrsDocument {
        base: base_page_url(base_url, 0),
        change_log: changelog_page_url(base_url, 0),
        cutoff_order: descriptor.cutoff_order,
    }
}

pub fn base_page_document(page: &BasePage, base_url: &str) -> BasePageDocument {
    BasePageDocument {
        base: page.members.iter().map(|m| m.as_str().to_owned()).collect(),
        cutoff_order: page.cutoff_order,
        next: page.next.map(|n| base_page_url(base_url, n)),
    }
}

pub fn changelog_page_document(page: &ChangeLogPage, base_url: &str) -> ChangeLogPageDocument {
    ChangeLogPageDocument {
        change_log: page.events.clone(),
        cutoff_order: page.cutoff_order,
        next: page.next.map(|n| changelog_page_url(base_url, n)),
    }
}

pub fn base_page_url(base_url: &str, page: usize) -> String {
    format!("{base_url}/trs/base?page={page}")
}

pub fn changelog_page_url(base_url: &str, page: usize) -> String {
    format!("{base_url}/trs/changelog?page={page}")
}

#[derive(Clone)]
struct AppState {
    server: Arc<TrsServer>,
    base_url: Arc<str>,
}

#[derive(Deserialize)]
struct PageParam {
    #[serde(default)]
    page: usize,
}

/// Routes for one server. `base_url` is the externally visible origin used
/// in page links (for example `http://127.0.0.1:8081`).
pub fn router(server: Arc<TrsServer>, base_url: impl Into<String>) -> Router {
    let state = AppState {
        server,
        base_url: Arc::from(base_url.into()),
    };
    Router::new()
        .route("/trs", get(get_trs))
        .route("/trs/base", get(get_base))
        .route("/trs/changelog", get(get_changelog))
        .route("/resources/{id}", get(get_resource))
        .with_state(state)
}

async fn get_trs(State(st): State<AppState>) -> Json<TrsDocument> {
    Json(trs_document(&st.server.serve_descriptor(), &st.base_url))
}

async fn get_base(State(st): State<AppState>, Query(p): Query<PageParam>) -> Json<BasePageDocument> {
    Json(base_page_document(&st.server.serve_base_page(p.page), &st.base_url))
}

async fn get_changelog(
    State(st): State<AppState>,
    Query(p): Query<PageParam>,
) -> Json<ChangeLogPageDocument> {
    Json(changelog_page_document(
        &st.server.serve_changelog_page(p.page),
        &st.base_url,
    ))
}

async fn get_resource(State(st): State<AppState>, Path(id): Path<String>) -> Response {
    let Ok(uri) = st.server.resource_iri(&id) else {
        return StatusCode::NOT_FOUND.into_response();
    };
    match st.server.serve_resource(&uri) {
        Some(graph) => (
            [
                (header::CONTENT_TYPE, MEDIA_TYPE),
                (header::CACHE_CONTROL, "max-age=0"),
            ],
            ntriples::serialize_ntriples(&graph),
        )
            .into_response(),
        None => (
            StatusCode::NOT_FOUND,
            [(header::CACHE_CONTROL, "max-age=0")],
            "resource not found\n",
        )
            .into_response(),
    }
}
