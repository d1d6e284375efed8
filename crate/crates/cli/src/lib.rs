//! HTTP front end for the ticket service.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/tickets` | ticket | 201, stored prediction |
//! | POST | `/tickets/{id}` | partial ticket | 200, updated ticket |
//! | GET | `/tickets/{id}/suggestions` | | 200, stored prediction |
//! | POST | `/tickets/{id}/resolution` | `{contact_type, reply_template}` | 200, resolution |
//!
//! Errors come back as `{"error": "..."}` with 404 for unknown tickets, 409
//! for duplicate creates, 422 for invalid tickets and 503 when the model
//! cannot produce suggestions.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cota_core::corpus::Ticket;
use cota_core::serve::{ServeError, TicketService, TicketUpdate};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionRequest {
    pub contact_type: String,
    pub reply_template: String,
}

pub struct ApiError(ServeError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ServeError::NotFound(_) => StatusCode::NOT_FOUND,
            ServeError::AlreadyExists(_) => StatusCode::CONFLICT,
            ServeError::InvalidTicket(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServeError::ModelUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.0.to_string() }))).into_response()
    }
}

type Shared = Arc<TicketService>;

/// Runs a service call off the async workers; model calls are CPU-bound.
async fn blocking<T, F>(svc: Shared, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&TicketService) -> Result<T, ServeError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ApiError(ServeError::Storage(format!("worker panicked: {e}"))))?
        .map_err(ApiError)
}

async fn create(State(svc): State<Shared>, Json(ticket): Json<Ticket>) -> Result<impl IntoResponse, ApiError> {
    let p = blocking(svc, move |s| s.create(ticket)).await?;
    Ok((StatusCode::CREATED, Json(p)))
}

async fn update(State(svc): State<Shared>, Path(id): Path<String>, Json(u): Json<TicketUpdate>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(blocking(svc, move |s| s.update(&id, u)).await?))
}

async fn suggestions(State(svc): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(blocking(svc, move |s| s.open(&id)).await?))
}

async fn resolution(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Json(r): Json<ResolutionRequest>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(blocking(svc, move |s| s.resolve(&id, &r.contact_type, &r.reply_template)).await?))
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/tickets", post(create))
        .route("/tickets/{id}", post(update))
        .route("/tickets/{id}/suggestions", get(suggestions))
        .route("/tickets/{id}/resolution", post(resolution))
        .with_state(service)
}
