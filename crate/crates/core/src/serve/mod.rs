//! Ticket lifecycle service: predict on creation, serve cached suggestions
//! on open unless the ticket's features changed, log resolutions.

mod service;
mod store;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Ticket;
use crate::eval::{PredictionRecord, ScoredLabel};

pub use service::{TicketService, TicketUpdate};
pub use store::{Event, FileStore, MemoryStore, Snapshot, TicketStore};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("ticket {0:?} not found")]
    NotFound(String),
    #[error("ticket {0:?} already exists")]
    AlreadyExists(String),
    #[error("invalid ticket: {0}")]
    InvalidTicket(String),
    #[error("model unavailable: {0}")]
    ModelUnavailable(String),
    #[error("storage: {0}")]
    Storage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Ranked suggestions per task name.
pub type Suggestions = BTreeMap<String, Vec<ScoredLabel>>;

/// A trained model as seen by the service.
pub trait Predictor: Send + Sync {
    /// Identifies the model; part of every prediction key.
    fn version(&self) -> String;
    fn predict(&self, ticket: &Ticket, k: usize) -> Result<Suggestions, String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionStatus {
    Ready,
    /// The model failed; retried on the next open.
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPrediction {
    pub ticket_id: String,
    pub status: PredictionStatus,
    pub suggestions: Suggestions,
    pub feature_hash: String,
    pub model_version: String,
    pub created_at: DateTime<Utc>,
}

/// Outcome of one resolution, appended to the audit log once per task.
///
/// The embedded record's truth is the chosen value, so the audit log reads
/// back as a prediction dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    #[serde(flatten)]
    pub record: PredictionRecord,
    pub chosen: String,
    pub in_top1: bool,
    pub in_top3: bool,
    /// Resolved before any suggestions were delivered.
    pub no_suggestion: bool,
    pub model_version: Option<String>,
    pub resolved_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub ticket_id: String,
    pub entries: Vec<AuditRecord>,
}

/// The parts of a ticket a model reads; identity and timestamps are left out.
#[derive(Serialize)]
struct FeatureView<'a> {
    message: &'a str,
    product_type: &'a str,
    user_type: &'a str,
    country: &'a str,
    city: &'a str,
    eta_minutes: Option<f64>,
    trip_status: &'a str,
    has_trip: bool,
}

/// Hex SHA-256 over the model version and the ticket's model-visible fields.
pub fn feature_hash(ticket: &Ticket, model_version: &str) -> String {
    let view = FeatureView {
        message: &ticket.message,
        product_type: &ticket.product_type,
        user_type: &ticket.user_type,
        country: &ticket.country,
        city: &ticket.city,
        eta_minutes: ticket.eta_minutes,
        trip_status: &ticket.trip_status,
        has_trip: ticket.has_trip,
    };
    let mut h = Sha256::new();
    h.update(model_version.as_bytes());
    h.update([0u8]);
    h.update(serde_json::to_vec(&view).expect("features serialize"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
