use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::corpus::{Task, Ticket};
use crate::eval::PredictionRecord;

use super::store::{Event, Snapshot, TicketStore};
use super::{feature_hash, AuditRecord, PredictionStatus, Predictor, Resolution, ServeError, StoredPrediction};

/// Partial ticket edit; absent fields are left alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TicketUpdate {
    pub message: Option<String>,
    pub product_type: Option<String>,
    pub user_type: Option<String>,
    pub country: Option<String>,
    pub city: Option<String>,
    /// `Some(None)` clears the value.
    #[serde(default, with = "double_option")]
    pub eta_minutes: Option<Option<f64>>,
    pub trip_status: Option<String>,
    pub has_trip: Option<bool>,
}

mod double_option {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Option<f64>>, s: S) -> Result<S::Ok, S::Error> {
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Option<f64>>, D::Error> {
        Option::<f64>::deserialize(d).map(Some)
    }
}

impl TicketUpdate {
    fn apply(self, t: &mut Ticket) {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { t.$f = v; } )*};
        }
        set!(message, product_type, user_type, country, city, eta_minutes, trip_status, has_trip);
    }
}

#[derive(Debug, Default)]
struct TicketState {
    ticket: Option<Ticket>,
    prediction: Option<StoredPrediction>,
    delivered: bool,
}

/// Front door for ticket events.
///
/// Operations on one ticket are serialized by a per-ticket lock; distinct
/// tickets proceed in parallel. The model sits behind an `RwLock<Arc<_>>`
/// so a swap is atomic and in-flight requests keep the model they started with.
pub struct TicketService {
    model: RwLock<Arc<dyn Predictor>>,
    tickets: Mutex<HashMap<String, Arc<Mutex<TicketState>>>>,
    store: Mutex<Box<dyn TicketStore>>,
    k: usize,
}

impl TicketService {
    pub fn new(model: Arc<dyn Predictor>, mut store: Box<dyn TicketStore>, k: usize) -> Result<Self, ServeError> {
        let Snapshot { tickets, mut predictions, delivered, .. } = store.load()?;
        let states = tickets
            .into_iter()
            .map(|(id, ticket)| {
                let st = TicketState {
                    prediction: predictions.remove(&id),
                    delivered: delivered.get(&id).copied().unwrap_or(false),
                    ticket: Some(ticket),
                };
                (id, Arc::new(Mutex::new(st)))
            })
            .collect();
        Ok(Self { model: RwLock::new(model), tickets: Mutex::new(states), store: Mutex::new(store), k })
    }

    pub fn top_k(&self) -> usize {
        self.k
    }

    pub fn model_version(&self) -> String {
        self.model().version()
    }

    pub fn swap_model(&self, model: Arc<dyn Predictor>) {
        *self.model.write().expect("model lock") = model;
    }

    fn model(&self) -> Arc<dyn Predictor> {
        self.model.read().expect("model lock").clone()
    }

    fn record(&self, e: Event) -> Result<(), ServeError> {
        self.store.lock().expect("store lock").append(&e)
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<TicketState>>, ServeError> {
        self.tickets.lock().expect("ticket map").get(id).cloned().ok_or_else(|| ServeError::NotFound(id.to_string()))
    }

    /// Calls the model and stores the outcome; a failure stores a pending marker.
    fn predict_into(&self, st: &mut TicketState) -> Result<StoredPrediction, ServeError> {
        let ticket = st.ticket.as_ref().expect("slot holds a ticket");
        let model = self.model();
        let version = model.version();
        let (status, suggestions) = match model.predict(ticket, self.k) {
            Ok(mut s) => {
                for list in s.values_mut() {
                    list.truncate(self.k);
                }
                (PredictionStatus::Ready, s)
            }
            Err(e) => {
                log::warn!("prediction for {} failed: {e}", ticket.id);
                (PredictionStatus::Pending, Default::default())
            }
        };
        let p = StoredPrediction {
            ticket_id: ticket.id.clone(),
            status,
            suggestions,
            feature_hash: feature_hash(ticket, &version),
            model_version: version,
            created_at: Utc::now(),
        };
        self.record(Event::Prediction { prediction: p.clone() })?;
        st.prediction = Some(p.clone());
        Ok(p)
    }

    /// Stores a new ticket and predicts for it.
    pub fn create(&self, ticket: Ticket) -> Result<StoredPrediction, ServeError> {
        ticket.validate().map_err(|e| ServeError::InvalidTicket(e.to_string()))?;
        let slot = {
            let mut map = self.tickets.lock().expect("ticket map");
            if map.contains_key(&ticket.id) {
                return Err(ServeError::AlreadyExists(ticket.id));
            }
            let slot = Arc::new(Mutex::new(TicketState::default()));
            map.insert(ticket.id.clone(), slot.clone());
            slot
        };
        let mut st = slot.lock().expect("ticket lock");
        self.record(Event::Ticket { ticket: ticket.clone() })?;
        st.ticket = Some(ticket);
        self.predict_into(&mut st)
    }

    /// Edits ticket fields. The model is not called; the next open notices the change.
    pub fn update(&self, id: &str, update: TicketUpdate) -> Result<Ticket, ServeError> {
        let slot = self.slot(id)?;
        let mut st = slot.lock().expect("ticket lock");
        let mut t = st.ticket.clone().expect("slot holds a ticket");
        update.apply(&mut t);
        t.validate().map_err(|e| ServeError::InvalidTicket(e.to_string()))?;
        self.record(Event::Ticket { ticket: t.clone() })?;
        st.ticket = Some(t.clone());
        Ok(t)
    }

    pub fn ticket(&self, id: &str) -> Result<Ticket, ServeError> {
        let slot = self.slot(id)?;
        let st = slot.lock().expect("ticket lock");
        Ok(st.ticket.clone().expect("slot holds a ticket"))
    }

    /// Suggestions for an agent opening the ticket. Recomputes only when the
    /// features or the model changed since the stored prediction, or it is pending.
    pub fn open(&self, id: &str) -> Result<StoredPrediction, ServeError> {
        let slot = self.slot(id)?;
        let mut st = slot.lock().expect("ticket lock");
        let ticket = st.ticket.as_ref().expect("slot holds a ticket");
        let current = feature_hash(ticket, &self.model().version());
        let fresh = st
            .prediction
            .as_ref()
            .filter(|p| p.status == PredictionStatus::Ready && p.feature_hash == current)
            .cloned();
        let p = match fresh {
            Some(p) => p,
            None => self.predict_into(&mut st)?,
        };
        if p.status == PredictionStatus::Pending {
            return Err(ServeError::ModelUnavailable(format!("no prediction for ticket {id}")));
        }
        if !st.delivered {
            self.record(Event::Delivered { ticket_id: id.to_string() })?;
            st.delivered = true;
        }
        Ok(p)
    }

    /// Logs the agent's choices against the last delivered suggestions.
    pub fn resolve(&self, id: &str, contact_type: &str, reply_template: &str) -> Result<Resolution, ServeError> {
        let slot = self.slot(id)?;
        let st = slot.lock().expect("ticket lock");
        let delivered = st.delivered.then_some(st.prediction.as_ref()).flatten();
        let now = Utc::now();
        let entries: Vec<AuditRecord> = [(Task::ContactType, contact_type), (Task::ReplyTemplate, reply_template)]
            .into_iter()
            .map(|(task, chosen)| {
                let ranking = delivered.and_then(|p| p.suggestions.get(task.name())).cloned().unwrap_or_default();
                let pos = ranking.iter().position(|s| s.label == chosen);
                AuditRecord {
                    record: PredictionRecord {
                        ticket_id: id.to_string(),
                        task: task.name().to_string(),
                        ranking,
                        truth: Some(chosen.to_string()),
                    },
                    chosen: chosen.to_string(),
                    in_top1: pos == Some(0),
                    in_top3: pos.is_some_and(|p| p < 3),
                    no_suggestion: delivered.is_none(),
                    model_version: delivered.map(|p| p.model_version.clone()),
                    resolved_at: now,
                }
            })
            .collect();
        {
            let mut store = self.store.lock().expect("store lock");
            store.append(&Event::Resolved { ticket_id: id.to_string(), entries: entries.clone() })?;
            store.audit(&entries)?;
        }
        Ok(Resolution { ticket_id: id.to_string(), entries })
    }
}
