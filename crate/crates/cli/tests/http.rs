use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use cota_core::corpus::Ticket;
use cota_core::eval::ScoredLabel;
use cota_core::serve::{MemoryStore, Predictor, Suggestions, TicketService};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

#[derive(Default)]
struct Stub {
    calls: AtomicUsize,
}

impl Predictor for Stub {
    fn version(&self) -> String {
        "stub".into()
    }
    fn predict(&self, t: &Ticket, k: usize) -> Result<Suggestions, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let list = |p: &str| (0..k).map(|i| ScoredLabel { label: format!("{p}{}", (t.message.len() + i) % 5), score: 1.0 - i as f64 / 10.0 }).collect();
        Ok([("contact_type".into(), list("CT")), ("reply_template".into(), list("RT"))].into())
    }
}

fn ticket(id: &str, message: &str) -> Value {
    json!({
        "id": id, "message": message, "created_at": "2024-03-01T10:00:00Z",
        "product_type": "rides", "user_type": "rider", "country": "US", "city": "SF",
        "eta_minutes": null, "trip_status": "completed", "has_trip": true
    })
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn ticket_lifecycle_over_http() {
    let stub = Arc::new(Stub::default());
    let svc = TicketService::new(stub.clone(), Box::new(MemoryStore::default()), 3).unwrap();
    let app = cota_cli::router(Arc::new(svc));

    let (s, created) = call(&app, "POST", "/tickets", Some(ticket("t1", "driver was late"))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(created["suggestions"]["contact_type"].as_array().unwrap().len(), 3);
    assert_eq!(call(&app, "POST", "/tickets", Some(ticket("t1", "again"))).await.0, StatusCode::CONFLICT);
    assert_eq!(call(&app, "POST", "/tickets", Some(ticket("t2", ""))).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    let (s, opened) = call(&app, "GET", "/tickets/t1/suggestions", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(opened, created);
    assert_eq!(stub.calls.load(Ordering::SeqCst), 1);

    let (s, updated) = call(&app, "POST", "/tickets/t1", Some(json!({"message": "charged twice for one ride"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(updated["message"], "charged twice for one ride");
    let (_, fresh) = call(&app, "GET", "/tickets/t1/suggestions", None).await;
    assert_ne!(fresh["feature_hash"], created["feature_hash"]);
    assert_eq!(stub.calls.load(Ordering::SeqCst), 2);

    let top = fresh["suggestions"]["contact_type"][0]["label"].as_str().unwrap().to_string();
    let (s, res) = call(&app, "POST", "/tickets/t1/resolution", Some(json!({"contact_type": top, "reply_template": "RT-x"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(res["entries"][0]["in_top1"], true);
    assert_eq!(res["entries"][1]["in_top3"], false);

    assert_eq!(call(&app, "GET", "/tickets/nope/suggestions", None).await.0, StatusCode::NOT_FOUND);
    let (s, err) = call(&app, "POST", "/tickets/nope/resolution", Some(json!({"contact_type": "a", "reply_template": "b"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(err["error"].as_str().unwrap().contains("nope"));
    assert!(call(&app, "POST", "/tickets/t1", Some(json!({"bogus": 1}))).await.0.is_client_error());
}
