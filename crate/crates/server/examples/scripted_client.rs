//! Plays the labeler against the HTTP API in-process: creates a session,
//! then for each round fetches queries, answers them from a hidden ground
//! truth and submits. Prints the held-out error reported by the server.
//!
//! cargo run --release -p tackl-server --example scripted_client -- [rounds]

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use tackl::model::{ObjectId, TripletResponse};
use tackl::oracle::{default_synthetic_dims, exhaustive_pool, generate_ground_truth, make_aux_features, AnswerMode, DimSpec, PoolBudget};
use tackl_server::{router, AppState};

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> Value {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert!(status.is_success(), "{method} {uri}: {status} {v}");
    v
}

#[tokio::main]
async fn main() {
    let rounds: usize = std::env::args().nth(1).map_or(6, |a| a.parse().expect("rounds"));
    let n = 20;
    let space = generate_ground_truth(n, &default_synthetic_dims(), 21).unwrap();
    let features = make_aux_features(&space, &[0, 1, 2], 2, &DimSpec::uniform(0.0, 1.0), 21).unwrap();
    let eval: Vec<TripletResponse> = exhaustive_pool(&space, AnswerMode::Deterministic, 21, PoolBudget::default())
        .unwrap()
        .responses()
        .into_iter()
        .step_by(7)
        .collect();

    let objects: Vec<Value> = (0..n)
        .map(|i| json!({ "label": format!("item {i}"), "features": features.row(i).to_vec() }))
        .collect();
    let app = router(AppState::in_memory());
    let snap = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({ "manifest": { "objects": objects }, "config": { "method": "a-tackl", "seed": 1 }, "evaluation": eval })),
    )
    .await;
    let id = snap["id"].as_u64().unwrap();
    println!("session {id}: {} objects, status {}", snap["n"], snap["status"]);

    for _ in 0..rounds {
        let round = call(&app, "POST", &format!("/sessions/{id}/rounds"), None).await;
        let answers: Vec<Value> = round["queries"]
            .as_array()
            .unwrap()
            .iter()
            .map(|q| {
                let (a, b, c) = (q["head"].as_u64().unwrap() as usize, q["pair"][0].as_u64().unwrap() as usize, q["pair"][1].as_u64().unwrap() as usize);
                let b_closer = space.sq_dist(ObjectId(a), ObjectId(b)) <= space.sq_dist(ObjectId(a), ObjectId(c));
                let (closer, farther) = if b_closer { (b, c) } else { (c, b) };
                json!({ "head": a, "closer": closer, "farther": farther })
            })
            .collect();
        let out = call(&app, "POST", &format!("/sessions/{id}/responses?wait=true"), Some(json!({ "responses": answers }))).await;
        let snap = call(&app, "GET", &format!("/sessions/{id}"), None).await;
        println!(
            "round {}: {} answers, status {}, held-out error {:.4}",
            round["round"], out["accepted"], snap["status"], snap["metrics"]["error"].as_f64().unwrap_or(f64::NAN)
        );
    }
}
