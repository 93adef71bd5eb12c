//! A session driven by a scripted labeler that answers from a pool must
//! reproduce the batch experiment on that pool exactly.

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use tackl::active::{run_experiment, ExperimentData, ExperimentSpec, Method, TrialData};
use tackl::model::TripletQuery;
use tackl::optim::FitConfig;
use tackl::oracle::{
    exhaustive_pool, generate_ground_truth, make_aux_features, AnswerMode, DimSpec, PoolBudget, ResponsePool,
};
use tackl_server::{router, AppState, CreateSession, Manifest, ObjectEntry, SessionConfig, SessionSnapshot};

fn trial_data(n: usize, seed: u64) -> TrialData {
    let dims = vec![DimSpec::uniform(0.0, 1.0); 4];
    let space = generate_ground_truth(n, &dims, seed).unwrap();
    let features = make_aux_features(&space, &[0, 2], 1, &DimSpec::uniform(0.0, 1.0), seed + 1).unwrap();
    let pool = exhaustive_pool(&space, AnswerMode::Deterministic, seed + 2, PoolBudget::default()).unwrap();
    TrialData::from_pool(n, Some(features), pool)
}

async fn post(app: &axum::Router, uri: &str, body: Value) -> Value {
    let req = Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert!(resp.status().is_success(), "{uri}: {}", resp.status());
    serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap()
}

async fn replay(method: Method) {
    let data = Arc::new(trial_data(10, 77));
    let spec = ExperimentSpec {
        methods: vec![method],
        trials: 1,
        rounds: 3,
        seed: 1234,
        fit: FitConfig { max_iters: 200, ..FitConfig::default() },
        ..ExperimentSpec::default()
    };
    let batch = run_experiment(&spec, &ExperimentData::Fixed(Arc::clone(&data))).unwrap();

    let learner = spec.learner(method, 0, &data, false);
    let pool: &ResponsePool = match &data.oracle {
        tackl::oracle::OracleMode::Pool(p) => p,
        _ => unreachable!(),
    };
    let features = data.features.as_ref().unwrap();
    let request = CreateSession {
        manifest: Manifest {
            objects: (0..data.n)
                .map(|i| ObjectEntry {
                    label: format!("o{i}"),
                    media: None,
                    features: Some(features.row(i).to_vec()),
                })
                .collect(),
        },
        config: SessionConfig {
            method,
            dhat: Some(learner.dhat),
            mu: learner.mu,
            seed: learner.seed,
            fit: learner.fit,
            active: learner.active,
            max_rounds: None,
        },
        evaluation: data.eval.clone(),
    };

    let app = router(AppState::in_memory());
    let created = post(&app, "/sessions", serde_json::to_value(&request).unwrap()).await;
    let id = created["id"].as_u64().unwrap();
    for _ in 0..=spec.rounds {
        let round = post(&app, &format!("/sessions/{id}/rounds"), json!(null)).await;
        let queries: Vec<TripletQuery> = serde_json::from_value(round["queries"].clone()).unwrap();
        let answers: Vec<_> = queries.iter().map(|q| pool.get(q).unwrap().response).collect();
        post(&app, &format!("/sessions/{id}/responses?wait=true"), json!({ "responses": answers })).await;
    }
    let req = Request::get(format!("/sessions/{id}")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let snap: SessionSnapshot = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();

    assert_eq!(snap.history.len(), batch.records.len());
    for (h, r) in snap.history.iter().zip(&batch.records) {
        let m = h.metrics.unwrap();
        assert_eq!((h.round, h.responses_seen), (r.round, r.responses_seen));
        assert_eq!(m.error, r.error, "round {}", r.round);
        assert_eq!(m.mean_likelihood, r.mean_likelihood, "round {}", r.round);
        assert_eq!(m.mean_ratio, r.mean_ratio, "round {}", r.round);
        assert_eq!(m.median_ratio, r.median_ratio, "round {}", r.round);
    }
}

#[tokio::test]
async fn session_replay_matches_batch_a_tackl() {
    replay(Method::ATackl).await;
}

#[tokio::test]
async fn session_replay_matches_batch_a_ckl() {
    replay(Method::ACkl).await;
}

#[tokio::test]
async fn session_replay_matches_batch_tackl_random() {
    replay(Method::TacklRandom).await;
}
