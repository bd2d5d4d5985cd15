use std::collections::HashMap;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use pbic_core::preference::{laplace_fit, simulate_preferences, GpHyperparams, StrengthPolicy};
use pbic_service::{router, Store};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req.header("content-type", "application/json").body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

/// Small clustered dataset with an 8-point grid and a short optimizer run.
fn session_body(seed: u64) -> Value {
    json!({
        "dataset": {"kind": "clusters", "k": 3, "per_cluster": 20, "dim": 5, "separation": 8.0},
        "grid": [2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0],
        "seed": seed,
        "optimizer": {"max_iters": 250, "exaggeration_iters": 50, "momentum_switch_iter": 100},
    })
}

async fn create(app: &Router, seed: u64) -> String {
    let (status, v) = call_json(app, "POST", "/sessions", Some(session_body(seed))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

fn app_at(dir: &std::path::Path) -> Router {
    router(Arc::new(Store::open(dir).unwrap()))
}

#[tokio::test]
async fn unknown_session_and_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_at(dir.path());
    let (status, v) = call_json(&app, "GET", "/sessions/nope/pair", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "not_found");
    assert!(v["message"].is_string());
    let (status, _) = call_json(&app, "GET", "/sessions/..%2F..%2Fetc/report", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, v) = call_json(&app, "POST", "/sessions", Some(json!({"dataset": {"kind": "bogus"}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "bad_request");

    let mut body = session_body(0);
    body["grid"] = json!([2.0, 500.0]);
    let (status, v) = call_json(&app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");
    // Nothing half-written is left behind.
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);

    let id = create(&app, 1).await;
    for bad in [
        json!({"winner": 1, "loser": 1, "strength": 2}),
        json!({"winner": 1, "loser": 2, "strength": 5}),
        json!({"winner": 1, "loser": 2, "strength": 0}),
        json!({"winner": 9, "loser": 2, "strength": 1}),
    ] {
        let (status, v) = call_json(&app, "POST", &format!("/sessions/{id}/preferences"), Some(bad)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");
    }
    let (status, _) = call(&app, "GET", &format!("/sessions/{id}/maps/99.svg"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", &format!("/sessions/{id}/maps/x.png"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn same_seed_gives_same_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_at(dir.path());
    let a = create(&app, 5).await;
    let b = create(&app, 5).await;
    assert_ne!(a, b);
    let (_, ra) = call_json(&app, "GET", &format!("/sessions/{a}/report"), None).await;
    let (_, rb) = call_json(&app, "GET", &format!("/sessions/{b}/report"), None).await;
    assert_eq!(ra["sweep"], rb["sweep"]);
    for i in 0..8 {
        let (_, sa) = call(&app, "GET", &format!("/sessions/{a}/maps/{i}.svg"), None).await;
        let (_, sb) = call(&app, "GET", &format!("/sessions/{b}/maps/{i}.svg"), None).await;
        assert_eq!(sa, sb);
    }
}

#[tokio::test]
async fn default_grid_spans_eight_to_half_n() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_at(dir.path());
    let body = json!({
        "dataset": {"kind": "clusters", "k": 4, "per_cluster": 10, "dim": 5, "separation": 8.0},
        "optimizer": {"max_iters": 100, "exaggeration_iters": 50, "momentum_switch_iter": 50},
    });
    let (status, v) = call_json(&app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    assert_eq!(v["grid"], json!([8.0, 16.0, 20.0]));
}

#[tokio::test]
async fn pairs_are_distinct_uniform_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_at(dir.path());
    let id = create(&app, 2).await;
    let mut counts: HashMap<(u64, u64), u32> = HashMap::new();
    let mut sequence = Vec::new();
    let mut left_first = 0;
    for _ in 0..300 {
        let (status, v) = call_json(&app, "GET", &format!("/sessions/{id}/pair"), None).await;
        assert_eq!(status, StatusCode::OK);
        let (l, r) = (v["left"].as_u64().unwrap(), v["right"].as_u64().unwrap());
        assert_ne!(l, r);
        assert!(v["left_svg"].as_str().unwrap().contains("<svg"));
        left_first += u32::from(l < r);
        *counts.entry((l.min(r), l.max(r))).or_default() += 1;
        sequence.push((l, r));
    }
    // 300 draws over 28 pairs: every pair shown 10 or 11 times.
    assert_eq!(counts.len(), 28);
    assert!(counts.values().all(|&c| c == 10 || c == 11), "{counts:?}");
    assert!(left_first > 100 && left_first < 200);

    // A fresh process over the same directory continues the sequence.
    let app2 = app_at(dir.path());
    let (_, v) = call_json(&app2, "GET", &format!("/sessions/{id}/pair"), None).await;
    assert_eq!(v["draw"], 300);

    // Another session with the same seed replays the same sequence.
    let other = create(&app, 2).await;
    for &(l, r) in sequence.iter().take(40) {
        let (_, v) = call_json(&app, "GET", &format!("/sessions/{other}/pair"), None).await;
        assert_eq!((v["left"].as_u64().unwrap(), v["right"].as_u64().unwrap()), (l, r));
    }
}

#[tokio::test]
async fn empty_report_and_first_preference() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_at(dir.path());
    let id = create(&app, 3).await;
    let (status, r) = call_json(&app, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["preference_count"], 0);
    assert_eq!(r["human_argmax_defined"], false);
    assert!(r["human_argmax_index"].is_null());
    assert!(r["verdict"].is_null());
    assert!(r["pbic_index"].is_u64());
    assert!(r["posterior"]["mean"].as_array().unwrap().iter().all(|v| v.as_f64() == Some(0.0)));
    assert!(r["utility_svg"].as_str().unwrap().starts_with("<?xml"));

    let (status, v) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/preferences"),
        Some(json!({"winner": 5, "loser": 1, "strength": 3, "annotator": "a1"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let mean = v["posterior"]["mean"].as_array().unwrap();
    assert!(mean[5].as_f64().unwrap() > mean[1].as_f64().unwrap());
    assert_eq!(v["preference_count"], 1);
    assert!(v["verdict"]["significant_difference"].is_boolean());

    let (_, r) = call_json(&app, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(r["human_argmax_defined"], true);
    assert_eq!(r["significant_difference"], r["verdict"]["significant_difference"]);
    assert!(r["utility_svg"].as_str().unwrap().contains("class=\"band\""));
}

#[tokio::test]
async fn appendix_protocol_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_at(dir.path());
    let id = create(&app, 4).await;
    let (_, r0) = call_json(&app, "GET", &format!("/sessions/{id}/report"), None).await;
    let grid: Vec<f64> = serde_json::from_value(r0["sweep"]["grid"].clone()).unwrap();
    let pbic = r0["pbic_index"].as_u64().unwrap() as usize;
    let utility: Vec<f64> = (0..grid.len()).map(|i| -((i as f64 - pbic as f64).powi(2)) / 4.0).collect();
    let prefs = simulate_preferences(&utility, 100, 0.3, &StrengthPolicy::default(), 17).unwrap();
    for p in &prefs {
        let (status, _) =
            call_json(&app, "POST", &format!("/sessions/{id}/preferences"), Some(serde_json::to_value(p).unwrap()))
                .await;
        assert_eq!(status, StatusCode::OK);
    }
    let (_, before) = call(&app, "GET", &format!("/sessions/{id}/report"), None).await;
    let report: Value = serde_json::from_slice(&before).unwrap();
    assert_eq!(report["preference_count"], 100);
    for key in ["human_argmax_index", "utility_at_pbic", "lower_bound", "upper_bound", "significant_difference"] {
        assert!(!report["verdict"][key].is_null(), "{key}");
    }

    // Posterior equals a fresh fit over the stored records.
    let fresh = laplace_fit(&prefs, &grid, &GpHyperparams::default()).unwrap();
    let served: Vec<f64> = serde_json::from_value(report["posterior"]["mean"].clone()).unwrap();
    assert_eq!(served, fresh.mean);

    // Stable bytes across calls and across a restart.
    let (_, again) = call(&app, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(before, again);
    drop(app);
    let app = app_at(dir.path());
    let (_, after) = call(&app, "GET", &format!("/sessions/{id}/report"), None).await;
    let (b, a) = (String::from_utf8(before).unwrap(), String::from_utf8(after.clone()).unwrap());
    if b != a {
        let at = b.bytes().zip(a.bytes()).position(|(x, y)| x != y).unwrap_or(b.len().min(a.len()));
        panic!("report changed after restart near {:?} vs {:?}", &b[at.saturating_sub(80)..(at + 80).min(b.len())], &a[at.saturating_sub(80)..(at + 80).min(a.len())]);
    }
    let text = String::from_utf8(after).unwrap();
    assert!(text.find("\"config\"").unwrap() < text.find("\"dataset\"").unwrap());
}

#[tokio::test]
async fn concurrent_records_are_all_applied() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_at(dir.path());
    let id = create(&app, 6).await;
    let tasks: Vec<_> = (0..16)
        .map(|k| {
            let app = app.clone();
            let id = id.clone();
            tokio::spawn(async move {
                let body = json!({"winner": k % 8, "loser": (k + 3) % 8, "strength": 1 + k % 4});
                call_json(&app, "POST", &format!("/sessions/{id}/preferences"), Some(body)).await.0
            })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    let (_, r) = call_json(&app, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(r["preference_count"], 16);
    let stored = pbic_core::preference::read_jsonl(std::io::BufReader::new(
        std::fs::File::open(dir.path().join(&id).join("preferences.jsonl")).unwrap(),
    ))
    .unwrap();
    let grid: Vec<f64> = serde_json::from_value(r["sweep"]["grid"].clone()).unwrap();
    let fresh = laplace_fit(&stored, &grid, &GpHyperparams::default()).unwrap();
    let served: Vec<f64> = serde_json::from_value(r["posterior"]["mean"].clone()).unwrap();
    assert_eq!(served, fresh.mean);
}

#[tokio::test]
async fn maps_follow_label_mode() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_at(dir.path());
    let mut body = session_body(8);
    body["show_labels"] = json!(false);
    let (_, v) = call_json(&app, "POST", "/sessions", Some(body)).await;
    let plain = v["session_id"].as_str().unwrap().to_string();
    let colored = create(&app, 8).await;
    let (status, svg) = call(&app, "GET", &format!("/sessions/{plain}/maps/0.svg"), None).await;
    assert_eq!(status, StatusCode::OK);
    let svg = String::from_utf8(svg).unwrap();
    assert!(!svg.contains("legend"));
    assert_eq!(svg.matches("<circle").count(), 60);
    let (_, svg) = call(&app, "GET", &format!("/sessions/{colored}/maps/0.svg"), None).await;
    assert!(String::from_utf8(svg).unwrap().contains("legend"));
}
