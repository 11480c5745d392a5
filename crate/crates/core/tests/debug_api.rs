use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use serde_json::{json, Value as Json};
use sgl::analyze::{compile, derive_schema};
use sgl::debug::{router, Session, SessionHandle};
use sgl::runtime::{EngineConfig, TraceConfig, World};
use sgl::store::load_world;
use std::sync::Arc;
use tower::ServiceExt;

const DAMAGE: &str = "class Unit {
  state: number health = 10; ref<Unit> target = null; number hit = 0;
  effects: number damage : sum;
  update: health = health - damage;
}
run attack(this: Unit) { if (target != null) { target.damage <- hit; } }";

fn damage_world() -> World {
    let p = Arc::new(compile(DAMAGE).unwrap());
    let w = json!({"objects": [
        {"class": "Unit", "id": 1},
        {"class": "Unit", "id": 2, "fields": {"target": 1, "hit": 3}},
        {"class": "Unit", "id": 3, "fields": {"target": 1, "hit": 4}}
    ]});
    let s = load_world(&p, &w).unwrap();
    let config = EngineConfig {
        trace: TraceConfig {
            effects: vec!["Unit".into()],
        },
        ..EngineConfig::default()
    };
    World::new(p, s, config).unwrap()
}

async fn call(h: &SessionHandle, method: Method, path: &str, body: Option<Json>) -> (StatusCode, Json) {
    let req = Request::builder()
        .method(method)
        .uri(path)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(h.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let j = if bytes.is_empty() {
        Json::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Json::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, j)
}

fn health(state: &Json, id: i64) -> f64 {
    state["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["id"] == id)
        .unwrap()["fields"]["health"]
        .as_f64()
        .unwrap()
}

#[tokio::test]
async fn step_advances_one_tick_and_state_reflects_it() {
    let h = Session::spawn(damage_world());
    let (s, j) = call(&h, Method::POST, "/step", Some(json!({"ticks": 1}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(j["tick"], 1);
    let (_, st) = call(&h, Method::GET, "/state/Unit", None).await;
    assert_eq!(st["tick"], 1);
    assert_eq!(health(&st, 1), 3.0);
    let (_, old) = call(&h, Method::GET, "/state/Unit?tick=0", None).await;
    assert_eq!(health(&old, 1), 10.0);
}

#[tokio::test]
async fn three_steps_show_tick_three() {
    let h = Session::spawn(damage_world());
    for _ in 0..3 {
        call(&h, Method::POST, "/step", Some(json!({"ticks": 1}))).await;
    }
    let (_, st) = call(&h, Method::GET, "/state/Unit", None).await;
    assert_eq!(st["tick"], 3);
    let (_, stats) = call(&h, Method::GET, "/stats", None).await;
    assert_eq!(stats["tick"], 3);
}

#[tokio::test]
async fn schema_echoes_the_compiler_mapping() {
    let world = damage_world();
    let expect = json!(derive_schema(&world.program));
    let h = Session::spawn(world);
    let (s, j) = call(&h, Method::GET, "/schema", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(j, expect);
}

#[tokio::test]
async fn effect_drilldown_lists_entries_and_the_reduced_value() {
    let h = Session::spawn(damage_world());
    call(&h, Method::POST, "/step", Some(json!({}))).await;
    let (s, j) = call(&h, Method::GET, "/effects/1?tick=0", None).await;
    assert_eq!(s, StatusCode::OK);
    let entries = j["entries"].as_array().unwrap();
    let mut values: Vec<f64> = entries.iter().map(|e| e["value"].as_f64().unwrap()).collect();
    values.sort_by(f64::total_cmp);
    assert_eq!(values, vec![3.0, 4.0]);
    let sources: Vec<i64> = entries.iter().map(|e| e["source"].as_i64().unwrap()).collect();
    assert_eq!(sources, vec![2, 3]);
    assert_eq!(j["reduced"].as_array().unwrap().len(), 1);
    assert_eq!(j["reduced"][0]["value"], 7.0);
    let (_, none) = call(&h, Method::GET, "/effects/2?tick=0", None).await;
    assert!(none["entries"].as_array().unwrap().is_empty());
    let (_, unknown) = call(&h, Method::GET, "/effects/99?tick=5", None).await;
    assert!(unknown["entries"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn breakpoint_halts_at_the_first_matching_tick() {
    let h = Session::spawn(damage_world());
    let (s, bp) = call(&h, Method::POST, "/breakpoints", Some(json!({"class": "Unit", "cond": "health < 0"}))).await;
    assert_eq!(s, StatusCode::CREATED);
    let (_, r) = call(&h, Method::POST, "/run", Some(json!({"untilBreakpoint": true, "maxTicks": 50}))).await;
    // 10 - 7 = 3 after tick 1, -4 after tick 2.
    assert_eq!(r["tick"], 2);
    assert_eq!(r["halted"]["breakpoint"], bp["id"]);
    assert_eq!(r["halted"]["objects"], json!([1]));
    let (s, _) = call(&h, Method::DELETE, &format!("/breakpoints/{}", bp["id"]), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (_, r) = call(&h, Method::POST, "/step", Some(json!({"ticks": 2}))).await;
    assert_eq!(r["tick"], 4);
    assert!(r["halted"].is_null());
    let (s, _) = call(&h, Method::DELETE, "/breakpoints/77", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn run_until_tick_and_plan_cardinalities() {
    let h = Session::spawn(damage_world());
    let (_, r) = call(&h, Method::POST, "/run", Some(json!({"untilTick": 5}))).await;
    assert_eq!(r["tick"], 5);
    assert_eq!(r["ticksRun"], 5);
    let (s, p) = call(&h, Method::GET, "/plan?class=Unit", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(p["plan"].to_string().contains("rows"));
    let (s, _) = call(&h, Method::GET, "/plan?class=Nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn malformed_requests_are_rejected_with_400() {
    let h = Session::spawn(damage_world());
    let (s, _) = call(&h, Method::POST, "/step", Some(json!({"ticks": "many"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&h, Method::POST, "/breakpoints", Some(json!({"class": "Unit", "cond": "health <"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&h, Method::POST, "/run", Some(json!({}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&h, Method::GET, "/object/abc", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&h, Method::GET, "/state/Unit?tick=-1", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&h, Method::GET, "/state/Ghost", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&h, Method::POST, "/restore", Some(json!({"checkpoint": {"body": {}}}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn get_endpoints_do_not_mutate_the_world() {
    let h = Session::spawn(damage_world());
    call(&h, Method::POST, "/step", Some(json!({}))).await;
    let (_, before) = call(&h, Method::POST, "/checkpoint", Some(json!({}))).await;
    for path in ["/schema", "/state/Unit", "/object/1", "/effects/1", "/plan", "/stats", "/"] {
        let (s, _) = call(&h, Method::GET, path, None).await;
        assert_eq!(s, StatusCode::OK, "{path}");
    }
    let (_, after) = call(&h, Method::POST, "/checkpoint", Some(json!({}))).await;
    assert_eq!(before["hash"], after["hash"]);
    assert_eq!(after["tick"], 1);
}

#[tokio::test]
async fn checkpoint_and_restore_over_http() {
    let h = Session::spawn(damage_world());
    call(&h, Method::POST, "/step", Some(json!({"ticks": 2}))).await;
    let (_, cp) = call(&h, Method::POST, "/checkpoint", Some(json!({}))).await;
    let (_, at2) = call(&h, Method::GET, "/state/Unit", None).await;
    call(&h, Method::POST, "/step", Some(json!({"ticks": 3}))).await;
    let (s, r) = call(&h, Method::POST, "/restore", Some(json!({"checkpoint": cp["checkpoint"]}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["tick"], 2);
    let (_, again) = call(&h, Method::GET, "/state/Unit", None).await;
    assert_eq!(again, at2);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cp.json");
    let (s, meta) = call(&h, Method::POST, "/checkpoint", Some(json!({"path": path}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(meta["tick"], 2);
    call(&h, Method::POST, "/step", Some(json!({}))).await;
    let (_, r) = call(&h, Method::POST, "/restore", Some(json!({"path": path}))).await;
    assert_eq!(r["tick"], 2);
}

#[tokio::test]
async fn index_page_is_served_at_root() {
    let h = Session::spawn(damage_world());
    let req = Request::builder().uri("/").body(Body::empty()).unwrap();
    let resp = router(h).oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/html"));
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    assert!(String::from_utf8_lossy(&bytes).contains("<html"));
}

#[tokio::test]
async fn shutdown_returns_the_world() {
    let h = Session::spawn(damage_world());
    call(&h, Method::POST, "/step", Some(json!({"ticks": 4}))).await;
    let w = h.shutdown().await.unwrap();
    assert_eq!(w.tick(), 4);
}
