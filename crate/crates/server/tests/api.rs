use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rlfa_core::{AuditSession, CsFamily, Population, SessionConfig, Strategy};
use rlfa_server::{router, Store};
use serde_json::{json, Value};
use tower::ServiceExt;

const POP_CSV: &str = "id,reported_value,true_f\n\
a,50,0.2\nb,30,0.4\nc,20,0\nd,12,0.9\ne,7,0.05\nf,3,1\ng,40,0.1\nh,25,0.3\n";

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    send(app, req.body(body).unwrap()).await
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn upload(app: &Router, csv: &str) -> String {
    let req = Request::builder()
        .method(Method::POST)
        .uri("/populations")
        .header("content-type", "text/csv")
        .body(Body::from(csv.to_string()))
        .unwrap();
    let (status, v) = send(app, req).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["population_id"].as_str().unwrap().to_string()
}

fn session_body(pop: &str, seed: u64) -> Value {
    json!({
        "population_id": pop,
        "epsilon": 0.05,
        "delta": 0.05,
        "strategy": "propM",
        "cs_family": "betting",
        "control_variates": false,
        "batch_size": 1,
        "seed": seed,
    })
}

async fn create(app: &Router, pop: &str, seed: u64) -> String {
    let (status, v) = call(app, Method::POST, "/sessions", Some(session_body(pop, seed))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    assert_eq!(v["interval"], json!([0.0, 1.0]));
    v["session_id"].as_str().unwrap().to_string()
}

fn truth() -> Vec<f64> {
    Population::from_csv_reader(POP_CSV.as_bytes())
        .unwrap()
        .truth()
        .unwrap()
        .to_vec()
}

fn app() -> Router {
    router(Arc::new(Store::in_memory()))
}

fn error_kind(v: &Value) -> &str {
    v["error"]["kind"].as_str().unwrap()
}

#[tokio::test]
async fn single_transaction_stops_after_one_observation() {
    let app = app();
    let pop = upload(&app, "id,reported_value\nonly,123.5\n").await;
    let id = create(&app, &pop, 1).await;
    let (status, d) = call(&app, Method::POST, &format!("/sessions/{id}/draw"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(d["indices"], json!([0]));
    assert_eq!(d["t"], 1);
    assert_eq!(d["items"][0]["id"], "only");
    let (status, o) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/observe"),
        Some(json!({"observations": [{"index": 0, "f": 0.3}]})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{o}");
    assert_eq!(o["stopped"], true);
    assert_eq!(o["t"], 1);
    assert_eq!(o["interval"], json!([0.3, 0.3]));
    let (_, s) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(s["stopped_at"], 1);
    assert_eq!(s["status"], "exhausted");
    assert_eq!(s["audited"], json!([{"index": 0, "id": "only", "f": 0.3}]));
}

#[tokio::test]
async fn out_of_range_fraction_is_422() {
    let app = app();
    let pop = upload(&app, POP_CSV).await;
    let id = create(&app, &pop, 2).await;
    let (_, d) = call(&app, Method::POST, &format!("/sessions/{id}/draw"), None).await;
    let index = d["indices"][0].as_u64().unwrap();
    for f in [1.5, -0.1] {
        let (status, e) = call(
            &app,
            Method::POST,
            &format!("/sessions/{id}/observe"),
            Some(json!({"observations": [{"index": index, "f": f}]})),
        )
        .await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(error_kind(&e), "out_of_range");
    }
    // the draw is still pending and can be answered
    let (status, _) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/observe"),
        Some(json!({"observations": [{"index": index, "f": 0.5}]})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn sequencing_errors_are_409() {
    let app = app();
    let pop = upload(&app, POP_CSV).await;
    let id = create(&app, &pop, 3).await;
    let observe = json!({"observations": [{"index": 0, "f": 0.1}]});
    let (status, e) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/observe"),
        Some(observe),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_kind(&e), "sequencing");
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/draw"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, e) = call(&app, Method::POST, &format!("/sessions/{id}/draw"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_kind(&e), "sequencing");
}

#[tokio::test]
async fn validation_and_lookup_errors() {
    let app = app();
    let (status, e) = call(&app, Method::GET, "/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_kind(&e), "not_found");
    let (status, _) = call(&app, Method::POST, "/sessions/nope/draw", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::POST, "/sessions", Some(session_body("nope", 1))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let pop = upload(&app, POP_CSV).await;
    let mut bad = session_body(&pop, 1);
    bad["epsilon"] = json!(-0.5);
    let (status, e) = call(&app, Method::POST, "/sessions", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_kind(&e), "config");
    let mut bad = session_body(&pop, 1);
    bad["strategy"] = json!("bogus");
    let (status, e) = call(&app, Method::POST, "/sessions", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_kind(&e), "validation");
    // propMS needs a score column
    let mut bad = session_body(&pop, 1);
    bad["strategy"] = json!("propMS");
    let (status, _) = call(&app, Method::POST, "/sessions", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let req = Request::builder()
        .method(Method::POST)
        .uri("/populations")
        .body(Body::from("id,reported_value\na,-4\n"))
        .unwrap();
    let (status, e) = send(&app, req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(e["error"]["detail"].as_str().unwrap().contains("index 0"));
}

#[tokio::test]
async fn multipart_upload() {
    let app = app();
    let boundary = "XyZbOuNdArY";
    let body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"pop.csv\"\r\n\
         Content-Type: text/csv\r\n\r\n{POP_CSV}\r\n--{boundary}--\r\n"
    );
    let req = Request::builder()
        .method(Method::POST)
        .uri("/populations")
        .header("content-type", format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let (status, v) = send(&app, req).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    assert_eq!(v["n"], 8);
    assert_eq!(v["total_value"], 187.0);
    let id = v["population_id"].as_str().unwrap();
    let (status, again) = call(&app, Method::GET, &format!("/populations/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, v);
}

/// Drives a session through the API and checks every returned interval
/// against an engine session run in-process with the same seed.
#[tokio::test]
async fn intervals_match_engine_bit_for_bit() {
    let app = app();
    let pop_id = upload(&app, POP_CSV).await;
    let id = create(&app, &pop_id, 11).await;

    let pop = Arc::new(Population::from_csv_reader(POP_CSV.as_bytes()).unwrap());
    let mut cfg = SessionConfig::new(0.05, 0.05, Strategy::PropM, CsFamily::Betting);
    cfg.seed = 11;
    let mut engine = AuditSession::create("ref", pop, cfg).unwrap();
    let f = truth();
    loop {
        let (_, d) = call(&app, Method::POST, &format!("/sessions/{id}/draw"), None).await;
        let index = d["indices"][0].as_u64().unwrap() as usize;
        assert_eq!(engine.next_draw().unwrap(), vec![index]);
        let (_, o) = call(
            &app,
            Method::POST,
            &format!("/sessions/{id}/observe"),
            Some(json!({"observations": [{"index": index, "f": f[index]}]})),
        )
        .await;
        let update = engine.record_observation(&[(index, f[index])]).unwrap();
        let lo = o["interval"][0].as_f64().unwrap();
        let hi = o["interval"][1].as_f64().unwrap();
        assert_eq!(lo.to_bits(), update.interval.lo.to_bits());
        assert_eq!(hi.to_bits(), update.interval.hi.to_bits());
        assert_eq!(o["width"].as_f64().unwrap().to_bits(), update.width.to_bits());
        if o["stopped"] == true {
            break;
        }
    }

    let (_, tr) = call(&app, Method::GET, &format!("/sessions/{id}/trace"), None).await;
    let trace = tr["trace"].as_array().unwrap();
    assert_eq!(trace.len(), engine.t());
    for (a, b) in trace.iter().zip(engine.trace()) {
        assert_eq!(a["t"], b.t);
        assert_eq!(a["width"].as_f64().unwrap().to_bits(), b.width.to_bits());
    }

    let (_, r) = call(&app, Method::GET, &format!("/sessions/{id}/remaining"), None).await;
    let expect = engine.remaining_fraction_interval();
    assert_eq!(r["interval"], json!([expect.lo, expect.hi]));

    let (status, t) = call(&app, Method::GET, &format!("/sessions/{id}/test?epsilon=0.5"), None).await;
    assert_eq!(status, StatusCode::OK);
    let expect = serde_json::to_value(engine.test_assertion(0.5)).unwrap();
    assert_eq!(t["decision"], expect);
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}/test?epsilon=abc"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}/test?epsilon=2"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_observes_are_serialized() {
    let app = app();
    let pop = upload(&app, POP_CSV).await;
    for seed in 0..20 {
        let id = create(&app, &pop, seed).await;
        let (_, d) = call(&app, Method::POST, &format!("/sessions/{id}/draw"), None).await;
        let index = d["indices"][0].as_u64().unwrap();
        let uri = format!("/sessions/{id}/observe");
        let body = json!({"observations": [{"index": index, "f": 0.25}]});
        let (a, b) = tokio::join!(
            tokio::spawn({
                let (app, uri, body) = (app.clone(), uri.clone(), body.clone());
                async move { call(&app, Method::POST, &uri, Some(body)).await }
            }),
            tokio::spawn({
                let (app, uri, body) = (app.clone(), uri.clone(), body.clone());
                async move { call(&app, Method::POST, &uri, Some(body)).await }
            }),
        );
        let mut statuses = [a.unwrap().0, b.unwrap().0];
        statuses.sort();
        assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT]);
        let (_, s) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
        assert_eq!(s["t"], 1);
        assert_eq!(s["audited"].as_array().unwrap().len(), 1);
    }
}

#[tokio::test]
async fn restart_with_persistence_continues_identically() {
    let dir = tempfile::tempdir().unwrap();
    let f = truth();
    let step = |app: Router, id: String| {
        let f = f.clone();
        async move {
            let (_, d) = call(&app, Method::POST, &format!("/sessions/{id}/draw"), None).await;
            let index = d["indices"][0].as_u64().unwrap() as usize;
            let (_, o) = call(
                &app,
                Method::POST,
                &format!("/sessions/{id}/observe"),
                Some(json!({"observations": [{"index": index, "f": f[index]}]})),
            )
            .await;
            (index, o)
        }
    };

    // uninterrupted reference
    let reference = app();
    let ref_pop = upload(&reference, POP_CSV).await;
    let ref_id = create(&reference, &ref_pop, 99).await;
    let mut expected = Vec::new();
    for _ in 0..6 {
        expected.push(step(reference.clone(), ref_id.clone()).await);
    }

    let first = router(Arc::new(Store::open(dir.path()).unwrap()));
    let pop = upload(&first, POP_CSV).await;
    let id = create(&first, &pop, 99).await;
    let mut got = Vec::new();
    for _ in 0..3 {
        got.push(step(first.clone(), id.clone()).await);
    }
    // leave a draw pending across the restart
    let (_, pending) = call(&first, Method::POST, &format!("/sessions/{id}/draw"), None).await;
    drop(first);

    let second = router(Arc::new(Store::open(dir.path()).unwrap()));
    let (status, s) = call(&second, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s["t"], 3);
    assert_eq!(s["pending"][0]["index"], pending["indices"][0]);
    let index = pending["indices"][0].as_u64().unwrap() as usize;
    let (_, o) = call(
        &second,
        Method::POST,
        &format!("/sessions/{id}/observe"),
        Some(json!({"observations": [{"index": index, "f": f[index]}]})),
    )
    .await;
    got.push((index, o));
    for _ in 0..2 {
        got.push(step(second.clone(), id.clone()).await);
    }
    assert_eq!(got, expected);
    // the population survives too
    let (status, _) = call(&second, Method::GET, &format!("/populations/{pop}"), None).await;
    assert_eq!(status, StatusCode::OK);
}
