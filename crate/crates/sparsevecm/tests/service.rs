mod common;

use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sparsevecm::pipeline::{run_pipeline, Stage};
use sparsevecm::service::{router, ServiceState};
use sparsevecm::synth::SynthSpec;
use sparsevecm_core::{build_shock, jirf_for_fit, ShockSource};
use tempfile::TempDir;
use tower::ServiceExt;

struct Fixture {
    _dir: TempDir,
    state: Arc<ServiceState>,
}

/// One fitted synthetic model shared by every test in this file.
fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = common::synthetic(dir.path(), &SynthSpec { seed: 21, ..Default::default() });
        cfg.lags = Some(2);
        run_pipeline(&cfg, Stage::VecmRank).unwrap();
        let state = ServiceState::load(&dir.path().join("out"), 2).unwrap();
        Fixture { _dir: dir, state: Arc::new(state) }
    })
}

fn app() -> Router {
    router(fixture().state.clone(), None)
}

async fn send(app: Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn rows(v: &Value) -> Vec<Vec<f64>> {
    serde_json::from_value(v.clone()).unwrap()
}

#[tokio::test]
async fn model_lists_series_and_periods() {
    let (status, body) = send(app(), "GET", "/model", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["n_series"], 12);
    assert_eq!(body["series"][4], "hog.R01");
    let periods: Vec<&str> = body["periods"].as_array().unwrap().iter().map(|p| p["name"].as_str().unwrap()).collect();
    assert_eq!(periods, ["Pre", "Post1", "Post2"]);
}

#[tokio::test]
async fn full_shock_at_horizon_zero_returns_the_shock() {
    let series: Vec<String> = fixture().state.bundle.panel.labels();
    let s: Vec<f64> = (0..12).map(|k| 0.01 * (k as f64 + 1.0) - 0.05).collect();
    let (status, body) = send(
        app(),
        "POST",
        "/jirf",
        Some(json!({"period": "Post1", "series": series, "magnitudes": s, "horizon": 0})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let r = rows(&body["responses"]);
    assert_eq!(r.len(), 1);
    assert_eq!(r[0], s);
}

#[tokio::test]
async fn point_responses_match_the_library_bit_for_bit() {
    let st = &fixture().state;
    let labels = vec!["hog.R02".to_string(), "pork.R03".to_string()];
    let (status, body) =
        send(app(), "POST", "/jirf", Some(json!({"period": "Pre", "series": labels, "horizon": 8}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");

    let fit = &st.bundle.fits["Pre"];
    let source = ShockSource::SeriesStd { period: Some("Pre".into()) };
    let sc = build_shock(&st.bundle.panel, Some(fit), &labels, source, 8).unwrap();
    let lib = jirf_for_fit(fit, &sc).unwrap();
    let served = rows(&body["responses"]);
    for h in 0..=8 {
        for j in 0..12 {
            assert_eq!(served[h][j].to_bits(), lib.responses[(h, j)].to_bits(), "h={h} j={j}");
        }
    }
}

#[tokio::test]
async fn empty_shock_set_is_rejected() {
    let (status, body) = send(app(), "POST", "/jirf", Some(json!({"series": []}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "scenario.empty");
    assert_eq!(body["errors"][0]["field"], "series");
}

#[tokio::test]
async fn request_errors_have_stable_codes() {
    let (status, body) = send(app(), "POST", "/jirf", Some(json!({"series": ["hog.R77"]}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "series.unknown");

    let (status, body) =
        send(app(), "POST", "/jirf", Some(json!({"series": ["hog.R01"], "magnitudes": [1.0, 2.0]}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "scenario.invalid");
    assert_eq!(body["errors"][0]["field"], "magnitudes");

    let (status, body) = send(app(), "POST", "/jirf", Some(json!({"series": "hog.R01"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "body.malformed");

    let (status, body) = send(app(), "POST", "/jirf", Some(json!({"period": "Later", "series": ["hog.R01"]}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "period.unknown");

    let (status, body) = send(app(), "GET", "/jobs/12345", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "job.not_found");

    let (status, body) = send(app(), "GET", "/nothing/here", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "route.not_found");
}

#[tokio::test]
async fn concurrent_requests_match_sequential_ones() {
    let bodies: Vec<Value> = (0..6)
        .map(|k| json!({"period": "Post2", "series": [format!("piglet.R0{}", k % 4 + 1)], "horizon": 12}))
        .collect();
    let mut sequential = Vec::new();
    for b in &bodies {
        sequential.push(send(app(), "POST", "/jirf", Some(b.clone())).await);
    }
    let handles: Vec<_> = bodies
        .iter()
        .cloned()
        .map(|b| tokio::spawn(async move { send(app(), "POST", "/jirf", Some(b)).await }))
        .collect();
    for (h, seq) in handles.into_iter().zip(&sequential) {
        assert_eq!(&h.await.unwrap(), seq);
    }
}

#[tokio::test]
async fn grids_carry_labels_and_block_boundaries() {
    let (status, body) = send(app(), "GET", "/grids/Pre/pi", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["labels"].as_array().unwrap().len(), 12);
    assert_eq!(body["boundaries"], json!([4, 8]));
    let (status, _) = send(app(), "GET", "/grids/Post1/gamma1", None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = send(app(), "GET", "/grids/Pre/gamma9", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "matrix.unknown");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bootstrap_job_completes_with_ordered_bands() {
    let (status, body) = send(
        app(),
        "POST",
        "/jirf/bootstrap",
        Some(json!({"period": "Pre", "series": ["hog.R01", "hog.R02"], "horizon": 8, "replicates": 50, "seed": 5})),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    let url = body["status_url"].as_str().unwrap().to_string();

    let mut job = Value::Null;
    for _ in 0..600 {
        let (status, b) = send(app(), "GET", &url, None).await;
        assert_eq!(status, StatusCode::OK);
        if b["status"] == "done" || b["status"] == "failed" {
            job = b;
            break;
        }
        tokio::time::sleep(Duration::from_millis(200)).await;
    }
    assert_eq!(job["status"], "done", "{job}");
    let dist = &job["result"]["bootstrap"];
    assert_eq!(dist["replicates"], 50);
    let (lower, upper) = (rows(&dist["lower"]), rows(&dist["upper"]));
    assert_eq!(lower.len(), 9);
    for (lo, hi) in lower.iter().zip(&upper) {
        for (a, b) in lo.iter().zip(hi) {
            assert!(a <= b);
        }
    }

    let (status, body) = send(
        app(),
        "POST",
        "/jirf/bootstrap",
        Some(json!({"series": ["hog.R01"], "replicates": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["errors"][0]["field"], "replicates");
}
