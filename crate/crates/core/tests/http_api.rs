use std::collections::BTreeMap;
use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tagsift::approval::http::{router, shared, ApprovalService};
use tagsift::approval::SessionPlan;
use tagsift::cluster::Stage;
use tagsift::{Bin, BinKey, Cluster, SessionDir};
use tower::ServiceExt;

const PNG: &[u8] = b"\x89PNG\r\n\x1a\nfake";

fn write_session(root: &Path) {
    let owners: BTreeMap<String, String> = (0..6).map(|i| (format!("r{i}"), format!("img{i}"))).collect();
    let bins = vec![
        Bin {
            key: BinKey(vec![0, 1]),
            region_ids: vec!["r0".into(), "r1".into(), "r2".into()],
            size: 3,
            variance: 0.1,
        },
        Bin {
            key: BinKey(vec![2, 2]),
            region_ids: vec!["r3".into(), "r4".into(), "r5".into()],
            size: 3,
            variance: 0.2,
        },
    ];
    let cluster = |id: &str, members: &[&str], key: &BinKey| Cluster {
        cluster_id: id.into(),
        member_region_ids: members.iter().map(|s| s.to_string()).collect(),
        exemplar_region_id: None,
        parent_bin_key: key.clone(),
        stage: Stage::KMeansSub,
    };
    let clusters = vec![
        cluster("b0.a0.k0", &["r0", "r1"], &bins[0].key),
        cluster("b1.a0.k0", &["r3", "r4", "r5"], &bins[1].key),
    ];
    let plan = SessionPlan::new("tiger", &bins, &clusters, &owners).unwrap();
    let dir = SessionDir::new(root.join("tiger"));
    dir.create(&plan).unwrap();
    for s in plan.bins.iter().chain(&plan.clusters) {
        let p = dir.dir.join(&s.collage_ref);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, PNG).unwrap();
    }
}

fn app(root: &Path) -> Router {
    router(shared(ApprovalService::load(root).unwrap()))
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn decide(session: &str, item: &str, decision: &str) -> Request<Body> {
    Request::post(format!("/sessions/{session}/items/{item}/decision"))
        .header("content-type", "application/json")
        .body(Body::from(format!(r#"{{"decision":"{decision}"}}"#)))
        .unwrap()
}

fn json(body: &[u8]) -> Value {
    serde_json::from_slice(body).unwrap()
}

#[tokio::test]
async fn lists_sessions_with_pending_counts() {
    let tmp = tempfile::tempdir().unwrap();
    write_session(tmp.path());
    let (status, body) = send(&app(tmp.path()), get("/sessions")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        json(&body),
        serde_json::json!([{"session_id": "s-tiger", "label": "tiger", "pending_count": 2, "total": 2}])
    );
}

#[tokio::test]
async fn full_review_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    write_session(tmp.path());
    let app = app(tmp.path());

    let (status, body) = send(&app, get("/sessions/s-tiger/next")).await;
    assert_eq!(status, StatusCode::OK);
    let item = json(&body);
    assert_eq!(item["item_id"], "bin-000");
    assert_eq!(item["kind"], "bin_background");
    assert_eq!(item["status"], "pending");

    let (status, body) = send(&app, get("/sessions/s-tiger/items/bin-000/collage")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, PNG);

    // The second bin is background, so only the first bin's cluster survives.
    let (status, body) = send(&app, decide("s-tiger", "bin-000", "rejected")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body)["status"], "rejected");
    assert_eq!(json(&body)["decider"], "human");
    let (status, _) = send(&app, decide("s-tiger", "bin-001", "approved")).await;
    assert_eq!(status, StatusCode::OK);

    let (status, body) = send(&app, decide("s-tiger", "bin-001", "rejected")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(json(&body)["error"].as_str().unwrap().contains("bin-001"));

    let (_, body) = send(&app, get("/sessions")).await;
    assert_eq!(json(&body)[0]["pending_count"], 1);
    assert_eq!(json(&body)[0]["total"], 3);

    let (_, body) = send(&app, get("/sessions/s-tiger/next")).await;
    assert_eq!(json(&body)["item_id"], "cl-b0.a0.k0");
    let (status, _) = send(&app, decide("s-tiger", "cl-b0.a0.k0", "approved")).await;
    assert_eq!(status, StatusCode::OK);

    let (status, _) = send(&app, get("/sessions/s-tiger/next")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, body) = send(&app, get("/sessions/s-tiger/export")).await;
    assert_eq!(status, StatusCode::OK);
    let lines: Vec<Value> = std::str::from_utf8(&body)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let ids: Vec<&str> = lines.iter().map(|l| l["item_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["bin-000", "bin-001", "cl-b0.a0.k0"]);
    assert_eq!(lines[2]["kind"], "cluster_relevance");

    // A restarted server replays the on-disk log.
    let (_, body) = send(&self::app(tmp.path()), get("/sessions")).await;
    assert_eq!(json(&body)[0]["pending_count"], 0);
}

#[tokio::test]
async fn unknown_things_are_404() {
    let tmp = tempfile::tempdir().unwrap();
    write_session(tmp.path());
    let app = app(tmp.path());
    for uri in [
        "/sessions/s-nope/next",
        "/sessions/s-nope/export",
        "/sessions/s-tiger/items/bin-999/collage",
    ] {
        assert_eq!(send(&app, get(uri)).await.0, StatusCode::NOT_FOUND, "{uri}");
    }
    assert_eq!(
        send(&app, decide("s-tiger", "bin-999", "approved")).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        send(&app, decide("s-nope", "bin-000", "approved")).await.0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn malformed_decision_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_session(tmp.path());
    let (status, _) = send(&app(tmp.path()), decide("s-tiger", "bin-000", "maybe")).await;
    assert!(status.is_client_error(), "{status}");
    let log = std::fs::read_to_string(tmp.path().join("tiger").join(SessionDir::LOG)).unwrap();
    assert!(log.is_empty());
}
