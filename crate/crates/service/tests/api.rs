use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use panelahp_core::io::study::{load_study, parse_study, save_study};
use panelahp_service::{router, Session};

const STUDY: &str = r#"{
  "schema_version": 1,
  "name": "pilot",
  "hierarchy": {"goal": "G", "criteria": ["A", "B", "C"], "alternatives": ["x", "y"]},
  "item_pool": [
    {"id": "vp", "name": "Value proposition"},
    {"id": "fa", "name": "Financial aspects"},
    {"id": "bp", "name": "Business processes"}
  ],
  "panel": [
    {"id": "expert-1", "token": "tok-1"},
    {"id": "expert-2", "token": "tok-2"},
    {"id": "expert-3", "token": "tok-3"}
  ],
  "config": {"facilitator_token": "boss"}
}"#;

fn app_with_file() -> (Router, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("study.json");
    let study = parse_study(STUDY).unwrap();
    save_study(&path, &study).unwrap();
    let session = Session::new("s1", study, Some(path)).unwrap();
    (router(session), dir)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn rows(ab: (&str, u8), ac: (&str, u8), bc: (&str, u8)) -> Value {
    json!([
        {"first": "A", "second": "B", "side": ab.0, "magnitude": ab.1},
        {"first": "A", "second": "C", "side": ac.0, "magnitude": ac.1},
        {"first": "B", "second": "C", "side": bc.0, "magnitude": bc.1},
    ])
}

#[tokio::test]
async fn study_view_hides_panel() {
    let (app, _dir) = app_with_file();
    let (status, body) = call(&app, "GET", "/study", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["hierarchy"]["criteria"], json!(["A", "B", "C"]));
    assert_eq!(body["item_pool"].as_array().unwrap().len(), 3);
    assert!(body["round"].is_null());
    let text = body.to_string();
    assert!(!text.contains("tok-1") && !text.contains("expert-1") && !text.contains("boss"));
}

#[tokio::test]
async fn consistent_submission_is_accepted() {
    let (app, dir) = app_with_file();
    let req = json!({"token": "tok-1", "node": "G", "rows": rows(("first", 2), ("first", 4), ("first", 2))});
    let (status, body) = call(&app, "POST", "/judgments", Some(req)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["consistency"]["accepted"], json!(true));
    assert!(body["consistency"]["cr"].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(body["revision"], json!(1));

    let saved = load_study(&dir.path().join("study.json")).unwrap();
    assert_eq!(saved.judgments.len(), 1);
    assert_eq!(saved.judgments[0].matrices["G"].get(0, 2), 4.0);
}

#[tokio::test]
async fn intransitive_submission_is_flagged_and_replaceable() {
    let (app, _dir) = app_with_file();
    // A over B by 2, B over C by 4, C over A by 2.
    let bad = json!({"token": "tok-2", "node": "G", "rows": rows(("first", 2), ("second", 2), ("first", 4))});
    let (status, body) = call(&app, "POST", "/judgments", Some(bad)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["consistency"]["accepted"], json!(false));
    assert!(body["consistency"]["cr"].as_f64().unwrap() > 0.12);
    assert_eq!(body["revision"], json!(1));

    let good = json!({"token": "tok-2", "node": "G", "rows": rows(("first", 1), ("first", 1), ("first", 1))});
    let (status, body) = call(&app, "POST", "/judgments", Some(good)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["consistency"]["accepted"], json!(true));
    assert_eq!(body["revision"], json!(2));
}

#[tokio::test]
async fn submission_errors() {
    let (app, _dir) = app_with_file();
    let full = rows(("first", 2), ("first", 4), ("first", 2));
    let (status, _) =
        call(&app, "POST", "/judgments", Some(json!({"token": "nope", "node": "G", "rows": full.clone()}))).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);

    let partial = json!([{"first": "A", "second": "B", "side": "first", "magnitude": 2}]);
    let (status, body) =
        call(&app, "POST", "/judgments", Some(json!({"token": "tok-1", "node": "G", "rows": partial}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(!body["violations"].as_array().unwrap().is_empty());

    let (status, _) =
        call(&app, "POST", "/judgments", Some(json!({"token": "tok-1", "node": "Z", "rows": full}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    // Nothing above was applied.
    let (_, body) = call(&app, "GET", "/study", None).await;
    assert_eq!(body["revision"], json!(0));
}

#[tokio::test]
async fn delphi_round_trip() {
    let (app, dir) = app_with_file();
    let (status, _) = call(&app, "POST", "/delphi/open", Some(json!({"token": "tok-1"}))).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, body) = call(&app, "POST", "/delphi/open", Some(json!({"token": "boss"}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["round_number"], json!(1));

    for (tok, sel, comment) in [
        ("tok-1", json!(["vp", "fa"]), json!("money matters")),
        ("tok-2", json!(["vp"]), json!(null)),
        ("tok-3", json!(["vp", "bp"]), json!("processes too")),
    ] {
        let (status, _) =
            call(&app, "POST", "/delphi/vote", Some(json!({"token": tok, "selection": sel, "comment": comment}))).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (status, _) =
        call(&app, "POST", "/delphi/vote", Some(json!({"token": "tok-1", "selection": ["zz"]}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, body) = call(&app, "POST", "/delphi/close", Some(json!({"token": "boss"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["retained"], json!(["vp"]));

    let (status, body) = call(&app, "GET", "/delphi/feedback", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["feedback"]["counts"], json!({"bp": 1, "fa": 1, "vp": 3}));
    assert_eq!(body["feedback"]["voters"], json!(3));
    let text = body.to_string();
    assert!(!text.contains("expert-") && !text.contains("tok-"));

    let (status, _) = call(&app, "POST", "/delphi/close", Some(json!({"token": "boss"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let saved = load_study(&dir.path().join("study.json")).unwrap();
    assert_eq!(saved.rounds.len(), 1);
    assert_eq!(saved.rounds[0].votes.len(), 3);
}

#[tokio::test]
async fn results_are_stable_and_anonymous() {
    let (app, _dir) = app_with_file();
    let (status, _) = call(&app, "GET", "/results", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let submit = |tok: &'static str, node: &'static str, r: Value| {
        json!({"token": tok, "node": node, "rows": r})
    };
    let crit = rows(("first", 2), ("first", 4), ("first", 2));
    let bad = rows(("first", 2), ("second", 2), ("first", 4));
    for tok in ["tok-1", "tok-2"] {
        let (s, _) = call(&app, "POST", "/judgments", Some(submit(tok, "G", crit.clone()))).await;
        assert_eq!(s, StatusCode::OK);
        for c in ["A", "B", "C"] {
            let r = json!([{"first": "x", "second": "y", "side": "first", "magnitude": 3}]);
            let (s, _) = call(&app, "POST", "/judgments", Some(submit(tok, c, r))).await;
            assert_eq!(s, StatusCode::OK);
        }
    }
    let (s, _) = call(&app, "POST", "/judgments", Some(submit("tok-3", "G", bad))).await;
    assert_eq!(s, StatusCode::OK);

    let (status, first) = call(&app, "GET", "/results", None).await;
    assert_eq!(status, StatusCode::OK, "{first}");
    let (_, second) = call(&app, "GET", "/results", None).await;
    assert_eq!(first, second);
    assert_eq!(first["screening"]["total"], json!(3));
    assert_eq!(first["screening"]["accepted"], json!(2));
    assert!(!first.to_string().contains("expert-3"));
    assert_eq!(first["grid"]["ranking"], json!(["x", "y"]));
}
