//! HTTP service behavior: health, error shapes, lifecycle and concurrency.

mod support;

use std::io::{Read, Write};
use std::sync::Arc;

use ace_cli::api::{bind, serve_until};
use ace_cli::config::{FileConfig, Overrides, Settings};
use ace_core::gateway::ScriptedProvider;
use axum::http::Method;
use serde_json::json;
use support::{http, record_engine, replay_engine, robot_reply};

fn engine() -> (tempfile::TempDir, Arc<ace_core::Engine>) {
    let dir = tempfile::tempdir().unwrap();
    let engine = replay_engine(&dir.path().join("store"), &dir.path().join("fixtures"));
    (dir, Arc::new(engine))
}

#[tokio::test]
async fn test_healthz() {
    let (_d, e) = engine();
    assert_eq!(http(e, Method::GET, "/healthz", None).await, (200, json!({"status": "ok"})));
}

#[tokio::test]
async fn test_error_shapes() {
    let (_d, e) = engine();
    let (status, body) = http(e.clone(), Method::GET, "/nowhere", None).await;
    assert_eq!((status, body["code"].as_str()), (404, Some("not_found")));

    let (status, body) = http(e.clone(), Method::DELETE, "/projects", None).await;
    assert_eq!((status, body["code"].as_str()), (405, Some("method_not_allowed")));

    let (status, body) = http(e.clone(), Method::POST, "/projects", Some(json!({"title": "x"}))).await;
    assert_eq!((status, body["code"].as_str()), (400, Some("bad_request")));
    assert_eq!(body["http_status"], 400);

    let (status, body) = http(e.clone(), Method::GET, "/versions/ver-0042", None).await;
    assert_eq!((status, body["code"].as_str()), (404, Some("unknown_version")));

    let (status, body) = http(e.clone(), Method::GET, "/versions/ver-0001/analysis?mode=vibes", None).await;
    assert_eq!((status, body["code"].as_str()), (400, Some("bad_request")));

    let (status, body) = http(e, Method::POST, "/projects", Some(json!({"name": "  "}))).await;
    assert_eq!((status, body["code"].as_str()), (422, Some("empty_name")));
}

#[tokio::test]
async fn test_analyze_endpoint() {
    let (_d, e) = engine();
    let (status, body) = http(e.clone(), Method::POST, "/analyze", Some(json!({"text": ""}))).await;
    assert_eq!(status, 200);
    assert_eq!(body["clarity"]["score"], 0);
    let (status, body) = http(e, Method::POST, "/analyze", Some(json!({"text": "Hi", "mode": "judge"}))).await;
    assert_eq!((status, body["code"].as_str()), (502, Some("replay_miss")));
}

#[tokio::test(flavor = "multi_thread")]
async fn test_serve_answers_and_shuts_down() {
    let (_d, e) = engine();
    let listener = bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve_until(e, listener, async {
        let _ = rx.await;
    }));
    let response = tokio::task::spawn_blocking(move || {
        let mut stream = std::net::TcpStream::connect(addr).unwrap();
        stream.write_all(b"GET /healthz HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
        let mut buf = String::new();
        stream.read_to_string(&mut buf).unwrap();
        buf
    })
    .await
    .unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.ends_with(r#"{"status":"ok"}"#), "{response}");
    tx.send(()).unwrap();
    server.await.unwrap().unwrap();
}

#[tokio::test]
async fn test_double_bind_is_bind_error() {
    let first = bind("127.0.0.1:0").await.unwrap();
    let addr = first.local_addr().unwrap().to_string();
    let err = bind(&addr).await.unwrap_err();
    assert_eq!(err.code(), "bind_error");
}

#[test]
fn test_unwritable_store_is_store_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("not-a-dir");
    std::fs::write(&file, "x").unwrap();
    let overrides = Overrides { store_path: Some(file.join("store")), ..Default::default() };
    let err = Settings::resolve(overrides, FileConfig::default()).unwrap().engine().unwrap_err();
    assert_eq!(err.code(), "store_error");
}

const PROJECTS: usize = 8;
const TURNS: usize = 5;

fn body(k: usize) -> String {
    format!("You are robot number {k}. Tell short facts about the number {k}.")
}

/// Records one session per project with distinguishable replies.
fn record_sessions(fixtures: &std::path::Path) {
    let provider = Arc::new(ScriptedProvider::new());
    for k in 0..PROJECTS {
        provider.push("robot.greeting", robot_reply(&format!("P{k} hello")));
        for j in 0..TURNS {
            provider.push("robot.turn", robot_reply(&format!("P{k} reply {j}")));
        }
    }
    let store = tempfile::tempdir().unwrap();
    let engine = record_engine(store.path(), fixtures, provider.clone());
    for k in 0..PROJECTS {
        let p = engine.create_project(&format!("robot {k}"), "").unwrap();
        let v = engine
            .commit_version(&p.id, ace_core::history::NewVersion::new(body(k), ace_core::history::Origin::Manual))
            .unwrap();
        let s = engine.start_session(&v.id).unwrap();
        for j in 0..TURNS {
            engine.user_turn(&s.session.id, &format!("project {k} message {j}")).unwrap();
        }
        engine.end_session(&s.session.id).unwrap();
    }
    assert!(provider.remaining().is_empty());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn test_concurrent_sessions_do_not_interleave() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("fixtures");
    record_sessions(&fixtures);
    let engine = Arc::new(replay_engine(&dir.path().join("store"), &fixtures));

    let mut tasks = Vec::new();
    for k in 0..PROJECTS {
        let e = engine.clone();
        tasks.push(tokio::spawn(async move {
            let (_, p) = http(e.clone(), Method::POST, "/projects", Some(json!({"name": format!("robot {k}")}))).await;
            let pid = p["id"].as_str().unwrap().to_string();
            let (_, v) =
                http(e.clone(), Method::POST, &format!("/projects/{pid}/versions"), Some(json!({"body": body(k)})))
                    .await;
            let vid = v["id"].as_str().unwrap().to_string();
            let (status, s) = http(
                e.clone(),
                Method::POST,
                &format!("/projects/{pid}/sessions"),
                Some(json!({"prompt_version_id": vid})),
            )
            .await;
            assert_eq!(status, 200, "{s}");
            let sid = s["session"]["id"].as_str().unwrap().to_string();
            for j in 0..TURNS {
                let (status, t) = http(
                    e.clone(),
                    Method::POST,
                    &format!("/sessions/{sid}/turns"),
                    Some(json!({"text": format!("project {k} message {j}")})),
                )
                .await;
                assert_eq!(status, 200, "{t}");
                tokio::task::yield_now().await;
            }
            let (status, t) = http(e.clone(), Method::POST, &format!("/sessions/{sid}/end"), None).await;
            assert_eq!(status, 200, "{t}");
            (k, t)
        }));
    }
    for task in tasks {
        let (k, transcript) = task.await.unwrap();
        let utterances = transcript["utterances"].as_array().unwrap();
        assert_eq!(utterances.len(), 2 * TURNS + 1);
        let texts: Vec<&str> = utterances.iter().map(|u| u["text"].as_str().unwrap()).collect();
        let mut expected = vec![format!("P{k} hello")];
        for j in 0..TURNS {
            expected.push(format!("project {k} message {j}"));
            expected.push(format!("P{k} reply {j}"));
        }
        assert_eq!(texts, expected);
        let indices: Vec<u64> = utterances.iter().map(|u| u["index"].as_u64().unwrap()).collect();
        assert_eq!(indices, (0..utterances.len() as u64).collect::<Vec<_>>());
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn test_second_active_session_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("fixtures");
    record_sessions(&fixtures);
    let e = Arc::new(replay_engine(&dir.path().join("store"), &fixtures));
    let (_, p) = http(e.clone(), Method::POST, "/projects", Some(json!({"name": "robot 0"}))).await;
    let pid = p["id"].as_str().unwrap();
    let (_, v) =
        http(e.clone(), Method::POST, &format!("/projects/{pid}/versions"), Some(json!({"body": body(0)}))).await;
    let start = json!({"prompt_version_id": v["id"]});
    let (status, _) = http(e.clone(), Method::POST, &format!("/projects/{pid}/sessions"), Some(start.clone())).await;
    assert_eq!(status, 200);
    let (status, err) = http(e, Method::POST, &format!("/projects/{pid}/sessions"), Some(start)).await;
    assert_eq!((status, err["code"].as_str()), (409, Some("session_already_active")));
}
