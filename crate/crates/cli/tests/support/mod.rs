//! Shared helpers for the interface tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ace_cli::api::router;
use ace_cli::cli::{run, Io};
use ace_core::clock::{Clock, FixedClock};
use ace_core::gateway::{FixtureStore, Gateway, ScriptedProvider};
use ace_core::history::Store;
use ace_core::Engine;
use axum::body::Body;
use axum::http::{Method, Request};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const CLOCK: &str = "2025-03-01T09:00:00Z";

pub fn bundled_fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub fn clock() -> Arc<dyn Clock> {
    Arc::new(FixedClock::parse(CLOCK).unwrap())
}

pub fn replay_engine(store: &Path, fixtures: &Path) -> Engine {
    let gateway = Gateway::replay(FixtureStore::new(fixtures), clock());
    Engine::new(Store::open(store).unwrap(), Arc::new(gateway), clock())
}

pub fn record_engine(store: &Path, fixtures: &Path, provider: Arc<ScriptedProvider>) -> Engine {
    let gateway = Gateway::record(provider, FixtureStore::new(fixtures), clock());
    Engine::new(Store::open(store).unwrap(), Arc::new(gateway), clock())
}

/// Result of one in-process CLI invocation.
#[derive(Debug)]
pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CliRun {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", self.stdout))
    }

    /// Code from an `error[code]: ...` line.
    pub fn error_code(&self) -> Option<String> {
        let start = self.stderr.find("error[")? + 6;
        let end = self.stderr[start..].find(']')? + start;
        Some(self.stderr[start..end].to_string())
    }
}

/// Runs the CLI in-process against a replay store.
pub fn cli(store: &Path, fixtures: &Path, args: &[&str], stdin: &str) -> CliRun {
    let mut argv: Vec<String> = vec!["ace".into()];
    argv.extend(["--store", store.to_str().unwrap(), "--fixtures", fixtures.to_str().unwrap()].map(String::from));
    argv.extend(["--mode", "replay", "--fixed-clock", CLOCK].map(String::from));
    argv.extend(args.iter().map(|s| s.to_string()));
    let mut input = std::io::Cursor::new(stdin.as_bytes().to_vec());
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = {
        let mut io = Io { stdin: &mut input, stdout: &mut out, stderr: &mut err };
        run(argv, &mut io)
    };
    CliRun { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

/// Sends one request through the router.
pub async fn http(engine: Arc<Engine>, method: Method, path: &str, body: Option<Value>) -> (u16, Value) {
    let builder = Request::builder().method(method).uri(path);
    let request = match body {
        Some(b) => builder.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let response = router(engine).oneshot(request).await.unwrap();
    let status = response.status().as_u16();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

pub fn robot_reply(speech: &str) -> String {
    serde_json::json!([{ "speech": speech, "facial_expression": "happy", "head_position": "left_gaze" }]).to_string()
}
