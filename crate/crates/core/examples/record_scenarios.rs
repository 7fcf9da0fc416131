//! Re-records the bundled scenario fixtures from their scripted replies.
//!
//! ```text
//! cargo run -p ace-core --example record_scenarios [fixtures-dir]
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use ace_core::clock::FixedClock;
use ace_core::gateway::{FixtureStore, Gateway, ScriptedProvider};
use ace_core::history::Store;
use ace_core::scenario::Scenario;
use ace_core::Engine;

/// Timestamp written into every recorded fixture.
const RECORDED_AT: &str = "2025-03-01T09:00:00Z";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    std::fs::create_dir_all(&dir)?;
    for entry in std::fs::read_dir(&dir)? {
        let path = entry?.path();
        if path.to_string_lossy().ends_with(".fixture.json") {
            std::fs::remove_file(path)?;
        }
    }
    let clock = Arc::new(FixedClock::parse(RECORDED_AT)?);
    for scenario in Scenario::bundled() {
        let provider = Arc::new(ScriptedProvider::new());
        scenario.load_replies(&provider);
        let gateway = Gateway::record(provider.clone(), FixtureStore::new(&dir), clock.clone());
        let store_dir = tempfile::tempdir()?;
        let engine = Engine::new(Store::open(store_dir.path())?, Arc::new(gateway), clock.clone());
        let outcome = scenario.run(&engine)?;
        let unused = provider.remaining();
        if !unused.is_empty() {
            return Err(format!("{}: unused scripted replies {unused:?}", scenario.name).into());
        }
        println!(
            "{}: {} gateway calls, refined version {}",
            scenario.name,
            engine.gateway().call_count(),
            outcome.refined_version.id
        );
    }
    println!("fixtures written to {}", dir.display());
    Ok(())
}
