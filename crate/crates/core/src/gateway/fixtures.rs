//! Directory of recorded completions, one `<digest>.fixture.json` per key.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{CanonicalRequest, FixtureKey, GatewayError};

const SUFFIX: &str = ".fixture.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub request: CanonicalRequest,
    pub reply: String,
    pub recorded_at: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    pub fn new(dir: impl AsRef<Path>) -> Self {
        Self { dir: dir.as_ref().to_path_buf() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn ensure_dir(&self) -> Result<(), GatewayError> {
        fs::create_dir_all(&self.dir).map_err(|e| fixture_err(&self.dir, e))
    }

    pub fn path_for(&self, key: &FixtureKey) -> PathBuf {
        self.dir.join(format!("{key}{SUFFIX}"))
    }

    pub fn get(&self, key: &FixtureKey) -> Result<Option<Fixture>, GatewayError> {
        let path = self.path_for(key);
        let raw = match fs::read_to_string(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(fixture_err(&path, e)),
        };
        let fixture: Fixture =
            serde_json::from_str(&raw).map_err(|e| GatewayError::Fixture(format!("{}: {e}", path.display())))?;
        if fixture.request.key() != *key {
            return Err(GatewayError::Fixture(format!(
                "{}: stored request does not hash to its file name",
                path.display()
            )));
        }
        Ok(Some(fixture))
    }

    /// Writes through a temporary file and renames it into place, so
    /// concurrent readers never observe a partial fixture.
    pub fn put(&self, key: &FixtureKey, fixture: &Fixture) -> Result<(), GatewayError> {
        self.ensure_dir()?;
        let path = self.path_for(key);
        let mut body = serde_json::to_string_pretty(fixture).map_err(|e| GatewayError::Fixture(e.to_string()))?;
        body.push('\n');
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| fixture_err(&self.dir, e))?;
        tmp.write_all(body.as_bytes()).map_err(|e| fixture_err(&path, e))?;
        tmp.persist(&path).map_err(|e| fixture_err(&path, e.error))?;
        Ok(())
    }

    pub fn keys(&self) -> Result<Vec<FixtureKey>, GatewayError> {
        let entries = match fs::read_dir(&self.dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(fixture_err(&self.dir, e)),
        };
        let mut keys = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| fixture_err(&self.dir, e))?;
            let name = entry.file_name();
            if let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(SUFFIX)) {
                if let Ok(key) = stem.parse() {
                    keys.push(key);
                }
            }
        }
        keys.sort();
        Ok(keys)
    }
}

fn fixture_err(path: &Path, e: io::Error) -> GatewayError {
    GatewayError::Fixture(format!("{}: {e}", path.display()))
}
