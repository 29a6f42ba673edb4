//! File-system session store.
//!
//! Artifacts are immutable blobs under `objects/`, named by the SHA-256 of
//! their bytes. A session is a small JSON manifest under `sessions/` holding
//! blob references; updating a session rewrites only its manifest.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use edm_core::learners::ModelKind;
use edm_core::situation::FeatureSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetArtifacts {
    pub pnml: String,
    pub dot: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPointArtifacts {
    pub feature_spec: FeatureSpec,
    pub table: String,
    pub reports: String,
    pub model: String,
    pub background: String,
    pub suggested: Option<ModelKind>,
    pub degenerate: bool,
    pub trained_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub created_at: String,
    pub updated_at: String,
    pub log: String,
    pub traces: usize,
    pub events: usize,
    pub net: Option<NetArtifacts>,
    /// Keyed by place id.
    pub decision_points: BTreeMap<String, DecisionPointArtifacts>,
}

pub struct Store {
    root: PathBuf,
    manifests: Mutex<()>,
    counter: AtomicU64,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric())
}

/// Writes through a temporary file so readers never see partial content.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Store> {
        let root = root.into();
        std::fs::create_dir_all(root.join("objects"))?;
        std::fs::create_dir_all(root.join("sessions"))?;
        Ok(Store {
            root,
            manifests: Mutex::new(()),
            counter: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn object_path(&self, hash: &str) -> PathBuf {
        self.root.join("objects").join(hash)
    }

    fn manifest_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    /// Stores `bytes` and returns their hash. Existing blobs are left alone.
    pub fn put(&self, bytes: &[u8]) -> io::Result<String> {
        let hash = content_hash(bytes);
        let path = self.object_path(&hash);
        if !path.exists() {
            write_atomic(&path, bytes)?;
        }
        Ok(hash)
    }

    pub fn get(&self, hash: &str) -> io::Result<Vec<u8>> {
        if !hash.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "bad object hash"));
        }
        std::fs::read(self.object_path(hash))
    }

    pub fn get_string(&self, hash: &str) -> io::Result<String> {
        String::from_utf8(self.get(hash)?).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    pub fn create_session(&self, log: String, traces: usize, events: usize) -> io::Result<Session> {
        let created_at = now();
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let seed = format!("{log}/{created_at}/{}/{n}", std::process::id());
        let id = content_hash(seed.as_bytes())[..16].to_string();
        let session = Session {
            id,
            created_at: created_at.clone(),
            updated_at: created_at,
            log,
            traces,
            events,
            net: None,
            decision_points: BTreeMap::new(),
        };
        let _guard = self.manifests.lock().unwrap();
        self.write_manifest(&session)?;
        Ok(session)
    }

    fn write_manifest(&self, session: &Session) -> io::Result<()> {
        let json = serde_json::to_vec_pretty(session).map_err(io::Error::other)?;
        write_atomic(&self.manifest_path(&session.id), &json)
    }

    pub fn session(&self, id: &str) -> io::Result<Option<Session>> {
        if !valid_id(id) {
            return Ok(None);
        }
        match std::fs::read(self.manifest_path(id)) {
            Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(io::Error::other),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Read-modify-write of a manifest under the store lock.
    pub fn update_session(&self, id: &str, f: impl FnOnce(&mut Session)) -> io::Result<Session> {
        let _guard = self.manifests.lock().unwrap();
        let mut session = self
            .session(id)?
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("session {id}")))?;
        f(&mut session);
        session.updated_at = now();
        self.write_manifest(&session)?;
        Ok(session)
    }

    pub fn sessions(&self) -> io::Result<Vec<Session>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(self.root.join("sessions"))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let bytes = std::fs::read(&path)?;
                out.push(serde_json::from_slice::<Session>(&bytes).map_err(io::Error::other)?);
            }
        }
        out.sort_by(|a, b| (&a.created_at, &a.id).cmp(&(&b.created_at, &b.id)));
        Ok(out)
    }
}
