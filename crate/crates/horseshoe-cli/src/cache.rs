//! Content-addressed result cache. An entry is written to a temporary file
//! and renamed into place, so readers never see a partial entry.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::Artifacts;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub created_at: u64,
    pub payload_sha256: String,
    pub payload: Artifacts,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Key over the parameters, command, options and code version.
pub fn cache_key(params_json: &str, command: &str, options_json: &str, version: &str) -> String {
    let mut h = Sha256::new();
    for part in [params_json, command, options_json, version] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

pub enum Lookup {
    Hit(Artifacts),
    Miss,
    /// The entry exists but does not verify; the reason is attached.
    Corrupt(String),
}

pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Cache {
        Cache { dir: dir.into() }
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Lookup {
        let path = self.path(key);
        let Ok(text) = std::fs::read_to_string(&path) else { return Lookup::Miss };
        let entry: CacheEntry = match serde_json::from_str(&text) {
            Ok(e) => e,
            Err(e) => return Lookup::Corrupt(format!("unreadable entry: {e}")),
        };
        if entry.key != key {
            return Lookup::Corrupt("key mismatch".into());
        }
        let payload = serde_json::to_vec(&entry.payload).expect("payload serializes");
        if digest(&payload) != entry.payload_sha256 {
            return Lookup::Corrupt("payload hash mismatch".into());
        }
        Lookup::Hit(entry.payload)
    }

    pub fn put(&self, key: &str, payload: &Artifacts) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let bytes = serde_json::to_vec(payload).expect("payload serializes");
        let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let entry = CacheEntry { key: key.to_string(), created_at, payload_sha256: digest(&bytes), payload: payload.clone() };
        let tmp = self.dir.join(format!(".{key}.{}.tmp", std::process::id()));
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(serde_json::to_string(&entry).expect("entry serializes").as_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, self.path(key))
    }
}

/// Writes every artifact into `dir`.
pub fn write_artifacts(dir: &Path, files: &BTreeMap<String, String>) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, content) in files {
        std::fs::write(dir.join(name), content)?;
    }
    Ok(())
}
