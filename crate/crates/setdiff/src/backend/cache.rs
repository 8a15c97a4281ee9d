//! Content-addressed response cache.
//!
//! Keys are 256-bit hex digests of the canonical request (see
//! [`super::GatewayRequest::cache_key`]). Entries live under a two-level
//! hex fan-out, `root/ab/cd/<key>.bin`, and each file stores the SHA-256 of
//! the payload followed by the payload itself, so `verify` can detect
//! corruption without any side tables. Writes go to a temp file in the same
//! directory and are renamed into place, so concurrent readers never see a
//! partial entry.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const HASH_LEN: usize = 32;

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug)]
pub struct DiskCache {
    root: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct CacheStats {
    pub entries: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CacheCorruption {
    pub path: PathBuf,
    pub message: String,
}

fn value_hash(value: &[u8]) -> [u8; HASH_LEN] {
    Sha256::digest(value).into()
}

impl DiskCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(DiskCache { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, key: &str) -> Result<PathBuf> {
        if key.len() < 4 || !key.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::Internal(format!("malformed cache key {key:?}")));
        }
        Ok(self.root.join(&key[..2]).join(&key[2..4]).join(format!("{key}.bin")))
    }

    /// Fetch an entry. A corrupt entry is reported as a miss (with a
    /// warning) so the caller re-computes and overwrites it.
    pub fn get(&self, key: &str) -> Result<Option<Vec<u8>>> {
        let path = self.entry_path(key)?;
        let data = match std::fs::read(&path) {
            Ok(d) => d,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        if data.len() < HASH_LEN || value_hash(&data[HASH_LEN..]) != data[..HASH_LEN] {
            tracing::warn!(path = %path.display(), "corrupt cache entry; treating as miss");
            return Ok(None);
        }
        Ok(Some(data[HASH_LEN..].to_vec()))
    }

    /// Store an entry atomically (write temp file, then rename).
    pub fn put(&self, key: &str, value: &[u8]) -> Result<()> {
        let path = self.entry_path(key)?;
        let dir = path.parent().expect("entry path has a parent");
        std::fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let mut data = Vec::with_capacity(HASH_LEN + value.len());
        data.extend_from_slice(&value_hash(value));
        data.extend_from_slice(value);
        std::fs::write(&tmp, &data)?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }

    fn walk(&self, mut f: impl FnMut(&Path, &std::fs::Metadata)) -> Result<()> {
        for l1 in read_dir_sorted(&self.root)? {
            if !l1.is_dir() {
                continue;
            }
            for l2 in read_dir_sorted(&l1)? {
                if !l2.is_dir() {
                    continue;
                }
                for entry in read_dir_sorted(&l2)? {
                    if entry.extension().is_some_and(|e| e == "bin") {
                        if let Ok(meta) = std::fs::metadata(&entry) {
                            f(&entry, &meta);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> Result<CacheStats> {
        let mut stats = CacheStats::default();
        self.walk(|_, meta| {
            stats.entries += 1;
            stats.bytes += meta.len();
        })?;
        Ok(stats)
    }

    /// Re-hash every entry; returns the list of corrupt files (empty = clean).
    pub fn verify(&self) -> Result<Vec<CacheCorruption>> {
        let mut bad = Vec::new();
        self.walk(|path, _| {
            let report = |message: String| CacheCorruption {
                path: path.to_path_buf(),
                message,
            };
            match std::fs::read(path) {
                Err(e) => bad.push(report(format!("unreadable: {e}"))),
                Ok(data) if data.len() < HASH_LEN => {
                    bad.push(report(format!("truncated ({} bytes)", data.len())))
                }
                Ok(data) => {
                    if value_hash(&data[HASH_LEN..]) != data[..HASH_LEN] {
                        bad.push(report("stored hash does not match payload".into()));
                    }
                }
            }
        })?;
        Ok(bad)
    }

    /// Remove all entries; returns how many were deleted.
    pub fn clear(&self) -> Result<u64> {
        let mut paths = Vec::new();
        self.walk(|path, _| paths.push(path.to_path_buf()))?;
        let removed = paths.len() as u64;
        for p in paths {
            std::fs::remove_file(p)?;
        }
        Ok(removed)
    }
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir)? {
        out.push(e?.path());
    }
    out.sort();
    Ok(out)
}
