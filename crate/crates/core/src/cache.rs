//! On-disk cache of dataset signatures.
//!
//! A cache entry is valid for one (content hash, K, seed, subsampling)
//! combination. The content hash covers the manifest fields and the bytes of
//! every referenced image, so editing an image invalidates the entry.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{manifest_to_string, DatasetManifest};
use crate::error::{Error, Result};
use crate::signature::{DatasetSignature, Provenance, Signature};

/// Bumped whenever signature extraction changes behavior.
pub const ALGORITHM_VERSION: &str = "srcsel-signature/1";

/// SHA-256 over the algorithm version, the serialized manifest and each
/// image file's bytes, hex encoded.
pub fn content_hash(manifest: &DatasetManifest) -> Result<String> {
    let mut h = Sha256::new();
    h.update(ALGORITHM_VERSION.as_bytes());
    h.update(manifest_to_string(manifest)?.as_bytes());
    for r in &manifest.records {
        let path = manifest.resolve_path(r);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        h.update(r.id.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

/// Serialized form of a cached signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureFile {
    pub dataset_id: String,
    pub content_hash: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub centroids: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_pixels: Option<usize>,
    #[serde(default)]
    pub algorithm: String,
}

impl SignatureFile {
    pub fn new(sig: &DatasetSignature, max_pixels: Option<usize>) -> Self {
        SignatureFile {
            dataset_id: sig.provenance.dataset_id.clone(),
            content_hash: sig.provenance.content_hash.clone(),
            k: sig.provenance.k,
            seed: sig.provenance.seed,
            centroids: sig.signature.centroids.clone(),
            weights: sig.signature.weights.clone(),
            max_pixels,
            algorithm: ALGORITHM_VERSION.to_owned(),
        }
    }

    pub fn into_signature(self) -> Result<DatasetSignature> {
        if self.centroids.len() != self.weights.len() || self.centroids.is_empty() {
            return Err(Error::schema("centroids", "must be non-empty and match weights"));
        }
        Ok(DatasetSignature {
            signature: Signature {
                centroids: self.centroids,
                weights: self.weights,
            },
            provenance: Provenance {
                dataset_id: self.dataset_id,
                content_hash: self.content_hash,
                k: self.k,
                seed: self.seed,
            },
        })
    }
}

#[derive(Debug, Clone)]
pub struct SignatureCache {
    dir: PathBuf,
}

impl SignatureCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        SignatureCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, dataset_id: &str, k: usize, seed: u64) -> PathBuf {
        let safe: String = dataset_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
            .collect();
        self.dir.join(format!("{safe}-k{k}-s{seed}.json"))
    }

    /// Returns the cached signature if one matches every key component.
    /// Unreadable or corrupt entries count as misses.
    pub fn load(
        &self,
        dataset_id: &str,
        content_hash: &str,
        k: usize,
        seed: u64,
        max_pixels: Option<usize>,
    ) -> Option<DatasetSignature> {
        let path = self.entry_path(dataset_id, k, seed);
        let text = std::fs::read_to_string(&path).ok()?;
        let file: SignatureFile = match serde_json::from_str(&text) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("ignoring corrupt signature cache {}: {e}", path.display());
                return None;
            }
        };
        if file.content_hash != content_hash
            || file.k != k
            || file.seed != seed
            || file.max_pixels != max_pixels
            || file.algorithm != ALGORITHM_VERSION
            || file.dataset_id != dataset_id
        {
            return None;
        }
        match file.into_signature() {
            Ok(sig) => Some(sig),
            Err(e) => {
                log::warn!("ignoring corrupt signature cache {}: {e}", path.display());
                None
            }
        }
    }

    pub fn store(&self, sig: &DatasetSignature, max_pixels: Option<usize>) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.entry_path(&sig.provenance.dataset_id, sig.provenance.k, sig.provenance.seed);
        let mut text = serde_json::to_string_pretty(&SignatureFile::new(sig, max_pixels))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(hash: &str) -> DatasetSignature {
        DatasetSignature {
            signature: Signature {
                centroids: vec![[1.0, 2.0, 3.0]],
                weights: vec![1.0],
            },
            provenance: Provenance {
                dataset_id: "dc-1".into(),
                content_hash: hash.into(),
                k: 4,
                seed: 0,
            },
        }
    }

    #[test]
    fn hit_requires_all_keys() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SignatureCache::new(dir.path());
        cache.store(&sig("abc"), Some(10)).unwrap();
        assert_eq!(cache.load("dc-1", "abc", 4, 0, Some(10)), Some(sig("abc")));
        assert!(cache.load("dc-1", "abd", 4, 0, Some(10)).is_none());
        assert!(cache.load("dc-1", "abc", 5, 0, Some(10)).is_none());
        assert!(cache.load("dc-1", "abc", 4, 1, Some(10)).is_none());
        assert!(cache.load("dc-1", "abc", 4, 0, None).is_none());
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SignatureCache::new(dir.path());
        std::fs::write(cache.entry_path("dc-1", 4, 0), "{not json").unwrap();
        assert!(cache.load("dc-1", "abc", 4, 0, None).is_none());
    }

    #[test]
    fn file_uses_upper_k_key() {
        let text = serde_json::to_string(&SignatureFile::new(&sig("h"), None)).unwrap();
        assert!(text.contains(r#""K":4"#));
    }
}
