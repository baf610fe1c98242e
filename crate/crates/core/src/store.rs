//! On-disk stores: the public model repository and the firmware manifest.
//!
//! Model store layout:
//!
//! ```text
//! "PPMRSTOR" | version u8 | count u32 | (len u32 | model file)* | sha256
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::actors::{FirmwareEntry, FirmwareRepo, Ppmr, RepoError};
use crate::channel::CostTable;
use crate::dppuf::ModelFileError;
use crate::wire::{DeviceKey, FirmwareVersion, InstanceId};
use crate::PublicModel;

const STORE_MAGIC: &[u8; 8] = b"PPMRSTOR";
pub const STORE_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("not a model store")]
    Magic,
    #[error("unsupported store version {0}")]
    Version(u8),
    #[error("store truncated")]
    Truncated,
    #[error("store digest mismatch")]
    Digest,
    #[error("model {index}: {source}")]
    Model { index: usize, source: ModelFileError },
    #[error("duplicate model {}", hex::encode(.0))]
    Duplicate(InstanceId),
    #[error("saving would drop or alter model {}", hex::encode(.0))]
    AppendOnly(InstanceId),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("payload {path} hash mismatch")]
    PayloadHash { path: PathBuf },
    #[error(transparent)]
    Repo(#[from] RepoError),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Models in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelStore {
    models: Vec<PublicModel>,
}

impl ModelStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ppmr(ppmr: &Ppmr) -> Self {
        Self {
            models: ppmr.models().cloned().collect(),
        }
    }

    pub fn models(&self) -> &[PublicModel] {
        &self.models
    }

    pub fn get(&self, id: &InstanceId) -> Option<&PublicModel> {
        self.models.iter().find(|m| &m.instance_id() == id)
    }

    pub fn push(&mut self, model: PublicModel) -> Result<(), StoreError> {
        if self.get(&model.instance_id()).is_some() {
            return Err(StoreError::Duplicate(model.instance_id()));
        }
        self.models.push(model);
        Ok(())
    }

    pub fn into_ppmr(self, costs: CostTable) -> Result<Ppmr, StoreError> {
        let mut p = Ppmr::new(costs);
        for m in self.models {
            let id = m.instance_id();
            p.register(m).map_err(|_| StoreError::Duplicate(id))?;
        }
        Ok(p)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(STORE_MAGIC);
        out.push(STORE_VERSION);
        out.extend_from_slice(&(self.models.len() as u32).to_le_bytes());
        for m in &self.models {
            let b = m.to_bytes();
            out.extend_from_slice(&(b.len() as u32).to_le_bytes());
            out.extend_from_slice(&b);
        }
        let d = Sha256::digest(&out);
        out.extend_from_slice(&d);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        if bytes.len() < STORE_MAGIC.len() + 1 + 4 + 32 {
            return Err(if bytes.starts_with(STORE_MAGIC) || bytes.len() < STORE_MAGIC.len() {
                StoreError::Truncated
            } else {
                StoreError::Magic
            });
        }
        if &bytes[..8] != STORE_MAGIC {
            return Err(StoreError::Magic);
        }
        if bytes[8] != STORE_VERSION {
            return Err(StoreError::Version(bytes[8]));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(StoreError::Digest);
        }
        let count = u32::from_le_bytes(body[9..13].try_into().unwrap()) as usize;
        let mut at = 13;
        let mut store = ModelStore::new();
        for index in 0..count {
            let len = body
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
                .ok_or(StoreError::Truncated)?;
            at += 4;
            let m = body.get(at..at + len).ok_or(StoreError::Truncated)?;
            at += len;
            let model = PublicModel::from_bytes(m).map_err(|source| StoreError::Model { index, source })?;
            store.push(model)?;
        }
        if at != body.len() {
            return Err(StoreError::Truncated);
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        Self::from_bytes(&std::fs::read(path).map_err(io(path))?)
    }

    /// Writes the store. An existing file may only be extended: every model
    /// it holds must still be present, unchanged.
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        if path.exists() {
            let old = Self::load(path)?;
            for m in old.models() {
                if self.get(&m.instance_id()) != Some(m) {
                    return Err(StoreError::AppendOnly(m.instance_id()));
                }
            }
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(io(&tmp))?;
        std::fs::rename(&tmp, path).map_err(io(path))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub vendor_id: u16,
    pub device_type: u16,
    pub hw_revision: u8,
    pub sw_revision: u32,
    pub best_before: u64,
    pub release_ts: u64,
    /// Relative paths resolve against the manifest's directory.
    pub payload: PathBuf,
    /// Hex SHA-256 of the payload file.
    pub payload_sha256: String,
}

impl ManifestEntry {
    pub fn fv(&self) -> FirmwareVersion {
        let key = DeviceKey {
            vendor_id: self.vendor_id,
            device_type: self.device_type,
            hw_revision: self.hw_revision,
        };
        FirmwareVersion::for_device(key, self.sw_revision, self.release_ts, self.best_before)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepoManifest {
    #[serde(default, rename = "entry")]
    pub entries: Vec<ManifestEntry>,
}

impl RepoManifest {
    pub fn parse(s: &str) -> Result<Self, StoreError> {
        let m: RepoManifest = toml::from_str(s).map_err(|e| StoreError::Manifest(e.to_string()))?;
        m.check_order()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    fn check_order(&self) -> Result<(), StoreError> {
        let mut last: BTreeMap<DeviceKey, u32> = BTreeMap::new();
        for e in &self.entries {
            let key = e.fv().device_key();
            if let Some(&have) = last.get(&key) {
                if e.sw_revision <= have {
                    return Err(RepoError::NotNewer {
                        have,
                        got: e.sw_revision,
                    }
                    .into());
                }
            }
            last.insert(key, e.sw_revision);
        }
        Ok(())
    }

    /// Reads the manifest and every payload, refusing any payload whose
    /// hash differs from its entry.
    pub fn load_repo(path: &Path) -> Result<FirmwareRepo, StoreError> {
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        let manifest = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut repo = FirmwareRepo::new();
        for e in &manifest.entries {
            let p = base.join(&e.payload);
            let image = std::fs::read(&p).map_err(io(&p))?;
            if hex::encode(Sha256::digest(&image)) != e.payload_sha256.to_ascii_lowercase() {
                return Err(StoreError::PayloadHash { path: p });
            }
            repo.insert(FirmwareEntry { fv: e.fv(), image })?;
        }
        Ok(repo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dppuf::DppufConfig;
    use crate::Dppuf;

    fn model(seed: u64) -> PublicModel {
        let d = Dppuf::build(DppufConfig::new(8, seed)).unwrap();
        PublicModel::export(&d, 1000, 1).unwrap()
    }

    #[test]
    fn store_round_trip_and_lookup() {
        let mut s = ModelStore::new();
        s.push(model(1)).unwrap();
        s.push(model(2)).unwrap();
        let back = ModelStore::from_bytes(&s.to_bytes()).unwrap();
        assert_eq!(back, s);
        for m in s.models() {
            assert_eq!(back.get(&m.instance_id()), Some(m));
        }
        assert!(matches!(s.push(model(1)), Err(StoreError::Duplicate(_))));
    }

    #[test]
    fn store_rejects_damage() {
        let mut s = ModelStore::new();
        s.push(model(1)).unwrap();
        let b = s.to_bytes();
        assert!(matches!(
            ModelStore::from_bytes(&b[..b.len() - 1]),
            Err(StoreError::Digest)
        ));
        assert!(matches!(ModelStore::from_bytes(&b[..10]), Err(StoreError::Truncated)));
        let mut v = b.clone();
        v[8] = 9;
        assert!(matches!(ModelStore::from_bytes(&v), Err(StoreError::Version(9))));
        let mut m = b.clone();
        m[0] = b'X';
        assert!(matches!(ModelStore::from_bytes(&m), Err(StoreError::Magic)));
    }

    #[test]
    fn save_is_append_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ppmr.bin");
        let mut s = ModelStore::new();
        s.push(model(1)).unwrap();
        s.save(&path).unwrap();
        s.push(model(2)).unwrap();
        s.save(&path).unwrap();
        assert_eq!(ModelStore::load(&path).unwrap().models().len(), 2);
        let mut other = ModelStore::new();
        other.push(model(3)).unwrap();
        assert!(matches!(other.save(&path), Err(StoreError::AppendOnly(_))));
    }

    #[test]
    fn manifest_checks_hashes_and_order() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.bin"), b"image-a").unwrap();
        let entry = |sw: u32, hash: String| ManifestEntry {
            vendor_id: 1,
            device_type: 2,
            hw_revision: 3,
            sw_revision: sw,
            best_before: 10,
            release_ts: 5,
            payload: "a.bin".into(),
            payload_sha256: hash,
        };
        let good = hex::encode(Sha256::digest(b"image-a"));
        let path = dir.path().join("manifest.toml");
        let m = RepoManifest {
            entries: vec![entry(1, good.clone()), entry(2, good.clone())],
        };
        std::fs::write(&path, m.to_toml()).unwrap();
        let repo = RepoManifest::load_repo(&path).unwrap();
        assert_eq!(repo.entries().next().unwrap().fv.sw_revision, 2);

        let bad = RepoManifest {
            entries: vec![entry(1, hex::encode([0u8; 32]))],
        };
        std::fs::write(&path, bad.to_toml()).unwrap();
        assert!(matches!(
            RepoManifest::load_repo(&path),
            Err(StoreError::PayloadHash { .. })
        ));

        let unordered = RepoManifest {
            entries: vec![entry(2, good.clone()), entry(2, good)],
        };
        assert!(RepoManifest::parse(&unordered.to_toml()).is_err());
    }
}
