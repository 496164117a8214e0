use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "fearsource";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance stamped on every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: String,
}

impl Meta {
    pub fn new(seed: u64, config_digest: &str) -> Self {
        Meta {
            tool: TOOL.into(),
            version: VERSION.into(),
            seed,
            config: config_digest.into(),
        }
    }

    /// Comment line prepended to CSV and text outputs.
    pub fn header(&self) -> String {
        format!("# {} {} seed={} config={}\n", self.tool, self.version, self.seed, self.config)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub stage: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Completed,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: String,
    pub stages: Vec<StageRecord>,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn load(out_dir: &Path) -> Result<Self> {
        let path = out_dir.join(MANIFEST);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

pub const MANIFEST: &str = "manifest.json";

/// Writes artifacts under one output directory and remembers their checksums.
pub struct ArtifactWriter {
    root: PathBuf,
    meta: Meta,
    stage: String,
    artifacts: Vec<Artifact>,
}

impl ArtifactWriter {
    pub fn new(root: impl Into<PathBuf>, meta: Meta) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        Ok(ArtifactWriter {
            root,
            meta,
            stage: String::new(),
            artifacts: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    pub fn set_stage(&mut self, stage: &str) {
        self.stage = stage.into();
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    fn put(&mut self, rel: &str, bytes: Vec<u8>) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.retain(|a| a.path != rel);
        self.artifacts.push(Artifact {
            path: rel.into(),
            stage: self.stage.clone(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len(),
        });
        log::debug!("wrote {}", path.display());
        Ok(path)
    }

    /// A CSV (or any line-oriented text) body behind the header comment.
    pub fn text<F>(&mut self, rel: &str, body: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = self.meta.header().into_bytes();
        body(&mut buf)?;
        self.put(rel, buf)
    }

    /// Pretty JSON; objects get a `_meta` member, anything else is wrapped
    /// as `{"_meta": .., "data": ..}`.
    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        let meta = serde_json::to_value(&self.meta)?;
        let value = match serde_json::to_value(value)? {
            serde_json::Value::Object(mut map) => {
                map.insert("_meta".into(), meta);
                serde_json::Value::Object(map)
            }
            other => serde_json::json!({ "_meta": meta, "data": other }),
        };
        let mut bytes = serde_json::to_vec_pretty(&value)?;
        bytes.push(b'\n');
        self.put(rel, bytes)
    }

    pub fn write_manifest(&self, stages: &[StageRecord]) -> Result<PathBuf> {
        let manifest = Manifest {
            tool: self.meta.tool.clone(),
            version: self.meta.version.clone(),
            seed: self.meta.seed,
            config: self.meta.config.clone(),
            stages: stages.to_vec(),
            artifacts: self.artifacts.clone(),
        };
        let path = self.root.join(MANIFEST);
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path(), Meta::new(3, "abc")).unwrap();
        w.set_stage("score");
        let p = w
            .text("scores/x.csv", |b| {
                b.extend_from_slice(b"a,b\n1,2\n");
                Ok(())
            })
            .unwrap();
        let text = fs::read_to_string(p).unwrap();
        assert_eq!(text, format!("# fearsource {VERSION} seed=3 config=abc\na,b\n1,2\n"));
        w.json("r.json", &vec![1, 2]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
        assert_eq!(v["_meta"]["seed"], 3);
        assert_eq!(v["data"][1], 2);
        w.write_manifest(&[StageRecord {
            name: "score".into(),
            status: StageStatus::Completed,
            note: None,
        }])
        .unwrap();
        let m = Manifest::load(dir.path()).unwrap();
        assert_eq!(m.artifacts.len(), 2);
        assert_eq!(m.artifacts[0].sha256, hex::encode(Sha256::digest(text.as_bytes())));
    }
}
