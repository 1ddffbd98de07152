//! Run manifests: the resolved configuration, seeds, fingerprints and
//! artifact digests of one invocation, written next to its outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use negface::Fingerprint;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub config: Map<String, Value>,
    pub seeds: Map<String, Value>,
    pub fingerprints: Map<String, Value>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config: Map::new(),
            seeds: Map::new(),
            fingerprints: Map::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix: now(),
            finished_unix: 0.0,
        }
    }

    pub fn config(&mut self, key: &str, value: impl Serialize) {
        self.config.insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn seed(&mut self, key: &str, value: Option<u64>) {
        self.seeds.insert(key.into(), value.map_or(Value::Null, Value::from));
    }

    pub fn fingerprint(&mut self, key: &str, value: &Fingerprint) {
        self.fingerprints.insert(key.into(), Value::from(value.to_hex()));
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        self.inputs.push(artifact(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> std::io::Result<()> {
        self.outputs.push(artifact(path)?);
        Ok(())
    }

    /// Writes `manifest` atomically to `path`.
    pub fn finish(mut self, path: &Path) -> std::io::Result<()> {
        self.finished_unix = now();
        let json = serde_json::to_vec_pretty(&self).map_err(std::io::Error::other)?;
        write_atomic(path, &json)
    }
}

fn artifact(path: &Path) -> std::io::Result<Artifact> {
    Ok(Artifact {
        path: path.display().to_string(),
        sha256: Fingerprint::of(&fs::read(path)?).to_hex(),
    })
}

/// Manifest location for an output: `<file>.manifest.json`, or
/// `<dir>/manifest.json` for directory outputs.
pub fn manifest_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        output.join("manifest.json")
    } else {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        output.with_file_name(name)
    }
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, data: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    let tmp = dir.join(name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(data)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
