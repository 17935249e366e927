use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

impl Artifact {
    fn of(path: &Path) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(Artifact {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

/// Record of one invocation. Outputs are hashed after they are written so
/// reruns can be compared by checksum alone.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub options: Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub wall_time_s: f64,
    pub exit_code: i32,
}

pub struct ManifestBuilder {
    command: String,
    options: Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, options: Value, seed: Option<u64>) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            options,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Where the manifest goes when `--manifest` is not given.
    pub fn default_path(&self) -> Option<PathBuf> {
        self.outputs.first().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    }

    pub fn finish(self, exit_code: i32) -> RunManifest {
        // missing files (a failed run) are skipped rather than reported
        let hash = |paths: &[PathBuf]| paths.iter().filter_map(|p| Artifact::of(p).ok()).collect();
        RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            options: self.options,
            seed: self.seed,
            threads: rayon::current_num_threads(),
            inputs: hash(&self.inputs),
            outputs: hash(&self.outputs),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            exit_code,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_path_follows_first_output() {
        let mut m = ManifestBuilder::new("spark", Value::Null, None);
        assert_eq!(m.default_path(), None);
        m.output(Path::new("out/model.cpj"));
        m.output(Path::new("out/trace.csv"));
        assert_eq!(m.default_path(), Some(PathBuf::from("out/model.cpj.manifest.json")));
    }

    #[test]
    fn checksums_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        std::fs::write(&p, "abc").unwrap();
        let a = Artifact::of(&p).unwrap();
        assert_eq!(a.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
