use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one command invocation, written last into its output
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<ManifestEntry>,
    pub threads: usize,
    pub wall_clock_secs: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// An output directory being filled by one command. Files are tracked in
/// write order and hashed into the manifest on `finish`.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
    started: Instant,
}

impl OutputDir {
    /// Refuses a non-empty directory unless `force`; files are then
    /// overwritten in place.
    pub fn create(root: &Path, force: bool) -> Result<Self, CliError> {
        if root.exists() {
            let mut it = fs::read_dir(root).map_err(io_err(root))?;
            if it.next().is_some() && !force {
                return Err(CliError::OutputExists(root.to_path_buf()));
            }
        }
        fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(Self {
            root: root.to_path_buf(),
            entries: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, bytes).map_err(io_err(&path))?;
        self.track(rel, bytes);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(rel, text.as_bytes())
    }

    /// Tracks a file some other writer put under the root.
    pub fn record(&mut self, rel: &str) -> Result<(), CliError> {
        let path = self.path(rel);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        self.track(rel, &bytes);
        Ok(())
    }

    fn track(&mut self, rel: &str, bytes: &[u8]) {
        let entry = ManifestEntry {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        };
        match self.entries.iter_mut().find(|e| e.path == rel) {
            Some(e) => *e = entry,
            None => self.entries.push(entry),
        }
    }

    /// Writes the manifest and re-reads every listed file against it.
    pub fn finish(
        self,
        command: &str,
        args: &[String],
        config: serde_json::Value,
        seeds: Vec<u64>,
        inputs: Vec<String>,
    ) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            command: command.to_string(),
            args: args.to_vec(),
            config,
            seeds,
            inputs,
            outputs: self.entries,
            threads: crate::trainer::worker_threads(),
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = self.root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(&path, text).map_err(io_err(&path))?;
        verify_manifest(&self.root)?;
        Ok(manifest)
    }
}

/// Loads `dir/manifest.json` and checks every listed hash.
pub fn verify_manifest(dir: &Path) -> Result<RunManifest, CliError> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(&path).map_err(io_err(&path))?)?;
    for e in &manifest.outputs {
        let p = dir.join(&e.path);
        let bytes = fs::read(&p).map_err(io_err(&p))?;
        if sha256_hex(&bytes) != e.sha256 {
            return Err(CliError::Manifest(format!(
                "{} does not match its recorded hash",
                e.path
            )));
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_tracks_and_verifies() {
        let tmp = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(tmp.path(), false).unwrap();
        out.write("a.csv", b"x\n").unwrap();
        out.write("sub/b.csv", b"y\n").unwrap();
        out.write("a.csv", b"z\n").unwrap();
        let m = out
            .finish("test", &[], serde_json::Value::Null, vec![0], vec![])
            .unwrap();
        assert_eq!(m.outputs.len(), 2);
        assert_eq!(m.outputs[0].sha256, sha256_hex(b"z\n"));
        assert!(verify_manifest(tmp.path()).is_ok());

        fs::write(tmp.path().join("a.csv"), b"tampered").unwrap();
        assert!(matches!(
            verify_manifest(tmp.path()),
            Err(CliError::Manifest(_))
        ));
        assert!(matches!(
            OutputDir::create(tmp.path(), false),
            Err(CliError::OutputExists(_))
        ));
        assert!(OutputDir::create(tmp.path(), true).is_ok());
    }
}
