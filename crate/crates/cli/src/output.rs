//! Output staging: every file of a command is checked for overwrite before
//! any compute, rendered in memory, and then written atomically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::sha256_hex;
use crate::error::CliError;

pub struct OutDir {
    dir: PathBuf,
    force: bool,
    hash: String,
}

impl OutDir {
    pub fn new(dir: PathBuf, force: bool, hash: String) -> Self {
        Self { dir, force, hash }
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Fails if any target exists and `--force` was not given.
    pub fn check(&self, names: &[&str]) -> Result<(), CliError> {
        if self.force {
            return Ok(());
        }
        for n in names {
            let p = self.dir.join(n);
            if p.exists() {
                return Err(CliError::OutputExists(p));
            }
        }
        Ok(())
    }

    /// JSON document with `config_hash` as its first key.
    pub fn json<T: Serialize>(&self, body: &T) -> String {
        let mut map = serde_json::Map::new();
        map.insert("config_hash".into(), self.hash.clone().into());
        match serde_json::to_value(body).expect("serializable report") {
            serde_json::Value::Object(o) => map.extend(o),
            other => {
                map.insert("data".into(), other);
            }
        }
        let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("json");
        s.push('\n');
        s
    }

    /// CSV body prefixed by a `# config_hash=...` comment line.
    pub fn csv(&self, body: &str) -> String {
        format!("# config_hash={}\n{body}", self.hash)
    }

    /// Writes all files, each through a temporary file renamed into place.
    /// Returns `(name, sha256)` per file.
    pub fn write_all(&self, files: &[(&str, String)]) -> Result<Vec<(String, String)>, CliError> {
        fs::create_dir_all(&self.dir).map_err(|source| CliError::Write { path: self.dir.clone(), source })?;
        let mut staged = Vec::with_capacity(files.len());
        for (name, text) in files {
            let wrap = |source| CliError::Write { path: self.dir.join(name), source };
            let mut tmp = tempfile::Builder::new().prefix(".tmp-").tempfile_in(&self.dir).map_err(wrap)?;
            tmp.write_all(text.as_bytes()).map_err(wrap)?;
            tmp.as_file().sync_all().map_err(wrap)?;
            staged.push((*name, tmp));
        }
        let mut hashes = Vec::with_capacity(files.len());
        for ((name, tmp), (_, text)) in staged.into_iter().zip(files) {
            let target = self.dir.join(name);
            persist(tmp, &target, self.force)?;
            hashes.push((name.to_string(), sha256_hex(text.as_bytes())));
        }
        Ok(hashes)
    }
}

fn persist(tmp: tempfile::NamedTempFile, target: &Path, force: bool) -> Result<(), CliError> {
    let res = if force { tmp.persist(target) } else { tmp.persist_noclobber(target) };
    res.map(|_| ()).map_err(|e| {
        if e.error.kind() == std::io::ErrorKind::AlreadyExists {
            CliError::OutputExists(target.to_path_buf())
        } else {
            CliError::Write { path: target.to_path_buf(), source: e.error }
        }
    })
}
