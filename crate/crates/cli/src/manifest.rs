/*
  Copyright 2026 The trimanual Authors

  Licensed under the Apache License, Version 2.0 (the "License");
  you may not use this file except in compliance with the License.
  You may obtain a copy of the License at

      http://www.apache.org/licenses/LICENSE-2.0

  Unless required by applicable law or agreed to in writing, software
  distributed under the License is distributed on an "AS IS" BASIS,
  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
  See the License for the specific language governing permissions and
  limitations under the License.
*/
//! Run manifest and the output directory every command writes into.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// What was run and on which inputs. Paths are recorded as given on the
/// command line so that re-running from the same directory is exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_paths: Vec<String>,
    pub seed: Option<u64>,
    pub output_dir: String,
    pub tool_version: String,
    /// SHA-256 of each input file, keyed by path.
    pub input_hashes: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads input files and remembers their hashes.
#[derive(Debug, Default)]
pub struct Inputs {
    paths: Vec<String>,
    hashes: BTreeMap<String, String>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        let key = path.display().to_string();
        if !self.hashes.contains_key(&key) {
            self.paths.push(key.clone());
        }
        self.hashes.insert(key, sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_string(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = self.read(path)?;
        String::from_utf8(bytes).map_err(|_| CliError::Invalid(format!("{} is not UTF-8", path.display())))
    }

    pub fn json<T: serde::de::DeserializeOwned>(&mut self, path: &Path) -> Result<T, CliError> {
        let s = self.read_string(path)?;
        serde_json::from_str(&s).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn into_manifest(self, command: &str, args: &[String], seed: Option<u64>, out: &Path) -> RunManifest {
        RunManifest {
            command: command.into(),
            args: args.to_vec(),
            config_paths: self.paths,
            seed,
            output_dir: out.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            input_hashes: self.hashes,
        }
    }
}

/// Output directory. Files can only be created directly inside it, and the
/// manifest goes in first.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path, manifest: &RunManifest) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Invalid(format!("cannot create {}: {e}", root.display())))?;
        let dir = OutDir { root: root.to_path_buf() };
        dir.write_json(MANIFEST_FILE, manifest)?;
        Ok(dir)
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let rel = Path::new(name);
        let mut parts = rel.components();
        if !matches!((parts.next(), parts.next()), (Some(Component::Normal(_)), None)) {
            return Err(CliError::Internal(format!("refusing to write `{name}` outside the output directory")));
        }
        let p = self.root.join(rel);
        fs::write(&p, bytes).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", p.display())))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn manifest_written_first_and_names_confined() {
        let tmp = tempfile::tempdir().unwrap();
        let src = tmp.path().join("in.json");
        fs::write(&src, b"{}").unwrap();
        let mut inputs = Inputs::default();
        let _: serde_json::Value = inputs.json(&src).unwrap();
        let out = tmp.path().join("out");
        let m = inputs.into_manifest("scenario", &["scenario".into()], Some(3), &out);
        let dir = OutDir::create(&out, &m).unwrap();
        let back: RunManifest = serde_json::from_slice(&fs::read(out.join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.input_hashes[&src.display().to_string()], sha256_hex(b"{}"));
        for bad in ["../x", "a/b", "/abs", ""] {
            assert!(dir.write(bad, b"x").is_err(), "{bad}");
        }
        assert!(!tmp.path().join("x").exists());
    }
}
