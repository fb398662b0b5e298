//! Run provenance: every output directory gets one `manifest.json` that is
//! sufficient to reproduce the run, plus atomic file writes.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;
use photophys::io::InputRecord;
use serde::Serialize;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub subcommand: String,
    pub argv: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<InputRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub created_utc: String,
}

impl RunManifest {
    pub fn new(
        subcommand: &str,
        argv: &[String],
        inputs: Vec<InputRecord>,
        seed: Option<u64>,
    ) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: format!("photophys-cli {}", env!("CARGO_PKG_VERSION")),
            subcommand: subcommand.into(),
            argv: argv.to_vec(),
            inputs,
            seed,
            created_utc: Utc::now().to_rfc3339(),
        }
    }
}

/// Reads and hashes one input file for the manifest.
pub fn hash_input(path: &Path) -> photophys::Result<InputRecord> {
    use sha2::{Digest, Sha256};
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(InputRecord {
        path: path.display().to_string(),
        sha256,
    })
}

/// Writes through a same-directory temp file so readers never observe a
/// partially written output.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Creates the output directory, writes each named file atomically and
/// finishes with the manifest.
pub fn write_run(
    out_dir: &Path,
    files: &[(String, Vec<u8>)],
    manifest: &RunManifest,
) -> photophys::Result<()> {
    fs::create_dir_all(out_dir)?;
    for (name, bytes) in files {
        atomic_write(&out_dir.join(name), bytes)?;
    }
    let mut json = serde_json::to_vec_pretty(manifest)?;
    json.push(b'\n');
    atomic_write(&out_dir.join("manifest.json"), &json)?;
    Ok(())
}
