//! Network checkpoints: a directory of per-parameter tensor containers plus
//! a JSON manifest carrying layer names, shapes, the architecture spec (and
//! its hash) and any extra metadata such as normalization constants.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::container;
use crate::error::{NetError, Result};
use crate::layer::Module;
use crate::tape::T5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: [usize; 5],
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    /// Architecture description as canonical JSON.
    pub spec: serde_json::Value,
    /// SHA-256 of the serialized spec.
    pub spec_hash: String,
    pub params: Vec<ManifestEntry>,
    /// Producer-defined metadata (normalization constants, step size, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

pub fn spec_hash(spec: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(spec).expect("spec serializes");
    let mut h = Sha256::new();
    h.update(&bytes);
    hex_string(&h.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes every parameter of `module` as a 32-bit tensor container under
/// `dir`, together with `manifest.json`.
pub fn save_module(
    dir: &Path,
    module: &dyn Module,
    spec: serde_json::Value,
    extra: serde_json::Value,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    let mut failure: Option<NetError> = None;
    module.for_each_param(&mut |p| {
        if failure.is_some() {
            return;
        }
        let file = format!("{}.zten", sanitize(&p.name));
        let (n, c, w, h, d) = p.value.dim();
        let dims = [n as u64, c as u64, w as u64, h as u64, d as u64];
        let flat: Vec<f64> = p.value.iter().cloned().collect();
        if let Err(e) = container::write_f32(&dir.join(&file), &dims, &flat) {
            failure = Some(e);
            return;
        }
        entries.push(ManifestEntry { name: p.name.clone(), shape: [n, c, w, h, d], file });
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let manifest = Manifest {
        format: "gwinv-checkpoint-v1".to_string(),
        spec_hash: spec_hash(&spec),
        spec,
        params: entries,
        extra,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| NetError::Checkpoint(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| NetError::Checkpoint(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| NetError::Checkpoint(format!("{}: {e}", path.display())))
}

/// Loads parameters into an existing module; every parameter must be present
/// with a matching shape.
pub fn load_module(dir: &Path, module: &mut dyn Module) -> Result<Manifest> {
    let manifest = read_manifest(dir)?;
    let by_name: std::collections::HashMap<&str, &ManifestEntry> =
        manifest.params.iter().map(|e| (e.name.as_str(), e)).collect();

    let mut failure: Option<NetError> = None;
    module.for_each_param_mut(&mut |p| {
        if failure.is_some() {
            return;
        }
        let Some(entry) = by_name.get(p.name.as_str()) else {
            failure = Some(NetError::Checkpoint(format!("parameter {} missing from manifest", p.name)));
            return;
        };
        let (n, c, w, h, d) = p.value.dim();
        if entry.shape != [n, c, w, h, d] {
            failure = Some(NetError::Checkpoint(format!(
                "parameter {} shape {:?} does not match checkpoint {:?}",
                p.name,
                (n, c, w, h, d),
                entry.shape
            )));
            return;
        }
        match container::read(&dir.join(&entry.file)) {
            Ok(stored) => {
                if stored.len() != p.value.len() {
                    failure = Some(NetError::Checkpoint(format!(
                        "parameter {} length mismatch on disk",
                        p.name
                    )));
                    return;
                }
                p.value = T5::from_shape_vec((n, c, w, h, d), stored.data).expect("shape checked");
                p.m = None;
                p.v = None;
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(manifest)
}
