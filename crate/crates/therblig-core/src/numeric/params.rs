//! Named parameter collections and the checkpoint format.
//!
//! A checkpoint is a JSON header next to a flat little-endian f32 blob
//! in a sidecar file (`<header>.bin`). The header lists each parameter's
//! name, shape, and element offset into the blob:
//!
//! ```json
//! { "format_version": 1,
//!   "dtype": "f32",
//!   "blob": "model.ckpt.bin",
//!   "params": [ { "name": "clf.w", "shape": [44, 7], "offset": 0 } ],
//!   "meta": { ... } }
//! ```
//!
//! Round trips are byte-exact: the blob stores the raw IEEE bits.

use super::{NumericError, Scalar, Tensor};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Ordered, named parameter tensors. Order is creation order and is part
/// of the checkpoint contract.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        ParamSet::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> ParamSet<T> {
        ParamSet { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> usize {
        let name = name.into();
        debug_assert!(
            !self.entries.iter().any(|(n, _)| *n == name),
            "duplicate parameter {name}"
        );
        self.entries.push((name, tensor));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.entries[index].0
    }

    pub fn tensor(&self, index: usize) -> &Tensor<T> {
        &self.entries[index].1
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Tensor<T> {
        &mut self.entries[index].1
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Total scalar count across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast()))
                .collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderParam {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dtype: String,
    blob: String,
    params: Vec<HeaderParam>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

const FORMAT_VERSION: u32 = 1;

/// Write `params` as a checkpoint header at `path` plus a `<path>.bin`
/// sidecar blob. `meta` is carried verbatim for the caller.
pub fn save_checkpoint(
    path: &Path,
    params: &ParamSet<f32>,
    meta: Option<serde_json::Value>,
) -> Result<(), NumericError> {
    let blob_path = sidecar_path(path);
    let blob_name = blob_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| NumericError::Checkpoint(format!("bad path {}", path.display())))?
        .to_string();

    let mut header = Header {
        format_version: FORMAT_VERSION,
        dtype: "f32".into(),
        blob: blob_name,
        params: Vec::with_capacity(params.len()),
        meta,
    };
    let mut blob = Vec::with_capacity(params.num_scalars() * 4);
    let mut offset = 0usize;
    for (name, tensor) in params.iter() {
        header.params.push(HeaderParam {
            name: name.to_string(),
            shape: [tensor.rows(), tensor.cols()],
            offset,
        });
        for v in tensor.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        offset += tensor.len();
    }

    let text = serde_json::to_string_pretty(&header)
        .map_err(|e| NumericError::Checkpoint(e.to_string()))?;
    std::fs::write(path, text)
        .map_err(|e| NumericError::Checkpoint(format!("write {}: {e}", path.display())))?;
    std::fs::write(&blob_path, blob)
        .map_err(|e| NumericError::Checkpoint(format!("write {}: {e}", blob_path.display())))?;
    Ok(())
}

/// Read a checkpoint back; returns the parameters and the stored meta.
pub fn load_checkpoint(path: &Path) -> Result<(ParamSet<f32>, Option<serde_json::Value>), NumericError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| NumericError::Checkpoint(format!("read {}: {e}", path.display())))?;
    let header: Header =
        serde_json::from_str(&text).map_err(|e| NumericError::Checkpoint(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(NumericError::Checkpoint(format!(
            "unsupported format_version {}",
            header.format_version
        )));
    }
    if header.dtype != "f32" {
        return Err(NumericError::Checkpoint(format!("unsupported dtype {}", header.dtype)));
    }
    let blob_path = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.blob);
    let blob = std::fs::read(&blob_path)
        .map_err(|e| NumericError::Checkpoint(format!("read {}: {e}", blob_path.display())))?;

    let mut params = ParamSet::new();
    for p in &header.params {
        let count = p.shape[0] * p.shape[1];
        let start = p.offset * 4;
        let end = start + count * 4;
        if end > blob.len() {
            return Err(NumericError::Checkpoint(format!(
                "parameter {} spans bytes {start}..{end} but blob has {}",
                p.name,
                blob.len()
            )));
        }
        let data: Vec<f32> = blob[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.push(&p.name, Tensor::from_flat(p.shape[0], p.shape[1], data));
    }
    Ok((params, header.meta))
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".bin");
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");

        let mut params = ParamSet::<f32>::new();
        params.push("a.w", Tensor::from_flat(2, 3, vec![0.1, -0.2, 0.3, 1.5e-30, f32::MIN_POSITIVE, 7.0]));
        params.push("a.b", Tensor::from_flat(1, 3, vec![-0.0, 1.0, 2.5]));
        save_checkpoint(&path, &params, Some(serde_json::json!({"k": 1}))).unwrap();

        let (loaded, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, params);
        assert_eq!(meta.unwrap()["k"], 1);

        // saving the loaded set reproduces identical bytes
        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&path2, &loaded, Some(serde_json::json!({"k": 1}))).unwrap();
        let b1 = std::fs::read(dir.path().join("model.ckpt.bin")).unwrap();
        let b2 = std::fs::read(dir.path().join("model2.ckpt.bin")).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn load_rejects_truncated_blob() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut params = ParamSet::<f32>::new();
        params.push("w", Tensor::zeros(4, 4));
        save_checkpoint(&path, &params, None).unwrap();
        let blob_path = dir.path().join("model.ckpt.bin");
        let blob = std::fs::read(&blob_path).unwrap();
        std::fs::write(&blob_path, &blob[..blob.len() - 4]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
