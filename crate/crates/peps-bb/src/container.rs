//! On-disk tensor container: a directory with a JSON manifest and one raw
//! binary file per tensor (little-endian f64 pairs, real then imaginary,
//! row-major).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ipeps::IPepsState;
use crate::tensor::{C64, Tensor};
use crate::{Error, Result};

pub const CONTAINER_FORMAT_VERSION: &str = "1.0";
const SUPPORTED_MAJOR: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub tensors: Vec<TensorEntry>,
    /// Free-form metadata recorded by the writer.
    #[serde(default)]
    pub meta: serde_json::Value,
}

fn check_version(found: &str) -> Result<()> {
    let major: Option<u32> = found.split('.').next().and_then(|m| m.parse().ok());
    if major != Some(SUPPORTED_MAJOR) {
        return Err(Error::FormatVersion {
            found: found.to_string(),
            major: SUPPORTED_MAJOR,
        });
    }
    Ok(())
}

fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let mut buf = Vec::with_capacity(t.len() * 16);
    for z in t.as_slice() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

fn read_tensor(path: &Path, shape: &[usize]) -> Result<Tensor> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let n: usize = shape.iter().product();
    if buf.len() != n * 16 {
        return Err(Error::Shape(format!(
            "{} holds {} bytes, shape {shape:?} needs {}",
            path.display(),
            buf.len(),
            n * 16
        )));
    }
    let mut data = Vec::with_capacity(n);
    for chunk in buf.chunks_exact(16) {
        let re = f64::from_le_bytes(chunk[..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..].try_into().unwrap());
        data.push(C64::new(re, im));
    }
    let t = Tensor::from_array(ndarray::Array1::from_vec(data));
    let t = t.reshape(shape)?;
    if !t.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(t)
}

/// Write a named set of tensors plus metadata into `dir` (created if
/// needed).
pub fn save_tensors(
    dir: &Path,
    tensors: &[(&str, &Tensor)],
    meta: serde_json::Value,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        let file = format!("{name}.bin");
        write_tensor(&dir.join(&file), t)?;
        entries.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            file,
        });
    }
    let manifest = Manifest {
        format_version: CONTAINER_FORMAT_VERSION.to_string(),
        tensors: entries,
        meta,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    check_version(&manifest.format_version)?;
    Ok(manifest)
}

pub fn load_tensor(dir: &Path, manifest: &Manifest, name: &str) -> Result<Tensor> {
    let entry = manifest
        .tensors
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::Shape(format!("tensor {name} not in manifest")))?;
    read_tensor(&dir.join(&entry.file), &entry.shape)
}

/// Save the two site tensors of a state.
pub fn save_state(dir: &Path, state: &IPepsState, meta: serde_json::Value) -> Result<()> {
    save_tensors(dir, &[("a", &state.a), ("b", &state.b)], meta)
}

pub fn load_state(dir: &Path) -> Result<IPepsState> {
    let manifest = load_manifest(dir)?;
    let a = load_tensor(dir, &manifest, "a")?;
    let b = load_tensor(dir, &manifest, "b")?;
    IPepsState::new(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ntu::{evolve_from_product, NtuOptions};
    use crate::sequences::{bb_sequence, ProtocolVariant};

    #[test]
    fn state_round_trip() {
        let seq = bb_sequence(vec![0.3, 0.2], vec![0.1, 0.25], ProtocolVariant::ParaTarget, 3.1)
            .unwrap();
        let (state, _) = evolve_from_product(&seq, &NtuOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_state(dir.path(), &state, serde_json::json!({"depth": 2})).unwrap();
        let back = load_state(dir.path()).unwrap();
        assert_eq!(back.a.shape(), state.a.shape());
        assert!(back.a.sub(&state.a).unwrap().norm() == 0.0);
        assert!(back.b.sub(&state.b).unwrap().norm() == 0.0);
        let manifest = load_manifest(dir.path()).unwrap();
        assert_eq!(manifest.meta["depth"], 2);
    }

    #[test]
    fn rejects_future_version() {
        let dir = tempfile::tempdir().unwrap();
        let state = crate::ipeps::init_product_x();
        save_state(dir.path(), &state, serde_json::Value::Null).unwrap();
        let path = dir.path().join("manifest.json");
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"1.0\"", "\"2.0\"");
        std::fs::write(&path, text).unwrap();
        match load_state(dir.path()) {
            Err(Error::FormatVersion { found, major }) => {
                assert_eq!(found, "2.0");
                assert_eq!(major, 1);
            }
            other => panic!("expected FormatVersion, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn rejects_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let state = crate::ipeps::init_product_x();
        save_state(dir.path(), &state, serde_json::Value::Null).unwrap();
        let bin = dir.path().join("a.bin");
        let bytes = std::fs::read(&bin).unwrap();
        std::fs::write(&bin, &bytes[..bytes.len() - 8]).unwrap();
        assert!(load_state(dir.path()).is_err());
    }
}
