//! Checkpoint files: a JSON header describing named parameters and optimizer
//! state, followed by a little-endian `f64` payload.
//!
//! Layout: `[u64 le header length][header JSON][payload]`. The payload holds
//! every parameter in store order; when optimizer state is present it is
//! followed by all first moments and then all second moments in the same
//! order. Writing the same state twice produces byte-identical files.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{AdamW, AdamWConfig, ParamStore};

#[derive(Debug, Serialize, Deserialize)]
struct ParamSpec {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    step_count: u64,
    params: Vec<ParamSpec>,
    optimizer: Option<AdamWConfig>,
    extra: serde_json::Value,
}

const FORMAT: &str = "ringseq.checkpoint";
const VERSION: u32 = 1;

/// Everything read back from a checkpoint file.
pub struct Checkpoint {
    pub store: ParamStore,
    pub optimizer: Option<AdamW>,
    pub step_count: u64,
    /// Caller-defined JSON stored alongside the weights (e.g. model config).
    pub extra: serde_json::Value,
}

/// Writes parameters, optional optimizer state and caller metadata to `path`.
pub fn save_checkpoint(
    path: &Path,
    store: &ParamStore,
    optimizer: Option<&AdamW>,
    extra: serde_json::Value,
) -> Result<()> {
    let header = Header {
        format: FORMAT.to_string(),
        version: VERSION,
        step_count: optimizer.map_or(0, |o| o.step_count()),
        params: store
            .entries
            .iter()
            .map(|p| ParamSpec {
                name: p.name.clone(),
                shape: p.shape.clone(),
            })
            .collect(),
        optimizer: optimizer.map(|o| o.config),
        extra,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let scalar_count = store.scalar_count();
    let moments = if optimizer.is_some() { 3 } else { 1 };
    let mut payload = Vec::with_capacity(8 + header_bytes.len() + scalar_count * moments * 8);
    payload.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    payload.extend_from_slice(&header_bytes);
    for p in &store.entries {
        for &v in &p.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(opt) = optimizer {
        for m in &opt.m {
            for &v in m {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        for mv in &opt.v {
            for &v in mv {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&payload)?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 {
        return Err(Error::Checkpoint(format!("{}: file too short", path.display())));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + header_len {
        return Err(Error::Checkpoint(format!("{}: truncated header", path.display())));
    }
    let header: Header = serde_json::from_slice(&bytes[8..8 + header_len])?;
    if header.format != FORMAT {
        return Err(Error::Checkpoint(format!("unrecognised format {:?}", header.format)));
    }
    if header.version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", header.version)));
    }
    let mut cursor = 8 + header_len;
    let mut read_block = |len: usize| -> Result<Vec<f64>> {
        let bytes_needed = len * 8;
        if bytes.len() < cursor + bytes_needed {
            return Err(Error::Checkpoint("payload shorter than header describes".into()));
        }
        let out = bytes[cursor..cursor + bytes_needed]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        cursor += bytes_needed;
        Ok(out)
    };
    let mut store = ParamStore::new();
    for spec in &header.params {
        let n: usize = spec.shape.iter().product();
        let data = read_block(n)?;
        store.add(spec.name.clone(), &spec.shape, data)?;
    }
    let optimizer = match header.optimizer {
        Some(config) => {
            let mut opt = AdamW::new(config, &store);
            opt.step_count = header.step_count;
            for m in opt.m.iter_mut() {
                *m = read_block(m.len())?;
            }
            for v in opt.v.iter_mut() {
                *v = read_block(v.len())?;
            }
            Some(opt)
        }
        None => None,
    };
    if cursor != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after payload",
            bytes.len() - cursor
        )));
    }
    Ok(Checkpoint {
        store,
        optimizer,
        step_count: header.step_count,
        extra: header.extra,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("a", &[2, 2], vec![1.0, -2.5, 3.25, 0.0]).unwrap();
        s.add("b", &[3], vec![0.5, 0.25, -0.125]).unwrap();
        s
    }

    #[test]
    fn round_trips_params_and_optimizer_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut store = sample_store();
        let mut opt = AdamW::new(AdamWConfig::default(), &store);
        let grads = vec![vec![0.1; 4], vec![-0.2; 3]];
        opt.step(&mut store, &grads).unwrap();
        save_checkpoint(&path, &store, Some(&opt), serde_json::json!({"k": 1})).unwrap();

        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.step_count, 1);
        assert_eq!(loaded.extra["k"], 1);
        for (orig, read) in store.iter().zip(loaded.store.iter()) {
            assert_eq!(orig, read);
        }
        let lopt = loaded.optimizer.unwrap();
        assert_eq!(lopt.m, opt.m);
        assert_eq!(lopt.v, opt.v);
        assert_eq!(lopt.step_count(), 1);
    }

    #[test]
    fn save_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        let store = sample_store();
        save_checkpoint(&p1, &store, None, serde_json::Value::Null).unwrap();
        save_checkpoint(&p2, &store, None, serde_json::Value::Null).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_truncated_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let store = sample_store();
        save_checkpoint(&path, &store, None, serde_json::Value::Null).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
