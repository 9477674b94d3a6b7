//! Binary parameter checkpoints.
//!
//! Layout:
//!
//! ```text
//! b"TAASCKPT"                 8-byte magic
//! u32 LE                      format version (1)
//! u64 LE                      manifest length in bytes
//! manifest                    UTF-8 JSON, see [`Manifest`]
//! payload                     per manifest entry, in order: value, adam_m,
//!                             adam_v, each rows*cols little-endian f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::param::{ParamStore, Parameter};
use crate::error::{Result, TaasError};

const MAGIC: &[u8; 8] = b"TAASCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub step_count: u64,
    pub frozen: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub params: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn of(store: &ParamStore) -> Self {
        Manifest {
            seed: store.seed,
            params: store
                .params()
                .iter()
                .map(|p| ManifestEntry {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                    step_count: p.step_count,
                    frozen: p.frozen,
                })
                .collect(),
        }
    }
}

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut out: W) -> Result<()> {
    let manifest = serde_json::to_vec(&Manifest::of(store))?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(manifest.len() as u64).to_le_bytes())?;
    out.write_all(&manifest)?;
    for p in store.params() {
        for m in [&p.value, &p.adam_m, &p.adam_v] {
            for v in m.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ParamStore> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TaasError::Checkpoint("bad magic bytes".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(TaasError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut manifest = vec![0u8; len];
    input.read_exact(&mut manifest)?;
    let manifest: Manifest = serde_json::from_slice(&manifest)?;

    let mut params = Vec::with_capacity(manifest.params.len());
    for entry in manifest.params {
        let mut read = || -> Result<Matrix> {
            let mut data = vec![0.0; entry.rows * entry.cols];
            let mut buf = [0u8; 8];
            for v in data.iter_mut() {
                input
                    .read_exact(&mut buf)
                    .map_err(|e| TaasError::Checkpoint(format!("truncated payload for `{}`: {e}", entry.name)))?;
                *v = f64::from_le_bytes(buf);
            }
            Matrix::from_vec(entry.rows, entry.cols, data)
        };
        let value = read()?;
        let adam_m = read()?;
        let adam_v = read()?;
        let mut p = Parameter::new(entry.name, value);
        p.adam_m = adam_m;
        p.adam_v = adam_v;
        p.step_count = entry.step_count;
        p.frozen = entry.frozen;
        params.push(p);
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(TaasError::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    ParamStore::from_params(params, manifest.seed)
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    write_checkpoint(store, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
