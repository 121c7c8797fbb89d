//! Flat-file formats: TSV triples, raw little-endian `f32` blobs with JSON
//! sidecars.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{GraphMeta, Triple, TripleStore};

pub const DTYPE_F32LE: &str = "f32le";

/// `<path>.meta.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Sidecar {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a triple file. Counts come from the optional graph sidecar, else
/// from the largest ids seen.
pub fn load_triples(path: &Path) -> Result<TripleStore> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut triples = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_owned(),
            line: idx + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        let mut ids = [0u32; 3];
        for (slot, field) in ids.iter_mut().zip(&fields) {
            *slot = parse_id(field).map_err(parse_err)?;
        }
        triples.push(Triple::new(ids[0], ids[1], ids[2]));
    }

    let meta_path = sidecar_path(path);
    if meta_path.exists() {
        let meta: GraphMeta = read_json(&meta_path)?;
        TripleStore::new(triples, meta.num_entities, meta.num_relations)
    } else {
        Ok(TripleStore::from_triples(triples))
    }
}

fn parse_id(field: &str) -> std::result::Result<u32, String> {
    if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("not a non-negative integer: {field:?}"));
    }
    field.parse::<u32>().map_err(|_| format!("id overflow: {field}"))
}

/// Writes the triple file and its graph sidecar.
pub fn save_triples(path: &Path, store: &TripleStore) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in store.triples() {
        writeln!(w, "{}\t{}\t{}", t.head, t.rel, t.tail).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_json(&sidecar_path(path), &store.meta())
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixMeta {
    rows: usize,
    cols: usize,
    dtype: String,
}

pub fn write_f32_raw(path: &Path, data: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f32_raw(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Sidecar {
            path: path.to_owned(),
            message: format!("{} bytes is not a whole number of f32 values", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Writes a dense row-major matrix as raw `f32le` plus `{rows, cols, dtype}` sidecar.
pub fn write_matrix(path: &Path, rows: usize, cols: usize, data: &[f32]) -> Result<()> {
    assert_eq!(rows * cols, data.len(), "matrix shape does not match data");
    write_f32_raw(path, data)?;
    write_json(
        &sidecar_path(path),
        &MatrixMeta {
            rows,
            cols,
            dtype: DTYPE_F32LE.to_owned(),
        },
    )
}

/// Reads a matrix written by [`write_matrix`], validating shape and finiteness.
pub fn read_matrix(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let meta_path = sidecar_path(path);
    let meta: MatrixMeta = read_json(&meta_path)?;
    if meta.dtype != DTYPE_F32LE {
        return Err(Error::Sidecar {
            path: meta_path,
            message: format!("unsupported dtype {:?}", meta.dtype),
        });
    }
    let data = read_f32_raw(path)?;
    if data.len() != meta.rows * meta.cols {
        return Err(Error::Sidecar {
            path: meta_path,
            message: format!(
                "sidecar declares {}x{} = {} values, file holds {}",
                meta.rows,
                meta.cols,
                meta.rows * meta.cols,
                data.len()
            ),
        });
    }
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{}: value at row {}, col {}",
            path.display(),
            pos / meta.cols.max(1),
            pos % meta.cols.max(1)
        )));
    }
    Ok((meta.rows, meta.cols, data))
}
