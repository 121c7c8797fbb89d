use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSet;
use crate::error::{Error, Result};
use crate::io;
use crate::model::{Features, ModelParams};

/// Per-query candidate scores, ragged, aligned with a [`CandidateSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    offsets: Vec<usize>,
    data: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreMeta {
    rows: usize,
    row_lengths: Vec<usize>,
    dtype: String,
}

impl ScoreMatrix {
    pub fn from_rows(rows: Vec<Vec<f32>>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut data = Vec::new();
        for r in rows {
            data.extend(r);
            offsets.push(data.len());
        }
        Self::from_parts(offsets, data)
    }

    fn from_parts(offsets: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("score at flat index {i}")));
        }
        Ok(ScoreMatrix { offsets, data })
    }

    pub fn empty() -> Self {
        ScoreMatrix {
            offsets: vec![0],
            data: Vec::new(),
        }
    }

    pub fn n_queries(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, q: usize) -> &[f32] {
        &self.data[self.offsets[q]..self.offsets[q + 1]]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> + '_ {
        (0..self.n_queries()).map(move |q| self.row(q))
    }

    pub fn row_lengths(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn same_shape(&self, other: &ScoreMatrix) -> bool {
        self.offsets == other.offsets
    }

    /// Errors unless row lengths match the candidate lists.
    pub fn check_aligned(&self, candidates: &CandidateSet) -> Result<()> {
        if self.row_lengths() != candidates.row_lengths() {
            return Err(Error::Dimension(format!(
                "score matrix ({} rows) is not aligned with candidate set ({} queries)",
                self.n_queries(),
                candidates.len()
            )));
        }
        Ok(())
    }

    /// Applies `f` to every entry.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<ScoreMatrix> {
        Self::from_parts(self.offsets.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_f32_raw(path, &self.data)?;
        io::write_json(
            &io::sidecar_path(path),
            &ScoreMeta {
                rows: self.n_queries(),
                row_lengths: self.row_lengths(),
                dtype: io::DTYPE_F32LE.to_owned(),
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta_path = io::sidecar_path(path);
        let meta: ScoreMeta = io::read_json(&meta_path)?;
        let bad = |message: String| Error::Sidecar {
            path: meta_path.clone(),
            message,
        };
        if meta.dtype != io::DTYPE_F32LE {
            return Err(bad(format!("unsupported dtype {:?}", meta.dtype)));
        }
        if meta.row_lengths.len() != meta.rows {
            return Err(bad(format!(
                "rows = {} but {} row lengths",
                meta.rows,
                meta.row_lengths.len()
            )));
        }
        let data = io::read_f32_raw(path)?;
        let total: usize = meta.row_lengths.iter().sum();
        if total != data.len() {
            return Err(bad(format!("row lengths sum to {total}, file holds {} values", data.len())));
        }
        let mut offsets = Vec::with_capacity(meta.rows + 1);
        offsets.push(0);
        for len in meta.row_lengths {
            offsets.push(offsets.last().unwrap() + len);
        }
        Self::from_parts(offsets, data)
    }
}

/// Queries scored per forward pass; bounds the memory of cached encodings.
const PREDICT_CHUNK: usize = 512;

/// Scores every candidate of every query. Row `q` equals
/// `model.score_candidates` over query `q`'s list.
pub fn predict(
    model: &ModelParams<f32>,
    features: Features<'_>,
    candidates: &CandidateSet,
) -> Result<ScoreMatrix> {
    model.check_features(features)?;
    candidates.validate(model.config.num_entities, model.config.num_relations)?;
    let rows: Vec<Vec<f32>> = candidates
        .queries
        .par_chunks(PREDICT_CHUNK)
        .map(|chunk| {
            let batch = model.forward(
                features,
                chunk.iter().map(|q| (q.head, q.rel, q.candidates.as_slice())),
            );
            chunk
                .iter()
                .map(|q| batch.scores(q.head, q.rel, &q.candidates))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    ScoreMatrix::from_rows(rows)
}
