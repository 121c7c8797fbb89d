use serde::{Deserialize, Serialize};

use super::scores::ScoreMatrix;
use crate::candidates::CandidateSet;
use crate::error::{Error, Result};

/// How candidates scoring exactly as high as the truth affect its rank.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Ties rank below the truth.
    #[default]
    Optimistic,
    /// Each tie counts as half a position ahead of the truth.
    Average,
}

impl std::str::FromStr for TieBreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimistic" => Ok(TieBreak::Optimistic),
            "average" => Ok(TieBreak::Average),
            other => Err(Error::InvalidArgument(format!("unknown tie-break {other:?}"))),
        }
    }
}

/// Rank of the truth within one score row.
pub fn rank_of(row: &[f32], truth: usize, tie: TieBreak) -> f64 {
    let t = row[truth];
    let mut greater = 0usize;
    let mut ties = 0usize;
    for (j, &s) in row.iter().enumerate() {
        if j == truth {
            continue;
        }
        if s > t {
            greater += 1;
        } else if s == t {
            ties += 1;
        }
    }
    match tie {
        TieBreak::Optimistic => 1.0 + greater as f64,
        TieBreak::Average => 1.0 + greater as f64 + ties as f64 / 2.0,
    }
}

/// Mean reciprocal rank of the true tails.
pub fn mrr(scores: &ScoreMatrix, candidates: &CandidateSet, tie: TieBreak) -> Result<f64> {
    scores.check_aligned(candidates)?;
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("MRR of an empty candidate set".into()));
    }
    let mut total = 0.0;
    for (q, query) in candidates.queries.iter().enumerate() {
        let truth = query
            .truth
            .ok_or_else(|| Error::InvalidArgument(format!("query {q} has no truth index")))?;
        total += 1.0 / rank_of(scores.row(q), truth, tie);
    }
    Ok(total / candidates.len() as f64)
}
