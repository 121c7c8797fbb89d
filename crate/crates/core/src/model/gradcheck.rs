//! Central finite-difference check of the analytic backward pass.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{Features, ModelParams, ScoredQuery};
use super::Real;
use crate::error::{Error, Result};

/// Coordinates checked exhaustively below this count; above it a random
/// subsample of this size is drawn.
const EXHAUSTIVE_LIMIT: usize = 20_000;
const SUBSAMPLE: usize = 2_000;

/// `|a - n| / max(1, |a|, |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares the analytic gradient of `L = sum_q sum_j dscores[q][j] * score(q, j)`
/// with central differences at step `epsilon`, in `f64`. Returns the largest
/// relative error over the checked coordinates.
pub fn grad_check<T: Real>(
    model: &ModelParams<T>,
    features: Features<'_>,
    batch: &[ScoredQuery<T>],
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {epsilon}"
        )));
    }
    let mut model: ModelParams<f64> = model.cast();
    let batch: Vec<ScoredQuery<f64>> = batch
        .iter()
        .map(|q| ScoredQuery {
            head: q.head,
            rel: q.rel,
            candidates: q.candidates.clone(),
            dscores: q.dscores.iter().map(|v| v.as_f64()).collect(),
        })
        .collect();

    let analytic = model.backward(features, &batch)?.to_dense(&model);

    let coords: Vec<(usize, usize)> = analytic
        .iter()
        .enumerate()
        .flat_map(|(t, v)| (0..v.len()).map(move |i| (t, i)))
        .collect();
    let chosen: Vec<(usize, usize)> = if coords.len() <= EXHAUSTIVE_LIMIT {
        coords
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
        sample(&mut rng, coords.len(), SUBSAMPLE)
            .into_iter()
            .map(|i| coords[i])
            .collect()
    };

    let mut worst = 0.0f64;
    for (t, i) in chosen {
        let original = model.tensors()[t][i];
        model.tensors_mut()[t][i] = original + epsilon;
        let plus = objective(&model, features, &batch)?;
        model.tensors_mut()[t][i] = original - epsilon;
        let minus = objective(&model, features, &batch)?;
        model.tensors_mut()[t][i] = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        worst = worst.max(relative_error(analytic[t][i], numeric));
    }
    Ok(worst)
}

fn objective(model: &ModelParams<f64>, features: Features<'_>, batch: &[ScoredQuery<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for q in batch {
        let scores = model.score_candidates(features, q.head, q.rel, &q.candidates)?;
        total += scores.iter().zip(&q.dscores).map(|(s, g)| s * g).sum::<f64>();
    }
    Ok(total)
}
