use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Triple;

/// `n` uniformly drawn tails (with replacement, unfiltered) per positive.
pub fn sample_negatives<R: Rng>(
    rng: &mut R,
    positives: &[Triple],
    n: usize,
    num_entities: usize,
) -> Result<Vec<Vec<u32>>> {
    if num_entities == 0 {
        return Err(Error::InvalidArgument("cannot sample negatives from zero entities".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("negative sample size must be at least 1".into()));
    }
    let upper = u32::try_from(num_entities).map_err(|_| Error::InvalidArgument("entity count exceeds u32".into()))?;
    Ok(positives
        .iter()
        .map(|_| (0..n).map(|_| rng.random_range(0..upper)).collect())
        .collect())
}
