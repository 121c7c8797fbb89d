use super::scores::ScoreMatrix;
use crate::error::{Error, Result};

/// Average bagging: elementwise mean of `N` aligned score matrices.
///
/// Sums in `f64` with a fixed pairwise tree over the inputs, so the result
/// depends only on the values and their order, not on threading.
pub fn ensemble_average(matrices: &[ScoreMatrix]) -> Result<ScoreMatrix> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::InvalidArgument("ensemble of zero models".into()))?;
    if let Some(i) = matrices.iter().position(|m| !m.same_shape(first)) {
        return Err(Error::Dimension(format!(
            "score matrix {i} does not match the shape of matrix 0"
        )));
    }
    let n = matrices.len() as f64;
    let mut column = vec![0.0f64; matrices.len()];
    let data: Vec<f32> = (0..first.data().len())
        .map(|i| {
            for (slot, m) in column.iter_mut().zip(matrices) {
                *slot = m.data()[i] as f64;
            }
            (pairwise_sum(&column) / n) as f32
        })
        .collect();
    let rows = first
        .row_lengths()
        .into_iter()
        .scan(0usize, |start, len| {
            let row = data[*start..*start + len].to_vec();
            *start += len;
            Some(row)
        })
        .collect();
    ScoreMatrix::from_rows(rows)
}

fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: Vec<Vec<f32>>) -> ScoreMatrix {
        ScoreMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn single_model_identity() {
        let a = m(vec![vec![0.1, -3.0], vec![7.25]]);
        assert_eq!(ensemble_average(std::slice::from_ref(&a)).unwrap(), a);
    }

    #[test]
    fn two_rows_average() {
        let out = ensemble_average(&[m(vec![vec![1.0, 3.0]]), m(vec![vec![3.0, 1.0]])]).unwrap();
        assert_eq!(out.row(0), &[2.0, 2.0]);
    }

    #[test]
    fn equal_inputs_idempotent() {
        let a = m(vec![vec![0.3, 1.7, -2.2]]);
        let out = ensemble_average(&[a.clone(), a.clone(), a.clone(), a.clone()]).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn errors() {
        assert!(ensemble_average(&[]).is_err());
        assert!(ensemble_average(&[m(vec![vec![1.0]]), m(vec![vec![1.0, 2.0]])]).is_err());
    }
}
