use rand::Rng;

use super::Real;

/// Affine map `y = W x + b` with `W` stored row-major as `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            in_dim,
            out_dim,
            weight: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = (0..in_dim * out_dim)
            .map(|_| T::from_f64(rng.random_range(-limit..limit)))
            .collect();
        Linear {
            in_dim,
            out_dim,
            weight,
            bias: vec![T::zero(); out_dim],
        }
    }

    pub fn forward(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(y.len(), self.out_dim);
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, xi) in row.iter().zip(x) {
                acc += *w * *xi;
            }
            *yo = acc;
        }
    }

    /// Accumulates parameter gradients into `grad` and, if given, adds
    /// `W^T dy` into `dx`.
    pub fn backward(&self, x: &[T], dy: &[T], grad: &mut Linear<T>, dx: Option<&mut [T]>) {
        for (o, &g) in dy.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            grad.bias[o] += g;
            let row = &mut grad.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for (w, xi) in row.iter_mut().zip(x) {
                *w += g * *xi;
            }
        }
        if let Some(dx) = dx {
            for (o, &g) in dy.iter().enumerate() {
                if g == T::zero() {
                    continue;
                }
                let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                for (d, w) in dx.iter_mut().zip(row) {
                    *d += g * *w;
                }
            }
        }
    }

    pub fn cast<U: Real>(&self) -> Linear<U> {
        Linear {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weight: self.weight.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            bias: self.bias.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_backward_small() {
        let lin = Linear {
            in_dim: 2,
            out_dim: 2,
            weight: vec![1.0, 2.0, 3.0, 4.0],
            bias: vec![0.5, -0.5],
        };
        let mut y = [0.0; 2];
        lin.forward(&[1.0, 1.0], &mut y);
        assert_eq!(y, [3.5, 6.5]);

        let mut grad = Linear::zeros(2, 2);
        let mut dx = [0.0; 2];
        lin.backward(&[1.0, 2.0], &[1.0, 0.0], &mut grad, Some(&mut dx));
        assert_eq!(grad.weight, vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(grad.bias, vec![1.0, 0.0]);
        assert_eq!(dx, [1.0, 2.0]);
    }
}
