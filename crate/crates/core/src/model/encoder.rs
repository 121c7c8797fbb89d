use rand::Rng;

use super::linear::Linear;
use super::{EncoderVariant, Real};
use crate::error::{Error, Result};

/// Layers of the fusion network.
#[derive(Debug, Clone, PartialEq)]
pub enum Fusion<T> {
    /// One affine map over `[feature; shallow]` (`feature_dim + d -> d`).
    Concat { linear: Linear<T> },
    /// `proj: feature_dim -> d`, then a one-hidden-layer ReLU perceptron
    /// `2d -> hidden -> d` over `[proj(feature); shallow]`.
    Mlp {
        proj: Linear<T>,
        hidden: Linear<T>,
        out: Linear<T>,
    },
}

/// Parameters of one encoder (entity or relation side).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    pub variant: EncoderVariant,
    pub fusion: Fusion<T>,
    /// Residual weight. Only read by `ConcatMlpResidual`, but always stored.
    pub alpha: T,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncodeTrace<T> {
    /// `[feature; shallow]` for Concat, `[proj(feature); shallow]` otherwise.
    fused_input: Vec<T>,
    feature: Vec<T>,
    hidden_pre: Vec<T>,
    hidden: Vec<T>,
}

impl<T: Real> EncoderParams<T> {
    pub fn init<R: Rng>(
        variant: EncoderVariant,
        feature_dim: usize,
        dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let fusion = match variant {
            EncoderVariant::Concat => Fusion::Concat {
                linear: Linear::glorot(feature_dim + dim, dim, rng),
            },
            _ => Fusion::Mlp {
                proj: Linear::glorot(feature_dim, dim, rng),
                hidden: Linear::glorot(2 * dim, hidden, rng),
                out: Linear::glorot(hidden, dim, rng),
            },
        };
        EncoderParams {
            variant,
            fusion,
            alpha: T::one(),
        }
    }

    /// Same shapes, all values zero.
    pub fn zeros_like(&self) -> Self {
        let zero = |l: &Linear<T>| Linear::zeros(l.in_dim, l.out_dim);
        let fusion = match &self.fusion {
            Fusion::Concat { linear } => Fusion::Concat { linear: zero(linear) },
            Fusion::Mlp { proj, hidden, out } => Fusion::Mlp {
                proj: zero(proj),
                hidden: zero(hidden),
                out: zero(out),
            },
        };
        EncoderParams {
            variant: self.variant,
            fusion,
            alpha: T::zero(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match &self.fusion {
            Fusion::Concat { linear } => linear.in_dim - linear.out_dim,
            Fusion::Mlp { proj, .. } => proj.in_dim,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.fusion {
            Fusion::Concat { linear } => linear.out_dim,
            Fusion::Mlp { out, .. } => out.out_dim,
        }
    }

    /// Stable names of the tensors returned by [`Self::tensors`].
    pub fn tensor_names(&self) -> &'static [&'static str] {
        match self.fusion {
            Fusion::Concat { .. } => &["concat_weight", "concat_bias", "alpha"],
            Fusion::Mlp { .. } => &[
                "proj_weight",
                "proj_bias",
                "hidden_weight",
                "hidden_bias",
                "out_weight",
                "out_bias",
                "alpha",
            ],
        }
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = match &self.fusion {
            Fusion::Concat { linear } => vec![&linear.weight, &linear.bias],
            Fusion::Mlp { proj, hidden, out } => vec![
                &proj.weight,
                &proj.bias,
                &hidden.weight,
                &hidden.bias,
                &out.weight,
                &out.bias,
            ],
        };
        v.push(std::slice::from_ref(&self.alpha));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = match &mut self.fusion {
            Fusion::Concat { linear } => vec![&mut linear.weight, &mut linear.bias],
            Fusion::Mlp { proj, hidden, out } => vec![
                &mut proj.weight,
                &mut proj.bias,
                &mut hidden.weight,
                &mut hidden.bias,
                &mut out.weight,
                &mut out.bias,
            ],
        };
        v.push(std::slice::from_mut(&mut self.alpha));
        v
    }

    /// Elementwise `self += other` over all tensors.
    pub fn add_assign(&mut self, other: &EncoderParams<T>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn cast<U: Real>(&self) -> EncoderParams<U> {
        let fusion = match &self.fusion {
            Fusion::Concat { linear } => Fusion::Concat {
                linear: linear.cast(),
            },
            Fusion::Mlp { proj, hidden, out } => Fusion::Mlp {
                proj: proj.cast(),
                hidden: hidden.cast(),
                out: out.cast(),
            },
        };
        EncoderParams {
            variant: self.variant,
            fusion,
            alpha: U::from_f64(self.alpha.as_f64()),
        }
    }

    /// Encodes one feature row and shallow row into a `d`-vector.
    pub fn encode(&self, feature: &[f32], shallow: &[T]) -> Result<Vec<T>> {
        if feature.len() != self.feature_dim() || shallow.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "encoder expects feature {} and shallow {}, got {} and {}",
                self.feature_dim(),
                self.dim(),
                feature.len(),
                shallow.len()
            )));
        }
        Ok(self.encode_traced(feature, shallow).0)
    }

    pub(crate) fn encode_traced(&self, feature: &[f32], shallow: &[T]) -> (Vec<T>, EncodeTrace<T>) {
        let feature: Vec<T> = feature.iter().map(|&v| T::from_f32(v)).collect();
        let d = self.dim();
        match &self.fusion {
            Fusion::Concat { linear } => {
                let mut fused_input = feature.clone();
                fused_input.extend_from_slice(shallow);
                let mut e = vec![T::zero(); d];
                linear.forward(&fused_input, &mut e);
                let trace = EncodeTrace {
                    fused_input,
                    feature,
                    hidden_pre: Vec::new(),
                    hidden: Vec::new(),
                };
                (e, trace)
            }
            Fusion::Mlp { proj, hidden, out } => {
                let mut fused_input = vec![T::zero(); 2 * d];
                proj.forward(&feature, &mut fused_input[..d]);
                fused_input[d..].copy_from_slice(shallow);
                let mut hidden_pre = vec![T::zero(); hidden.out_dim];
                hidden.forward(&fused_input, &mut hidden_pre);
                let activated: Vec<T> = hidden_pre.iter().map(|&v| v.max(T::zero())).collect();
                let mut e = vec![T::zero(); d];
                out.forward(&activated, &mut e);
                match self.variant {
                    EncoderVariant::ConcatMlpResidualUnweighted => {
                        for (ei, si) in e.iter_mut().zip(shallow) {
                            *ei += *si;
                        }
                    }
                    EncoderVariant::ConcatMlpResidual => {
                        for (ei, si) in e.iter_mut().zip(shallow) {
                            *ei += self.alpha * *si;
                        }
                    }
                    _ => {}
                }
                let trace = EncodeTrace {
                    fused_input,
                    feature,
                    hidden_pre,
                    hidden: activated,
                };
                (e, trace)
            }
        }
    }

    /// Backpropagates `de = dL/de` through one encoding: accumulates into
    /// `grad` and adds `dL/d(shallow)` into `d_shallow`.
    pub(crate) fn backward(
        &self,
        trace: &EncodeTrace<T>,
        de: &[T],
        grad: &mut EncoderParams<T>,
        d_shallow: &mut [T],
    ) {
        let d = self.dim();
        match (&self.fusion, &mut grad.fusion) {
            (Fusion::Concat { linear }, Fusion::Concat { linear: g }) => {
                let mut dx = vec![T::zero(); linear.in_dim];
                linear.backward(&trace.fused_input, de, g, Some(&mut dx));
                let f = trace.feature.len();
                for (ds, v) in d_shallow.iter_mut().zip(&dx[f..]) {
                    *ds += *v;
                }
            }
            (
                Fusion::Mlp { proj, hidden, out },
                Fusion::Mlp {
                    proj: gp,
                    hidden: gh,
                    out: go,
                },
            ) => {
                let shallow = &trace.fused_input[d..];
                match self.variant {
                    EncoderVariant::ConcatMlpResidualUnweighted => {
                        for (ds, g) in d_shallow.iter_mut().zip(de) {
                            *ds += *g;
                        }
                    }
                    EncoderVariant::ConcatMlpResidual => {
                        for ((ds, g), s) in d_shallow.iter_mut().zip(de).zip(shallow) {
                            *ds += self.alpha * *g;
                            grad.alpha += *g * *s;
                        }
                    }
                    _ => {}
                }
                let mut d_hidden = vec![T::zero(); hidden.out_dim];
                out.backward(&trace.hidden, de, go, Some(&mut d_hidden));
                for (dh, pre) in d_hidden.iter_mut().zip(&trace.hidden_pre) {
                    if *pre <= T::zero() {
                        *dh = T::zero();
                    }
                }
                let mut d_fused = vec![T::zero(); 2 * d];
                hidden.backward(&trace.fused_input, &d_hidden, gh, Some(&mut d_fused));
                proj.backward(&trace.feature, &d_fused[..d], gp, None);
                for (ds, v) in d_shallow.iter_mut().zip(&d_fused[d..]) {
                    *ds += *v;
                }
            }
            _ => panic!("gradient buffer does not match encoder layout"),
        }
    }
}
