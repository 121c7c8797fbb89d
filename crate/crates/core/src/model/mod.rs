//! The ComplEx-CMRC scoring model.
//!
//! An encoder fuses a fixed feature row with a trainable shallow row into one
//! `d`-dimensional embedding; a decoder scores `(head, rel, tail)` from the
//! three encoded embeddings. Entities and relations use the same encoder
//! architecture with independent parameters.

mod checkpoint;
mod decoder;
mod encoder;
mod gradcheck;
mod linear;
mod params;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use decoder::{dot, query_gradients, query_vector, score_complex, score_distmult};
pub use encoder::{EncodeTrace, EncoderParams, Fusion};
pub use gradcheck::{grad_check, relative_error};
pub use linear::Linear;
pub use params::{
    Features, Gradients, ModelConfig, ModelParams, ScoredQuery, ShallowTable,
};
pub(crate) use params::{forward_parts, ShallowLookup};

/// Floating point type the model is generic over. Training runs in `f32`,
/// gradient checking in `f64`.
pub trait Real:
    num_traits::Float
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Send
    + Sync
    + Debug
    + Default
    + 'static
{
    fn from_f32(v: f32) -> Self;
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f32(v: f32) -> Self {
        v
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f32(v: f32) -> Self {
        v as f64
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// How feature and shallow embeddings are fused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderVariant {
    /// `Linear([f, s])`
    Concat,
    /// `MLP([Linear(f), s])`
    ConcatMlp,
    /// `MLP([Linear(f), s]) + s`
    ConcatMlpResidualUnweighted,
    /// `MLP([Linear(f), s]) + alpha * s`
    ConcatMlpResidual,
}

impl EncoderVariant {
    pub const ALL: [EncoderVariant; 4] = [
        EncoderVariant::Concat,
        EncoderVariant::ConcatMlp,
        EncoderVariant::ConcatMlpResidualUnweighted,
        EncoderVariant::ConcatMlpResidual,
    ];

    pub fn uses_mlp(self) -> bool {
        self != EncoderVariant::Concat
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecoderKind {
    #[serde(rename = "complex")]
    ComplEx,
    #[serde(rename = "distmult")]
    DistMult,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 2] = [DecoderKind::ComplEx, DecoderKind::DistMult];
}
