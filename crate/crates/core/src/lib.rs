//! Link prediction over knowledge graphs with three cooperating parts:
//!
//! * [`model`]: a feature-fusion encoder (concat / MLP / residual variants)
//!   feeding a ComplEx or DistMult decoder, with analytic gradients.
//! * [`rules`]: closed Horn rule mining and rule application through boolean
//!   sparse matrix composition.
//! * [`inference`]: candidate scoring, average-bagging ensembles, knowledge
//!   distillation of the ensemble into single models, and MRR.
//!
//! [`training`] runs negative-sampling training in the inverse-relation,
//! tail-prediction-only regime; [`synthetic`] builds rule-governed benchmark
//! graphs for end-to-end checks.

pub mod candidates;
pub mod error;
pub mod features;
pub mod graph;
pub mod inference;
pub mod io;
pub mod model;
pub mod rules;
pub mod sparse;
pub mod synthetic;
pub mod training;

pub use candidates::{CandidateQuery, CandidateSet};
pub use error::{Error, Result};
pub use features::FeatureMatrix;
pub use graph::{EntityId, GraphMeta, RelationId, Triple, TripleStore};
pub use sparse::SparseBoolMatrix;
