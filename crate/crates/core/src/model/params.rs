use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decoder::{dot, query_gradients, query_vector};
use super::encoder::{EncodeTrace, EncoderParams};
use super::{DecoderKind, EncoderVariant, Real};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::{EntityId, RelationId};

/// Shapes and choices that fix a model's parameter layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: EncoderVariant,
    pub decoder: DecoderKind,
    pub dim: usize,
    pub hidden: usize,
    pub entity_feature_dim: usize,
    pub relation_feature_dim: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    /// Rows of the relation feature matrix. Relation `r` reads feature row
    /// `r % relation_feature_rows`, so an inverse relation `r + R` shares its
    /// base relation's features while keeping its own shallow row.
    pub relation_feature_rows: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !self.dim.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "embedding dim must be even and positive, got {}",
                self.dim
            )));
        }
        if self.variant.uses_mlp() && self.hidden == 0 {
            return Err(Error::InvalidArgument("mlp hidden dim must be at least 1".into()));
        }
        if self.num_relations > 0 && self.relation_feature_rows == 0 {
            return Err(Error::InvalidArgument("relation feature rows must be positive".into()));
        }
        Ok(())
    }
}

/// One trainable row per entity or relation.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowTable<T> {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Real> ShallowTable<T> {
    /// Uniform in `(-1/sqrt(d), 1/sqrt(d))`.
    pub fn init<R: Rng>(rows: usize, dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        let data = (0..rows * dim)
            .map(|_| T::from_f64(rng.random_range(-bound..bound)))
            .collect();
        ShallowTable { rows, dim, data }
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cast<U: Real>(&self) -> ShallowTable<U> {
        ShallowTable {
            rows: self.rows,
            dim: self.dim,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

/// Source of shallow rows for a forward pass.
pub(crate) trait ShallowLookup<T>: Sync {
    fn read_row(&self, id: u32, out: &mut [T]);
}

impl<T: Real> ShallowLookup<T> for ShallowTable<T> {
    fn read_row(&self, id: u32, out: &mut [T]) {
        out.copy_from_slice(self.row(id as usize));
    }
}

/// Entity and relation feature matrices bound to a model.
#[derive(Debug, Clone, Copy)]
pub struct Features<'a> {
    pub entity: &'a FeatureMatrix,
    pub relation: &'a FeatureMatrix,
}

/// A query with per-candidate downstream gradients `dL/dscore`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredQuery<T> {
    pub head: EntityId,
    pub rel: RelationId,
    pub candidates: Vec<EntityId>,
    pub dscores: Vec<T>,
}

/// Parameter gradients of one batch. Shallow gradients are sparse: only
/// rows reached by the forward pass appear, sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub entity_encoder: EncoderParams<T>,
    pub relation_encoder: EncoderParams<T>,
    pub entity_rows: Vec<(u32, Vec<T>)>,
    pub relation_rows: Vec<(u32, Vec<T>)>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(model: &ModelParams<T>) -> Self {
        Gradients {
            entity_encoder: model.entity_encoder.zeros_like(),
            relation_encoder: model.relation_encoder.zeros_like(),
            entity_rows: Vec::new(),
            relation_rows: Vec::new(),
        }
    }

    pub fn is_finite(&self) -> bool {
        let dense = self
            .entity_encoder
            .tensors()
            .into_iter()
            .chain(self.relation_encoder.tensors())
            .all(|t| t.iter().all(|v| v.is_finite()));
        dense
            && self
                .entity_rows
                .iter()
                .chain(&self.relation_rows)
                .all(|(_, r)| r.iter().all(|v| v.is_finite()))
    }

    /// Dense copy laid out like [`ModelParams::tensors`].
    pub fn to_dense(&self, model: &ModelParams<T>) -> Vec<Vec<T>> {
        let mut ent = vec![T::zero(); model.entity_shallow.data.len()];
        let dim = model.config.dim;
        for (id, g) in &self.entity_rows {
            ent[*id as usize * dim..(*id as usize + 1) * dim].copy_from_slice(g);
        }
        let mut rel = vec![T::zero(); model.relation_shallow.data.len()];
        for (id, g) in &self.relation_rows {
            rel[*id as usize * dim..(*id as usize + 1) * dim].copy_from_slice(g);
        }
        let mut out = vec![ent, rel];
        out.extend(self.entity_encoder.tensors().into_iter().map(|t| t.to_vec()));
        out.extend(self.relation_encoder.tensors().into_iter().map(|t| t.to_vec()));
        out
    }
}

/// Full model state: two encoders, two shallow tables, and the decoder choice.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub entity_encoder: EncoderParams<T>,
    pub relation_encoder: EncoderParams<T>,
    pub entity_shallow: ShallowTable<T>,
    pub relation_shallow: ShallowTable<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let entity_shallow = ShallowTable::init(config.num_entities, d, rng);
        let relation_shallow = ShallowTable::init(config.num_relations, d, rng);
        let entity_encoder =
            EncoderParams::init(config.variant, config.entity_feature_dim, d, config.hidden, rng);
        let relation_encoder =
            EncoderParams::init(config.variant, config.relation_feature_dim, d, config.hidden, rng);
        Ok(ModelParams {
            config,
            entity_encoder,
            relation_encoder,
            entity_shallow,
            relation_shallow,
        })
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            entity_encoder: self.entity_encoder.cast(),
            relation_encoder: self.relation_encoder.cast(),
            entity_shallow: self.entity_shallow.cast(),
            relation_shallow: self.relation_shallow.cast(),
        }
    }

    /// Names aligned with [`Self::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = vec!["entity_shallow".to_owned(), "relation_shallow".to_owned()];
        names.extend(self.entity_encoder.tensor_names().iter().map(|n| format!("entity_{n}")));
        names.extend(self.relation_encoder.tensor_names().iter().map(|n| format!("relation_{n}")));
        names
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = vec![&self.entity_shallow.data, &self.relation_shallow.data];
        v.extend(self.entity_encoder.tensors());
        v.extend(self.relation_encoder.tensors());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = vec![&mut self.entity_shallow.data, &mut self.relation_shallow.data];
        v.extend(self.entity_encoder.tensors_mut());
        v.extend(self.relation_encoder.tensors_mut());
        v
    }

    pub fn check_features(&self, features: Features<'_>) -> Result<()> {
        let c = &self.config;
        if features.entity.rows() != c.num_entities || features.entity.cols() != c.entity_feature_dim {
            return Err(Error::Dimension(format!(
                "entity features are {}x{}, model expects {}x{}",
                features.entity.rows(),
                features.entity.cols(),
                c.num_entities,
                c.entity_feature_dim
            )));
        }
        if features.relation.rows() != c.relation_feature_rows
            || features.relation.cols() != c.relation_feature_dim
        {
            return Err(Error::Dimension(format!(
                "relation features are {}x{}, model expects {}x{}",
                features.relation.rows(),
                features.relation.cols(),
                c.relation_feature_rows,
                c.relation_feature_dim
            )));
        }
        Ok(())
    }

    pub(crate) fn relation_feature_row(&self, rel: RelationId) -> usize {
        rel as usize % self.config.relation_feature_rows
    }

    fn check_entity(&self, id: EntityId) -> Result<()> {
        if (id as usize) < self.config.num_entities {
            Ok(())
        } else {
            Err(Error::InvalidId {
                kind: "entity",
                id: id.into(),
                count: self.config.num_entities,
            })
        }
    }

    fn check_relation(&self, id: RelationId) -> Result<()> {
        if (id as usize) < self.config.num_relations {
            Ok(())
        } else {
            Err(Error::InvalidId {
                kind: "relation",
                id: id.into(),
                count: self.config.num_relations,
            })
        }
    }

    pub fn encode_entity(&self, features: Features<'_>, id: EntityId) -> Result<Vec<T>> {
        self.check_entity(id)?;
        self.entity_encoder
            .encode(features.entity.row(id as usize), self.entity_shallow.row(id as usize))
    }

    pub fn encode_relation(&self, features: Features<'_>, id: RelationId) -> Result<Vec<T>> {
        self.check_relation(id)?;
        self.relation_encoder.encode(
            features.relation.row(self.relation_feature_row(id)),
            self.relation_shallow.row(id as usize),
        )
    }

    /// Decoder scores of `(head, rel, c)` for every candidate `c`, encoding
    /// the head and relation once.
    pub fn score_candidates(
        &self,
        features: Features<'_>,
        head: EntityId,
        rel: RelationId,
        candidates: &[EntityId],
    ) -> Result<Vec<T>> {
        self.check_features(features)?;
        let h = self.encode_entity(features, head)?;
        let r = self.encode_relation(features, rel)?;
        let q = query_vector(self.config.decoder, &h, &r);
        candidates
            .iter()
            .map(|&c| Ok(dot(&q, &self.encode_entity(features, c)?)))
            .collect()
    }

    /// Encodes every entity and relation reached by `queries`.
    pub(crate) fn forward<'q, I>(&self, features: Features<'_>, queries: I) -> EncodedBatch<T>
    where
        I: IntoIterator<Item = (EntityId, RelationId, &'q [EntityId])>,
    {
        forward_parts(
            &self.config,
            &self.entity_encoder,
            &self.relation_encoder,
            &self.entity_shallow,
            &self.relation_shallow,
            features,
            queries,
        )
    }

    /// Gradients of `sum_q sum_j dscores[q][j] * score(q, j)` for every
    /// parameter reached by the batch.
    pub fn backward(&self, features: Features<'_>, batch: &[ScoredQuery<T>]) -> Result<Gradients<T>> {
        self.check_features(features)?;
        for q in batch {
            self.check_entity(q.head)?;
            self.check_relation(q.rel)?;
            for &c in &q.candidates {
                self.check_entity(c)?;
            }
            if q.dscores.len() != q.candidates.len() {
                return Err(Error::Dimension(format!(
                    "{} downstream gradients for {} candidates",
                    q.dscores.len(),
                    q.candidates.len()
                )));
            }
        }
        let encoded = self.forward(
            features,
            batch.iter().map(|q| (q.head, q.rel, q.candidates.as_slice())),
        );
        Ok(encoded.backward(
            &self.entity_encoder,
            &self.relation_encoder,
            batch.iter().map(|q| (q.head, q.rel, q.candidates.as_slice(), q.dscores.as_slice())),
        ))
    }
}

/// Forward pass over model parts, with shallow rows read through `S`.
pub(crate) fn forward_parts<'q, T, S, I>(
    config: &ModelConfig,
    entity_encoder: &EncoderParams<T>,
    relation_encoder: &EncoderParams<T>,
    entity_shallow: &S,
    relation_shallow: &S,
    features: Features<'_>,
    queries: I,
) -> EncodedBatch<T>
where
    T: Real,
    S: ShallowLookup<T>,
    I: IntoIterator<Item = (EntityId, RelationId, &'q [EntityId])>,
{
    let mut ent_ids = Vec::new();
    let mut rel_ids = Vec::new();
    for (h, r, cands) in queries {
        ent_ids.push(h);
        ent_ids.extend_from_slice(cands);
        rel_ids.push(r);
    }
    let rel_rows = config.relation_feature_rows.max(1);
    EncodedBatch {
        decoder: config.decoder,
        entities: encode_many(entity_encoder, features.entity, |id| id as usize, entity_shallow, ent_ids),
        relations: encode_many(
            relation_encoder,
            features.relation,
            |id| id as usize % rel_rows,
            relation_shallow,
            rel_ids,
        ),
    }
}

/// Embeddings of a deduplicated, sorted id list.
pub(crate) struct Encoded<T> {
    pub ids: Vec<u32>,
    slots: HashMap<u32, usize>,
    pub emb: Vec<Vec<T>>,
    traces: Vec<EncodeTrace<T>>,
}

impl<T> Encoded<T> {
    pub fn slot(&self, id: u32) -> usize {
        self.slots[&id]
    }

    pub fn get(&self, id: u32) -> &[T] {
        &self.emb[self.slots[&id]]
    }
}

pub(crate) fn encode_many<T: Real, S: ShallowLookup<T>>(
    encoder: &EncoderParams<T>,
    features: &FeatureMatrix,
    feature_row: impl Fn(u32) -> usize + Sync,
    shallow: &S,
    mut ids: Vec<u32>,
) -> Encoded<T> {
    ids.sort_unstable();
    ids.dedup();
    let dim = encoder.dim();
    let (emb, traces): (Vec<_>, Vec<_>) = ids
        .par_iter()
        .map(|&id| {
            let mut row = vec![T::zero(); dim];
            shallow.read_row(id, &mut row);
            encoder.encode_traced(features.row(feature_row(id)), &row)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .unzip();
    let slots = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    Encoded {
        ids,
        slots,
        emb,
        traces,
    }
}

/// Backpropagates per-slot embedding gradients through the encoder.
///
/// Slots are processed in fixed-size chunks whose partial sums are reduced in
/// chunk order, so the result does not depend on the thread count.
pub(crate) fn backward_encoded<T: Real>(
    encoder: &EncoderParams<T>,
    encoded: &Encoded<T>,
    d_emb: &[Vec<T>],
) -> (EncoderParams<T>, Vec<(u32, Vec<T>)>) {
    let n = encoded.ids.len();
    let chunk = n.div_ceil(16).max(64);
    let starts: Vec<usize> = (0..n).step_by(chunk).collect();
    let partials: Vec<(EncoderParams<T>, Vec<(u32, Vec<T>)>)> = starts
        .par_iter()
        .map(|&start| {
            let mut grad = encoder.zeros_like();
            let mut rows = Vec::new();
            for slot in start..(start + chunk).min(n) {
                let de = &d_emb[slot];
                if de.iter().all(|v| *v == T::zero()) {
                    continue;
                }
                let mut ds = vec![T::zero(); de.len()];
                encoder.backward(&encoded.traces[slot], de, &mut grad, &mut ds);
                rows.push((encoded.ids[slot], ds));
            }
            (grad, rows)
        })
        .collect();
    let mut total = encoder.zeros_like();
    let mut rows = Vec::new();
    for (g, r) in partials {
        total.add_assign(&g);
        rows.extend(r);
    }
    (total, rows)
}

/// Encoded entities and relations of one batch.
pub(crate) struct EncodedBatch<T> {
    pub decoder: DecoderKind,
    pub entities: Encoded<T>,
    pub relations: Encoded<T>,
}

impl<T: Real> EncodedBatch<T> {
    pub fn scores(&self, head: EntityId, rel: RelationId, candidates: &[EntityId]) -> Vec<T> {
        let q = query_vector(self.decoder, self.entities.get(head), self.relations.get(rel));
        candidates.iter().map(|&c| dot(&q, self.entities.get(c))).collect()
    }

    pub fn backward<'q, I>(
        &self,
        entity_encoder: &EncoderParams<T>,
        relation_encoder: &EncoderParams<T>,
        queries: I,
    ) -> Gradients<T>
    where
        I: IntoIterator<Item = (EntityId, RelationId, &'q [EntityId], &'q [T])>,
    {
        let dim = entity_encoder.dim();
        let mut d_ent = vec![vec![T::zero(); dim]; self.entities.ids.len()];
        let mut d_rel = vec![vec![T::zero(); dim]; self.relations.ids.len()];
        for (head, rel, cands, dscores) in queries {
            let h = self.entities.get(head);
            let r = self.relations.get(rel);
            let q = query_vector(self.decoder, h, r);
            let mut dq = vec![T::zero(); dim];
            for (&c, &g) in cands.iter().zip(dscores) {
                if g == T::zero() {
                    continue;
                }
                let slot = self.entities.slot(c);
                let t = &self.entities.emb[slot];
                for k in 0..dim {
                    dq[k] += g * t[k];
                    d_ent[slot][k] += g * q[k];
                }
            }
            let hs = self.entities.slot(head);
            let rs = self.relations.slot(rel);
            query_gradients(self.decoder, h, r, &dq, &mut d_ent[hs], &mut d_rel[rs]);
        }
        let (entity_grad, entity_rows) = backward_encoded(entity_encoder, &self.entities, &d_ent);
        let (relation_grad, relation_rows) =
            backward_encoded(relation_encoder, &self.relations, &d_rel);
        Gradients {
            entity_encoder: entity_grad,
            relation_encoder: relation_grad,
            entity_rows,
            relation_rows,
        }
    }
}
