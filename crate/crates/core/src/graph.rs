//! Triple storage with per-relation CSR adjacency.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseBoolMatrix;

pub type EntityId = u32;
pub type RelationId = u32;

/// A directed labelled edge `(head, rel, tail)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub rel: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub const fn new(head: EntityId, rel: RelationId, tail: EntityId) -> Self {
        Triple { head, rel, tail }
    }
}

impl From<(u32, u32, u32)> for Triple {
    fn from((head, rel, tail): (u32, u32, u32)) -> Self {
        Triple { head, rel, tail }
    }
}

/// Entity and relation counts, stored as the JSON graph sidecar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphMeta {
    pub num_entities: usize,
    pub num_relations: usize,
}

/// A deduplicated triple list plus one boolean adjacency matrix per relation.
///
/// Immutable after construction; operations that change the edge set build a
/// new store.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleStore {
    triples: Vec<Triple>,
    num_entities: usize,
    num_relations: usize,
    adjacency: Vec<SparseBoolMatrix>,
}

impl TripleStore {
    /// Builds a store with explicit counts. Duplicate triples are dropped,
    /// keeping the first occurrence.
    pub fn new(triples: Vec<Triple>, num_entities: usize, num_relations: usize) -> Result<Self> {
        for t in &triples {
            check_id("entity", t.head, num_entities)?;
            check_id("entity", t.tail, num_entities)?;
            check_id("relation", t.rel, num_relations)?;
        }
        let mut seen = HashSet::with_capacity(triples.len());
        let triples: Vec<Triple> = triples.into_iter().filter(|t| seen.insert(*t)).collect();

        let mut per_rel: Vec<Vec<(u32, u32)>> = vec![Vec::new(); num_relations];
        for t in &triples {
            per_rel[t.rel as usize].push((t.head, t.tail));
        }
        let adjacency = per_rel
            .into_iter()
            .map(|pairs| SparseBoolMatrix::from_pairs(num_entities, num_entities, pairs))
            .collect();
        Ok(TripleStore {
            triples,
            num_entities,
            num_relations,
            adjacency,
        })
    }

    /// Builds a store whose counts are one past the largest id seen.
    pub fn from_triples(triples: Vec<Triple>) -> Self {
        let num_entities = triples
            .iter()
            .map(|t| t.head.max(t.tail) as usize + 1)
            .max()
            .unwrap_or(0);
        let num_relations = triples.iter().map(|t| t.rel as usize + 1).max().unwrap_or(0);
        Self::new(triples, num_entities, num_relations).expect("counts derived from the ids")
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn meta(&self) -> GraphMeta {
        GraphMeta {
            num_entities: self.num_entities,
            num_relations: self.num_relations,
        }
    }

    /// The `|E| x |E|` adjacency matrix of `rel`: entry `(i, j)` is set iff
    /// `(i, rel, j)` is in the store.
    pub fn relation_matrix(&self, rel: RelationId) -> Result<&SparseBoolMatrix> {
        check_id("relation", rel, self.num_relations)?;
        Ok(&self.adjacency[rel as usize])
    }

    pub fn contains(&self, t: Triple) -> bool {
        (t.rel as usize) < self.num_relations
            && self.adjacency[t.rel as usize].contains(t.head as usize, t.tail)
    }

    /// Known tails of `(head, rel, ?)`, sorted.
    pub fn tails(&self, head: EntityId, rel: RelationId) -> &[u32] {
        if (rel as usize) >= self.num_relations || (head as usize) >= self.num_entities {
            return &[];
        }
        self.adjacency[rel as usize].row(head as usize)
    }

    /// A new store holding this store's triples followed by `extra` (deduplicated).
    pub fn with_triples<I: IntoIterator<Item = Triple>>(&self, extra: I) -> Result<TripleStore> {
        let mut all = self.triples.clone();
        all.extend(extra);
        TripleStore::new(all, self.num_entities, self.num_relations)
    }

    /// Adds the inverse relation `r + R` for every relation `r < R`, with
    /// `(t, r + R, h)` for each `(h, r, t)`.
    pub fn add_inverse_relations(&self) -> TripleStore {
        let r = self.num_relations as u32;
        let mut triples = self.triples.clone();
        triples.extend(self.triples.iter().map(|t| Triple::new(t.tail, t.rel + r, t.head)));
        TripleStore::new(triples, self.num_entities, 2 * self.num_relations)
            .expect("inverse ids stay in range")
    }

    /// Splits the triple list into `k` contiguous slices of `slice_len`
    /// triples. Slice `i` starts at `floor(i * N / k)` and wraps past the end.
    pub fn sample_subgraphs(&self, k: usize, slice_len: usize) -> Result<Vec<TripleStore>> {
        let n = self.triples.len();
        if k == 0 {
            return Err(Error::InvalidArgument("subgraph count must be at least 1".into()));
        }
        if slice_len == 0 {
            return Err(Error::InvalidArgument("slice length must be positive".into()));
        }
        if slice_len > n {
            return Err(Error::InvalidArgument(format!(
                "slice length {slice_len} exceeds {n} triples"
            )));
        }
        (0..k)
            .map(|i| {
                let start = i * n / k;
                let slice = (0..slice_len).map(|j| self.triples[(start + j) % n]).collect();
                TripleStore::new(slice, self.num_entities, self.num_relations)
            })
            .collect()
    }
}

fn check_id(kind: &'static str, id: u32, count: usize) -> Result<()> {
    if (id as usize) < count {
        Ok(())
    } else {
        Err(Error::InvalidId {
            kind,
            id: id.into(),
            count,
        })
    }
}
