//! Rule-governed synthetic knowledge graphs for end-to-end checks.
//!
//! Every entity gets a unit-norm complex latent vector `z`. A base relation
//! with complex weights `w` links each head `h` to the `tails_per_head`
//! entities maximising `Re(sum z_h w conj(z_t))` plus Gumbel noise. Rule relations are exact compositions `rc = ra ∘ rb` of earlier
//! relations, so `rc(x,z) <= ra(x,y) ∧ rb(y,z)` holds with confidence 1 on the
//! noise-free graph. Uniform noise edges are then added to every relation.
//! Entity features are `tanh` of a random linear image of `z`, plus noise;
//! relation features are noisy projections of `w` (for a rule relation, the
//! elementwise product of its body weights).

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateQuery, CandidateSet};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::{RelationId, Triple, TripleStore};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_entities: usize,
    /// Base plus rule relations.
    pub num_relations: usize,
    /// The last `num_rule_relations` relation ids are compositions.
    pub num_rule_relations: usize,
    /// Body `[ra, rb]` of each rule relation, in order. Empty picks
    /// consecutive base-relation pairs `[2i, 2i+1]`.
    pub rule_templates: Vec<[RelationId; 2]>,
    /// Noise edges added per relation, as a fraction of its clean edge count.
    pub noise_fraction: f64,
    pub feature_dim: usize,
    pub latent_dim: usize,
    pub tails_per_head: usize,
    /// Probability that an entity has out-edges in a given base relation.
    pub head_fraction: f64,
    /// Gumbel scale on the standardized base-relation scores.
    pub tail_noise: f64,
    /// Standard deviation of the Gaussian feature noise.
    pub feature_noise: f64,
    /// Train, valid and test fractions of the shuffled triple list.
    pub splits: [f64; 3],
    /// Candidates per evaluation query, truth included.
    pub num_candidates: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_entities: 1000,
            num_relations: 8,
            num_rule_relations: 2,
            rule_templates: Vec::new(),
            noise_fraction: 0.0,
            feature_dim: 16,
            latent_dim: 8,
            tails_per_head: 2,
            head_fraction: 1.0,
            tail_noise: 0.5,
            feature_noise: 0.1,
            splits: [0.8, 0.1, 0.1],
            num_candidates: 101,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn num_base_relations(&self) -> usize {
        self.num_relations - self.num_rule_relations
    }

    /// Body of every rule relation, `(head, [ra, rb])`.
    pub fn rules(&self) -> Vec<(RelationId, [RelationId; 2])> {
        let base = self.num_base_relations() as u32;
        (0..self.num_rule_relations as u32)
            .map(|i| {
                let body = self
                    .rule_templates
                    .get(i as usize)
                    .copied()
                    .unwrap_or([(2 * i) % base, (2 * i + 1) % base]);
                (base + i, body)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(format!("infeasible synthetic spec: {m}")));
        if self.num_entities < 2 {
            return fail("need at least 2 entities".into());
        }
        if self.num_rule_relations >= self.num_relations {
            return fail("need at least one base relation".into());
        }
        if self.rule_templates.len() > self.num_rule_relations {
            return fail("more rule templates than rule relations".into());
        }
        for (head, body) in self.rules() {
            if body.iter().any(|&b| b >= head) {
                return fail(format!("rule relation {head} must compose earlier relations, got {body:?}"));
            }
        }
        if !(self.head_fraction > 0.0 && self.head_fraction <= 1.0) {
            return fail("head_fraction must lie in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return fail("noise_fraction outside [0, 1]".into());
        }
        if self.splits.iter().any(|s| !(0.0..=1.0).contains(s)) || self.splits.iter().sum::<f64>() > 1.0 + 1e-12 {
            return fail("split fractions must lie in [0, 1] and sum to at most 1".into());
        }
        if self.tails_per_head == 0 || self.tails_per_head >= self.num_entities {
            return fail("tails_per_head must be in [1, num_entities)".into());
        }
        if self.num_candidates == 0 || self.num_candidates > self.num_entities {
            return fail("num_candidates must be in [1, num_entities]".into());
        }
        if self.feature_dim == 0 || self.latent_dim == 0 || !self.latent_dim.is_multiple_of(2) {
            return fail("feature dimension must be positive, latent dimension positive and even".into());
        }
        if !(self.tail_noise >= 0.0 && self.feature_noise >= 0.0) {
            return fail("noise scales must be non-negative".into());
        }
        Ok(())
    }
}

/// A generated benchmark held in memory.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    /// Every triple, before the split.
    pub full: TripleStore,
    pub train: TripleStore,
    pub valid: CandidateSet,
    pub test: CandidateSet,
    pub entity_features: FeatureMatrix,
    pub relation_features: FeatureMatrix,
}

pub const TRAIN_FILE: &str = "train.tsv";
pub const FULL_FILE: &str = "full.tsv";
pub const VALID_FILE: &str = "valid.cand";
pub const TEST_FILE: &str = "test.cand";
pub const ENTITY_FEATURES_FILE: &str = "entity_feat.f32";
pub const RELATION_FEATURES_FILE: &str = "relation_feat.f32";
pub const SPEC_FILE: &str = "spec.json";

impl SyntheticDataset {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_json(&dir.join(SPEC_FILE), &self.spec)?;
        io::save_triples(&dir.join(FULL_FILE), &self.full)?;
        io::save_triples(&dir.join(TRAIN_FILE), &self.train)?;
        self.valid.save(&dir.join(VALID_FILE))?;
        self.test.save(&dir.join(TEST_FILE))?;
        self.entity_features.save(&dir.join(ENTITY_FEATURES_FILE))?;
        self.relation_features.save(&dir.join(RELATION_FEATURES_FILE))
    }
}

type Mat = Vec<Vec<f64>>;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    (0..rows)
        .map(|_| (0..cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

fn mat_vec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}


/// Complex latent vector stored as `[re; im]`.
fn complex_score(h: &[f64], w: &[f64], t: &[f64]) -> f64 {
    let m = h.len() / 2;
    (0..m)
        .map(|i| {
            let (a, b) = (h[i], h[m + i]);
            let (c, d) = (w[i], w[m + i]);
            let (e, f) = (t[i], t[m + i]);
            let (qr, qi) = (a * c - b * d, a * d + b * c);
            qr * e + qi * f
        })
        .sum()
}

fn complex_product(x: &[f64], y: &[f64]) -> Vec<f64> {
    let m = x.len() / 2;
    let mut out = vec![0.0; 2 * m];
    for i in 0..m {
        out[i] = x[i] * y[i] - x[m + i] * y[m + i];
        out[m + i] = x[i] * y[m + i] + x[m + i] * y[i];
    }
    out
}

/// Builds the graph, features and candidate splits; a pure function of `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, k) = (spec.num_entities, spec.latent_dim);
    let latent: Mat = gaussian(&mut rng, n, k, 1.0)
        .into_iter()
        .map(|z| {
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            z.into_iter().map(|v| v / norm).collect()
        })
        .collect();
    let base = spec.num_base_relations();
    let mut rel_vecs: Mat = gaussian(&mut rng, base, k, 1.0);

    let gumbel = Gumbel::new(0.0, spec.tail_noise.max(f64::MIN_POSITIVE)).expect("valid gumbel");
    let mut edges: Vec<HashSet<(u32, u32)>> = Vec::with_capacity(spec.num_relations);
    for w in &rel_vecs {
        let mut set = HashSet::new();
        for h in 0..n {
            if spec.head_fraction < 1.0 && !rng.random_bool(spec.head_fraction) {
                continue;
            }
            let raw: Vec<f64> = latent.iter().map(|t| complex_score(&latent[h], w, t)).collect();
            let mean = raw.iter().sum::<f64>() / n as f64;
            let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt().max(1e-12);
            let mut scored: Vec<(f64, u32)> = raw
                .iter()
                .enumerate()
                .filter(|&(t, _)| t != h)
                .map(|(t, v)| {
                    let noise = if spec.tail_noise > 0.0 { gumbel.sample(&mut rng) } else { 0.0 };
                    ((v - mean) / sd + noise, t as u32)
                })
                .collect();
            scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
            set.extend(scored[..spec.tails_per_head].iter().map(|&(_, t)| (h as u32, t)));
        }
        edges.push(set);
    }
    for (_, [ra, rb]) in spec.rules() {
        let mut by_head: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(y, z) in &edges[rb as usize] {
            by_head[y as usize].push(z);
        }
        let composed: HashSet<(u32, u32)> = edges[ra as usize]
            .iter()
            .flat_map(|&(x, y)| by_head[y as usize].iter().map(move |&z| (x, z)))
            .collect();
        edges.push(composed);
        rel_vecs.push(complex_product(&rel_vecs[ra as usize], &rel_vecs[rb as usize]));
    }

    let mut triples = Vec::new();
    for (r, set) in edges.iter().enumerate() {
        let mut clean: Vec<(u32, u32)> = set.iter().copied().collect();
        clean.sort_unstable();
        let noise = (spec.noise_fraction * clean.len() as f64).round() as usize;
        let mut extra = Vec::with_capacity(noise);
        for _ in 0..noise {
            extra.push((rng.random_range(0..n as u32), rng.random_range(0..n as u32)));
        }
        triples.extend(clean.into_iter().chain(extra).map(|(h, t)| Triple::new(h, r as u32, t)));
    }
    let full = TripleStore::new(triples, n, spec.num_relations)?;

    let fd = spec.feature_dim;
    let proj = gaussian(&mut rng, fd, k, (k as f64).sqrt());
    let entity_features = latent
        .iter()
        .flat_map(|z| {
            mat_vec(&proj, z)
                .into_iter()
                .map(|v| (v.tanh() + spec.feature_noise * rng.sample::<f64, _>(StandardNormal)) as f32)
                .collect::<Vec<_>>()
        })
        .collect();
    let rel_proj = gaussian(&mut rng, fd, k, 1.0 / (k as f64).sqrt());
    let relation_features = rel_vecs
        .iter()
        .flat_map(|w| {
            mat_vec(&rel_proj, w)
                .into_iter()
                .map(|v| (v + spec.feature_noise * rng.sample::<f64, _>(StandardNormal)) as f32)
                .collect::<Vec<_>>()
        })
        .collect();

    let mut order = full.triples().to_vec();
    order.shuffle(&mut rng);
    let total = order.len();
    let n_train = (spec.splits[0] * total as f64).round() as usize;
    let n_valid = ((spec.splits[0] + spec.splits[1]) * total as f64).round() as usize - n_train;
    let n_test = (((spec.splits[0] + spec.splits[1] + spec.splits[2]) * total as f64).round() as usize)
        .min(total)
        - n_train
        - n_valid;
    let train = TripleStore::new(order[..n_train].to_vec(), n, spec.num_relations)?;
    let valid = queries(&mut rng, &full, &order[n_train..n_train + n_valid], spec.num_candidates)?;
    let test = queries(
        &mut rng,
        &full,
        &order[n_train + n_valid..n_train + n_valid + n_test],
        spec.num_candidates,
    )?;

    Ok(SyntheticDataset {
        spec: spec.clone(),
        full,
        train,
        valid,
        test,
        entity_features: FeatureMatrix::new(n, fd, entity_features)?,
        relation_features: FeatureMatrix::new(spec.num_relations, fd, relation_features)?,
    })
}

/// One query per held-out triple: the true tail plus distractors drawn
/// without replacement from entities that are not known tails of `(h, r)`.
fn queries(rng: &mut ChaCha8Rng, full: &TripleStore, held: &[Triple], k: usize) -> Result<CandidateSet> {
    let n = full.num_entities();
    held.iter()
        .map(|t| {
            let known = full.tails(t.head, t.rel);
            let pool: Vec<u32> = (0..n as u32).filter(|e| known.binary_search(e).is_err()).collect();
            if pool.len() < k - 1 {
                return Err(Error::InvalidArgument(format!(
                    "infeasible synthetic spec: only {} distractors for query ({}, {})",
                    pool.len(),
                    t.head,
                    t.rel
                )));
            }
            let mut cands: Vec<u32> = index::sample(rng, pool.len(), k - 1).into_iter().map(|i| pool[i]).collect();
            let truth = rng.random_range(0..k);
            cands.insert(truth, t.tail);
            CandidateQuery::new(t.head, t.rel, cands, Some(truth))
        })
        .collect::<Result<Vec<_>>>()
        .map(CandidateSet::new)
}
