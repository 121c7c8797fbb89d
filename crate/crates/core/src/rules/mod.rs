//! Closed Horn rules in chain form, mined and applied through boolean
//! sparse matrix products.
//!
//! A rule with body `[a]` reads `head(x, y) <= a(x, y)`; with body `[a, b]` it
//! reads `head(x, z) <= a(x, y) ∧ b(y, z)`. Other variable orders are expressed
//! through inverse relations, so the miner expects an inverse-augmented store.

use std::path::Path;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{RelationId, Triple, TripleStore};
use crate::io;
use crate::sparse::SparseBoolMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HornRule {
    pub head: RelationId,
    pub body: Vec<RelationId>,
    /// Distinct `(x, z)` pairs where both body and head hold.
    pub support: usize,
    /// Distinct `(x, z)` pairs where the body holds.
    pub body_count: usize,
    pub confidence: f64,
}

impl HornRule {
    /// A rule with counts and confidence left at zero.
    pub fn new(head: RelationId, body: Vec<RelationId>) -> Self {
        HornRule {
            head,
            body,
            support: 0,
            body_count: 0,
            confidence: 0.0,
        }
    }

    fn key(&self) -> (RelationId, Vec<RelationId>) {
        (self.head, self.body.clone())
    }

    fn check(&self, num_relations: usize) -> Result<()> {
        if !(1..=2).contains(&self.body.len()) {
            return Err(Error::InvalidArgument(format!(
                "rule body must have 1 or 2 atoms, got {}",
                self.body.len()
            )));
        }
        for &r in std::iter::once(&self.head).chain(&self.body) {
            if r as usize >= num_relations {
                return Err(Error::InvalidId {
                    kind: "relation",
                    id: r as u64,
                    count: num_relations,
                });
            }
        }
        Ok(())
    }
}

/// Rules deduplicated by `(head, body)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleSet {
    rules: Vec<HornRule>,
}

impl RuleSet {
    /// Keeps the first rule of every `(head, body)` key.
    pub fn new(rules: Vec<HornRule>) -> Self {
        let mut seen = IndexMap::new();
        for r in rules {
            seen.entry(r.key()).or_insert(r);
        }
        RuleSet {
            rules: seen.into_values().collect(),
        }
    }

    pub fn rules(&self) -> &[HornRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, HornRule> {
        self.rules.iter()
    }

    pub fn get(&self, head: RelationId, body: &[RelationId]) -> Option<&HornRule> {
        self.rules.iter().find(|r| r.head == head && r.body == body)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let set: RuleSet = io::read_json(path)?;
        for r in &set.rules {
            if !(1..=2).contains(&r.body.len()) || !(0.0..=1.0).contains(&r.confidence) || r.support > r.body_count {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line: 0,
                    message: format!("malformed rule {r:?}"),
                });
            }
        }
        Ok(RuleSet::new(set.rules))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }
}

fn body_matrix(store: &TripleStore, body: &[RelationId]) -> Result<SparseBoolMatrix> {
    match body {
        [a] => Ok(store.relation_matrix(*a)?.clone()),
        [a, b] => Ok(store.relation_matrix(*a)?.bool_matmul(store.relation_matrix(*b)?)),
        _ => Err(Error::InvalidArgument(format!("rule body must have 1 or 2 atoms, got {}", body.len()))),
    }
}

/// Exhaustive search over all length-1 and length-2 chain bodies.
///
/// Bodies holding for fewer than `min_support` pairs are skipped, since no
/// rule built on them can reach that support. Output order: length-1 rules
/// by `(body, head)`, then length-2 rules by `(body, head)`. A length-1 body
/// never predicts its own relation.
pub fn mine_rules(store: &TripleStore, min_support: usize, min_conf: f64) -> RuleSet {
    let nr = store.num_relations() as u32;
    let bodies: Vec<Vec<RelationId>> = (0..nr)
        .map(|a| vec![a])
        .chain((0..nr).flat_map(|a| (0..nr).map(move |b| vec![a, b])))
        .collect();
    let rules: Vec<Vec<HornRule>> = bodies
        .par_iter()
        .map(|body| {
            let m = body_matrix(store, body).expect("relation ids in range");
            let body_count = m.nnz();
            if body_count == 0 || body_count < min_support {
                return Vec::new();
            }
            (0..nr)
                .filter(|&h| !(body.len() == 1 && body[0] == h))
                .filter_map(|head| {
                    let support = m.intersection_count(store.relation_matrix(head).expect("in range"));
                    let confidence = support as f64 / body_count as f64;
                    (support >= min_support && support > 0 && confidence >= min_conf).then(|| HornRule {
                        head,
                        body: body.clone(),
                        support,
                        body_count,
                        confidence,
                    })
                })
                .collect()
        })
        .collect();
    RuleSet::new(rules.into_iter().flatten().collect())
}

/// Triples the rule predicts that the store does not hold yet, sorted by
/// `(head, tail)`.
pub fn apply_rule(rule: &HornRule, store: &TripleStore) -> Result<Vec<Triple>> {
    rule.check(store.num_relations())?;
    let predicted = body_matrix(store, &rule.body)?;
    let known = store.relation_matrix(rule.head)?;
    Ok(predicted
        .difference(known)
        .iter()
        .map(|(h, t)| Triple::new(h, rule.head, t))
        .collect())
}

/// Union keyed by `(head, body)`. On a collision the rule with the larger
/// body count wins (the earlier one on ties) and keeps the earlier position.
pub fn merge_rulesets(sets: &[RuleSet]) -> RuleSet {
    let mut merged: IndexMap<(RelationId, Vec<RelationId>), HornRule> = IndexMap::new();
    for rule in sets.iter().flat_map(|s| s.iter()) {
        match merged.get_mut(&rule.key()) {
            Some(existing) if rule.body_count > existing.body_count => *existing = rule.clone(),
            Some(_) => {}
            None => {
                merged.insert(rule.key(), rule.clone());
            }
        }
    }
    RuleSet {
        rules: merged.into_values().collect(),
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("confidence threshold {threshold} outside [0, 1]")))
    }
}

/// Rules with confidence at least `threshold`, in their original order.
pub fn filter_by_confidence(set: &RuleSet, threshold: f64) -> Result<RuleSet> {
    check_threshold(threshold)?;
    Ok(RuleSet {
        rules: set.iter().filter(|r| r.confidence >= threshold).cloned().collect(),
    })
}

/// Applies every rule with confidence at least `threshold` to `store` and
/// returns the store with all predicted triples added, plus how many were new.
pub fn augment(store: &TripleStore, set: &RuleSet, threshold: f64) -> Result<(TripleStore, usize)> {
    let selected = filter_by_confidence(set, threshold)?;
    let predicted: Vec<Vec<Triple>> = selected
        .rules
        .par_iter()
        .map(|r| apply_rule(r, store))
        .collect::<Result<_>>()?;
    let before = store.len();
    let out = store.with_triples(predicted.into_iter().flatten())?;
    let added = out.len() - before;
    Ok((out, added))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(ts: &[(u32, u32, u32)], e: usize, r: usize) -> TripleStore {
        TripleStore::new(ts.iter().map(|&t| t.into()).collect(), e, r).unwrap()
    }

    #[test]
    fn mines_the_chain_rule() {
        let s = store(&[(0, 0, 1), (1, 1, 2), (0, 2, 2)], 3, 3);
        let rules = mine_rules(&s, 1, 0.0);
        let r = rules.get(2, &[0, 1]).expect("chain rule mined");
        assert_eq!((r.body_count, r.support, r.confidence), (1, 1, 1.0));
    }

    #[test]
    fn empty_store_no_rules() {
        assert!(mine_rules(&store(&[], 0, 0), 1, 0.0).is_empty());
        assert!(mine_rules(&store(&[], 4, 2), 1, 0.0).is_empty());
    }

    #[test]
    fn identity_rule() {
        let s = store(&[(0, 0, 1), (2, 0, 3), (0, 1, 1), (2, 1, 3)], 4, 2);
        let r = mine_rules(&s, 2, 0.5).get(1, &[0]).cloned().unwrap();
        assert_eq!(r.confidence, 1.0);
        assert_eq!(r.support, 2);
    }

    #[test]
    fn min_support_prunes() {
        let s = store(&[(0, 0, 1), (1, 1, 2), (0, 2, 2)], 3, 3);
        assert!(mine_rules(&s, 2, 0.0).is_empty());
    }

    #[test]
    fn apply_single_path() {
        let s = store(&[(0, 0, 1), (1, 1, 2)], 3, 3);
        let new = apply_rule(&HornRule::new(2, vec![0, 1]), &s).unwrap();
        assert_eq!(new, vec![Triple::new(0, 2, 2)]);
    }

    #[test]
    fn apply_skips_known() {
        let s = store(&[(0, 0, 1), (1, 1, 2), (0, 2, 2)], 3, 3);
        assert!(apply_rule(&HornRule::new(2, vec![0, 1]), &s).unwrap().is_empty());
    }

    #[test]
    fn apply_boolean_saturation() {
        let s = store(&[(0, 0, 1), (0, 0, 3), (1, 1, 2), (3, 1, 2)], 4, 3);
        let new = apply_rule(&HornRule::new(2, vec![0, 1]), &s).unwrap();
        assert_eq!(new, vec![Triple::new(0, 2, 2)]);
    }

    #[test]
    fn apply_rejects_bad_ids() {
        let s = store(&[(0, 0, 1)], 2, 1);
        assert!(apply_rule(&HornRule::new(0, vec![0, 5]), &s).is_err());
        assert!(apply_rule(&HornRule::new(0, vec![]), &s).is_err());
    }

    fn rule(head: u32, body: &[u32], body_count: usize, support: usize) -> HornRule {
        HornRule {
            head,
            body: body.to_vec(),
            support,
            body_count,
            confidence: support as f64 / body_count as f64,
        }
    }

    #[test]
    fn merge_keeps_larger_body_count() {
        let a = RuleSet::new(vec![rule(2, &[0, 1], 10, 5), rule(1, &[0], 4, 4)]);
        let b = RuleSet::new(vec![rule(2, &[0, 1], 40, 30), rule(3, &[1], 2, 2)]);
        let m = merge_rulesets(&[a.clone(), b]);
        assert_eq!(m.len(), 3);
        assert_eq!(m.rules()[0].body_count, 40);
        let disjoint = merge_rulesets(&[a.clone(), RuleSet::new(vec![rule(0, &[1], 1, 1)])]);
        assert_eq!(disjoint.len(), 3);
        assert_eq!(&disjoint.rules()[..2], a.rules());
    }

    #[test]
    fn filter_thresholds() {
        let set = RuleSet::new(vec![rule(2, &[0, 1], 2, 2), rule(1, &[0], 4, 2)]);
        assert_eq!(filter_by_confidence(&set, 0.0).unwrap(), set);
        let top = filter_by_confidence(&set, 1.0).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top.rules()[0].confidence, 1.0);
        assert!(filter_by_confidence(&set, 1.01).is_err());
        assert!(filter_by_confidence(&set, -0.1).is_err());
    }

    #[test]
    fn augment_examples() {
        let chain = store(&[(0, 0, 1), (1, 1, 2)], 3, 3);
        let (same, added) = augment(&chain, &RuleSet::default(), 0.95).unwrap();
        assert_eq!((same, added), (chain.clone(), 0));

        let r = RuleSet::new(vec![rule(2, &[0, 1], 1, 1)]);
        let (grown, added) = augment(&chain, &r, 0.95).unwrap();
        assert_eq!(added, 1);
        assert!(grown.contains(Triple::new(0, 2, 2)));

        let closed = store(&[(0, 0, 1), (1, 1, 2), (0, 2, 2)], 3, 3);
        let mined = filter_by_confidence(&mine_rules(&closed, 1, 0.0), 1.0).unwrap();
        assert!(!mined.is_empty());
        assert_eq!(augment(&closed, &mined, 1.0).unwrap().1, 0);
    }

    #[test]
    fn json_round_trip() {
        let set = RuleSet::new(vec![rule(2, &[0, 1], 4, 3), rule(1, &[0], 4, 4)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rules.json");
        set.save(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"body_count\": 4"));
        assert_eq!(RuleSet::load(&p).unwrap(), set);
        std::fs::write(&p, r#"[{"head":0,"body":[],"support":1,"body_count":1,"confidence":1.0}]"#).unwrap();
        assert!(RuleSet::load(&p).is_err());
    }
}
