use kglp_core::io::{load_triples, save_triples};
use kglp_core::{CandidateQuery, CandidateSet, FeatureMatrix, Triple, TripleStore};
use proptest::prelude::*;

fn arb_store() -> impl Strategy<Value = TripleStore> {
    (1usize..20, 1usize..5).prop_flat_map(|(e, r)| {
        prop::collection::vec((0..e as u32, 0..r as u32, 0..e as u32), 0..80)
            .prop_map(move |ts| TripleStore::new(ts.into_iter().map(Triple::from).collect(), e, r).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn triples_round_trip(store in arb_store()) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.tsv");
        save_triples(&p, &store).unwrap();
        prop_assert_eq!(load_triples(&p).unwrap(), store);
    }

    #[test]
    fn inverse_doubles_and_mirrors(store in arb_store()) {
        let inv = store.add_inverse_relations();
        let r = store.num_relations() as u32;
        prop_assert_eq!(inv.len(), 2 * store.len());
        prop_assert_eq!(inv.num_relations(), 2 * store.num_relations());
        for t in inv.triples() {
            let mirror = if t.rel < r { Triple::new(t.tail, t.rel + r, t.head) } else { Triple::new(t.tail, t.rel - r, t.head) };
            prop_assert!(inv.contains(mirror));
        }
    }

    #[test]
    fn relation_matrix_nnz(store in arb_store()) {
        for rel in 0..store.num_relations() as u32 {
            let count = store.triples().iter().filter(|t| t.rel == rel).count();
            prop_assert_eq!(store.relation_matrix(rel).unwrap().nnz(), count);
        }
    }

    #[test]
    fn subgraphs_cover_everything(store in arb_store(), k in 1usize..5) {
        prop_assume!(!store.is_empty());
        let n = store.len();
        let slice_len = n.div_ceil(k);
        let slices = store.sample_subgraphs(k, slice_len).unwrap();
        prop_assert_eq!(slices.len(), k);
        for t in store.triples() {
            prop_assert!(slices.iter().any(|s| s.contains(*t)));
        }
        for s in &slices {
            prop_assert_eq!(s.num_entities(), store.num_entities());
            prop_assert_eq!(s.num_relations(), store.num_relations());
        }
    }

    #[test]
    fn features_round_trip(rows in 0usize..6, cols in 1usize..5, seed in any::<u64>()) {
        let data: Vec<f32> = (0..rows * cols).map(|i| ((seed.wrapping_mul(i as u64 + 1) % 1000) as f32) / 7.0 - 50.0).collect();
        let m = FeatureMatrix::new(rows, cols, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.f32");
        m.save(&p).unwrap();
        prop_assert_eq!(FeatureMatrix::load(&p).unwrap(), m);
    }

    #[test]
    fn candidates_round_trip(qs in prop::collection::vec((0u32..50, 0u32..5, prop::collection::vec(0u32..50, 1..8), any::<bool>()), 0..10)) {
        let set = CandidateSet::new(qs.into_iter().map(|(h, r, c, known)| {
            let truth = known.then_some(c.len() - 1);
            CandidateQuery::new(h, r, c, truth).unwrap()
        }).collect());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.cand");
        set.save(&p).unwrap();
        prop_assert_eq!(CandidateSet::load(&p).unwrap(), set);
    }
}
