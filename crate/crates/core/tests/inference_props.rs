use kglp_core::inference::{distill, ensemble_average, mrr, predict, DistillConfig, ScoreMatrix, TieBreak};
use kglp_core::model::{DecoderKind, EncoderVariant, Features, ModelConfig, ModelParams};
use kglp_core::{CandidateQuery, CandidateSet, FeatureMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn arb_scores() -> impl Strategy<Value = (Vec<Vec<f32>>, Vec<usize>)> {
    prop::collection::vec(prop::collection::vec((-20i32..20).prop_map(|v| v as f32 / 4.0), 1..12), 1..10)
        .prop_flat_map(|rows| {
            let truths: Vec<_> = rows.iter().map(|r| 0..r.len()).collect();
            (Just(rows), truths)
        })
}

fn candidates(rows: &[Vec<f32>], truths: &[usize]) -> CandidateSet {
    CandidateSet::new(
        rows.iter()
            .zip(truths)
            .map(|(r, &t)| CandidateQuery::new(0, 0, (0..r.len() as u32).collect(), Some(t)).unwrap())
            .collect(),
    )
}

proptest! {
    #[test]
    fn mrr_in_unit_interval_and_shift_invariant((rows, truths) in arb_scores(), c in -100.0f32..100.0) {
        let cands = candidates(&rows, &truths);
        let s = ScoreMatrix::from_rows(rows.clone()).unwrap();
        let m = mrr(&s, &cands, TieBreak::Optimistic).unwrap();
        prop_assert!(m > 0.0 && m <= 1.0);
        let shifted_rows: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|v| v + c.round()).collect()).collect();
        let shifted = ScoreMatrix::from_rows(shifted_rows).unwrap();
        prop_assert_eq!(mrr(&shifted, &cands, TieBreak::Optimistic).unwrap(), m);
    }

    #[test]
    fn raising_truth_never_lowers_mrr((rows, truths) in arb_scores(), q in any::<prop::sample::Index>(), bump in 0.0f32..10.0) {
        let cands = candidates(&rows, &truths);
        let before = mrr(&ScoreMatrix::from_rows(rows.clone()).unwrap(), &cands, TieBreak::Optimistic).unwrap();
        let mut raised = rows.clone();
        let qi = q.index(rows.len());
        raised[qi][truths[qi]] += bump;
        let after = mrr(&ScoreMatrix::from_rows(raised).unwrap(), &cands, TieBreak::Optimistic).unwrap();
        prop_assert!(after >= before);
    }

    #[test]
    fn ensemble_permutation_invariant(a in prop::collection::vec(-5.0f32..5.0, 6), b in prop::collection::vec(-5.0f32..5.0, 6), c in prop::collection::vec(-5.0f32..5.0, 6)) {
        let m = |v: &Vec<f32>| ScoreMatrix::from_rows(vec![v[..2].to_vec(), v[2..].to_vec()]).unwrap();
        let (ma, mb, mc) = (m(&a), m(&b), m(&c));
        let x = ensemble_average(&[ma.clone(), mb.clone(), mc.clone()]).unwrap();
        let y = ensemble_average(&[mc, ma, mb]).unwrap();
        for (p, q) in x.data().iter().zip(y.data()) {
            prop_assert!((p - q).abs() <= 1e-6 * (1.0 + p.abs()));
        }
    }
}

fn model(seed: u64) -> (ModelParams<f32>, FeatureMatrix, FeatureMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig {
        variant: EncoderVariant::ConcatMlpResidual,
        decoder: DecoderKind::ComplEx,
        dim: 4,
        hidden: 8,
        entity_feature_dim: 3,
        relation_feature_dim: 3,
        num_entities: 10,
        num_relations: 2,
        relation_feature_rows: 2,
    };
    let m = ModelParams::init(cfg, &mut rng).unwrap();
    let ef = FeatureMatrix::new(10, 3, (0..30).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let rf = FeatureMatrix::new(2, 3, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    (m, ef, rf)
}

#[test]
fn predict_alignment_and_permutation() {
    let (m, ef, rf) = model(1);
    let f = Features { entity: &ef, relation: &rf };
    let set = CandidateSet::new(vec![
        CandidateQuery::new(0, 1, vec![3, 7, 2], Some(0)).unwrap(),
        CandidateQuery::new(5, 0, vec![9], None).unwrap(),
    ]);
    let s = predict(&m, f, &set).unwrap();
    assert_eq!(s.row(0), m.score_candidates(f, 0, 1, &[3, 7, 2]).unwrap().as_slice());
    let permuted = CandidateSet::new(vec![CandidateQuery::new(0, 1, vec![2, 3, 7], Some(1)).unwrap()]);
    let p = predict(&m, f, &permuted).unwrap();
    assert_eq!(p.row(0), &[s.row(0)[2], s.row(0)[0], s.row(0)[1]]);
    assert_eq!(predict(&m, f, &CandidateSet::default()).unwrap().n_queries(), 0);
    let bad = CandidateSet::new(vec![CandidateQuery::new(0, 1, vec![10], None).unwrap()]);
    assert!(predict(&m, f, &bad).is_err());
}

#[test]
fn distillation_fixed_point() {
    let (m, ef, rf) = model(2);
    let f = Features { entity: &ef, relation: &rf };
    let set = CandidateSet::new(
        (0..6)
            .map(|h| CandidateQuery::new(h, h % 2, vec![1, 4, 6, 8, 9], None).unwrap())
            .collect(),
    );
    let teacher = predict(&m, f, &set).unwrap();
    let config = DistillConfig { steps: 3, batch_size: 4, ..Default::default() };
    let out = distill(m.clone(), &teacher, &set, f, &config).unwrap();
    assert_eq!(out.losses.len(), 3);
    assert!(out.losses[0] < 1e-12);
    for (a, b) in out.model.tensors().iter().zip(m.tensors()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-5, "{x} vs {y}");
        }
    }
}

#[test]
fn distillation_moves_toward_teacher() {
    let (m, ef, rf) = model(3);
    let f = Features { entity: &ef, relation: &rf };
    let set = CandidateSet::new(
        (0..8)
            .map(|h| CandidateQuery::new(h, h % 2, vec![0, 2, 5, 7], None).unwrap())
            .collect(),
    );
    let teacher = ScoreMatrix::from_rows((0..8).map(|q| vec![3.0, 0.0, -1.0, (q % 3) as f32]).collect()).unwrap();
    let config = DistillConfig { steps: 60, batch_size: 8, lr_dense: 1e-2, ..Default::default() };
    let out = distill(m, &teacher, &set, f, &config).unwrap();
    assert!(out.losses.last().unwrap() < &(out.losses[0] * 0.5), "{:?}", out.losses);
    let misaligned = ScoreMatrix::from_rows(vec![vec![1.0]]).unwrap();
    assert!(distill(out.model, &misaligned, &set, f, &config).is_err());
}
