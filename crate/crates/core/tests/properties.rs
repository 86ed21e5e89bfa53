use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fcal::fbeta::{precision, recall};
use fcal::{a_vec, b_vec, decode_fast, expected_fbeta, fbeta, BetaParam, DecodeInput, LabelVec, StatVec};

fn labels(s: usize) -> impl Strategy<Value = LabelVec> {
    proptest::collection::vec(any::<bool>(), s).prop_map(|b| LabelVec::new(b).unwrap())
}

fn pair() -> impl Strategy<Value = (LabelVec, LabelVec)> {
    (1usize..40).prop_flat_map(|s| (labels(s), labels(s)))
}

fn beta() -> impl Strategy<Value = BetaParam> {
    (0.05f64..20.0).prop_map(|b| BetaParam::new(b).unwrap())
}

proptest! {
    #[test]
    fn perfect_prediction_scores_one(y in (1usize..40).prop_flat_map(labels), b in beta()) {
        prop_assert!((fbeta(&y, &y, b).unwrap() - 1.0).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn precision_is_recall_with_roles_swapped((y, yhat) in pair()) {
        prop_assume!(!y.is_empty() && !yhat.is_empty());
        prop_assert_eq!(precision(&y, &yhat).unwrap(), recall(&yhat, &y).unwrap());
    }

    #[test]
    fn fbeta_in_unit_interval((y, yhat) in pair(), b in beta()) {
        let f = fbeta(&y, &yhat, b).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn rank_identity_beyond_exhaustive_range((y, yhat) in pair(), b in beta()) {
        let ab = a_vec(&y).dot(&b_vec(&yhat, b)).unwrap();
        prop_assert!((ab + fbeta(&y, &yhat, b).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn b_norm_bound(yhat in (1usize..60).prop_flat_map(labels), b in beta()) {
        prop_assume!(!yhat.is_empty());
        let s = yhat.s() as f64;
        let norm = b_vec(&yhat, b).entries().iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = (1.0 + b.beta_sq()) / (2.0 * b.beta()) * (s.ln() + 1.0).sqrt();
        prop_assert!(norm <= bound * (1.0 + 1e-12), "{} > {}", norm, bound);
    }

    #[test]
    fn a_vec_has_unit_mass(y in (1usize..40).prop_flat_map(labels)) {
        prop_assert!((a_vec(&y).total_mass() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn decode_on_true_statistics_is_bayes_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let s = rng.random_range(1..=5);
        let mut p: Vec<f64> = (0..1usize << s).map(|_| rng.random::<f64>().powi(4)).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        let q = StatVec::expected_a(s, &p).unwrap();
        let beta = BetaParam::new(rng.random_range(0.3..3.0)).unwrap();
        let best = expected_fbeta(&q, &decode_fast(&DecodeInput::new(q.clone(), beta).unwrap()), beta).unwrap();
        for m in 0..1u64 << s {
            let yhat = LabelVec::from_mask(s, m);
            let direct: f64 =
                p.iter().enumerate().map(|(y, &py)| py * fbeta(&LabelVec::from_mask(s, y as u64), &yhat, beta).unwrap()).sum();
            assert!(best >= direct - 1e-12, "s={s}: {best} < {direct}");
        }
    }
}

#[test]
fn decode_scales_to_mediamill() {
    let s = 101;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let inputs: Vec<DecodeInput> = (0..20)
        .map(|_| {
            let mut e: Vec<f64> = (0..s * s + 1).map(|_| rng.random::<f64>()).collect();
            let mass = StatVec::from_entries(s, e.clone()).unwrap().total_mass();
            e.iter_mut().for_each(|v| *v /= mass);
            DecodeInput::new(StatVec::from_entries(s, e).unwrap(), BetaParam::default()).unwrap()
        })
        .collect();
    let start = Instant::now();
    for inp in &inputs {
        std::hint::black_box(decode_fast(inp));
    }
    let per = start.elapsed() / inputs.len() as u32;
    assert!(per.as_millis() < 50, "{per:?} per instance");
}
