use proptest::prelude::*;

use tackl::active::{entropy, posterior_weights, HypothesisSet};
use tackl::eval::evaluate;
use tackl::model::{
    all_queries, AuxFeatureMatrix, CombinedModel, FreeEmbedding, ObjectId, Representation, TripletResponse,
    WeightVector,
};
use tackl::optim::{fit_w, fit_xhat, FitConfig};

const MU: f64 = 1e-4;

fn rows(n: usize, d: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(lo..hi, d), n)
}

/// n in 4..9 objects, d and dhat in 1..4, random weights.
fn arb_model() -> impl Strategy<Value = CombinedModel> {
    (4usize..9, 1usize..4, 1usize..4).prop_flat_map(|(n, d, dhat)| {
        (rows(n, d, 0.0, 1.0), prop::collection::vec(0.0f64..3.0, d), rows(n, dhat, -2.0, 2.0)).prop_map(
            |(x, w, f)| {
                CombinedModel::new(
                    AuxFeatureMatrix::from_rows(&x).unwrap(),
                    WeightVector::from_vec(w).unwrap(),
                    FreeEmbedding::from_rows(&f).unwrap(),
                    MU,
                )
                .unwrap()
            },
        )
    })
}

fn some_responses(n: usize, pick: &[bool]) -> Vec<TripletResponse> {
    all_queries(n)
        .zip(pick.iter().cycle())
        .map(|(q, &first)| q.answer(if first { q.pair.0 } else { q.pair.1 }).unwrap())
        .collect()
}

fn free_rows(m: &CombinedModel) -> Vec<Vec<f64>> {
    (0..m.n()).map(|i| m.free().row(i).to_vec()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn likelihood_ignores_free_block_translation(m in arb_model(), shift in -5.0f64..5.0) {
        let moved: Vec<Vec<f64>> = free_rows(&m).into_iter().map(|r| r.into_iter().map(|v| v + shift).collect()).collect();
        let m2 = m.clone().with_free(FreeEmbedding::from_rows(&moved).unwrap()).unwrap();
        for q in all_queries(m.n()).take(30) {
            let r = q.answer(q.pair.0).unwrap();
            let (p, p2) = (m.triplet_likelihood(&r).unwrap(), m2.triplet_likelihood(&r).unwrap());
            prop_assert!((p - p2).abs() <= 1e-9, "{p} vs {p2}");
        }
    }

    #[test]
    fn weights_act_as_feature_scaling(m in arb_model()) {
        let w = m.weights().to_vec();
        let scaled: Vec<Vec<f64>> = (0..m.n())
            .map(|i| m.features().row(i).iter().zip(&w).map(|(x, w)| x * w).collect())
            .collect();
        let m2 = CombinedModel::new(
            AuxFeatureMatrix::from_rows(&scaled).unwrap(),
            WeightVector::ones(w.len()),
            m.free().clone(),
            MU,
        )
        .unwrap();
        for q in all_queries(m.n()).take(30) {
            let r = q.answer(q.pair.1).unwrap();
            let (p, p2) = (m.triplet_likelihood(&r).unwrap(), m2.triplet_likelihood(&r).unwrap());
            prop_assert!((p - p2).abs() <= 1e-12);
        }
    }

    #[test]
    fn flipped_error_is_complementary(m in arb_model()) {
        let rs: Vec<_> = all_queries(m.n()).map(|q| q.answer(q.pair.0).unwrap()).collect();
        let ties = rs
            .iter()
            .filter(|r| m.triplet_likelihood_in(Representation::Combined, r).unwrap() == 0.5)
            .count() as f64 / rs.len() as f64;
        let flipped: Vec<_> = rs.iter().map(TripletResponse::flipped).collect();
        let (a, b) = (evaluate(&m, &rs).unwrap(), evaluate(&m, &flipped).unwrap());
        prop_assert!((a.error + b.error - 1.0 - ties).abs() <= 1e-12);
        prop_assert!((a.mean_likelihood + b.mean_likelihood - 1.0).abs() <= 1e-12);
        prop_assert!(a.mean_ratio > 0.0 && a.median_ratio > 0.0);
    }

    #[test]
    fn weight_fit_is_monotone_and_nonnegative(m in arb_model(), pick in prop::collection::vec(any::<bool>(), 1..20)) {
        let rs = some_responses(m.n(), &pick);
        let cfg = FitConfig { max_iters: 40, ..FitConfig::default() };
        let (w, report) = fit_w(m.features(), &rs, MU, &cfg).unwrap();
        prop_assert!(w.as_array().iter().all(|v| *v >= 0.0));
        prop_assert!(report.objective_trace.windows(2).all(|p| p[1] >= p[0]));
        prop_assert!(report.final_objective >= report.objective_trace[0]);
    }

    #[test]
    fn free_fit_is_monotone(m in arb_model(), pick in prop::collection::vec(any::<bool>(), 1..20), seed in any::<u64>()) {
        let rs = some_responses(m.n(), &pick);
        let cfg = FitConfig { max_iters: 40, seed, ..FitConfig::default() };
        let (_, report) = fit_xhat(m.features(), m.weights(), &rs, m.dhat(), MU, &cfg).unwrap();
        prop_assert!(report.objective_trace.windows(2).all(|p| p[1] >= p[0]));
        prop_assert!(report.iterations_used <= cfg.max_iters);
    }

    #[test]
    fn posteriors_are_distributions(m in arb_model(), draws in rows(6, 3, -2.0, 2.0), pick in prop::collection::vec(any::<bool>(), 1..6)) {
        let dhat = m.dhat();
        let free: Vec<Vec<f64>> = draws.into_iter().map(|mut r| { r.resize(dhat, 0.5); r }).collect();
        let set = HypothesisSet::free_only(ObjectId(0), free);
        let cond: Vec<_> = some_responses(m.n(), &pick).into_iter().filter(|r| r.head == ObjectId(0)).collect();
        let w = posterior_weights(&set, &m, &cond).unwrap();
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let h = entropy(&w);
        prop_assert!(h >= -1e-12 && h <= (set.len() as f64).ln() + 1e-12);
    }
}
