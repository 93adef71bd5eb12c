use std::collections::HashSet;

use proptest::prelude::*;

use tackl::active::{
    answer_plan, commit_responses, issue_queries, run_round, ActiveError, LearnerConfig, Method, RoundState,
};
use tackl::model::ObjectId;
use tackl::optim::FitConfig;
use tackl::oracle::{exhaustive_pool, generate_ground_truth, make_aux_features, AnswerMode, DimSpec, OracleMode, PoolBudget};

fn world(n: usize, seed: u64) -> (tackl::model::AuxFeatureMatrix, OracleMode) {
    let dims = vec![DimSpec::uniform(0.0, 1.0); 3];
    let space = generate_ground_truth(n, &dims, seed).unwrap();
    let features = make_aux_features(&space, &[0, 1], 1, &DimSpec::uniform(0.0, 1.0), seed).unwrap();
    (features, OracleMode::DeterministicGroundTruth(space))
}

fn learner(method: Method, seed: u64) -> LearnerConfig {
    let mut l = LearnerConfig::new(method, 2, seed);
    l.fit = FitConfig { max_iters: 30, ..FitConfig::default() };
    l
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn rounds_ask_each_head_once_and_never_repeat(
        n in 5usize..8,
        seed in any::<u64>(),
        method in prop::sample::select(Method::COMPARED.to_vec()),
    ) {
        let (features, oracle) = world(n, seed);
        let l = learner(method, seed);
        let mut state = RoundState::new(n, Some(&features), &l).unwrap();
        let mut seen = HashSet::new();
        for round in 0..4 {
            let plan = issue_queries(&state, &l, Some(&oracle)).unwrap();
            prop_assert_eq!(plan.round, round);
            let heads: Vec<usize> = plan.selections.iter().map(|s| s.query.head.0).collect();
            prop_assert_eq!(heads, (0..n).collect::<Vec<_>>());
            for s in &plan.selections {
                prop_assert!(seen.insert(s.query), "{} asked twice", s.query);
                prop_assert_eq!(s.score.is_some(), method.is_active() && round > 0);
            }
            let answers = answer_plan(&plan, &l, &oracle).unwrap();
            let rec = commit_responses(&mut state, &l, &plan, &answers, None).unwrap();
            prop_assert_eq!(rec.responses_seen, n * (round + 1));
        }
        prop_assert_eq!(state.t(), 4);
    }
}

#[test]
fn heads_run_dry_after_every_pair_is_asked() {
    let n = 4;
    let (features, oracle) = world(n, 5);
    let l = learner(Method::TacklRandom, 5);
    let mut state = RoundState::new(n, Some(&features), &l).unwrap();
    for _ in 0..3 {
        run_round(&mut state, &l, &oracle, None).unwrap();
    }
    let plan = issue_queries(&state, &l, Some(&oracle)).unwrap();
    assert!(plan.is_empty());
    assert_eq!(plan.exhausted, (0..n).map(ObjectId).collect::<Vec<_>>());
}

#[test]
fn pool_restricted_selection_stays_inside_the_pool() {
    let n = 7;
    let dims = vec![DimSpec::uniform(0.0, 1.0); 2];
    let space = generate_ground_truth(n, &dims, 8).unwrap();
    let full = exhaustive_pool(&space, AnswerMode::Deterministic, 1, PoolBudget::default()).unwrap();
    let mut partial = tackl::oracle::ResponsePool::new();
    for (i, (_, e)) in full.iter().enumerate() {
        if i % 3 != 0 {
            partial.insert(e.response, 1, 0).unwrap();
        }
    }
    let oracle = OracleMode::Pool(partial.clone());
    let mut l = learner(Method::ACkl, 3);
    l.active.pool_restricted = true;
    let mut state = RoundState::new(n, None, &l).unwrap();
    for _ in 0..3 {
        let before = state.responses().len();
        run_round(&mut state, &l, &oracle, None).unwrap();
        for r in &state.responses()[before..] {
            assert!(partial.contains(&r.query()));
        }
    }
}

#[test]
fn commits_reject_foreign_and_duplicate_answers() {
    let n = 5;
    let (features, oracle) = world(n, 2);
    let l = learner(Method::ATackl, 2);
    let mut state = RoundState::new(n, Some(&features), &l).unwrap();
    let plan = issue_queries(&state, &l, None).unwrap();
    let answers = answer_plan(&plan, &l, &oracle).unwrap();
    let dup = vec![answers[0], answers[0]];
    assert!(matches!(commit_responses(&mut state, &l, &plan, &dup, None), Err(ActiveError::UnexpectedResponse(_))));
    assert_eq!(state.t(), 0);
    assert!(state.responses().is_empty());
    commit_responses(&mut state, &l, &plan, &answers[..2], None).unwrap();
    assert_eq!((state.t(), state.responses().len()), (1, 2));
}
