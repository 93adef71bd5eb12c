//! Drives the round loop by hand: issue one query per object, answer from a
//! ground truth, commit, refit, and report held-out error after each round.
//!
//! cargo run --release --example active_loop -- [method] [rounds]

use tackl::active::{answer_plan, commit_responses, issue_queries, LearnerConfig, Method, RoundState};
use tackl::oracle::{default_synthetic_dims, exhaustive_pool, generate_ground_truth, make_aux_features, AnswerMode, DimSpec, OracleMode, PoolBudget};

fn main() {
    let mut args = std::env::args().skip(1);
    let method = args.next().map_or(Method::ATackl, |a| Method::from_tag(&a).expect("unknown method tag"));
    let rounds: usize = args.next().map_or(8, |a| a.parse().expect("rounds"));
    let n = 24;

    let space = generate_ground_truth(n, &default_synthetic_dims(), 3).unwrap();
    let features = make_aux_features(&space, &[0, 1, 2], 3, &DimSpec::uniform(0.0, 1.0), 3).unwrap();
    let eval = exhaustive_pool(&space, AnswerMode::Deterministic, 3, PoolBudget::default()).unwrap().responses();
    let oracle = OracleMode::DeterministicGroundTruth(space);

    let dhat = if method.kind() == tackl::model::ModelKind::Ckl { 5 } else { 6 };
    let learner = LearnerConfig::new(method, dhat, 3);
    let mut state = RoundState::new(n, Some(&features), &learner).unwrap();

    for _ in 0..rounds {
        let plan = issue_queries(&state, &learner, Some(&oracle)).unwrap();
        if plan.is_empty() {
            break;
        }
        let scored: Vec<f64> = plan.selections.iter().filter_map(|s| s.score).collect();
        let answers = answer_plan(&plan, &learner, &oracle).unwrap();
        let rec = commit_responses(&mut state, &learner, &plan, &answers, Some(&eval)).unwrap();
        let m = rec.metrics.unwrap();
        let mean_h = if scored.is_empty() { f64::NAN } else { scored.iter().sum::<f64>() / scored.len() as f64 };
        println!(
            "round {:>2}: {:>4} responses, error {:.4}, mean expected entropy {:.3}",
            rec.round, rec.responses_seen, m.error, mean_h
        );
    }
}
