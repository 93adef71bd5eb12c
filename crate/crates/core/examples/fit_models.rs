//! Fits CKL and TACKL to the same random subset of a synthetic pool and
//! scores both on the held-out queries.
//!
//! cargo run --release --example fit_models -- [n] [train_fraction]

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tackl::eval::evaluate;
use tackl::model::CombinedModel;
use tackl::optim::{fit_ckl, fit_tackl, FitConfig};
use tackl::oracle::{default_synthetic_dims, exhaustive_pool, generate_ground_truth, make_aux_features, AnswerMode, DimSpec, PoolBudget};

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(30, |a| a.parse().expect("n"));
    let frac: f64 = args.next().map_or(0.05, |a| a.parse().expect("fraction"));

    let space = generate_ground_truth(n, &default_synthetic_dims(), 11).unwrap();
    let features = make_aux_features(&space, &[0, 1, 2], 3, &DimSpec::uniform(0.0, 1.0), 11).unwrap();
    let mut all = exhaustive_pool(&space, AnswerMode::Deterministic, 11, PoolBudget::default())
        .unwrap()
        .responses();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(11));
    let split = ((all.len() as f64) * frac).ceil() as usize;
    let (train, test) = all.split_at(split);
    println!("{n} objects, {} training and {} held-out responses", train.len(), test.len());

    let cfg = FitConfig::default();
    let (free, report) = fit_ckl(train, n, 5, 1e-4, &cfg).unwrap();
    let ckl = CombinedModel::ckl(free, 1e-4).unwrap();
    println!(
        "CKL   error {:.4}  ({} iterations, {:?})",
        evaluate(&ckl, test).unwrap().error,
        report.iterations_used,
        report.converged_by
    );

    let (tackl, reports) = fit_tackl(&features, train, space.dim(), 1e-4, &cfg).unwrap();
    println!(
        "TACKL error {:.4}  (weights {:?})",
        evaluate(&tackl, test).unwrap().error,
        tackl.weights().to_vec().iter().map(|w| format!("{w:.2}")).collect::<Vec<_>>()
    );
    println!("      stages took {} + {} iterations", reports.weights.iterations_used, reports.free.iterations_used);
}
