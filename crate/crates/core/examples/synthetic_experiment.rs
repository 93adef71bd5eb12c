//! Compares the four learners on a synthetic ground truth and prints the
//! final-round error of each, averaged over trials.
//!
//! cargo run --release --example synthetic_experiment -- [n] [trials] [rounds]

use tackl::active::{run_experiment, ExperimentData, ExperimentSpec, SyntheticSpec};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let n = args.first().copied().unwrap_or(60);
    let trials = args.get(1).copied().unwrap_or(5);
    let rounds = args.get(2).copied().unwrap_or(12);

    let spec = ExperimentSpec { trials, rounds, seed: 2024, ..ExperimentSpec::default() };
    let data = ExperimentData::Synthetic(SyntheticSpec { n, ..SyntheticSpec::default() });
    let started = std::time::Instant::now();
    let out = run_experiment(&spec, &data).expect("experiment");

    println!("{:<14} {:>5} {:>9} {:>9} {:>9}", "method", "round", "error", "±90%", "mean lik");
    for row in &out.aggregates {
        if row.round == 1 || row.round == rounds {
            println!(
                "{:<14} {:>5} {:>9.4} {:>9.4} {:>9.4}",
                row.method,
                row.round,
                row.error.mean,
                row.error.half_width.unwrap_or(f64::NAN),
                row.mean_likelihood.mean
            );
        }
    }
    println!("elapsed {:.1?}", started.elapsed());
}
