//! Aggregates raw crowd votes into a response pool, prints agreement
//! statistics and the pool text, then reduces a feature table with PCA.
//!
//! cargo run --example votes_to_pool

use tackl::io::{pca_reduce, write_pool};
use tackl::model::{AuxFeatureMatrix, TripletResponse};
use tackl::oracle::aggregate_votes;

fn main() {
    let votes: Vec<TripletResponse> = [
        (0, 1, 2), (0, 1, 2), (0, 1, 2),
        (0, 3, 1), (0, 1, 3),
        (2, 3, 1), (2, 3, 1), (2, 1, 3),
        (4, 0, 1),
    ]
    .into_iter()
    .map(|(a, b, c)| TripletResponse::from_indices(a, b, c))
    .collect();

    let (pool, stats) = aggregate_votes(&votes, 7).unwrap();
    println!(
        "{} votes -> {} queries: {:.0}% unanimous, {:.0}% split, {:.0}% tied",
        votes.len(),
        stats.queries,
        100.0 * stats.full_fraction(),
        100.0 * stats.partial_fraction(),
        100.0 * stats.tied_fraction()
    );
    print!("{}", write_pool(&pool));

    let raw = AuxFeatureMatrix::from_rows(&[
        vec![1.0, 2.0, 0.5, 10.0],
        vec![1.5, 2.9, 0.4, 12.0],
        vec![3.0, 6.1, 0.6, 11.0],
        vec![0.2, 0.5, 0.5, 9.0],
        vec![2.2, 4.3, 0.3, 10.5],
    ])
    .unwrap()
    .into_array();
    let pca = pca_reduce(raw.view(), 2, true).unwrap();
    println!("explained variance {:?}", pca.explained_variance);
    for row in pca.projected.rows() {
        println!("  {:>7.3} {:>7.3}", row[0], row[1]);
    }
}
