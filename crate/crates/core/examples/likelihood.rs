//! Triplet likelihoods for a hand-built combined model, and how the learned
//! feature weights reshape them.
//!
//! cargo run --example likelihood

use tackl::model::{AuxFeatureMatrix, CombinedModel, FreeEmbedding, Representation, TripletResponse, WeightVector};

fn main() {
    // Four objects: feature 0 is informative, feature 1 is noise.
    let features = AuxFeatureMatrix::from_rows(&[
        vec![0.0, 0.9],
        vec![0.1, 0.0],
        vec![0.9, 0.8],
        vec![1.0, 0.1],
    ])
    .unwrap();
    let free = FreeEmbedding::from_rows(&[vec![0.0], vec![0.05], vec![0.4], vec![0.5]]).unwrap();
    let r = TripletResponse::from_indices(0, 1, 2);

    for w in [vec![1.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]] {
        let model = CombinedModel::new(features.clone(), WeightVector::from_vec(w.clone()).unwrap(), free.clone(), 1e-4)
            .unwrap();
        let p = model.triplet_likelihood(&r).unwrap();
        let p_feat = model.triplet_likelihood_in(Representation::Parametric, &r).unwrap();
        println!("w = {w:?}: P(0 closer to 1 than 2) = {p:.4} (features only {p_feat:.4})");
    }
}
