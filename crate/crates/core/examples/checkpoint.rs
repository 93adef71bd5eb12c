//! Fits a TACKL model, saves it as a JSON checkpoint, reloads it and checks
//! that the reloaded model scores identically.
//!
//! cargo run --release --example checkpoint -- [path]

use std::path::PathBuf;

use tackl::eval::evaluate;
use tackl::io::{ModelCheckpoint, Provenance};
use tackl::optim::{fit_tackl, FitConfig};
use tackl::oracle::{generate_ground_truth, exhaustive_pool, make_aux_features, AnswerMode, DimSpec, PoolBudget};

fn main() {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("tackl-example-model.json"));

    let space = generate_ground_truth(15, &vec![DimSpec::uniform(0.0, 1.0); 3], 9).unwrap();
    let features = make_aux_features(&space, &[0, 1], 2, &DimSpec::uniform(0.0, 1.0), 9).unwrap();
    let pool = exhaustive_pool(&space, AnswerMode::Deterministic, 9, PoolBudget::default()).unwrap().responses();
    let train: Vec<_> = pool.iter().step_by(10).copied().collect();
    let (model, _) = fit_tackl(&features, &train, 2, 1e-4, &FitConfig::default()).unwrap();

    let ckpt = ModelCheckpoint::from_model(&model, Provenance::new("example", 0, 9));
    ckpt.save(&path).unwrap();
    let loaded = ModelCheckpoint::load(&path).unwrap().to_model().unwrap();

    let (before, after) = (evaluate(&model, &pool).unwrap(), evaluate(&loaded, &pool).unwrap());
    println!("wrote {}", path.display());
    println!("error before {:.6}, after reload {:.6}", before.error, after.error);
    assert_eq!(before, after);
}
