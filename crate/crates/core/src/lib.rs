pub mod model;
pub mod optim;
pub mod rng;
pub mod oracle;
pub mod eval;
pub mod active;
pub mod io;
