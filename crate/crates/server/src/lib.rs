//! Interactive labeling sessions for tackl learners: a transport-free
//! session state machine, file persistence, an HTTP API and the `tackl`
//! command line.

pub mod api;
pub mod cli;
pub mod error;
pub mod session;
pub mod store;

pub use api::{router, serve, AppState, SubmitResponses};
pub use error::{ErrorBody, SessionError};
pub use session::{
    CreateSession, Manifest, ObjectEntry, RoundQueries, Session, SessionConfig, SessionSnapshot, Status,
    SubmitOutcome,
};
pub use store::Store;
