//! Session persistence. Each session lives in `<root>/sessions/<id>/`:
//!
//! ```text
//! session.json        request, status, open round, round history
//! model.json          model checkpoint after the last committed round
//! rounds/000000.txt   committed responses of each round (pool format)
//! pending.txt         answers held for the open round (pool format)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tackl::active::RoundRecord;
use tackl::io::{load_pool, save_pool, ModelCheckpoint, Provenance};
use tackl::model::{TripletQuery, TripletResponse};
use tackl::oracle::ResponsePool;

use crate::error::SessionError;
use crate::session::{CreateSession, Session, SessionParts, Status};

const SESSION_SCHEMA: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionRecord {
    schema: u32,
    id: u64,
    request: CreateSession,
    status: Status,
    open_round: Option<Vec<TripletQuery>>,
    history: Vec<RoundRecord>,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn storage<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> SessionError + '_ {
    move |e| SessionError::Storage(format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SessionError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(storage(&tmp))?;
    fs::rename(&tmp, path).map_err(storage(path))
}

fn as_pool(responses: &[TripletResponse]) -> Result<ResponsePool, SessionError> {
    let mut pool = ResponsePool::new();
    for r in responses {
        pool.insert(*r, 1, 0).map_err(|e| SessionError::Storage(e.to_string()))?;
    }
    Ok(pool)
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let root = root.into();
        let dir = root.join("sessions");
        fs::create_dir_all(&dir).map_err(storage(&dir))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_dir(&self, id: u64) -> PathBuf {
        self.root.join("sessions").join(id.to_string())
    }

    /// Writes the session's current state. Round files already on disk
    /// are left alone; they never change once written.
    pub fn save(&self, s: &Session) -> Result<(), SessionError> {
        let dir = self.session_dir(s.id());
        let rounds_dir = dir.join("rounds");
        fs::create_dir_all(&rounds_dir).map_err(storage(&rounds_dir))?;
        for (i, round) in s.rounds().iter().enumerate() {
            let p = rounds_dir.join(format!("{i:06}.txt"));
            if !p.exists() {
                save_pool(&as_pool(round)?, &p).map_err(storage(&p))?;
            }
        }
        let model = dir.join("model.json");
        let config_text = serde_json::to_string(s.config()).map_err(storage(&model))?;
        let provenance = Provenance::new(&config_text, s.state().t(), s.config().seed);
        ModelCheckpoint::from_model(s.state().model(), provenance).save(&model).map_err(storage(&model))?;
        let pending = dir.join("pending.txt");
        save_pool(&as_pool(&s.pending())?, &pending).map_err(storage(&pending))?;

        let open = s.open_queries();
        let record = SessionRecord {
            schema: SESSION_SCHEMA,
            id: s.id(),
            request: CreateSession {
                manifest: s.manifest().clone(),
                config: s.config().clone(),
                evaluation: s.evaluation().to_vec(),
            },
            status: s.status(),
            open_round: (!open.is_empty()).then_some(open),
            history: s.state().history().to_vec(),
        };
        let path = dir.join("session.json");
        let text = serde_json::to_string_pretty(&record).map_err(storage(&path))?;
        write_atomic(&path, text.as_bytes())
    }

    pub fn load(&self, id: u64) -> Result<Session, SessionError> {
        let dir = self.session_dir(id);
        let path = dir.join("session.json");
        let text = fs::read_to_string(&path).map_err(storage(&path))?;
        let record: SessionRecord = serde_json::from_str(&text).map_err(storage(&path))?;
        if record.schema != SESSION_SCHEMA || record.id != id {
            return Err(SessionError::Storage(format!("{}: schema or id mismatch", path.display())));
        }
        let mut rounds = Vec::with_capacity(record.history.len());
        for i in 0..record.history.len() {
            let p = dir.join("rounds").join(format!("{i:06}.txt"));
            rounds.push(load_pool(&p).map_err(storage(&p))?.responses());
        }
        let model_path = dir.join("model.json");
        let model = ModelCheckpoint::load(&model_path)
            .and_then(|c| c.to_model())
            .map_err(storage(&model_path))?;
        let pending_path = dir.join("pending.txt");
        let pending = if pending_path.exists() {
            load_pool(&pending_path).map_err(storage(&pending_path))?.responses()
        } else {
            Vec::new()
        };
        Session::restore(SessionParts {
            id,
            request: record.request,
            rounds,
            history: record.history,
            model,
            open_round: record.open_round,
            pending,
            finished: record.status == Status::Finished,
        })
    }

    /// Every stored session, by ascending id.
    pub fn load_all(&self) -> Result<Vec<Session>, SessionError> {
        let dir = self.root.join("sessions");
        let mut ids: Vec<u64> = fs::read_dir(&dir)
            .map_err(storage(&dir))?
            .filter_map(|e| e.ok()?.file_name().to_str()?.parse().ok())
            .collect();
        ids.sort_unstable();
        ids.into_iter().map(|id| self.load(id)).collect()
    }
}
