use std::fmt::Write as _;
use std::path::Path;

use super::{read_to_string, write_atomic, IoError};
use crate::model::TripletResponse;
use crate::oracle::ResponsePool;

const HEADER: &str = "# a b c votes_for votes_against";

/// Reads a pool: one `a b c votes_for votes_against` record per line,
/// where `(a, b, c)` is the winning response. `#` starts a comment.
pub fn load_pool(path: &Path) -> Result<ResponsePool, IoError> {
    parse_pool(&read_to_string(path)?)
}

pub fn parse_pool(text: &str) -> Result<ResponsePool, IoError> {
    let mut pool = ResponsePool::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(IoError::Parse {
                line,
                message: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let mut nums = [0u64; 5];
        for (slot, f) in nums.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| IoError::Parse {
                line,
                message: format!("{f:?} is not a nonnegative integer"),
            })?;
        }
        let id = |v: u64| usize::try_from(v).map_err(|_| IoError::Parse { line, message: format!("id {v} too large") });
        let votes = |v: u64| u32::try_from(v).map_err(|_| IoError::Parse { line, message: format!("vote count {v} too large") });
        let r = TripletResponse::new(id(nums[0])?.into(), id(nums[1])?.into(), id(nums[2])?.into())
            .map_err(|e| IoError::Parse { line, message: e.to_string() })?;
        pool.insert(r, votes(nums[3])?, votes(nums[4])?)
            .map_err(|e| IoError::Parse { line, message: e.to_string() })?;
    }
    Ok(pool)
}

/// Canonical text: a header comment, then entries in canonical query order.
pub fn write_pool(pool: &ResponsePool) -> String {
    let mut out = String::with_capacity(pool.len() * 16 + HEADER.len() + 1);
    out.push_str(HEADER);
    out.push('\n');
    for (_, e) in pool.iter() {
        let r = e.response;
        writeln!(out, "{} {} {} {} {}", r.head, r.closer, r.farther, e.votes_for, e.votes_against).expect("string write");
    }
    out
}

pub fn save_pool(pool: &ResponsePool, path: &Path) -> Result<(), IoError> {
    write_atomic(path, write_pool(pool).as_bytes())
}
