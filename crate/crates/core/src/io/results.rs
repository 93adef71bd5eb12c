use std::path::Path;

use super::{read_to_string, write_atomic, IoError};
use crate::eval::{AggregateRow, MetricRecord, Summary};

const HEADER: [&str; 8] = [
    "method",
    "trial",
    "round",
    "responses_seen",
    "error",
    "mean_likelihood",
    "mean_ratio",
    "median_ratio",
];

/// CSV bytes for `records`, in the given order. An empty list yields
/// only the header.
pub fn results_csv(records: &[MetricRecord]) -> Result<Vec<u8>, IoError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| IoError::Config(e.to_string()))
}

pub fn write_results(records: &[MetricRecord], path: &Path) -> Result<(), IoError> {
    write_atomic(path, &results_csv(records)?)
}

pub fn read_results(path: &Path) -> Result<Vec<MetricRecord>, IoError> {
    let text = read_to_string(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(IoError::Parse { line: 1, message: format!("unexpected header {header:?}") });
    }
    Ok(rdr.deserialize().collect::<Result<Vec<MetricRecord>, _>>()?)
}

/// Per-(method, round) means with 90% half-widths, one row each.
pub fn write_aggregates(rows: &[AggregateRow], path: &Path) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "round",
        "trials",
        "responses_seen",
        "error",
        "error_hw",
        "mean_likelihood",
        "mean_likelihood_hw",
        "mean_ratio",
        "mean_ratio_hw",
    ])?;
    let hw = |s: &Summary| s.half_width.map_or(String::new(), |h| h.to_string());
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.round.to_string(),
            r.trials.to_string(),
            r.responses_seen.to_string(),
            r.error.mean.to_string(),
            hw(&r.error),
            r.mean_likelihood.mean.to_string(),
            hw(&r.mean_likelihood),
            r.mean_ratio.mean.to_string(),
            hw(&r.mean_ratio),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Config(e.to_string()))?;
    write_atomic(path, &bytes)
}
