//! Unbiased pass@k estimation.
//!
//! For a question answered `n` times with `c` correct responses, the chance
//! that a random size-`k` subset contains at least one correct response is
//! `1 - C(n-c, k) / C(n, k)`. The ratio of binomials is evaluated as the
//! running product `prod_{j<k} (n-c-j)/(n-j)` so `n = 256` stays finite.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Evaluation outcome for one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassKRecord {
    pub query_id: String,
    pub n: u64,
    pub c: u64,
}

impl PassKRecord {
    pub fn new(query_id: impl Into<String>, n: u64, c: u64) -> Result<Self> {
        let query_id = query_id.into();
        if n == 0 {
            return Err(Error::PassK(format!("query `{query_id}`: n must be at least 1")));
        }
        if c > n {
            return Err(Error::PassK(format!("query `{query_id}`: c = {c} exceeds n = {n}")));
        }
        Ok(Self { query_id, n, c })
    }
}

pub fn passk_single(n: u64, c: u64, k: u64) -> Result<f64> {
    if k < 1 || k > n {
        return Err(Error::PassK(format!("k = {k} must satisfy 1 <= k <= n = {n}")));
    }
    if c > n {
        return Err(Error::PassK(format!("c = {c} must satisfy 0 <= c <= n = {n}")));
    }
    if c == 0 {
        return Ok(0.0);
    }
    if k > n - c {
        return Ok(1.0);
    }
    if k == 1 {
        return Ok(c as f64 / n as f64);
    }
    let miss = (0..k).fold(1.0, |acc, j| acc * (n - c - j) as f64 / (n - j) as f64);
    Ok(1.0 - miss)
}

/// Unweighted mean of [`passk_single`] over questions.
pub fn passk_aggregate(records: &[PassKRecord], k: u64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let mut total = 0.0;
    for r in records {
        if r.n < k {
            return Err(Error::TooFewSamples {
                query_id: r.query_id.clone(),
                n: r.n,
                k,
            });
        }
        total += passk_single(r.n, r.c, k)?;
    }
    Ok(total / records.len() as f64)
}

/// Pass@k for every `k` in the grid.
pub fn passk_table(records: &[PassKRecord], k_grid: &[u64]) -> Result<Vec<(u64, f64)>> {
    if k_grid.is_empty() {
        return Err(Error::PassK("the k grid is empty".into()));
    }
    k_grid
        .iter()
        .map(|&k| passk_aggregate(records, k).map(|v| (k, v)))
        .collect()
}

/// Writes `k,pass_at_k` rows with six decimals.
pub fn write_passk_table<W: Write>(mut out: W, rows: &[(u64, f64)]) -> std::io::Result<()> {
    writeln!(out, "k,pass_at_k")?;
    for (k, v) in rows {
        writeln!(out, "{k},{v:.6}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Schema {
    Aggregated,
    PerResponse,
}

/// Reads a newline-delimited JSON log.
///
/// Each line is either an aggregated record `{"query_id", "n", "c"}` or a
/// single response `{"query_id", "correct"}`; per-response lines are folded
/// into `(n, c)` per query. A file must use one schema throughout. Records are
/// returned in order of first appearance.
pub fn ingest_log(path: impl AsRef<Path>) -> Result<Vec<PassKRecord>> {
    let file = File::open(path.as_ref())?;
    parse_log(BufReader::new(file))
}

pub fn parse_log<R: BufRead>(reader: R) -> Result<Vec<PassKRecord>> {
    let mut schema: Option<Schema> = None;
    let mut records: Vec<PassKRecord> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let malformed = |reason: String| Error::MalformedLog { line: lineno, reason };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| malformed("expected a JSON object".into()))?;
        let query_id = obj
            .get("query_id")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed("missing string field `query_id`".into()))?
            .to_owned();

        let has_agg = obj.contains_key("n") || obj.contains_key("c");
        let has_resp = obj.contains_key("correct");
        let this = match (has_agg, has_resp) {
            (true, false) => Schema::Aggregated,
            (false, true) => Schema::PerResponse,
            (true, true) => {
                return Err(malformed("record mixes `n`/`c` with `correct`".into()));
            }
            (false, false) => {
                return Err(malformed("expected either `n` and `c`, or `correct`".into()));
            }
        };
        match schema {
            None => schema = Some(this),
            Some(s) if s != this => {
                return Err(malformed(
                    "mixed schemas: aggregated and per-response records in one file".into(),
                ));
            }
            _ => {}
        }

        match this {
            Schema::Aggregated => {
                let field = |name: &str| {
                    obj.get(name)
                        .and_then(Value::as_u64)
                        .ok_or_else(|| malformed(format!("field `{name}` must be a non-negative integer")))
                };
                let (n, c) = (field("n")?, field("c")?);
                if seen.contains_key(&query_id) {
                    return Err(malformed(format!("duplicate query_id `{query_id}`")));
                }
                let record = PassKRecord::new(query_id.clone(), n, c).map_err(|e| malformed(e.to_string()))?;
                seen.insert(query_id, records.len());
                records.push(record);
            }
            Schema::PerResponse => {
                let correct = obj
                    .get("correct")
                    .and_then(Value::as_bool)
                    .ok_or_else(|| malformed("field `correct` must be a boolean".into()))?;
                let idx = *seen.entry(query_id.clone()).or_insert_with(|| {
                    records.push(PassKRecord { query_id, n: 0, c: 0 });
                    records.len() - 1
                });
                records[idx].n += 1;
                records[idx].c += u64::from(correct);
            }
        }
    }
    Ok(records)
}
