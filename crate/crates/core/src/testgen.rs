//! Conversion between explored traces and replayable test cases.
//!
//! One case per line:
//!
//! ```text
//! {"v":1,"case":"<hex>","cfg":"<hex>","sched":[...],"oracle":["<state>",...]}
//! ```
//!
//! `case` is the first 16 bytes of the SHA-256 of the compact `sched` array,
//! `cfg` the fingerprint of the configuration that produced it, and `oracle`
//! the canonical state of each replica at the end of the schedule.

use std::io::{self, BufRead, Write};
use std::ops::ControlFlow;

use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::explorer::{for_each_trace, EventLabel, ExplorationConfig, ExploreError, TraceRecord, TraceStats};
use crate::replica::CanonicalState;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum TestgenError {
    #[error("line {lineno}: malformed field `{field}`")]
    MalformedCase { lineno: usize, field: &'static str },
    #[error("line {lineno}: case id {found} does not match schedule ({expected})")]
    CaseIdMismatch { lineno: usize, expected: String, found: String },
    #[error(transparent)]
    Explore(#[from] ExploreError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCase {
    pub case_id: String,
    pub cfg: String,
    pub schedule: Vec<EventLabel>,
    pub oracle: Vec<CanonicalState>,
}

fn schedule_json(schedule: &[EventLabel]) -> String {
    Value::Array(schedule.iter().map(EventLabel::to_wire).collect()).to_string()
}

pub fn case_id(schedule: &[EventLabel]) -> String {
    let digest = Sha256::digest(schedule_json(schedule).as_bytes());
    hex::encode(&digest[..16])
}

impl TestCase {
    pub fn from_trace(cfg: &str, trace: TraceRecord) -> Self {
        TestCase {
            case_id: case_id(&trace.schedule),
            cfg: cfg.to_string(),
            schedule: trace.schedule,
            oracle: trace.oracle,
        }
    }

    /// The JSONL line, without the trailing newline.
    pub fn to_line(&self) -> String {
        let oracle = Value::Array(self.oracle.iter().map(|s| Value::from(s.as_str())).collect());
        format!(
            r#"{{"v":{FORMAT_VERSION},"case":"{}","cfg":"{}","sched":{},"oracle":{}}}"#,
            self.case_id,
            self.cfg,
            schedule_json(&self.schedule),
            oracle
        )
    }

    /// Parses one line; `lineno` is 1-based and only used in errors.
    pub fn parse(line: &str, lineno: usize) -> Result<Self, TestgenError> {
        let bad = |field| TestgenError::MalformedCase { lineno, field };
        let v: Value = serde_json::from_str(line).map_err(|_| bad("line"))?;
        let obj = v.as_object().ok_or_else(|| bad("line"))?;
        if obj.get("v").and_then(Value::as_u64) != Some(FORMAT_VERSION) {
            return Err(bad("v"));
        }
        let hex_field = |name: &'static str| -> Result<String, TestgenError> {
            let s = obj.get(name).and_then(Value::as_str).ok_or_else(|| bad(name))?;
            if s.len() != 32 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(bad(name));
            }
            Ok(s.to_string())
        };
        let found = hex_field("case")?;
        let cfg = hex_field("cfg")?;
        let schedule = obj
            .get("sched")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("sched"))?
            .iter()
            .map(|e| EventLabel::from_wire(e).ok_or_else(|| bad("sched")))
            .collect::<Result<Vec<_>, _>>()?;
        let oracle = obj
            .get("oracle")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("oracle"))?
            .iter()
            .map(|s| {
                s.as_str()
                    .map(|s| CanonicalState::from_string(s.to_string()))
                    .ok_or_else(|| bad("oracle"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let expected = case_id(&schedule);
        if expected != found {
            return Err(TestgenError::CaseIdMismatch { lineno, expected, found });
        }
        Ok(TestCase {
            case_id: found,
            cfg,
            schedule,
            oracle,
        })
    }
}

/// Writes one line per complete execution of `config`, in exploration
/// order. Stops after `limit` cases when given.
pub fn emit<W: Write>(config: &ExplorationConfig, out: &mut W, limit: Option<u64>) -> Result<TraceStats, TestgenError> {
    let cfg = config.fingerprint();
    let mut io_err = None;
    let mut written = 0u64;
    let stats = for_each_trace(config, |trace| {
        if let Err(e) = writeln!(out, "{}", TestCase::from_trace(&cfg, trace).to_line()) {
            io_err = Some(e);
            return ControlFlow::Break(());
        }
        written += 1;
        if limit.is_some_and(|l| written >= l) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    Ok(stats)
}

/// Collects every case of `config` in memory.
pub fn generate(config: &ExplorationConfig) -> Result<Vec<TestCase>, TestgenError> {
    let cfg = config.fingerprint();
    let mut cases = Vec::new();
    for_each_trace(config, |trace| {
        cases.push(TestCase::from_trace(&cfg, trace));
        ControlFlow::Continue(())
    })?;
    Ok(cases)
}

/// Parses a corpus, skipping blank lines.
pub fn read_corpus<R: BufRead>(input: R) -> Result<Vec<TestCase>, TestgenError> {
    let mut cases = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        cases.push(TestCase::parse(&line, i + 1)?);
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::op::DataType;

    #[test]
    fn rpq_single_replica_line() {
        let c = ExplorationConfig::new(DataType::Rpq, 1, 1);
        let cases = generate(&c).unwrap();
        assert_eq!(cases.len(), 5);
        let line = cases[0].to_line();
        assert!(line.starts_with(r#"{"v":1,"case":""#));
        let sched = r#""sched":[["C",0,{"id":"e","op":"rpq_add","value":10},0]]"#;
        assert!(line.contains(sched), "{line}");
        assert_eq!(TestCase::parse(&line, 1).unwrap(), cases[0]);
    }

    #[test]
    fn case_id_is_schedule_hash() {
        let c = ExplorationConfig::new(DataType::List, 2, 2);
        let cases = generate(&c).unwrap();
        let mut ids: Vec<&str> = cases.iter().map(|c| c.case_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), cases.len());
    }

    #[test]
    fn malformed_fields_named() {
        let err = |l: &str| match TestCase::parse(l, 7) {
            Err(TestgenError::MalformedCase { lineno: 7, field }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(err("not json"), "line");
        assert_eq!(err(r#"{"v":2}"#), "v");
        assert_eq!(err(r#"{"v":1,"case":"xyz"}"#), "case");
        let id = "0".repeat(32);
        assert_eq!(err(&format!(r#"{{"v":1,"case":"{id}","cfg":"{id}","sched":[["Q"]],"oracle":[]}}"#)), "sched");
        assert_eq!(err(&format!(r#"{{"v":1,"case":"{id}","cfg":"{id}","sched":[],"oracle":[1]}}"#)), "oracle");
    }

    #[test]
    fn tampered_schedule_detected() {
        let c = ExplorationConfig::new(DataType::Rpq, 1, 1);
        let line = generate(&c).unwrap()[0].to_line().replace("\"value\":10", "\"value\":11");
        assert!(matches!(TestCase::parse(&line, 1), Err(TestgenError::CaseIdMismatch { .. })));
    }

    #[test]
    fn emit_matches_generate() {
        let c = ExplorationConfig::new(DataType::Rpq, 2, 2);
        let mut buf = Vec::new();
        let stats = emit(&c, &mut buf, None).unwrap();
        let parsed = read_corpus(&buf[..]).unwrap();
        assert_eq!(parsed, generate(&c).unwrap());
        assert_eq!(stats.emitted as usize, parsed.len());
        let mut buf = Vec::new();
        emit(&c, &mut buf, Some(3)).unwrap();
        assert_eq!(read_corpus(&buf[..]).unwrap().len(), 3);
    }
}
