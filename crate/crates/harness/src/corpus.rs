//! Replaying whole corpora.

use std::fs;
use std::path::PathBuf;
use std::thread;

use replicheck_core::testgen::{TestCase, TestgenError};
use serde_json::{json, Value};
use tracing::info;

use crate::replay::{replay_on, ConformanceResult, Verdict};
use crate::{HarnessConfig, HarnessError};

#[derive(Debug, Clone)]
pub struct CorpusOptions {
    /// Replica groups running cases side by side.
    pub parallelism: usize,
    /// Failing cases kept in the summary and written out.
    pub keep_failures: usize,
    /// Where failing cases are written, one JSONL file per case.
    pub failure_dir: Option<PathBuf>,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            parallelism: 1,
            keep_failures: 10,
            failure_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusSummary {
    pub cases: u64,
    pub pass: u64,
    pub diverged: u64,
    pub replica_error: u64,
    pub rejected: u64,
    /// The first failing cases in corpus order.
    pub failures: Vec<(TestCase, Verdict)>,
}

impl CorpusSummary {
    pub fn failed(&self) -> u64 {
        self.cases - self.pass
    }

    fn add(&mut self, case: &TestCase, r: ConformanceResult, keep: usize) {
        self.cases += 1;
        match &r.verdict {
            Verdict::Pass => self.pass += 1,
            Verdict::Diverged { .. } => self.diverged += 1,
            Verdict::ReplicaError(_) => self.replica_error += 1,
            Verdict::Rejected(_) => self.rejected += 1,
        }
        if !r.verdict.is_pass() && self.failures.len() < keep {
            self.failures.push((case.clone(), r.verdict));
        }
    }

    /// Sorted-key JSON; contains no timing, so equal runs print equal bytes.
    pub fn to_json(&self) -> Value {
        let failures: Vec<Value> = self
            .failures
            .iter()
            .map(|(c, v)| {
                let mut j = v.to_json();
                j["case"] = json!(c.case_id);
                j
            })
            .collect();
        json!({
            "cases": self.cases,
            "diverged": self.diverged,
            "fail": self.failed(),
            "failures": failures,
            "pass": self.pass,
            "rejected": self.rejected,
            "replica_error": self.replica_error,
        })
    }
}

fn persist(summary: &CorpusSummary, dir: &PathBuf) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    for (case, _) in &summary.failures {
        fs::write(dir.join(format!("{}.jsonl", case.case_id)), format!("{}\n", case.to_line()))?;
    }
    Ok(())
}

/// Replays every case and aggregates verdicts. With parallelism 1 cases are
/// streamed; otherwise the corpus is split into contiguous chunks, one
/// group each, and results are merged back in corpus order, so the summary
/// does not depend on the parallelism.
pub fn replay_corpus<I>(cases: I, cfg: &HarnessConfig, opts: &CorpusOptions) -> Result<CorpusSummary, HarnessError>
where
    I: IntoIterator<Item = Result<TestCase, TestgenError>>,
{
    let mut summary = CorpusSummary::default();
    if opts.parallelism <= 1 {
        let mut group = cfg.start_group()?;
        for case in cases {
            let case = case?;
            let r = replay_on(&case, cfg, &mut group)?;
            summary.add(&case, r, opts.keep_failures);
        }
    } else {
        let all: Vec<TestCase> = cases.into_iter().collect::<Result<_, _>>()?;
        let chunk = all.len().div_ceil(opts.parallelism).max(1);
        let results: Vec<Result<Vec<ConformanceResult>, HarnessError>> = thread::scope(|s| {
            let workers: Vec<_> = all
                .chunks(chunk)
                .map(|part| {
                    s.spawn(move || {
                        let mut group = cfg.start_group()?;
                        part.iter().map(|c| replay_on(c, cfg, &mut group)).collect()
                    })
                })
                .collect();
            workers.into_iter().map(|w| w.join().expect("worker panicked")).collect()
        });
        let mut it = all.iter();
        for part in results {
            for r in part? {
                summary.add(it.next().expect("one result per case"), r, opts.keep_failures);
            }
        }
    }
    if let Some(dir) = &opts.failure_dir {
        persist(&summary, dir)?;
    }
    info!(cases = summary.cases, pass = summary.pass, "corpus replayed");
    Ok(summary)
}
