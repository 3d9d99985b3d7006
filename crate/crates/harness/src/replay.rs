//! Replaying one test case against a replica group.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use replicheck_core::explorer::{run_schedule, EventLabel, ExplorationConfig};
use replicheck_core::testgen::TestCase;
use replicheck_server::Frame;
use serde_json::{json, Value};
use tracing::debug;

use crate::group::{Group, Reply};
use crate::{HarnessConfig, HarnessError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    /// Replica `replica` ended (or, in checkpoint mode, was after event
    /// `event`) in a state whose canonical form first differs from the
    /// oracle at byte `offset`.
    Diverged {
        replica: u32,
        offset: usize,
        event: Option<usize>,
        expected: String,
        found: String,
    },
    /// The replica refused a request, lost or invented a message, or broke
    /// the protocol.
    ReplicaError(String),
    /// The case was produced under a different configuration.
    Rejected(String),
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Diverged { .. } => "diverged",
            Verdict::ReplicaError(_) => "replica_error",
            Verdict::Rejected(_) => "rejected",
        }
    }

    pub fn is_pass(&self) -> bool {
        *self == Verdict::Pass
    }

    pub fn to_json(&self) -> Value {
        match self {
            Verdict::Pass => json!({"verdict": "pass"}),
            Verdict::Diverged { replica, offset, event, .. } => {
                json!({"verdict": "diverged", "replica": replica, "offset": offset, "event": event})
            }
            Verdict::ReplicaError(e) => json!({"verdict": "replica_error", "error": e}),
            Verdict::Rejected(e) => json!({"verdict": "rejected", "error": e}),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConformanceResult {
    pub case_id: String,
    pub verdict: Verdict,
    pub schedule: Vec<EventLabel>,
}

/// Index of the first byte where `a` and `b` differ (the shorter length if
/// one is a prefix of the other).
pub fn first_difference(a: &[u8], b: &[u8]) -> Option<usize> {
    if a == b {
        return None;
    }
    Some(a.iter().zip(b).take_while(|(x, y)| x == y).count())
}

/// Intercepted Sync messages per destination, keyed by the message's
/// `(origin, counter)`.
#[derive(Debug, Default)]
pub struct PendingPool {
    queues: BTreeMap<u32, BTreeMap<(u32, u64), Value>>,
}

impl PendingPool {
    pub fn insert(&mut self, dest: u32, origin: u32, counter: u64, msg: Value) -> Result<(), String> {
        let q = self.queues.entry(dest).or_default();
        match q.entry((origin, counter)) {
            Entry::Occupied(_) => Err(format!("message r{origin}:{counter} for r{dest} intercepted twice")),
            Entry::Vacant(v) => {
                v.insert(msg);
                Ok(())
            }
        }
    }

    pub fn take(&mut self, dest: u32, origin: u32, counter: u64) -> Option<Value> {
        self.queues.get_mut(&dest)?.remove(&(origin, counter))
    }

    pub fn len(&self) -> usize {
        self.queues.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every held message as `(dest, origin, counter)`, in key order.
    pub fn keys(&self) -> Vec<(u32, u32, u64)> {
        self.queues
            .iter()
            .flat_map(|(d, q)| q.keys().map(move |(o, c)| (*d, *o, *c)))
            .collect()
    }
}

/// Reads `[origin, counter]` from a Sync message's `op.dot`.
pub fn message_dot(msg: &Value) -> Option<(u32, u64)> {
    let dot = msg.get("op")?.get("dot")?.as_array()?;
    match dot.as_slice() {
        [r, c] => Some((u32::try_from(r.as_u64()?).ok()?, c.as_u64()?)),
        _ => None,
    }
}

fn compare(states: &[String], oracle: &[String], event: Option<usize>) -> Verdict {
    if states.len() != oracle.len() {
        return Verdict::ReplicaError(format!("{} replicas but {} oracle states", states.len(), oracle.len()));
    }
    for (r, (got, want)) in states.iter().zip(oracle).enumerate() {
        if let Some(offset) = first_difference(want.as_bytes(), got.as_bytes()) {
            return Verdict::Diverged {
                replica: r as u32,
                offset,
                event,
                expected: want.clone(),
                found: got.clone(),
            };
        }
    }
    Verdict::Pass
}

/// Fires the schedule one event at a time and compares final states with
/// the oracle. The group must be in its initial state; it is left dirty.
pub fn run_case(case: &TestCase, cfg: &HarnessConfig, group: &mut Group) -> Result<Verdict, HarnessError> {
    let checkpoints = if cfg.checkpoint_every_event {
        match run_schedule(&cfg.model, &case.schedule) {
            Ok((_, log)) => Some(log),
            Err(e) => return Ok(Verdict::Rejected(format!("model cannot replay the schedule: {e}"))),
        }
    } else {
        None
    };
    let mut pool = PendingPool::default();
    for (i, ev) in case.schedule.iter().enumerate() {
        match ev {
            EventLabel::Client { request, target, .. } => {
                let frame = Frame::ClientOp { op: request.to_json() };
                let Reply::Ack { syncs, error } = group.request(*target, &frame)? else {
                    unreachable!("ClientOp answered by Ack")
                };
                if let Some(e) = error {
                    return Ok(Verdict::ReplicaError(format!("event {i}: request refused: {e}")));
                }
                for (dest, msg) in syncs {
                    let Some((origin, counter)) = message_dot(&msg) else {
                        return Ok(Verdict::ReplicaError(format!("event {i}: Sync without a dot")));
                    };
                    if origin != *target {
                        return Ok(Verdict::ReplicaError(format!("event {i}: r{target} sent a message stamped r{origin}")));
                    }
                    if let Err(e) = pool.insert(dest, origin, counter, msg) {
                        return Ok(Verdict::ReplicaError(format!("event {i}: {e}")));
                    }
                }
            }
            EventLabel::Deliver { dest, origin, counter } => {
                let Some(msg) = pool.take(*dest, *origin, *counter) else {
                    return Ok(Verdict::ReplicaError(format!(
                        "event {i}: schedule unsatisfiable, no message r{origin}:{counter} for r{dest}"
                    )));
                };
                let frame = Frame::Sync { dest: *dest, msg };
                let Reply::Ack { syncs, error } = group.request(*dest, &frame)? else {
                    unreachable!("Sync answered by Ack")
                };
                if let Some(e) = error {
                    return Ok(Verdict::ReplicaError(format!("event {i}: delivery refused: {e}")));
                }
                if !syncs.is_empty() {
                    return Ok(Verdict::ReplicaError(format!("event {i}: delivery produced messages")));
                }
            }
        }
        if let Some(log) = &checkpoints {
            let want: Vec<String> = log
                .states_after(i)
                .expect("one entry per event")
                .iter()
                .map(|s| s.as_str().to_string())
                .collect();
            let verdict = compare(&group.inspect_all()?, &want, Some(i));
            if !verdict.is_pass() {
                return Ok(verdict);
            }
        }
    }
    if !pool.is_empty() {
        return Ok(Verdict::ReplicaError(format!(
            "{} messages never delivered: {:?}",
            pool.len(),
            pool.keys()
        )));
    }
    let oracle: Vec<String> = case.oracle.iter().map(|s| s.as_str().to_string()).collect();
    Ok(compare(&group.inspect_all()?, &oracle, None))
}

/// Checks a case's configuration fingerprint against the harness model.
pub fn guard(case: &TestCase, model: &ExplorationConfig) -> Option<Verdict> {
    let expected = model.fingerprint();
    (case.cfg != expected).then(|| {
        Verdict::Rejected(format!(
            "case built for configuration {} but the harness runs {expected}",
            case.cfg
        ))
    })
}

/// Replays one case on `group`, resetting it afterwards. A group that broke
/// during the case is restarted.
pub fn replay_on(case: &TestCase, cfg: &HarnessConfig, group: &mut Group) -> Result<ConformanceResult, HarnessError> {
    let verdict = match guard(case, &cfg.model) {
        Some(v) => v,
        None => {
            let v = match run_case(case, cfg, group) {
                Ok(v) => v,
                Err(HarnessError::Replica(e)) | Err(HarnessError::Server(replicheck_server::ServerError::Protocol(e))) => {
                    Verdict::ReplicaError(e)
                }
                Err(e) => return Err(e),
            };
            if cfg.fresh_group || matches!(v, Verdict::ReplicaError(_)) || group.reset().is_err() {
                group.restart()?;
            }
            v
        }
    };
    debug!(case = %case.case_id, verdict = verdict.name(), "replayed");
    Ok(ConformanceResult {
        case_id: case.case_id.clone(),
        verdict,
        schedule: case.schedule.clone(),
    })
}

/// Replays one case on a group of its own.
pub fn replay(case: &TestCase, cfg: &HarnessConfig) -> Result<ConformanceResult, HarnessError> {
    let mut group = cfg.start_group()?;
    replay_on(case, cfg, &mut group)
}
