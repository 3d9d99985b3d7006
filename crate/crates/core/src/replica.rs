//! A single replica: payload, causal context, pending buffer, and the client
//! and remote operation paths.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::dot::{CausalContext, Dot, ReplicaId};
use crate::element::{Existence, ListElement, RpqElement};
use crate::op::{DataType, OpKind, Operation, Request, SyncMessage};
use crate::position::{generate_between, PositionId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CrdtError {
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("element `{0}` already exists")]
    DuplicateElement(String),
    #[error("{found} request sent to a {expected} replica")]
    WrongDataType { expected: DataType, found: DataType },
    #[error("duplicate delivery of {0}")]
    DuplicateDelivery(Dot),
}

/// How remote operations with unmet dependencies are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Buffer until every dependency is applied.
    #[default]
    Standard,
    /// Apply on arrival; correct only over a causally ordered channel.
    CausalAssuming,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Standard => "standard",
            Strategy::CausalAssuming => "causal-assuming",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Strategy::Standard),
            "causal-assuming" => Ok(Strategy::CausalAssuming),
            other => Err(format!("unknown strategy `{other}` (expected standard or causal-assuming)")),
        }
    }
}

/// Remote-path behaviour of a replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Behavior {
    pub strategy: Strategy,
    /// Accept a re-add whose dependencies are unmet, allocating a fresh
    /// position when the original insert has not arrived yet.
    pub readd_accept: bool,
}

impl Behavior {
    pub fn standard() -> Self {
        Behavior::default()
    }

    fn skips_deps(&self, op: &Operation) -> bool {
        self.strategy == Strategy::CausalAssuming || (self.readd_accept && op.kind.is_readd())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Payload {
    Rpq(BTreeMap<String, RpqElement>),
    List(BTreeMap<String, ListElement>),
}

/// Deterministic, sorted-key compact JSON rendering of a replica state.
///
/// Includes every element's metadata, the context and the pending
/// operations; excludes the replica index and counter. Every list of dots,
/// and the pending list, is sorted by (replica, counter).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalState(String);

impl CanonicalState {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }

    pub fn into_string(self) -> String {
        self.0
    }

    pub fn from_string(s: String) -> Self {
        CanonicalState(s)
    }
}

impl fmt::Display for CanonicalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// What a client reading the replica would observe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VisibleValue {
    /// Highest-priority existent element, ties to the smaller id.
    Rpq(Option<(String, i64)>),
    /// Existent elements in position order with their attributes.
    List(Vec<(String, Option<i64>)>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReplicaState {
    pub replica: ReplicaId,
    /// Number of client operations issued here.
    pub counter: u64,
    /// Dots applied here.
    pub ctx: CausalContext,
    /// Received operations waiting for their dependencies, keyed by dot.
    pub pending: BTreeMap<Dot, Operation>,
    pub payload: Payload,
}

impl ReplicaState {
    pub fn new(data_type: DataType, replica: ReplicaId, replicas: usize) -> Self {
        let payload = match data_type {
            DataType::Rpq => Payload::Rpq(BTreeMap::new()),
            DataType::List => Payload::List(BTreeMap::new()),
        };
        ReplicaState {
            replica,
            counter: 0,
            ctx: CausalContext::new(replicas),
            pending: BTreeMap::new(),
            payload,
        }
    }

    pub fn data_type(&self) -> DataType {
        match self.payload {
            Payload::Rpq(_) => DataType::Rpq,
            Payload::List(_) => DataType::List,
        }
    }

    pub fn rpq(&self) -> Option<&BTreeMap<String, RpqElement>> {
        match &self.payload {
            Payload::Rpq(m) => Some(m),
            Payload::List(_) => None,
        }
    }

    pub fn list(&self) -> Option<&BTreeMap<String, ListElement>> {
        match &self.payload {
            Payload::List(m) => Some(m),
            Payload::Rpq(_) => None,
        }
    }

    /// Dots of all operations applied here (buffered ones excluded).
    pub fn applied(&self) -> &CausalContext {
        &self.ctx
    }

    /// Whether a list element's insert has been applied here.
    pub fn knows(&self, id: &str) -> bool {
        self.list()
            .and_then(|m| m.get(id))
            .is_some_and(|e| e.pos.is_some())
    }

    pub fn existence(&self, id: &str) -> Existence {
        match &self.payload {
            Payload::Rpq(m) => m.get(id).map_or(Existence::NonExistent, |e| e.existence()),
            Payload::List(m) => m.get(id).map_or(Existence::NonExistent, |e| e.existence()),
        }
    }

    /// Validates a client request against the local state and returns the
    /// dependency-annotated effect it would produce, without applying it.
    pub fn prepare(&self, req: &Request) -> Result<Operation, CrdtError> {
        let found = req.data_type();
        if found != self.data_type() {
            return Err(CrdtError::WrongDataType {
                expected: self.data_type(),
                found,
            });
        }
        let dot = Dot::new(self.replica, self.counter + 1);
        let (kind, deps) = match (&self.payload, req) {
            (Payload::Rpq(m), Request::RpqAdd { id, value }) => (
                OpKind::RpqAdd {
                    id: id.clone(),
                    value: *value,
                },
                m.get(id).map(|e| e.observed_by_add()).unwrap_or_default(),
            ),
            (Payload::Rpq(_), Request::RpqIncrease { id, delta }) => (
                OpKind::RpqIncrease {
                    id: id.clone(),
                    delta: *delta,
                },
                BTreeSet::new(),
            ),
            (Payload::Rpq(m), Request::RpqRemove { id }) => (
                OpKind::RpqRemove { id: id.clone() },
                m.get(id).map(|e| e.observed_by_remove()).unwrap_or_default(),
            ),
            (Payload::List(m), Request::ListInsert { id, anchor, attr }) => {
                if m.get(id).is_some_and(|e| e.pos.is_some()) {
                    return Err(CrdtError::DuplicateElement(id.clone()));
                }
                let (left, deps) = match anchor {
                    None => (None, BTreeSet::new()),
                    Some(a) => {
                        let e = m
                            .get(a)
                            .filter(|e| e.pos.is_some())
                            .ok_or_else(|| CrdtError::UnknownElement(a.clone()))?;
                        (e.pos.as_ref(), e.add_dot.into_iter().collect())
                    }
                };
                let right = next_position(m, left);
                let pos = generate_between(left, right, self.replica, dot.counter);
                (
                    OpKind::ListInsert {
                        id: id.clone(),
                        anchor: anchor.clone(),
                        attr: *attr,
                        pos,
                    },
                    deps,
                )
            }
            (Payload::List(m), Request::ListUpdate { id, attr }) => {
                let e = known(m, id)?;
                (
                    OpKind::ListUpdate {
                        id: id.clone(),
                        attr: *attr,
                    },
                    e.observed_by_update(),
                )
            }
            (Payload::List(m), Request::ListRemove { id }) => {
                let e = known(m, id)?;
                (OpKind::ListRemove { id: id.clone() }, e.observed_by_remove())
            }
            (Payload::List(m), Request::ListReAdd { id }) => {
                let e = known(m, id)?;
                (OpKind::ListReAdd { id: id.clone() }, e.observed_by_readd())
            }
            _ => unreachable!("data type checked above"),
        };
        Ok(Operation { dot, kind, deps })
    }

    /// Accepts a client request: applies it locally and returns the message
    /// to broadcast to every other replica.
    pub fn apply_client_op(&mut self, req: &Request) -> Result<SyncMessage, CrdtError> {
        let op = self.prepare(req)?;
        let ctx = self.ctx.clone();
        self.counter = op.dot.counter;
        self.apply_effect(&op, Behavior::standard());
        self.ctx.insert(op.dot);
        Ok(SyncMessage {
            origin: self.replica,
            op,
            ctx,
        })
    }

    /// Delivers a message from another replica: applies it if its
    /// dependencies are met (or the behaviour says not to wait), buffers it
    /// otherwise, then drains the buffer to a fixpoint.
    pub fn apply_remote_op(&mut self, msg: &SyncMessage, behavior: Behavior) -> Result<(), CrdtError> {
        let dot = msg.op.dot;
        if self.ctx.contains(&dot) || self.pending.contains_key(&dot) {
            return Err(CrdtError::DuplicateDelivery(dot));
        }
        if behavior.skips_deps(&msg.op) || self.ctx.contains_all(&msg.op.deps) {
            self.apply_effect(&msg.op, behavior);
            self.ctx.insert(dot);
        } else {
            self.pending.insert(dot, msg.op.clone());
        }
        self.flush(behavior);
        Ok(())
    }

    fn flush(&mut self, behavior: Behavior) {
        loop {
            let ready = self
                .pending
                .values()
                .find(|op| behavior.skips_deps(op) || self.ctx.contains_all(&op.deps))
                .map(|op| op.dot);
            let Some(dot) = ready else { break };
            let op = self.pending.remove(&dot).expect("found above");
            self.apply_effect(&op, behavior);
            self.ctx.insert(dot);
        }
    }

    fn apply_effect(&mut self, op: &Operation, behavior: Behavior) {
        let replica = self.replica;
        match (&mut self.payload, &op.kind) {
            (Payload::Rpq(m), OpKind::RpqAdd { id, value }) => {
                rpq_entry(m, id).apply_add(op.dot, *value, &op.deps);
            }
            (Payload::Rpq(m), OpKind::RpqIncrease { id, delta }) => {
                rpq_entry(m, id).apply_increase(op.dot, *delta);
            }
            (Payload::Rpq(m), OpKind::RpqRemove { id }) => {
                rpq_entry(m, id).apply_remove(op.dot, &op.deps);
            }
            (Payload::List(m), OpKind::ListInsert { id, attr, pos, .. }) => {
                list_entry(m, id).apply_insert(op.dot, *attr, pos);
            }
            (Payload::List(m), OpKind::ListUpdate { id, attr }) => {
                list_entry(m, id).apply_update(op.dot, *attr, &op.deps);
            }
            (Payload::List(m), OpKind::ListRemove { id }) => {
                list_entry(m, id).apply_remove(op.dot, &op.deps);
            }
            (Payload::List(m), OpKind::ListReAdd { id }) => {
                let orphan = behavior.readd_accept && m.get(id).is_none_or(|e| e.pos.is_none());
                if orphan {
                    let last = m.values().filter_map(|e| e.pos.as_ref()).max().cloned();
                    let fresh = generate_between(last.as_ref(), None, replica, op.dot.counter);
                    list_entry(m, id).pos = Some(fresh);
                }
                list_entry(m, id).apply_readd(op.dot, &op.deps);
            }
            (payload, kind) => {
                tracing::warn!(?kind, is_rpq = matches!(payload, Payload::Rpq(_)), "operation for the wrong data type ignored");
            }
        }
    }

    pub fn to_json(&self) -> Value {
        let elements: Map<String, Value> = match &self.payload {
            Payload::Rpq(m) => m.iter().map(|(k, e)| (k.clone(), e.to_json())).collect(),
            Payload::List(m) => m.iter().map(|(k, e)| (k.clone(), e.to_json())).collect(),
        };
        let mut pending: Vec<&Operation> = self.pending.values().collect();
        pending.sort_by_key(|op| (op.dot.replica, op.dot.counter));
        json!({
            "ctx": self.ctx.to_json(),
            "elements": elements,
            "pending": pending.into_iter().map(Operation::to_json).collect::<Vec<_>>(),
        })
    }

    pub fn normalize(&self) -> CanonicalState {
        CanonicalState(self.to_json().to_string())
    }

    pub fn query(&self) -> VisibleValue {
        match &self.payload {
            Payload::Rpq(m) => {
                let best = m
                    .values()
                    .filter_map(|e| e.value().map(|v| (e.id.clone(), v)))
                    .fold(None::<(String, i64)>, |best, (id, v)| match best {
                        Some((bid, bv)) if bv > v || (bv == v && bid < id) => Some((bid, bv)),
                        _ => Some((id, v)),
                    });
                VisibleValue::Rpq(best)
            }
            Payload::List(m) => VisibleValue::List(
                list_order(m)
                    .into_iter()
                    .filter(|e| e.existence() == Existence::Existent)
                    .map(|e| (e.id.clone(), e.attr()))
                    .collect(),
            ),
        }
    }
}

fn known<'a>(m: &'a BTreeMap<String, ListElement>, id: &str) -> Result<&'a ListElement, CrdtError> {
    m.get(id)
        .filter(|e| e.pos.is_some())
        .ok_or_else(|| CrdtError::UnknownElement(id.to_string()))
}

fn rpq_entry<'a>(m: &'a mut BTreeMap<String, RpqElement>, id: &str) -> &'a mut RpqElement {
    m.entry(id.to_string()).or_insert_with(|| RpqElement::new(id))
}

fn list_entry<'a>(m: &'a mut BTreeMap<String, ListElement>, id: &str) -> &'a mut ListElement {
    m.entry(id.to_string()).or_insert_with(|| ListElement::new(id))
}

/// Smallest position strictly after `left` among all positioned elements,
/// removed ones included.
fn next_position<'a>(m: &'a BTreeMap<String, ListElement>, left: Option<&PositionId>) -> Option<&'a PositionId> {
    m.values()
        .filter_map(|e| e.pos.as_ref())
        .filter(|p| left.is_none_or(|l| *p > l))
        .min()
}

/// Positioned elements sorted by position.
pub fn list_order(m: &BTreeMap<String, ListElement>) -> Vec<&ListElement> {
    let mut v: Vec<&ListElement> = m.values().filter(|e| e.pos.is_some()).collect();
    v.sort_by(|a, b| a.pos.cmp(&b.pos));
    v
}
