//! Request handling for one replica.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::place::{allocate, stray, Place, TieBreak};
use crate::stamp::{listing, Clock, Stamp};
use crate::store::{Queue, Sequence};
use crate::wire::Frame;
use crate::ServerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Flag {
    /// Apply a re-add whose element never arrived, at a fresh place.
    ReaddAccept,
    /// Never wait for dependencies.
    AssumeCausal,
    /// List update/remove/re-add of an element that never arrived creates it
    /// at an out-of-range place instead of waiting.
    DummyPosition,
    /// Order equal digits by descending (replica, counter) when indexing.
    IdgenOrder,
}

impl Flag {
    pub const ALL: [Flag; 4] = [Flag::ReaddAccept, Flag::AssumeCausal, Flag::DummyPosition, Flag::IdgenOrder];

    pub fn name(self) -> &'static str {
        match self {
            Flag::ReaddAccept => "bug1-readd-accept",
            Flag::AssumeCausal => "bug2-assume-causal",
            Flag::DummyPosition => "bug4-dummy-position",
            Flag::IdgenOrder => "bug7-idgen-order",
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Flag {
    type Err = ServerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Flag::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| ServerError::UnknownFlag(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Rpq,
    List,
}

impl FromStr for Kind {
    type Err = ServerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rpq" => Ok(Kind::Rpq),
            "list" => Ok(Kind::List),
            _ => Err(ServerError::Config(format!("unknown data type `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings {
    pub replica: u32,
    pub replicas: usize,
    pub kind: Kind,
    /// Apply remote operations on arrival.
    pub causal_assuming: bool,
    pub flags: BTreeSet<Flag>,
}

impl Settings {
    pub fn new(replica: u32, replicas: usize, kind: Kind) -> Self {
        Settings {
            replica,
            replicas,
            kind,
            causal_assuming: false,
            flags: BTreeSet::new(),
        }
    }

    pub fn with_flag(mut self, f: Flag) -> Self {
        self.flags.insert(f);
        self
    }

    fn has(&self, f: Flag) -> bool {
        self.flags.contains(&f)
    }
}

/// Client request body.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum Command {
    RpqAdd { id: String, value: i64 },
    RpqIncrease { id: String, delta: i64 },
    RpqRemove { id: String },
    ListInsert { id: String, anchor: Option<String>, attr: i64 },
    ListUpdate { id: String, attr: i64 },
    ListRemove { id: String },
    #[serde(rename = "list_readd")]
    ListReadd { id: String },
}

/// Effect body as shipped between replicas; an insert carries its place.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum Body {
    RpqAdd { id: String, value: i64 },
    RpqIncrease { id: String, delta: i64 },
    RpqRemove { id: String },
    ListInsert { id: String, anchor: Option<String>, attr: i64, pos: Place },
    ListUpdate { id: String, attr: i64 },
    ListRemove { id: String },
    #[serde(rename = "list_readd")]
    ListReadd { id: String },
}

impl Body {
    fn kind(&self) -> Kind {
        match self {
            Body::RpqAdd { .. } | Body::RpqIncrease { .. } | Body::RpqRemove { .. } => Kind::Rpq,
            _ => Kind::List,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Delta {
    dot: Stamp,
    deps: Vec<Stamp>,
    kind: Body,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Message {
    origin: u32,
    op: Delta,
    /// Sender's clock before it applied `op`.
    ctx: Clock,
}

enum Payload {
    Queue(Queue),
    Sequence(Sequence),
}

pub struct Replica {
    settings: Settings,
    counter: u64,
    clock: Clock,
    /// Received operations waiting on dependencies, in arrival order.
    waiting: Vec<Delta>,
    payload: Payload,
}

impl Replica {
    pub fn new(settings: Settings) -> Self {
        let payload = match settings.kind {
            Kind::Rpq => Payload::Queue(Queue::default()),
            Kind::List => {
                let tie = if settings.has(Flag::IdgenOrder) {
                    TieBreak::Descending
                } else {
                    TieBreak::Ascending
                };
                Payload::Sequence(Sequence::new(tie))
            }
        };
        Replica {
            clock: Clock::new(settings.replicas),
            settings,
            counter: 0,
            waiting: Vec::new(),
            payload,
        }
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    /// Accepts a client request and returns the Sync frames for every other
    /// replica, or the reason it was refused.
    pub fn client_op(&mut self, op: &Value) -> Result<Vec<Frame>, String> {
        let cmd = Command::deserialize(op).map_err(|e| format!("bad request: {e}"))?;
        let dot = Stamp(self.settings.replica, self.counter + 1);
        let delta = self.plan(cmd, dot)?;
        let msg = Message {
            origin: self.settings.replica,
            op: delta.clone(),
            ctx: self.clock.clone(),
        };
        self.counter = dot.1;
        self.apply(&delta);
        self.clock.record(dot);
        let msg = serde_json::to_value(&msg).expect("messages serialize");
        Ok((0..self.settings.replicas as u32)
            .filter(|&r| r != self.settings.replica)
            .map(|dest| Frame::Sync { dest, msg: msg.clone() })
            .collect())
    }

    fn plan(&self, cmd: Command, dot: Stamp) -> Result<Delta, String> {
        let unknown = |id: &str| format!("unknown element `{id}`");
        let (kind, deps) = match (&self.payload, cmd) {
            (Payload::Queue(q), Command::RpqAdd { id, value }) => {
                let deps = q.get(&id).map(|e| e.add_context()).unwrap_or_default();
                (Body::RpqAdd { id, value }, deps)
            }
            (Payload::Queue(_), Command::RpqIncrease { id, delta }) => (Body::RpqIncrease { id, delta }, Vec::new()),
            (Payload::Queue(q), Command::RpqRemove { id }) => {
                let deps = q.get(&id).map(|e| e.remove_context()).unwrap_or_default();
                (Body::RpqRemove { id }, deps)
            }
            (Payload::Sequence(s), Command::ListInsert { id, anchor, attr }) => {
                if s.placed(&id).is_some() {
                    return Err(format!("element `{id}` already exists"));
                }
                let (left, deps) = match &anchor {
                    None => (None, Vec::new()),
                    Some(a) => {
                        let e = s.placed(a).ok_or_else(|| unknown(a))?;
                        (e.place.as_ref(), e.creator.into_iter().collect())
                    }
                };
                let pos = allocate(left, s.successor(left), dot.0, dot.1);
                (Body::ListInsert { id, anchor, attr, pos }, deps)
            }
            (Payload::Sequence(s), Command::ListUpdate { id, attr }) => {
                let deps = s.placed(&id).ok_or_else(|| unknown(&id))?.update_context();
                (Body::ListUpdate { id, attr }, deps)
            }
            (Payload::Sequence(s), Command::ListRemove { id }) => {
                let deps = s.placed(&id).ok_or_else(|| unknown(&id))?.remove_context();
                (Body::ListRemove { id }, deps)
            }
            (Payload::Sequence(s), Command::ListReadd { id }) => {
                let deps = s.placed(&id).ok_or_else(|| unknown(&id))?.readd_context();
                (Body::ListReadd { id }, deps)
            }
            (_, cmd) => return Err(format!("request {cmd:?} does not fit this replica")),
        };
        Ok(Delta { dot, deps, kind })
    }

    /// Handles a message from another replica.
    pub fn sync(&mut self, msg: &Value) -> Result<(), String> {
        let msg = Message::deserialize(msg).map_err(|e| format!("bad sync message: {e}"))?;
        let dot = msg.op.dot;
        if msg.op.kind.kind() != self.settings.kind {
            return Err(format!("operation {dot:?} is for another data type"));
        }
        if self.clock.has(dot) || self.waiting.iter().any(|d| d.dot == dot) {
            return Err(format!("operation {dot:?} delivered twice"));
        }
        self.waiting.push(msg.op);
        while let Some(i) = self.waiting.iter().position(|d| self.ready(d)) {
            let d = self.waiting.remove(i);
            self.apply(&d);
            self.clock.record(d.dot);
        }
        Ok(())
    }

    fn ready(&self, d: &Delta) -> bool {
        if self.settings.causal_assuming || self.settings.has(Flag::AssumeCausal) {
            return true;
        }
        if self.settings.has(Flag::ReaddAccept) && matches!(d.kind, Body::ListReadd { .. }) {
            return true;
        }
        if self.settings.has(Flag::DummyPosition) && self.targets_missing(&d.kind) {
            return true;
        }
        self.clock.has_all(&d.deps)
    }

    fn targets_missing(&self, body: &Body) -> bool {
        let Payload::Sequence(s) = &self.payload else { return false };
        match body {
            Body::ListUpdate { id, .. } | Body::ListRemove { id } | Body::ListReadd { id } => s.placed(id).is_none(),
            _ => false,
        }
    }

    fn apply(&mut self, d: &Delta) {
        let me = self.settings.replica;
        let readd_accept = self.settings.has(Flag::ReaddAccept);
        let dummy = self.settings.has(Flag::DummyPosition);
        let deps = &d.deps;
        match (&mut self.payload, &d.kind) {
            (Payload::Queue(q), Body::RpqAdd { id, value }) => q.update(id, |e| {
                for s in deps {
                    e.adds.remove(s);
                    e.removes.remove(s);
                    e.bumps.remove(s);
                }
                e.adds.insert(d.dot, *value);
                e.ever = true;
            }),
            (Payload::Queue(q), Body::RpqIncrease { id, delta }) => q.update(id, |e| {
                e.bumps.insert(d.dot, *delta);
            }),
            (Payload::Queue(q), Body::RpqRemove { id }) => q.update(id, |e| {
                for s in deps {
                    e.adds.remove(s);
                    e.bumps.remove(s);
                }
                e.removes.insert(d.dot);
            }),
            (Payload::Sequence(s), body) => {
                if let Body::ListInsert { id, pos, .. } = body {
                    s.place(id, pos.clone());
                } else if let Body::ListReadd { id } = body {
                    if readd_accept && s.placed(id).is_none() {
                        let fresh = allocate(s.last_place(), None, me, d.dot.1);
                        s.place(id, fresh);
                    }
                }
                if dummy && self_missing(s, body) {
                    let id = body_id(body);
                    s.place(id, stray(me));
                }
                apply_list(s, d, body);
            }
            (Payload::Queue(_), _) => unreachable!("kind checked on arrival"),
        }
    }

    /// Canonical state: sorted-key compact JSON of the clock, every element
    /// and the waiting operations.
    pub fn canonical(&self) -> String {
        let elements = match &self.payload {
            Payload::Queue(q) => q.to_json(),
            Payload::Sequence(s) => s.to_json(),
        };
        let mut waiting: Vec<&Delta> = self.waiting.iter().collect();
        waiting.sort_by_key(|d| (d.dot.0, d.dot.1));
        let waiting: Vec<Value> = waiting
            .into_iter()
            .map(|d| {
                let mut v = serde_json::to_value(d).expect("deltas serialize");
                v["deps"] = json!(listing(&d.deps));
                v
            })
            .collect();
        json!({ "ctx": self.clock.to_json(), "elements": elements, "pending": waiting }).to_string()
    }

    /// What a client would read: the top of the queue, or the live list.
    pub fn visible(&self) -> Value {
        match &self.payload {
            Payload::Queue(q) => json!(q.top()),
            Payload::Sequence(s) => json!(s.visible()),
        }
    }
}

fn body_id(body: &Body) -> &str {
    match body {
        Body::ListInsert { id, .. } | Body::ListUpdate { id, .. } | Body::ListRemove { id } | Body::ListReadd { id } => id,
        Body::RpqAdd { id, .. } | Body::RpqIncrease { id, .. } | Body::RpqRemove { id } => id,
    }
}

fn self_missing(s: &Sequence, body: &Body) -> bool {
    matches!(body, Body::ListUpdate { .. } | Body::ListRemove { .. } | Body::ListReadd { .. })
        && s.placed(body_id(body)).is_none()
}

fn apply_list(s: &mut Sequence, d: &Delta, body: &Body) {
    let e = s.entry(body_id(body));
    match body {
        Body::ListInsert { attr, .. } => {
            e.creator.get_or_insert(d.dot);
            e.adds.insert(d.dot);
            e.attrs.insert(d.dot, *attr);
            e.ever = true;
        }
        Body::ListUpdate { attr, .. } => {
            for x in &d.deps {
                e.attrs.remove(x);
            }
            e.attrs.insert(d.dot, *attr);
        }
        Body::ListRemove { .. } => {
            for x in &d.deps {
                e.adds.remove(x);
            }
            e.removes.insert(d.dot);
        }
        Body::ListReadd { .. } => {
            for x in &d.deps {
                e.removes.remove(x);
            }
            e.adds.insert(d.dot);
            e.ever = true;
        }
        _ => unreachable!("list bodies only"),
    }
}
