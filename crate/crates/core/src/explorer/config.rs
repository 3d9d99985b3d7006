use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dot::ReplicaId;
use crate::op::{DataType, Request};
use crate::replica::{Behavior, Strategy};

use super::ExploreError;

/// Ordering guarantee of the simulated network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    /// Any undelivered message may be delivered next.
    #[default]
    Arbitrary,
    /// A message is deliverable only once everything its origin had applied
    /// before sending it is applied at the destination.
    Causal,
}

impl ChannelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelMode::Arbitrary => "arbitrary",
            ChannelMode::Causal => "causal",
        }
    }
}

impl std::str::FromStr for ChannelMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "arbitrary" => Ok(ChannelMode::Arbitrary),
            "causal" => Ok(ChannelMode::Causal),
            other => Err(format!("unknown channel mode `{other}` (expected arbitrary or causal)")),
        }
    }
}

/// Known implementation defects that can be switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BugFlag {
    #[serde(rename = "bug1-readd-accept")]
    ReaddAccept,
    #[serde(rename = "bug2-assume-causal")]
    AssumeCausal,
    #[serde(rename = "bug4-dummy-position")]
    DummyPosition,
    #[serde(rename = "bug7-idgen-order")]
    IdgenOrder,
}

/// One row of the bug catalog.
#[derive(Debug, Clone, Copy)]
pub struct BugInfo {
    pub flag: BugFlag,
    pub issue: u32,
    pub class: &'static str,
    /// Whether the explorer can run with the flag; the others only exist in
    /// the replica server.
    pub model_level: bool,
    pub summary: &'static str,
}

pub const BUG_CATALOG: [BugInfo; 4] = [
    BugInfo {
        flag: BugFlag::ReaddAccept,
        issue: 1,
        class: "design",
        model_level: true,
        summary: "a re-add whose original insert has not arrived is applied at once with a freshly allocated position; the late insert is then ignored",
    },
    BugInfo {
        flag: BugFlag::AssumeCausal,
        issue: 2,
        class: "assumption",
        model_level: true,
        summary: "dependency checks are skipped on the assumption that the network delivers causally",
    },
    BugInfo {
        flag: BugFlag::DummyPosition,
        issue: 4,
        class: "transcription",
        model_level: false,
        summary: "an operation on a list element whose insert has not arrived materializes a dummy element at an out-of-range position instead of waiting",
    },
    BugInfo {
        flag: BugFlag::IdgenOrder,
        issue: 7,
        class: "assumption",
        model_level: false,
        summary: "the position generator orders equal digits by descending (replica, counter), breaking consistency with insert order",
    },
];

impl BugFlag {
    pub const ALL: [BugFlag; 4] = [
        BugFlag::ReaddAccept,
        BugFlag::AssumeCausal,
        BugFlag::DummyPosition,
        BugFlag::IdgenOrder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BugFlag::ReaddAccept => "bug1-readd-accept",
            BugFlag::AssumeCausal => "bug2-assume-causal",
            BugFlag::DummyPosition => "bug4-dummy-position",
            BugFlag::IdgenOrder => "bug7-idgen-order",
        }
    }

    pub fn info(self) -> &'static BugInfo {
        BUG_CATALOG.iter().find(|b| b.flag == self).expect("every flag is catalogued")
    }
}

impl fmt::Display for BugFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BugFlag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BugFlag::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| format!("unknown bug flag `{s}`"))
    }
}

/// The candidate requests at each client slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum OpSpace {
    /// RPQ: add 10 or 20, increase by -3 or 4, remove, all on one element.
    /// List: insert the slot's fresh element after the head or any existent
    /// element with attribute 10 or 20, update an existent element to 10 or
    /// 20, remove an existent element, re-add any known element.
    #[default]
    Standard,
    /// Slot `i` may only issue request `i`, if it is valid at that point.
    Fixed(Vec<Request>),
}

pub const RPQ_ELEMENT: &str = "e";
pub const RPQ_INITIAL_VALUES: [i64; 2] = [10, 20];
pub const RPQ_INCREMENTS: [i64; 2] = [-3, 4];
pub const LIST_ATTRS: [i64; 2] = [10, 20];

/// Element created by an insert issued at `slot` in the standard list space.
pub fn slot_element(slot: usize) -> String {
    const NAMES: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    match NAMES.get(slot) {
        Some(&c) => (c as char).to_string(),
        None => format!("e{slot}"),
    }
}

/// Semantic parameters of one exploration. Everything here feeds the
/// fingerprint stored in generated test cases.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExplorationConfig {
    pub data_type: DataType,
    /// Replica count.
    pub replicas: usize,
    /// Client request slots.
    pub requests: usize,
    pub op_space: OpSpace,
    pub channel: ChannelMode,
    pub strategy: Strategy,
    pub bugs: BTreeSet<BugFlag>,
    /// Target replica of each slot; round-robin when `None`.
    pub targets: Option<Vec<ReplicaId>>,
}

impl ExplorationConfig {
    pub fn new(data_type: DataType, replicas: usize, requests: usize) -> Self {
        ExplorationConfig {
            data_type,
            replicas,
            requests,
            op_space: OpSpace::Standard,
            channel: ChannelMode::Arbitrary,
            strategy: Strategy::Standard,
            bugs: BTreeSet::new(),
            targets: None,
        }
    }

    pub fn with_channel(mut self, channel: ChannelMode) -> Self {
        self.channel = channel;
        self
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_bug(mut self, bug: BugFlag) -> Self {
        self.bugs.insert(bug);
        self
    }

    pub fn with_targets(mut self, targets: Vec<ReplicaId>) -> Self {
        self.targets = Some(targets);
        self
    }

    pub fn with_fixed_ops(mut self, ops: Vec<Request>) -> Self {
        self.op_space = OpSpace::Fixed(ops);
        self
    }

    pub fn validate(&self) -> Result<(), ExploreError> {
        let bad = |msg: String| Err(ExploreError::BadConfig(msg));
        if !(1..=3).contains(&self.replicas) {
            return bad(format!("replica count must be 1..=3, got {}", self.replicas));
        }
        if self.replicas > 1 && self.requests < self.replicas {
            return bad(format!(
                "need at least one request per replica (q >= n), got q={} n={}",
                self.requests, self.replicas
            ));
        }
        if let Some(t) = &self.targets {
            if t.len() != self.requests {
                return bad(format!("{} slot targets given for {} requests", t.len(), self.requests));
            }
            if let Some(r) = t.iter().find(|&&r| r as usize >= self.replicas) {
                return bad(format!("slot target r{r} out of range"));
            }
        }
        if let OpSpace::Fixed(ops) = &self.op_space {
            if ops.len() != self.requests {
                return bad(format!("{} fixed requests given for {} slots", ops.len(), self.requests));
            }
            if let Some(r) = ops.iter().find(|r| r.data_type() != self.data_type) {
                return bad(format!("request {r} does not belong to a {} configuration", self.data_type));
            }
        }
        if let Some(b) = self.bugs.iter().find(|b| !b.info().model_level) {
            return bad(format!("{b} only exists in the replica server; it cannot be explored"));
        }
        Ok(())
    }

    pub fn target(&self, slot: usize) -> ReplicaId {
        match &self.targets {
            Some(t) => t[slot],
            None => (slot % self.replicas) as ReplicaId,
        }
    }

    /// Remote-path behaviour of every replica in the model.
    pub fn behavior(&self) -> Behavior {
        Behavior {
            strategy: self.effective_strategy(),
            readd_accept: self.bugs.contains(&BugFlag::ReaddAccept),
        }
    }

    fn effective_strategy(&self) -> Strategy {
        if self.bugs.contains(&BugFlag::AssumeCausal) {
            Strategy::CausalAssuming
        } else {
            self.strategy
        }
    }

    /// Events in every terminal schedule: each request plus its delivery to
    /// every other replica.
    pub fn schedule_len(&self) -> usize {
        self.requests * self.replicas
    }

    /// Sorted-key JSON of the semantic fields. The assume-causal flag is
    /// folded into the strategy it is equivalent to.
    pub fn to_json(&self) -> Value {
        let bugs: Vec<&str> = self
            .bugs
            .iter()
            .filter(|b| **b != BugFlag::AssumeCausal)
            .map(|b| b.as_str())
            .collect();
        let op_space = match &self.op_space {
            OpSpace::Standard => Value::from("standard"),
            OpSpace::Fixed(ops) => Value::Array(ops.iter().map(Request::to_json).collect()),
        };
        let targets: Vec<ReplicaId> = (0..self.requests).map(|s| self.target(s)).collect();
        json!({
            "bugs": bugs,
            "channel": self.channel.as_str(),
            "n": self.replicas,
            "op_space": op_space,
            "q": self.requests,
            "strategy": self.effective_strategy().as_str(),
            "targets": targets,
            "type": self.data_type.as_str(),
        })
    }

    /// Stable hex digest of [`Self::to_json`].
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_json().to_string().as_bytes());
        hex::encode(&digest[..16])
    }
}
