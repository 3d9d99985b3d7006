//! Client requests, dotted operations and the synchronization messages that
//! carry them between replicas.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dot::{CausalContext, Dot, ReplicaId};
use crate::position::PositionId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Rpq,
    List,
}

impl DataType {
    pub fn as_str(self) -> &'static str {
        match self {
            DataType::Rpq => "rpq",
            DataType::List => "list",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DataType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rpq" => Ok(DataType::Rpq),
            "list" => Ok(DataType::List),
            other => Err(format!("unknown data type `{other}` (expected rpq or list)")),
        }
    }
}

/// A request as issued by a client to one replica, before the replica has
/// assigned it a dot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    RpqAdd { id: String, value: i64 },
    RpqIncrease { id: String, delta: i64 },
    RpqRemove { id: String },
    /// `anchor: None` inserts at the head of the list.
    ListInsert { id: String, anchor: Option<String>, attr: i64 },
    ListUpdate { id: String, attr: i64 },
    ListRemove { id: String },
    #[serde(rename = "list_readd")]
    ListReAdd { id: String },
}

impl Request {
    pub fn data_type(&self) -> DataType {
        match self {
            Request::RpqAdd { .. } | Request::RpqIncrease { .. } | Request::RpqRemove { .. } => DataType::Rpq,
            _ => DataType::List,
        }
    }

    pub fn element(&self) -> &str {
        match self {
            Request::RpqAdd { id, .. }
            | Request::RpqIncrease { id, .. }
            | Request::RpqRemove { id }
            | Request::ListInsert { id, .. }
            | Request::ListUpdate { id, .. }
            | Request::ListRemove { id }
            | Request::ListReAdd { id } => id,
        }
    }

    /// Sorted-key JSON object, e.g. `{"id":"e","op":"rpq_add","value":10}`.
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("requests always serialize")
    }

    pub fn from_json(v: &Value) -> Result<Self, serde_json::Error> {
        Request::deserialize(v)
    }
}

impl fmt::Display for Request {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Request::RpqAdd { id, value } => write!(f, "add({id},{value})"),
            Request::RpqIncrease { id, delta } => write!(f, "increase({id},{delta})"),
            Request::RpqRemove { id } => write!(f, "remove({id})"),
            Request::ListInsert { id, anchor, attr } => {
                write!(f, "insert({id},after {},{attr})", anchor.as_deref().unwrap_or("HEAD"))
            }
            Request::ListUpdate { id, attr } => write!(f, "update({id},{attr})"),
            Request::ListRemove { id } => write!(f, "remove({id})"),
            Request::ListReAdd { id } => write!(f, "readd({id})"),
        }
    }
}

/// The effect of an accepted request. Identical to the request except that an
/// insert carries the position its origin allocated.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OpKind {
    RpqAdd { id: String, value: i64 },
    RpqIncrease { id: String, delta: i64 },
    RpqRemove { id: String },
    ListInsert { id: String, anchor: Option<String>, attr: i64, pos: PositionId },
    ListUpdate { id: String, attr: i64 },
    ListRemove { id: String },
    ListReAdd { id: String },
}

impl OpKind {
    pub fn element(&self) -> &str {
        match self {
            OpKind::RpqAdd { id, .. }
            | OpKind::RpqIncrease { id, .. }
            | OpKind::RpqRemove { id }
            | OpKind::ListInsert { id, .. }
            | OpKind::ListUpdate { id, .. }
            | OpKind::ListRemove { id }
            | OpKind::ListReAdd { id } => id,
        }
    }

    pub fn request(&self) -> Request {
        match self.clone() {
            OpKind::RpqAdd { id, value } => Request::RpqAdd { id, value },
            OpKind::RpqIncrease { id, delta } => Request::RpqIncrease { id, delta },
            OpKind::RpqRemove { id } => Request::RpqRemove { id },
            OpKind::ListInsert { id, anchor, attr, .. } => Request::ListInsert { id, anchor, attr },
            OpKind::ListUpdate { id, attr } => Request::ListUpdate { id, attr },
            OpKind::ListRemove { id } => Request::ListRemove { id },
            OpKind::ListReAdd { id } => Request::ListReAdd { id },
        }
    }

    pub fn is_readd(&self) -> bool {
        matches!(self, OpKind::ListReAdd { .. })
    }

    pub fn to_json(&self) -> Value {
        let mut v = self.request().to_json();
        if let OpKind::ListInsert { pos, .. } = self {
            v.as_object_mut()
                .expect("requests serialize as objects")
                .insert("pos".into(), pos.to_json());
        }
        v
    }
}

/// A dotted operation. `deps` lists the dots that must already be applied
/// at a replica before the effect may be applied there.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Operation {
    pub dot: Dot,
    pub kind: OpKind,
    pub deps: BTreeSet<Dot>,
}

impl Operation {
    pub fn to_json(&self) -> Value {
        let mut deps: Vec<&Dot> = self.deps.iter().collect();
        deps.sort_by_key(|d| (d.replica, d.counter));
        json!({
            "deps": deps.into_iter().map(|d| d.to_json()).collect::<Vec<_>>(),
            "dot": self.dot.to_json(),
            "kind": self.kind.to_json(),
        })
    }
}

/// What a replica broadcasts after accepting a client request.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SyncMessage {
    pub origin: ReplicaId,
    pub op: Operation,
    /// The origin's context just before the operation was applied there.
    pub ctx: CausalContext,
}

impl SyncMessage {
    pub fn dot(&self) -> Dot {
        self.op.dot
    }

    pub fn to_json(&self) -> Value {
        json!({
            "ctx": self.ctx.to_json(),
            "op": self.op.to_json(),
            "origin": self.origin,
        })
    }
}
