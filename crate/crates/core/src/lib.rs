//! Replicated priority queue and list CRDTs with remove-win semantics, an
//! explicit-state explorer that enumerates every message reordering of small
//! replicated executions, and conversion of explored traces into replayable
//! test cases.

pub mod dot;
pub mod element;
pub mod explorer;
pub mod op;
pub mod position;
pub mod replica;
pub mod testgen;

pub use dot::{CausalContext, Dot, ReplicaId};
pub use element::{Existence, ListElement, RpqElement};
pub use op::{DataType, OpKind, Operation, Request, SyncMessage};
pub use position::{generate_between, PositionId, Triple, BASE};
pub use replica::{Behavior, CanonicalState, CrdtError, ReplicaState, Strategy, VisibleValue};
