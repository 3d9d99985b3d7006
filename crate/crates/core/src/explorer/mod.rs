//! Explicit-state exploration of small replicated executions.
//!
//! A configuration fixes the data type, the number of replicas, the number of
//! client request slots (assigned round-robin unless overridden) and the
//! channel model. The explorer enumerates every interleaving of client steps
//! and message deliveries, checks invariants in every reachable state and
//! convergence in every terminal state.

mod config;
mod invariants;
mod search;
mod state;
mod traces;

use thiserror::Error;

use crate::replica::CrdtError;

pub use config::{
    slot_element, BugFlag, BugInfo, ChannelMode, ExplorationConfig, OpSpace, BUG_CATALOG, LIST_ATTRS,
    RPQ_ELEMENT, RPQ_INCREMENTS, RPQ_INITIAL_VALUES,
};
pub use invariants::{check_invariants, check_state, check_terminal, convergence_violations, Violation};
pub use search::{explore, explore_with, ExplorationReport, ExploreOptions, ViolationReport};
pub use state::{candidate_requests, enabled_events, initial_state, step, EventLabel, GlobalState};
pub use traces::{for_each_trace, run_schedule, HistoryLog, TraceRecord, TraceStats};

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("event {0} is not enabled")]
    NotEnabled(state::EventLabel),
    #[error("replica error: {0}")]
    Crdt(#[from] CrdtError),
}
