use std::ops::ControlFlow;

use crate::replica::CanonicalState;

use super::config::ExplorationConfig;
use super::invariants::check_state;
use super::state::{enabled_events, fire, initial_state, step, EventLabel, GlobalState};
use super::ExploreError;

/// A complete execution and the state each replica ends in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub schedule: Vec<EventLabel>,
    pub oracle: Vec<CanonicalState>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceStats {
    pub emitted: u64,
    /// Executions cut short by a per-state invariant violation.
    pub pruned: u64,
    /// The sink asked to stop before the enumeration finished.
    pub stopped: bool,
}

/// Events applied so far, optionally with every replica's state after each.
#[derive(Debug, Clone, Default)]
pub struct HistoryLog {
    keep_states: bool,
    events: Vec<EventLabel>,
    states: Vec<Vec<CanonicalState>>,
}

impl HistoryLog {
    pub fn new(keep_states: bool) -> Self {
        HistoryLog {
            keep_states,
            ..Default::default()
        }
    }

    pub fn push(&mut self, ev: EventLabel, gs: &GlobalState) {
        self.events.push(ev);
        if self.keep_states {
            self.states.push(gs.replicas.iter().map(|r| r.normalize()).collect());
        }
    }

    pub fn pop(&mut self) {
        self.events.pop();
        if self.keep_states {
            self.states.pop();
        }
    }

    pub fn events(&self) -> &[EventLabel] {
        &self.events
    }

    /// Per-replica states after event `i`, when states are kept.
    pub fn states_after(&self, i: usize) -> Option<&[CanonicalState]> {
        self.states.get(i).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Enumerates every complete execution depth-first in enabled-event order
/// and hands each to `sink`. The order is a function of the configuration
/// alone.
pub fn for_each_trace<F>(config: &ExplorationConfig, mut sink: F) -> Result<TraceStats, ExploreError>
where
    F: FnMut(TraceRecord) -> ControlFlow<()>,
{
    let root = initial_state(config)?;
    let mut stats = TraceStats::default();
    let mut log = HistoryLog::new(false);
    if check_state(&root).is_empty() {
        let _ = dfs(config, &root, &mut log, &mut sink, &mut stats)?;
    } else {
        stats.pruned += 1;
    }
    Ok(stats)
}

fn dfs<F>(
    config: &ExplorationConfig,
    gs: &GlobalState,
    log: &mut HistoryLog,
    sink: &mut F,
    stats: &mut TraceStats,
) -> Result<ControlFlow<()>, ExploreError>
where
    F: FnMut(TraceRecord) -> ControlFlow<()>,
{
    if gs.is_terminal(config) {
        stats.emitted += 1;
        let rec = TraceRecord {
            schedule: log.events().to_vec(),
            oracle: gs.replicas.iter().map(|r| r.normalize()).collect(),
        };
        if sink(rec).is_break() {
            stats.stopped = true;
            return Ok(ControlFlow::Break(()));
        }
        return Ok(ControlFlow::Continue(()));
    }
    for ev in enabled_events(config, gs) {
        let next = fire(config, gs, &ev)?;
        if !check_state(&next).is_empty() {
            stats.pruned += 1;
            continue;
        }
        log.push(ev, &next);
        let flow = dfs(config, &next, log, sink, stats)?;
        log.pop();
        if flow.is_break() {
            return Ok(flow);
        }
    }
    Ok(ControlFlow::Continue(()))
}

/// Replays `schedule` on the model from the initial state, keeping every
/// intermediate state.
pub fn run_schedule(config: &ExplorationConfig, schedule: &[EventLabel]) -> Result<(GlobalState, HistoryLog), ExploreError> {
    let mut gs = initial_state(config)?;
    let mut log = HistoryLog::new(true);
    for ev in schedule {
        gs = step(config, &gs, ev)?;
        log.push(ev.clone(), &gs);
    }
    Ok((gs, log))
}
