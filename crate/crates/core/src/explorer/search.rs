use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use serde_json::{json, Map, Value};
use tracing::{debug, info};

use crate::dot::ReplicaId;
use crate::replica::CanonicalState;

use super::config::ExplorationConfig;
use super::invariants::{check_state, check_terminal, Violation};
use super::state::{enabled_events, fire, initial_state, EventLabel, GlobalState};
use super::ExploreError;

#[derive(Debug, Clone)]
pub struct ExploreOptions {
    /// Merge states with equal fingerprints. Without it the search walks the
    /// full execution tree.
    pub dedup: bool,
    /// Stop once this many transitions have been taken.
    pub state_cap: Option<u64>,
    pub time_cap: Option<Duration>,
    /// Counterexamples kept in the report; counting continues past it.
    pub violation_cap: usize,
    /// Record the multiset of terminal per-replica states.
    pub collect_oracles: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            dedup: true,
            state_cap: None,
            time_cap: None,
            violation_cap: 100,
            collect_oracles: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViolationReport {
    pub invariant: String,
    pub replica: Option<ReplicaId>,
    pub detail: String,
    /// Shortest schedule from the initial state that reaches the violation.
    pub schedule: Vec<EventLabel>,
}

impl ViolationReport {
    pub fn to_json(&self) -> Value {
        json!({
            "detail": self.detail,
            "invariant": self.invariant,
            "replica": self.replica,
            "schedule": self.schedule.iter().map(EventLabel::to_wire).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExplorationReport {
    pub config: Value,
    /// Transitions taken, including ones into already-seen states.
    pub states_visited: u64,
    pub distinct_states: u64,
    pub terminal_states: u64,
    /// Complete executions, counted with multiplicity through merged states.
    pub terminal_traces: u64,
    /// Violating states found, per invariant.
    pub violation_counts: BTreeMap<String, u64>,
    /// The first `violation_cap` counterexamples in search order.
    pub violations: Vec<ViolationReport>,
    pub exhaustive: bool,
    pub wall_time: Duration,
    /// Terminal per-replica states with the number of executions ending in
    /// each, when requested.
    pub terminal_oracles: Option<BTreeMap<Vec<CanonicalState>, u64>>,
}

impl ExplorationReport {
    pub fn total_violations(&self) -> u64 {
        self.violation_counts.values().sum()
    }

    pub fn has_violations(&self) -> bool {
        self.total_violations() > 0
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("config".into(), self.config.clone());
        m.insert("distinct_states".into(), self.distinct_states.into());
        m.insert("exhaustive".into(), self.exhaustive.into());
        m.insert("states_visited".into(), self.states_visited.into());
        m.insert("terminal_states".into(), self.terminal_states.into());
        m.insert("terminal_traces".into(), self.terminal_traces.into());
        m.insert("violation_counts".into(), json!(self.violation_counts));
        m.insert(
            "violations".into(),
            Value::Array(self.violations.iter().map(ViolationReport::to_json).collect()),
        );
        m.insert("wall_time_ms".into(), (self.wall_time.as_millis() as u64).into());
        Value::Object(m)
    }
}

pub fn explore(config: &ExplorationConfig) -> Result<ExplorationReport, ExploreError> {
    explore_with(config, &ExploreOptions::default())
}

const ROOT: u32 = u32::MAX;

struct Node {
    parent: u32,
    event: Option<EventLabel>,
}

struct Search<'a> {
    config: &'a ExplorationConfig,
    opts: &'a ExploreOptions,
    nodes: Vec<Node>,
    report: ExplorationReport,
    started: Instant,
}

impl Search<'_> {
    fn schedule(&self, mut id: u32) -> Vec<EventLabel> {
        let mut out = Vec::new();
        while id != ROOT {
            let n = &self.nodes[id as usize];
            out.extend(n.event.clone());
            id = n.parent;
        }
        out.reverse();
        out
    }

    fn record(&mut self, node: u32, found: Vec<Violation>) {
        for v in found {
            *self.report.violation_counts.entry(v.invariant.to_string()).or_default() += 1;
            if self.report.violations.len() < self.opts.violation_cap {
                let schedule = self.schedule(node);
                debug!(invariant = v.invariant, len = schedule.len(), "violation");
                self.report.violations.push(ViolationReport {
                    invariant: v.invariant.to_string(),
                    replica: v.replica,
                    detail: v.detail,
                    schedule,
                });
            }
        }
    }

    fn add_node(&mut self, parent: u32, event: Option<EventLabel>) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node { parent, event });
        self.report.distinct_states += 1;
        id
    }

    fn out_of_budget(&self) -> bool {
        if self.opts.state_cap.is_some_and(|cap| self.report.states_visited > cap) {
            return true;
        }
        self.report.states_visited % 4096 == 0
            && self.opts.time_cap.is_some_and(|t| self.started.elapsed() > t)
    }
}

/// Breadth-first search by event count. Every path to a state has the same
/// length (one event per step, and the state records how many slots and
/// deliveries happened), so merging within a layer loses no path counts.
pub fn explore_with(config: &ExplorationConfig, opts: &ExploreOptions) -> Result<ExplorationReport, ExploreError> {
    let started = Instant::now();
    let root = initial_state(config)?;
    let mut s = Search {
        config,
        opts,
        nodes: Vec::new(),
        report: ExplorationReport {
            config: config.to_json(),
            states_visited: 0,
            distinct_states: 0,
            terminal_states: 0,
            terminal_traces: 0,
            violation_counts: BTreeMap::new(),
            violations: Vec::new(),
            exhaustive: true,
            wall_time: Duration::ZERO,
            terminal_oracles: opts.collect_oracles.then(BTreeMap::new),
        },
        started,
    };
    let root_id = s.add_node(ROOT, None);
    let initial = check_state(&root);
    let mut layer: Vec<(GlobalState, u32, u64)> = if initial.is_empty() {
        vec![(root, root_id, 1)]
    } else {
        s.record(root_id, initial);
        Vec::new()
    };

    'layers: while !layer.is_empty() {
        let mut next: Vec<(GlobalState, u32, u64)> = Vec::new();
        // Fingerprint -> index into `next`, or None for a pruned state.
        let mut index: HashMap<u128, Option<usize>> = HashMap::new();
        for (gs, id, paths) in layer {
            if gs.is_terminal(s.config) {
                s.report.terminal_states += 1;
                s.report.terminal_traces = s.report.terminal_traces.saturating_add(paths);
                let found = check_terminal(&gs);
                s.record(id, found);
                if let Some(oracles) = s.report.terminal_oracles.as_mut() {
                    let key: Vec<CanonicalState> = gs.replicas.iter().map(|r| r.normalize()).collect();
                    *oracles.entry(key).or_default() += paths;
                }
                continue;
            }
            for ev in enabled_events(s.config, &gs) {
                s.report.states_visited += 1;
                if s.out_of_budget() {
                    s.report.exhaustive = false;
                    info!(visited = s.report.states_visited, "budget exhausted");
                    break 'layers;
                }
                let succ = fire(s.config, &gs, &ev)?;
                let fp = s.opts.dedup.then(|| succ.fingerprint());
                if let Some(fp) = fp {
                    if let Some(slot) = index.get(&fp) {
                        if let Some(i) = slot {
                            next[*i].2 = next[*i].2.saturating_add(paths);
                        }
                        continue;
                    }
                }
                let nid = s.add_node(id, Some(ev));
                let found = check_state(&succ);
                if found.is_empty() {
                    if let Some(fp) = fp {
                        index.insert(fp, Some(next.len()));
                    }
                    next.push((succ, nid, paths));
                } else {
                    if let Some(fp) = fp {
                        index.insert(fp, None);
                    }
                    s.record(nid, found);
                }
            }
        }
        layer = next;
    }

    s.report.wall_time = s.started.elapsed();
    info!(
        distinct = s.report.distinct_states,
        traces = s.report.terminal_traces,
        violations = s.report.total_violations(),
        "exploration finished"
    );
    Ok(s.report)
}
