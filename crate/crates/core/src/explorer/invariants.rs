use std::collections::BTreeSet;

use crate::dot::ReplicaId;
use crate::element::Existence;
use crate::position::PositionId;

use super::config::ExplorationConfig;
use super::state::GlobalState;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub invariant: &'static str,
    pub replica: Option<ReplicaId>,
    pub detail: String,
}

impl Violation {
    fn at(invariant: &'static str, replica: usize, detail: String) -> Self {
        Violation {
            invariant,
            replica: Some(replica as ReplicaId),
            detail,
        }
    }
}

/// Checks that hold in every reachable state: each existent list element
/// has a well-formed position, and no two existent elements share one.
pub fn check_state(gs: &GlobalState) -> Vec<Violation> {
    let mut out = Vec::new();
    for (r, rep) in gs.replicas.iter().enumerate() {
        let Some(elems) = rep.list() else { continue };
        let mut seen: BTreeSet<&PositionId> = BTreeSet::new();
        for e in elems.values().filter(|e| e.existence() == Existence::Existent) {
            match &e.pos {
                None => out.push(Violation::at(
                    "position-defined",
                    r,
                    format!("element {} is visible without a position", e.id),
                )),
                Some(p) if !p.is_well_formed() => out.push(Violation::at(
                    "position-wellformed",
                    r,
                    format!("element {} has position {p}", e.id),
                )),
                Some(p) => {
                    if !seen.insert(p) {
                        out.push(Violation::at(
                            "position-unique",
                            r,
                            format!("element {} reuses position {p}", e.id),
                        ));
                    }
                }
            }
        }
    }
    out
}

/// Pairs of replicas that applied the same dots but hold different states.
pub fn convergence_violations(gs: &GlobalState) -> Vec<Violation> {
    let mut out = Vec::new();
    let canon: Vec<_> = gs.replicas.iter().map(|r| r.normalize()).collect();
    for i in 0..gs.replicas.len() {
        for j in i + 1..gs.replicas.len() {
            if gs.replicas[i].applied() == gs.replicas[j].applied() && canon[i] != canon[j] {
                out.push(Violation::at(
                    "convergence",
                    j,
                    format!("r{i} and r{j} applied the same operations but differ"),
                ));
            }
        }
    }
    out
}

/// Checks for a state with no slots left and nothing in flight.
pub fn check_terminal(gs: &GlobalState) -> Vec<Violation> {
    let mut out: Vec<Violation> = gs
        .replicas
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.pending.is_empty())
        .map(|(i, r)| Violation::at("buffer-liveness", i, format!("{} operations never applied", r.pending.len())))
        .collect();
    out.extend(convergence_violations(gs));
    out
}

/// Names of the invariants `gs` violates; terminal checks only apply when
/// `gs` is terminal.
pub fn check_invariants(config: &ExplorationConfig, gs: &GlobalState) -> Vec<&'static str> {
    let mut v = check_state(gs);
    if gs.is_terminal(config) {
        v.extend(check_terminal(gs));
    }
    let mut names: Vec<&'static str> = v.into_iter().map(|v| v.invariant).collect();
    names.dedup();
    names
}
