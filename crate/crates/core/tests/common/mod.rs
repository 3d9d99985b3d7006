//! Naive enumeration of every execution of a fixed request set, written
//! against the replica API only. Used as an oracle for the explorer.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use replicheck_core::{Behavior, DataType, Existence, ReplicaId, ReplicaState, Request, SyncMessage, BASE};

#[derive(Debug, Default, PartialEq, Eq)]
pub struct Outcome {
    /// Complete executions.
    pub traces: u64,
    /// Invariants broken by some execution.
    pub violations: BTreeSet<&'static str>,
    /// Terminal per-replica canonical states with their execution counts.
    pub oracles: BTreeMap<Vec<String>, u64>,
}

impl Outcome {
    pub fn converges(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone)]
struct World {
    replicas: Vec<ReplicaState>,
    next: usize,
    flight: Vec<(ReplicaId, SyncMessage)>,
}

pub struct Scenario<'a> {
    pub data_type: DataType,
    pub replicas: usize,
    /// Request of each slot with its target.
    pub ops: &'a [(Request, ReplicaId)],
    pub behavior: Behavior,
    /// Deliver a message only after everything its sender had applied.
    pub causal: bool,
}

pub fn enumerate(s: &Scenario) -> Outcome {
    let world = World {
        replicas: (0..s.replicas).map(|r| ReplicaState::new(s.data_type, r as ReplicaId, s.replicas)).collect(),
        next: 0,
        flight: Vec::new(),
    };
    let mut out = Outcome::default();
    walk(s, world, &mut out);
    out
}

fn position_faults(w: &World) -> BTreeSet<&'static str> {
    let mut bad = BTreeSet::new();
    for rep in &w.replicas {
        let Some(elems) = rep.list() else { continue };
        let mut seen = Vec::new();
        for e in elems.values().filter(|e| e.existence() == Existence::Existent) {
            match &e.pos {
                None => {
                    bad.insert("position-defined");
                }
                Some(p) if p.path().is_empty() || p.path().iter().any(|t| t.digit >= BASE || t.counter == 0) => {
                    bad.insert("position-wellformed");
                }
                Some(p) => {
                    if seen.contains(&p) {
                        bad.insert("position-unique");
                    }
                    seen.push(p);
                }
            }
        }
    }
    bad
}

fn finish(w: &World, out: &mut Outcome) {
    out.traces += 1;
    let canon: Vec<String> = w.replicas.iter().map(|r| r.normalize().into_string()).collect();
    if w.replicas.iter().any(|r| !r.pending.is_empty()) {
        out.violations.insert("buffer-liveness");
    }
    for i in 0..w.replicas.len() {
        for j in i + 1..w.replicas.len() {
            if w.replicas[i].ctx == w.replicas[j].ctx && canon[i] != canon[j] {
                out.violations.insert("convergence");
            }
        }
    }
    *out.oracles.entry(canon).or_default() += 1;
}

/// Checks the state just reached; returns whether to keep going from it.
fn visit(w: World, s: &Scenario, out: &mut Outcome) {
    let faults = position_faults(&w);
    if !faults.is_empty() {
        out.violations.extend(faults);
        return;
    }
    walk(s, w, out);
}

fn walk(s: &Scenario, w: World, out: &mut Outcome) {
    if w.next == s.ops.len() && w.flight.is_empty() {
        finish(&w, out);
        return;
    }
    if let Some((req, target)) = s.ops.get(w.next) {
        let mut nw = w.clone();
        if let Ok(msg) = nw.replicas[*target as usize].apply_client_op(req) {
            nw.next += 1;
            for d in 0..s.replicas as ReplicaId {
                if d != *target {
                    nw.flight.push((d, msg.clone()));
                }
            }
            visit(nw, s, out);
        }
    }
    for i in 0..w.flight.len() {
        let (dest, msg) = &w.flight[i];
        if s.causal && !msg.ctx.is_included_in(&w.replicas[*dest as usize].ctx) {
            continue;
        }
        let mut nw = w.clone();
        let (dest, msg) = nw.flight.remove(i);
        nw.replicas[dest as usize]
            .apply_remote_op(&msg, s.behavior)
            .expect("each message is delivered once");
        visit(nw, s, out);
    }
}

/// A request set of `k` slots over `n` replicas. The first slot always
/// creates something, and list requests only name elements an earlier slot
/// inserted, so most sets have complete executions.
pub fn random_op_set(rng: &mut impl Rng, t: DataType, n: usize, k: usize) -> Vec<(Request, ReplicaId)> {
    let attrs = [10, 20];
    let mut created: Vec<String> = Vec::new();
    (0..k)
        .map(|slot| {
            let kind = if slot == 0 { 0 } else { rng.gen_range(0..4) };
            let req = match (t, kind) {
                (DataType::Rpq, _) => {
                    let id = ["a", "b"].choose(rng).unwrap().to_string();
                    match kind {
                        0 => Request::RpqAdd {
                            id,
                            value: *attrs.choose(rng).unwrap(),
                        },
                        1 | 2 => Request::RpqIncrease {
                            id,
                            delta: *[-3, 4].choose(rng).unwrap(),
                        },
                        _ => Request::RpqRemove { id },
                    }
                }
                (DataType::List, 0) => {
                    let anchor = created.choose(rng).cloned().filter(|_| rng.gen_bool(0.5));
                    let id = ["a", "b", "c"][created.len()].to_string();
                    created.push(id.clone());
                    Request::ListInsert {
                        id,
                        anchor,
                        attr: *attrs.choose(rng).unwrap(),
                    }
                }
                (DataType::List, _) => {
                    let id = created.choose(rng).unwrap().clone();
                    match kind {
                        1 => Request::ListUpdate {
                            id,
                            attr: *attrs.choose(rng).unwrap(),
                        },
                        2 => Request::ListRemove { id },
                        _ => Request::ListReAdd { id },
                    }
                }
            };
            (req, rng.gen_range(0..n) as ReplicaId)
        })
        .collect()
}
