use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde_json::{json, Value};

use crate::dot::{Dot, ReplicaId};
use crate::element::Existence;
use crate::op::{DataType, Request, SyncMessage};
use crate::replica::{list_order, ReplicaState};

use super::config::{
    slot_element, ChannelMode, ExplorationConfig, OpSpace, LIST_ATTRS, RPQ_ELEMENT, RPQ_INCREMENTS,
    RPQ_INITIAL_VALUES,
};
use super::ExploreError;

/// One step of a schedule.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventLabel {
    /// A client issues `request` to `target`, consuming slot `slot`. The
    /// replica applies it and broadcasts the result in the same step.
    Client {
        slot: usize,
        request: Request,
        target: ReplicaId,
    },
    /// The message `(origin, counter)` reaches `dest` and is processed there
    /// in the same step.
    Deliver {
        dest: ReplicaId,
        origin: ReplicaId,
        counter: u64,
    },
}

impl EventLabel {
    pub fn deliver(dest: ReplicaId, dot: Dot) -> Self {
        EventLabel::Deliver {
            dest,
            origin: dot.replica,
            counter: dot.counter,
        }
    }

    /// `["C", slot, request, target]` or `["D", dest, origin, counter]`.
    pub fn to_wire(&self) -> Value {
        match self {
            EventLabel::Client { slot, request, target } => json!(["C", slot, request.to_json(), target]),
            EventLabel::Deliver { dest, origin, counter } => json!(["D", dest, origin, counter]),
        }
    }

    pub fn from_wire(v: &Value) -> Option<Self> {
        let a = v.as_array()?;
        if a.len() != 4 {
            return None;
        }
        let idx = |i: usize| a[i].as_u64();
        let rid = |i: usize| idx(i).and_then(|x| ReplicaId::try_from(x).ok());
        match a[0].as_str()? {
            "C" => Some(EventLabel::Client {
                slot: usize::try_from(idx(1)?).ok()?,
                request: Request::from_json(&a[2]).ok()?,
                target: rid(3)?,
            }),
            "D" => Some(EventLabel::Deliver {
                dest: rid(1)?,
                origin: rid(2)?,
                counter: idx(3)?,
            }),
            _ => None,
        }
    }
}

impl fmt::Display for EventLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventLabel::Client { slot, request, target } => write!(f, "#{slot} {request}@r{target}"),
            EventLabel::Deliver { dest, origin, counter } => write!(f, "deliver r{origin}:{counter}->r{dest}"),
        }
    }
}

/// Node of the explored transition system.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GlobalState {
    pub replicas: Vec<ReplicaState>,
    /// Undelivered messages per destination, keyed by dot.
    pub channel: Vec<BTreeMap<Dot, SyncMessage>>,
    /// Slots before this one are consumed; slots are consumed in order.
    pub next_slot: usize,
}

impl GlobalState {
    pub fn is_terminal(&self, config: &ExplorationConfig) -> bool {
        self.next_slot >= config.requests && self.channel.iter().all(BTreeMap::is_empty)
    }

    pub fn in_flight(&self) -> usize {
        self.channel.iter().map(BTreeMap::len).sum()
    }

    /// 128-bit identity used for deduplication.
    pub fn fingerprint(&self) -> u128 {
        let mut a = std::collections::hash_map::DefaultHasher::new();
        self.hash(&mut a);
        let mut b = std::collections::hash_map::DefaultHasher::new();
        0x9e37_79b9_7f4a_7c15_u64.hash(&mut b);
        self.hash(&mut b);
        (u128::from(a.finish()) << 64) | u128::from(b.finish())
    }
}

pub fn initial_state(config: &ExplorationConfig) -> Result<GlobalState, ExploreError> {
    config.validate()?;
    let n = config.replicas;
    Ok(GlobalState {
        replicas: (0..n)
            .map(|r| ReplicaState::new(config.data_type, r as ReplicaId, n))
            .collect(),
        channel: vec![BTreeMap::new(); n],
        next_slot: 0,
    })
}

/// Requests the next slot may issue, in a fixed order, restricted to those
/// valid at the target replica right now.
pub fn candidate_requests(config: &ExplorationConfig, gs: &GlobalState) -> Vec<Request> {
    let slot = gs.next_slot;
    if slot >= config.requests {
        return Vec::new();
    }
    let target = &gs.replicas[config.target(slot) as usize];
    let raw = match &config.op_space {
        OpSpace::Fixed(ops) => vec![ops[slot].clone()],
        OpSpace::Standard => match config.data_type {
            DataType::Rpq => standard_rpq_requests(),
            DataType::List => standard_list_requests(target, slot),
        },
    };
    raw.into_iter().filter(|r| target.prepare(r).is_ok()).collect()
}

fn standard_rpq_requests() -> Vec<Request> {
    let id = || RPQ_ELEMENT.to_string();
    let mut v: Vec<Request> = RPQ_INITIAL_VALUES
        .iter()
        .map(|&value| Request::RpqAdd { id: id(), value })
        .collect();
    v.extend(RPQ_INCREMENTS.iter().map(|&delta| Request::RpqIncrease { id: id(), delta }));
    v.push(Request::RpqRemove { id: id() });
    v
}

fn standard_list_requests(target: &ReplicaState, slot: usize) -> Vec<Request> {
    let elems = target.list().expect("list configuration");
    let ordered = list_order(elems);
    let existent: Vec<&str> = ordered
        .iter()
        .filter(|e| e.existence() == Existence::Existent)
        .map(|e| e.id.as_str())
        .collect();
    let fresh = slot_element(slot);
    let mut v = Vec::new();
    for anchor in std::iter::once(None).chain(existent.iter().map(|&a| Some(a.to_string()))) {
        for &attr in &LIST_ATTRS {
            v.push(Request::ListInsert {
                id: fresh.clone(),
                anchor: anchor.clone(),
                attr,
            });
        }
    }
    for &id in &existent {
        for &attr in &LIST_ATTRS {
            v.push(Request::ListUpdate { id: id.into(), attr });
        }
    }
    v.extend(existent.iter().map(|&id| Request::ListRemove { id: id.into() }));
    v.extend(ordered.iter().map(|e| Request::ListReAdd { id: e.id.clone() }));
    v
}

fn deliverable(config: &ExplorationConfig, gs: &GlobalState, dest: usize, msg: &SyncMessage) -> bool {
    match config.channel {
        ChannelMode::Arbitrary => true,
        ChannelMode::Causal => msg.ctx.is_included_in(gs.replicas[dest].applied()),
    }
}

/// Client labels for the next slot first, then deliveries by destination and
/// dot.
pub fn enabled_events(config: &ExplorationConfig, gs: &GlobalState) -> Vec<EventLabel> {
    let slot = gs.next_slot;
    let mut events: Vec<EventLabel> = if slot < config.requests {
        let target = config.target(slot);
        candidate_requests(config, gs)
            .into_iter()
            .map(|request| EventLabel::Client { slot, request, target })
            .collect()
    } else {
        Vec::new()
    };
    for (dest, queue) in gs.channel.iter().enumerate() {
        for (dot, msg) in queue {
            if deliverable(config, gs, dest, msg) {
                events.push(EventLabel::deliver(dest as ReplicaId, *dot));
            }
        }
    }
    events
}

/// Fires one event: a client step applies the request at its target and
/// broadcasts to every other replica; a delivery removes the message from
/// the channel and applies it at the destination.
pub fn step(config: &ExplorationConfig, gs: &GlobalState, ev: &EventLabel) -> Result<GlobalState, ExploreError> {
    let enabled = match ev {
        EventLabel::Client { slot, request, target } => {
            *slot == gs.next_slot
                && *target == config.target(*slot)
                && candidate_requests(config, gs).contains(request)
        }
        EventLabel::Deliver { dest, origin, counter } => {
            let d = *dest as usize;
            gs.channel
                .get(d)
                .and_then(|q| q.get(&Dot::new(*origin, *counter)))
                .is_some_and(|m| deliverable(config, gs, d, m))
        }
    };
    if !enabled {
        return Err(ExploreError::NotEnabled(ev.clone()));
    }
    fire(config, gs, ev)
}

/// `step` for an event taken from `enabled_events(config, gs)`.
pub(super) fn fire(config: &ExplorationConfig, gs: &GlobalState, ev: &EventLabel) -> Result<GlobalState, ExploreError> {
    let mut next = gs.clone();
    match ev {
        EventLabel::Client { request, target, .. } => {
            let msg = next.replicas[*target as usize].apply_client_op(request)?;
            for (r, queue) in next.channel.iter_mut().enumerate() {
                if r != *target as usize {
                    queue.insert(msg.dot(), msg.clone());
                }
            }
            next.next_slot += 1;
        }
        EventLabel::Deliver { dest, origin, counter } => {
            let d = *dest as usize;
            let msg = next.channel[d]
                .remove(&Dot::new(*origin, *counter))
                .ok_or_else(|| ExploreError::NotEnabled(ev.clone()))?;
            next.replicas[d].apply_remote_op(&msg, config.behavior())?;
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explorer::config::BugFlag;

    #[test]
    fn empty_configuration_is_terminal() {
        let c = ExplorationConfig::new(DataType::Rpq, 1, 0);
        let gs = initial_state(&c).unwrap();
        assert!(gs.is_terminal(&c));
        assert!(enabled_events(&c, &gs).is_empty());
    }

    #[test]
    fn bad_config() {
        let c = ExplorationConfig::new(DataType::Rpq, 3, 2);
        assert!(matches!(initial_state(&c), Err(ExploreError::BadConfig(_))));
    }

    #[test]
    fn five_rpq_candidates() {
        let c = ExplorationConfig::new(DataType::Rpq, 1, 1);
        let gs = initial_state(&c).unwrap();
        let ev = enabled_events(&c, &gs);
        assert_eq!(ev.len(), 5);
        assert!(ev.iter().all(|e| matches!(e, EventLabel::Client { slot: 0, target: 0, .. })));
    }

    #[test]
    fn single_replica_client_step_sends_nothing() {
        let c = ExplorationConfig::new(DataType::Rpq, 1, 1);
        let gs = initial_state(&c).unwrap();
        let ev = enabled_events(&c, &gs).remove(0);
        let next = step(&c, &gs, &ev).unwrap();
        assert_eq!(next.in_flight(), 0);
        assert!(next.is_terminal(&c));
    }

    #[test]
    fn three_replicas_broadcast_twice() {
        let c = ExplorationConfig::new(DataType::Rpq, 3, 3);
        let gs = initial_state(&c).unwrap();
        let ev = enabled_events(&c, &gs).remove(0);
        let next = step(&c, &gs, &ev).unwrap();
        assert_eq!(next.in_flight(), 2);
        assert!(next.channel[0].is_empty());
    }

    #[test]
    fn step_is_deterministic() {
        let c = ExplorationConfig::new(DataType::List, 2, 2);
        let gs = initial_state(&c).unwrap();
        for ev in enabled_events(&c, &gs) {
            let a = step(&c, &gs, &ev).unwrap();
            let b = step(&c, &gs.clone(), &ev).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.fingerprint(), b.fingerprint());
        }
    }

    #[test]
    fn disabled_events_rejected() {
        let c = ExplorationConfig::new(DataType::Rpq, 2, 2);
        let gs = initial_state(&c).unwrap();
        let ev = EventLabel::Deliver { dest: 1, origin: 0, counter: 1 };
        assert!(matches!(step(&c, &gs, &ev), Err(ExploreError::NotEnabled(_))));
        let wrong_target = EventLabel::Client {
            slot: 0,
            request: Request::RpqRemove { id: "e".into() },
            target: 1,
        };
        assert!(step(&c, &gs, &wrong_target).is_err());
    }

    #[test]
    fn causal_channel_holds_back_dependent_message() {
        // a at r0, delivered to r1; b at r1 after a. In causal mode r2 may
        // only take a first.
        let c = ExplorationConfig::new(DataType::Rpq, 3, 3)
            .with_channel(ChannelMode::Causal)
            .with_bug(BugFlag::AssumeCausal);
        let mut gs = initial_state(&c).unwrap();
        let a = EventLabel::Client {
            slot: 0,
            request: Request::RpqAdd { id: "e".into(), value: 10 },
            target: 0,
        };
        gs = step(&c, &gs, &a).unwrap();
        gs = step(&c, &gs, &EventLabel::deliver(1, Dot::new(0, 1))).unwrap();
        let b = EventLabel::Client {
            slot: 1,
            request: Request::RpqRemove { id: "e".into() },
            target: 1,
        };
        gs = step(&c, &gs, &b).unwrap();
        let to_r2: Vec<EventLabel> = enabled_events(&c, &gs)
            .into_iter()
            .filter(|e| matches!(e, EventLabel::Deliver { dest: 2, .. }))
            .collect();
        assert_eq!(to_r2, vec![EventLabel::deliver(2, Dot::new(0, 1))]);
        assert!(step(&c, &gs, &EventLabel::deliver(2, Dot::new(1, 1))).is_err());
    }

    #[test]
    fn wire_round_trip() {
        let e = EventLabel::Client {
            slot: 2,
            request: Request::ListInsert { id: "c".into(), anchor: None, attr: 10 },
            target: 0,
        };
        assert_eq!(
            e.to_wire().to_string(),
            r#"["C",2,{"anchor":null,"attr":10,"id":"c","op":"list_insert"},0]"#
        );
        assert_eq!(EventLabel::from_wire(&e.to_wire()), Some(e));
        let d = EventLabel::deliver(1, Dot::new(0, 3));
        assert_eq!(d.to_wire().to_string(), r#"["D",1,0,3]"#);
        assert_eq!(EventLabel::from_wire(&d.to_wire()), Some(d));
        assert_eq!(EventLabel::from_wire(&json!(["X", 1, 2, 3])), None);
    }
}
