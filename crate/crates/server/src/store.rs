//! Payload structures: a priority queue with a ranking index and a list with
//! an ordered position index.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde_json::{json, Map, Value};

use crate::place::{Place, PlaceKey, TieBreak};
use crate::stamp::{listing, Stamp};

fn existence(adds: usize, removes: usize, ever: bool) -> &'static str {
    match (adds > 0 && removes == 0, ever) {
        (true, _) => "existent",
        (false, true) => "once_existent",
        (false, false) => "nonexistent",
    }
}

fn stamps_json(s: &BTreeSet<Stamp>) -> Value {
    json!(listing(s))
}

fn weighted_json(m: &BTreeMap<Stamp, i64>) -> Value {
    let mut rows: Vec<(u32, u64, i64)> = m.iter().map(|(s, v)| (s.0, s.1, *v)).collect();
    rows.sort_unstable();
    json!(rows)
}

#[derive(Debug, Clone, Default)]
pub struct QueueEntry {
    pub adds: BTreeMap<Stamp, i64>,
    pub removes: BTreeSet<Stamp>,
    pub bumps: BTreeMap<Stamp, i64>,
    pub ever: bool,
}

impl QueueEntry {
    fn live(&self) -> bool {
        !self.adds.is_empty() && self.removes.is_empty()
    }

    /// Latest add's initial value plus all bumps, while live.
    pub fn priority(&self) -> Option<i64> {
        if !self.live() {
            return None;
        }
        let (_, base) = self.adds.iter().next_back()?;
        Some(base + self.bumps.values().sum::<i64>())
    }

    /// Every tag an add replaces.
    pub fn add_context(&self) -> Vec<Stamp> {
        let mut all: Vec<&Stamp> = self.adds.keys().collect();
        all.extend(self.removes.iter());
        all.extend(self.bumps.keys());
        listing(all)
    }

    /// Tags a remove replaces.
    pub fn remove_context(&self) -> Vec<Stamp> {
        listing(self.adds.keys().chain(self.bumps.keys()))
    }

    fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("add_dot".into(), json!(self.adds.keys().next_back()));
        m.insert("adds".into(), weighted_json(&self.adds));
        m.insert("existence".into(), existence(self.adds.len(), self.removes.len(), self.ever).into());
        m.insert("increments".into(), weighted_json(&self.bumps));
        m.insert("removes".into(), stamps_json(&self.removes));
        m.insert("value".into(), json!(self.priority()));
        Value::Object(m)
    }
}

/// Priority queue payload. `ranking` holds `(priority, id)` for every live
/// entry so the top is the last element, ties going to the smaller id.
#[derive(Debug, Clone, Default)]
pub struct Queue {
    entries: HashMap<String, QueueEntry>,
    ranking: BTreeSet<(i64, Reverse<String>)>,
    ranked: HashMap<String, i64>,
}

impl Queue {
    pub fn get(&self, id: &str) -> Option<&QueueEntry> {
        self.entries.get(id)
    }

    /// Runs `f` on the entry (created if missing) and re-ranks it.
    pub fn update(&mut self, id: &str, f: impl FnOnce(&mut QueueEntry)) {
        let e = self.entries.entry(id.to_string()).or_default();
        f(e);
        let now = e.priority();
        if let Some(old) = self.ranked.remove(id) {
            self.ranking.remove(&(old, Reverse(id.to_string())));
        }
        if let Some(p) = now {
            self.ranking.insert((p, Reverse(id.to_string())));
            self.ranked.insert(id.to_string(), p);
        }
    }

    pub fn top(&self) -> Option<(&str, i64)> {
        self.ranking.last().map(|(p, Reverse(id))| (id.as_str(), *p))
    }

    pub fn to_json(&self) -> Map<String, Value> {
        let mut ids: Vec<&String> = self.entries.keys().collect();
        ids.sort();
        ids.into_iter().map(|id| (id.clone(), self.entries[id].to_json())).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ListEntry {
    pub place: Option<Place>,
    pub creator: Option<Stamp>,
    pub adds: BTreeSet<Stamp>,
    pub removes: BTreeSet<Stamp>,
    pub attrs: BTreeMap<Stamp, i64>,
    pub ever: bool,
}

impl ListEntry {
    pub fn live(&self) -> bool {
        !self.adds.is_empty() && self.removes.is_empty()
    }

    pub fn attr(&self) -> Option<i64> {
        self.attrs.iter().next_back().map(|(_, v)| *v)
    }

    fn with_creator<'a>(&'a self, rest: impl Iterator<Item = &'a Stamp>) -> Vec<Stamp> {
        listing(self.creator.iter().chain(rest))
    }

    pub fn update_context(&self) -> Vec<Stamp> {
        self.with_creator(self.attrs.keys())
    }

    pub fn remove_context(&self) -> Vec<Stamp> {
        self.with_creator(self.adds.iter())
    }

    pub fn readd_context(&self) -> Vec<Stamp> {
        self.with_creator(self.removes.iter())
    }

    fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("add_dot".into(), json!(self.creator));
        m.insert("adds".into(), stamps_json(&self.adds));
        m.insert("attr".into(), json!(self.attr()));
        m.insert("attrs".into(), weighted_json(&self.attrs));
        m.insert("existence".into(), existence(self.adds.len(), self.removes.len(), self.ever).into());
        m.insert("pos".into(), json!(self.place));
        m.insert("removes".into(), stamps_json(&self.removes));
        Value::Object(m)
    }
}

/// List payload with every placed element, removed ones included, indexed
/// by position.
#[derive(Debug, Clone, Default)]
pub struct Sequence {
    entries: HashMap<String, ListEntry>,
    index: BTreeMap<PlaceKey, BTreeSet<String>>,
    tie: TieBreak,
}

impl Sequence {
    pub fn new(tie: TieBreak) -> Self {
        Sequence {
            tie,
            ..Default::default()
        }
    }

    pub fn get(&self, id: &str) -> Option<&ListEntry> {
        self.entries.get(id)
    }

    pub fn placed(&self, id: &str) -> Option<&ListEntry> {
        self.entries.get(id).filter(|e| e.place.is_some())
    }

    pub fn entry(&mut self, id: &str) -> &mut ListEntry {
        self.entries.entry(id.to_string()).or_default()
    }

    /// Gives an unplaced element its place; placed elements keep theirs.
    pub fn place(&mut self, id: &str, place: Place) {
        let e = self.entries.entry(id.to_string()).or_default();
        if e.place.is_some() {
            return;
        }
        self.index.entry(place.key(self.tie)).or_default().insert(id.to_string());
        e.place = Some(place);
    }

    fn place_of(&self, ids: Option<&BTreeSet<String>>) -> Option<&Place> {
        let id = ids?.iter().next()?;
        self.entries[id].place.as_ref()
    }

    /// Place of the first element after `after` (after the head when
    /// `None`) in index order.
    pub fn successor(&self, after: Option<&Place>) -> Option<&Place> {
        let next = match after {
            None => self.index.values().next(),
            Some(p) => {
                let key = p.key(self.tie);
                self.index
                    .range((std::ops::Bound::Excluded(key), std::ops::Bound::Unbounded))
                    .map(|(_, ids)| ids)
                    .next()
            }
        };
        self.place_of(next)
    }

    pub fn last_place(&self) -> Option<&Place> {
        self.place_of(self.index.values().next_back())
    }

    /// Live elements in index order with their attributes.
    pub fn visible(&self) -> Vec<(&str, Option<i64>)> {
        self.index
            .values()
            .flatten()
            .map(|id| (id.as_str(), &self.entries[id]))
            .filter(|(_, e)| e.live())
            .map(|(id, e)| (id, e.attr()))
            .collect()
    }

    pub fn to_json(&self) -> Map<String, Value> {
        let mut ids: Vec<&String> = self.entries.keys().collect();
        ids.sort();
        ids.into_iter().map(|id| (id.clone(), self.entries[id].to_json())).collect()
    }
}
