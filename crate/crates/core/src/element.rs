//! Per-element payload and conflict-resolution metadata for both data types.
//!
//! Both types follow the same remove-win scheme. Every effect carries a tag
//! (its dot) and a set of observed tags it supersedes; an element keeps the
//! tags that are still active:
//!
//! * add / re-add tags, superseded by a remove that observed them;
//! * remove tags, superseded by an add or re-add that observed them;
//! * value increments (RPQ) or attribute writes (list).
//!
//! An element is existent iff at least one add tag and no remove tag are
//! active, so a remove concurrent with an add leaves the element absent.
//! The observed tags are exactly the operation's dependencies, and the
//! active set after any dependency-respecting delivery order is
//! `applied tags - union(superseded sets)`, which is order independent.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Map, Value};

use crate::dot::Dot;
use crate::position::PositionId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Existence {
    Existent,
    NonExistent,
    OnceExistent,
}

impl Existence {
    pub fn as_str(self) -> &'static str {
        match self {
            Existence::Existent => "existent",
            Existence::NonExistent => "nonexistent",
            Existence::OnceExistent => "once_existent",
        }
    }

    fn derive(adds: usize, removes: usize, ever_added: bool) -> Self {
        if adds > 0 && removes == 0 {
            Existence::Existent
        } else if ever_added {
            Existence::OnceExistent
        } else {
            Existence::NonExistent
        }
    }
}

fn dots_json<'a>(dots: impl IntoIterator<Item = &'a Dot>) -> Value {
    Value::Array(dots.into_iter().map(|d| d.to_json()).collect())
}

fn valued_dots_json(m: &BTreeMap<Dot, i64>) -> Value {
    let mut v: Vec<(&Dot, &i64)> = m.iter().collect();
    v.sort_by_key(|(d, _)| (d.replica, d.counter));
    Value::Array(v.into_iter().map(|(d, x)| json!([d.replica, d.counter, x])).collect())
}

fn sorted_dots(s: &BTreeSet<Dot>) -> Vec<&Dot> {
    let mut v: Vec<&Dot> = s.iter().collect();
    v.sort_by_key(|d| (d.replica, d.counter));
    v
}

/// Replicated priority queue element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RpqElement {
    pub id: String,
    /// Active adds with their initial values.
    pub adds: BTreeMap<Dot, i64>,
    pub removes: BTreeSet<Dot>,
    pub increments: BTreeMap<Dot, i64>,
    pub ever_added: bool,
}

impl RpqElement {
    pub fn new(id: impl Into<String>) -> Self {
        RpqElement {
            id: id.into(),
            adds: BTreeMap::new(),
            removes: BTreeSet::new(),
            increments: BTreeMap::new(),
            ever_added: false,
        }
    }

    pub fn existence(&self) -> Existence {
        Existence::derive(self.adds.len(), self.removes.len(), self.ever_added)
    }

    /// The winning add among concurrent ones: the greatest dot.
    pub fn add_dot(&self) -> Option<Dot> {
        self.adds.keys().next_back().copied()
    }

    /// Winning initial value plus every active increment, when existent.
    pub fn value(&self) -> Option<i64> {
        if self.existence() != Existence::Existent {
            return None;
        }
        let init = self.adds.values().next_back().copied()?;
        Some(init + self.increments.values().sum::<i64>())
    }

    /// Tags an add issued now would supersede: everything.
    pub fn observed_by_add(&self) -> BTreeSet<Dot> {
        self.adds
            .keys()
            .chain(self.removes.iter())
            .chain(self.increments.keys())
            .copied()
            .collect()
    }

    /// Tags a remove issued now would supersede: adds and increments.
    pub fn observed_by_remove(&self) -> BTreeSet<Dot> {
        self.adds.keys().chain(self.increments.keys()).copied().collect()
    }

    pub fn apply_add(&mut self, dot: Dot, value: i64, observed: &BTreeSet<Dot>) {
        for d in observed {
            self.adds.remove(d);
            self.removes.remove(d);
            self.increments.remove(d);
        }
        self.adds.insert(dot, value);
        self.ever_added = true;
    }

    pub fn apply_increase(&mut self, dot: Dot, delta: i64) {
        self.increments.insert(dot, delta);
    }

    pub fn apply_remove(&mut self, dot: Dot, observed: &BTreeSet<Dot>) {
        for d in observed {
            self.adds.remove(d);
            self.increments.remove(d);
        }
        self.removes.insert(dot);
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("add_dot".into(), self.add_dot().map_or(Value::Null, |d| d.to_json()));
        m.insert("adds".into(), valued_dots_json(&self.adds));
        m.insert("existence".into(), self.existence().as_str().into());
        m.insert("increments".into(), valued_dots_json(&self.increments));
        m.insert("removes".into(), dots_json(sorted_dots(&self.removes)));
        m.insert("value".into(), self.value().map_or(Value::Null, Value::from));
        Value::Object(m)
    }
}

/// Replicated list element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ListElement {
    pub id: String,
    /// Fixed by the first insert that reaches this replica.
    pub pos: Option<PositionId>,
    /// Dot of the creating insert.
    pub add_dot: Option<Dot>,
    pub adds: BTreeSet<Dot>,
    pub removes: BTreeSet<Dot>,
    /// Active attribute writes; the greatest dot wins.
    pub attrs: BTreeMap<Dot, i64>,
    pub ever_added: bool,
}

impl ListElement {
    pub fn new(id: impl Into<String>) -> Self {
        ListElement {
            id: id.into(),
            pos: None,
            add_dot: None,
            adds: BTreeSet::new(),
            removes: BTreeSet::new(),
            attrs: BTreeMap::new(),
            ever_added: false,
        }
    }

    pub fn existence(&self) -> Existence {
        Existence::derive(self.adds.len(), self.removes.len(), self.ever_added)
    }

    pub fn attr(&self) -> Option<i64> {
        self.attrs.values().next_back().copied()
    }

    fn with_creator(&self, observed: impl Iterator<Item = Dot>) -> BTreeSet<Dot> {
        self.add_dot.into_iter().chain(observed).collect()
    }

    pub fn observed_by_update(&self) -> BTreeSet<Dot> {
        self.with_creator(self.attrs.keys().copied())
    }

    pub fn observed_by_remove(&self) -> BTreeSet<Dot> {
        self.with_creator(self.adds.iter().copied())
    }

    pub fn observed_by_readd(&self) -> BTreeSet<Dot> {
        self.with_creator(self.removes.iter().copied())
    }

    /// The first insert fixes the position; a later one (only possible when
    /// a re-add was accepted early) leaves it untouched.
    pub fn apply_insert(&mut self, dot: Dot, attr: i64, pos: &PositionId) {
        if self.pos.is_none() {
            self.pos = Some(pos.clone());
        }
        if self.add_dot.is_none() {
            self.add_dot = Some(dot);
        }
        self.adds.insert(dot);
        self.attrs.insert(dot, attr);
        self.ever_added = true;
    }

    pub fn apply_update(&mut self, dot: Dot, attr: i64, observed: &BTreeSet<Dot>) {
        for d in observed {
            self.attrs.remove(d);
        }
        self.attrs.insert(dot, attr);
    }

    pub fn apply_remove(&mut self, dot: Dot, observed: &BTreeSet<Dot>) {
        for d in observed {
            self.adds.remove(d);
        }
        self.removes.insert(dot);
    }

    pub fn apply_readd(&mut self, dot: Dot, observed: &BTreeSet<Dot>) {
        for d in observed {
            self.removes.remove(d);
        }
        self.adds.insert(dot);
        self.ever_added = true;
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("add_dot".into(), self.add_dot.map_or(Value::Null, |d| d.to_json()));
        m.insert("adds".into(), dots_json(sorted_dots(&self.adds)));
        m.insert("attr".into(), self.attr().map_or(Value::Null, Value::from));
        m.insert("attrs".into(), valued_dots_json(&self.attrs));
        m.insert("existence".into(), self.existence().as_str().into());
        m.insert("pos".into(), self.pos.as_ref().map_or(Value::Null, |p| p.to_json()));
        m.insert("removes".into(), dots_json(sorted_dots(&self.removes)));
        Value::Object(m)
    }
}
