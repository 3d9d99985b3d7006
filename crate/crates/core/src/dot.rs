//! Operation identity and the per-replica summary of applied operations.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Index of a replica inside a group, 0-based.
pub type ReplicaId = u32;

/// Unique identity of one issued operation: the issuing replica plus that
/// replica's monotonic operation counter (starting at 1).
///
/// Dots order by `(counter, replica)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dot {
    pub replica: ReplicaId,
    pub counter: u64,
}

impl Dot {
    pub fn new(replica: ReplicaId, counter: u64) -> Self {
        Dot { replica, counter }
    }

    /// `[replica, counter]`, the form used in canonical states and wire frames.
    pub fn to_json(self) -> Value {
        json!([self.replica, self.counter])
    }
}

impl Ord for Dot {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.counter, self.replica).cmp(&(other.counter, other.replica))
    }
}

impl PartialOrd for Dot {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Dot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}:{}", self.replica, self.counter)
    }
}

/// Set of dots a replica has applied.
///
/// `seen[r]` is the highest counter of replica `r` such that every counter up
/// to it is contained. Dots above a gap (possible when the channel reorders
/// two messages from the same origin and the strategy does not wait) are kept
/// in `cloud` until the gap closes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CausalContext {
    seen: Vec<u64>,
    cloud: BTreeSet<Dot>,
}

impl CausalContext {
    pub fn new(replicas: usize) -> Self {
        CausalContext {
            seen: vec![0; replicas],
            cloud: BTreeSet::new(),
        }
    }

    pub fn replicas(&self) -> usize {
        self.seen.len()
    }

    pub fn seen(&self, replica: ReplicaId) -> u64 {
        self.seen.get(replica as usize).copied().unwrap_or(0)
    }

    pub fn contains(&self, dot: &Dot) -> bool {
        dot.counter <= self.seen(dot.replica) || self.cloud.contains(dot)
    }

    pub fn contains_all<'a>(&self, dots: impl IntoIterator<Item = &'a Dot>) -> bool {
        dots.into_iter().all(|d| self.contains(d))
    }

    /// True when every dot of `self` is also in `other`.
    pub fn is_included_in(&self, other: &CausalContext) -> bool {
        self.seen
            .iter()
            .enumerate()
            .all(|(r, &c)| c <= other.seen(r as ReplicaId) || (1..=c).all(|k| other.contains(&Dot::new(r as ReplicaId, k))))
            && self.cloud.iter().all(|d| other.contains(d))
    }

    /// Adds `dot`; returns false if it was already present.
    pub fn insert(&mut self, dot: Dot) -> bool {
        if self.contains(&dot) {
            return false;
        }
        let r = dot.replica as usize;
        if r >= self.seen.len() {
            self.seen.resize(r + 1, 0);
        }
        if dot.counter == self.seen[r] + 1 {
            self.seen[r] = dot.counter;
            loop {
                let next = Dot::new(dot.replica, self.seen[r] + 1);
                if !self.cloud.remove(&next) {
                    break;
                }
                self.seen[r] = next.counter;
            }
        } else {
            self.cloud.insert(dot);
        }
        true
    }

    /// Every contained dot, ordered by replica then counter.
    pub fn dots(&self) -> Vec<Dot> {
        let mut out: Vec<Dot> = self
            .seen
            .iter()
            .enumerate()
            .flat_map(|(r, &c)| (1..=c).map(move |k| Dot::new(r as ReplicaId, k)))
            .chain(self.cloud.iter().copied())
            .collect();
        out.sort_by_key(|d| (d.replica, d.counter));
        out
    }

    pub fn len(&self) -> usize {
        self.seen.iter().map(|&c| c as usize).sum::<usize>() + self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_json(&self) -> Value {
        let mut cloud: Vec<&Dot> = self.cloud.iter().collect();
        cloud.sort_by_key(|d| (d.replica, d.counter));
        json!({
            "cloud": cloud.into_iter().map(|d| d.to_json()).collect::<Vec<_>>(),
            "seen": self.seen,
        })
    }
}
