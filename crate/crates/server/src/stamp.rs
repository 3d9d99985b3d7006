//! Operation identifiers and the per-replica record of applied operations.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// `(replica, counter)`; serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stamp(pub u32, pub u64);

impl Stamp {
    pub fn replica(self) -> u32 {
        self.0
    }

    pub fn counter(self) -> u64 {
        self.1
    }
}

/// Later counters win; equal counters go to the higher replica.
impl Ord for Stamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.1.cmp(&other.1).then(self.0.cmp(&other.0))
    }
}

impl PartialOrd for Stamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sorts by replica, then counter, as every canonical list does.
pub fn listing<'a>(stamps: impl IntoIterator<Item = &'a Stamp>) -> Vec<Stamp> {
    let mut v: Vec<Stamp> = stamps.into_iter().copied().collect();
    v.sort_by_key(|s| (s.0, s.1));
    v
}

/// Highest contiguous counter per replica plus the stamps seen beyond it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clock {
    pub seen: Vec<u64>,
    pub cloud: Vec<Stamp>,
}

impl Clock {
    pub fn new(replicas: usize) -> Self {
        Clock {
            seen: vec![0; replicas],
            cloud: Vec::new(),
        }
    }

    pub fn has(&self, s: Stamp) -> bool {
        let r = s.0 as usize;
        (r < self.seen.len() && s.1 <= self.seen[r]) || self.cloud.contains(&s)
    }

    pub fn has_all<'a>(&self, stamps: impl IntoIterator<Item = &'a Stamp>) -> bool {
        stamps.into_iter().all(|s| self.has(*s))
    }

    pub fn covers(&self, other: &Clock) -> bool {
        let prefix = other
            .seen
            .iter()
            .enumerate()
            .all(|(r, &c)| (1..=c).all(|k| self.has(Stamp(r as u32, k))));
        prefix && self.has_all(&other.cloud)
    }

    pub fn record(&mut self, s: Stamp) {
        if self.has(s) {
            return;
        }
        let r = s.0 as usize;
        if self.seen.len() <= r {
            self.seen.resize(r + 1, 0);
        }
        self.cloud.push(s);
        // Fold any run now contiguous with the prefix back into it.
        let mut loose: BTreeSet<(u32, u64)> = self.cloud.iter().map(|s| (s.0, s.1)).collect();
        while loose.remove(&(s.0, self.seen[r] + 1)) {
            self.seen[r] += 1;
        }
        self.cloud = loose.into_iter().map(|(r, c)| Stamp(r, c)).collect();
    }

    pub fn to_json(&self) -> Value {
        json!({ "cloud": listing(&self.cloud), "seen": self.seen })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaps_go_to_cloud_until_filled() {
        let mut c = Clock::new(2);
        c.record(Stamp(0, 2));
        assert_eq!(c.to_json().to_string(), r#"{"cloud":[[0,2]],"seen":[0,0]}"#);
        c.record(Stamp(0, 1));
        assert_eq!(c.to_json().to_string(), r#"{"cloud":[],"seen":[2,0]}"#);
        assert!(c.has(Stamp(0, 2)));
        assert!(!c.has(Stamp(1, 1)));
    }

    #[test]
    fn winner_is_latest_counter() {
        assert!(Stamp(0, 2) > Stamp(1, 1));
        assert!(Stamp(1, 1) > Stamp(0, 1));
    }
}
