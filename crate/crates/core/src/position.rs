//! Dense, totally ordered position identifiers for list elements.
//!
//! A position is a non-empty path of `(digit, replica, counter)` triples
//! compared lexicographically; a strict prefix sorts first. Every path
//! produced by [`generate_between`] ends in a triple whose digit is at least 1
//! and whose `(replica, counter)` is the inserting operation's dot, so two
//! positions generated by distinct operations never compare equal.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dot::ReplicaId;

/// Digits at every level lie in `[0, BASE)`.
pub const BASE: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub digit: u32,
    pub replica: ReplicaId,
    pub counter: u64,
}

impl Triple {
    pub fn new(digit: u32, replica: ReplicaId, counter: u64) -> Self {
        Triple {
            digit,
            replica,
            counter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PositionId {
    path: Vec<Triple>,
}

impl PositionId {
    /// Builds a position from raw triples. Returns `None` for an empty path.
    pub fn from_path(path: Vec<Triple>) -> Option<Self> {
        if path.is_empty() {
            None
        } else {
            Some(PositionId { path })
        }
    }

    pub fn path(&self) -> &[Triple] {
        &self.path
    }

    pub fn depth(&self) -> usize {
        self.path.len()
    }

    /// Digits in range and counters positive.
    pub fn is_well_formed(&self) -> bool {
        !self.path.is_empty() && self.path.iter().all(|t| t.digit < BASE && t.counter >= 1)
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.path
                .iter()
                .map(|t| json!([t.digit, t.replica, t.counter]))
                .collect(),
        )
    }

    pub fn from_json(v: &Value) -> Option<Self> {
        let mut path = Vec::new();
        for t in v.as_array()? {
            let t = t.as_array()?;
            if t.len() != 3 {
                return None;
            }
            path.push(Triple::new(
                u32::try_from(t[0].as_u64()?).ok()?,
                u32::try_from(t[1].as_u64()?).ok()?,
                t[2].as_u64()?,
            ));
        }
        PositionId::from_path(path)
    }
}

impl fmt::Display for PositionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .path
            .iter()
            .map(|t| format!("{}.{}.{}", t.digit, t.replica, t.counter))
            .collect();
        write!(f, "<{}>", parts.join("|"))
    }
}

/// Allocates a position strictly between `left` and `right`.
///
/// `None` on the left is the virtual minimum, `None` on the right the virtual
/// maximum; neither is ever stored. At each level the midpoint of the free
/// digit range is taken; when the range is empty the walk copies a bounding
/// triple and descends one level.
///
/// Requires `left < right`. For inputs violating that the result is still
/// greater than `left` but no bound on the right is promised.
pub fn generate_between(
    left: Option<&PositionId>,
    right: Option<&PositionId>,
    replica: ReplicaId,
    counter: u64,
) -> PositionId {
    debug_assert!(
        match (left, right) {
            (Some(l), Some(r)) => l < r,
            _ => true,
        },
        "generate_between requires left < right"
    );
    let lpath: &[Triple] = left.map(|p| p.path()).unwrap_or(&[]);
    let rpath: &[Triple] = right.map(|p| p.path()).unwrap_or(&[]);
    let mut track_left = left.is_some();
    let mut track_right = right.is_some();
    let mut out = Vec::new();

    let mut level = 0;
    loop {
        let lt = if track_left { lpath.get(level).copied() } else { None };
        let rt = if track_right { rpath.get(level).copied() } else { None };
        track_left = lt.is_some();
        track_right = rt.is_some();

        // Exclusive bounds. Without a left triple the lower bound is 0, which
        // keeps every final digit >= 1.
        let lo = lt.map_or(0, |t| t.digit);
        let hi = rt.map_or(BASE, |t| t.digit);
        if hi > lo + 1 {
            out.push(Triple::new(lo + (hi - lo) / 2, replica, counter));
            return PositionId { path: out };
        }

        match (lt, rt) {
            (Some(l), _) => {
                out.push(l);
                if rt != Some(l) {
                    track_right = false;
                }
            }
            (None, Some(r)) if r.digit == 0 => {
                // Stay on the right bound's prefix; its path continues below.
                out.push(r);
            }
            (None, _) => {
                out.push(Triple::new(0, replica, counter));
                track_right = false;
            }
        }
        level += 1;
    }
}
