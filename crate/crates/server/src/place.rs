//! List positions as seen by the server: paths of `[digit, replica, counter]`
//! triples, an index key that realizes their order, and allocation of a new
//! path between two neighbours.

use serde::{Deserialize, Serialize};

pub const RADIX: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step(pub u32, pub u32, pub u64);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Place(pub Vec<Step>);

/// How ties between equal digits are broken when ordering places.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Smaller (replica, counter) first.
    #[default]
    Ascending,
    /// Larger (replica, counter) first.
    Descending,
}

/// Sort key for the ordered index. Lexicographic on the steps, with a
/// strict prefix first, which `Vec`'s `Ord` already gives.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PlaceKey(Vec<(u32, i64, i128)>);

impl Place {
    pub fn key(&self, tie: TieBreak) -> PlaceKey {
        let sign = match tie {
            TieBreak::Ascending => 1,
            TieBreak::Descending => -1,
        };
        PlaceKey(
            self.0
                .iter()
                .map(|s| (s.0, sign * i64::from(s.1), i128::from(sign) * i128::from(s.2)))
                .collect(),
        )
    }
}

/// A fresh place strictly between `lower` and `upper` (absent bounds are the
/// open ends), ending in a step stamped `(replica, counter)`.
pub fn allocate(lower: Option<&Place>, upper: Option<&Place>, replica: u32, counter: u64) -> Place {
    let mut lo_path = lower.map(|p| p.0.as_slice());
    let mut hi_path = upper.map(|p| p.0.as_slice());
    let mut built = Vec::new();
    for depth in 0.. {
        let lo_step = lo_path.and_then(|p| p.get(depth)).copied();
        let hi_step = hi_path.and_then(|p| p.get(depth)).copied();
        if lo_step.is_none() {
            lo_path = None;
        }
        if hi_step.is_none() {
            hi_path = None;
        }
        let floor = lo_step.map(|s| s.0).unwrap_or(0);
        let ceil = hi_step.map(|s| s.0).unwrap_or(RADIX);
        if ceil > floor + 1 {
            built.push(Step(floor + (ceil - floor) / 2, replica, counter));
            break;
        }
        let taken = match (lo_step, hi_step) {
            (Some(lo), hi) => {
                if hi != Some(lo) {
                    hi_path = None;
                }
                lo
            }
            (None, Some(hi)) if hi.0 == 0 => hi,
            (None, _) => {
                hi_path = None;
                Step(0, replica, counter)
            }
        };
        built.push(taken);
    }
    Place(built)
}

/// Where a list update lands when its element never arrived: one past the
/// last legal digit.
pub fn stray(replica: u32) -> Place {
    Place(vec![Step(RADIX, replica, 0)])
}
