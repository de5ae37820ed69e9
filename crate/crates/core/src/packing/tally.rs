//! Operation counters collected by every homomorphic layer.

use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Logical operation counts. A rotation counts once whatever the key path length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpTally {
    pub rotations: u64,
    pub hmults: u64,
    pub pmults: u64,
    pub hadds: u64,
    pub rescales: u64,
    pub refreshes: u64,
}

impl Add for OpTally {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            rotations: self.rotations + o.rotations,
            hmults: self.hmults + o.hmults,
            pmults: self.pmults + o.pmults,
            hadds: self.hadds + o.hadds,
            rescales: self.rescales + o.rescales,
            refreshes: self.refreshes + o.refreshes,
        }
    }
}

impl AddAssign for OpTally {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for OpTally {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            rotations: self.rotations - o.rotations,
            hmults: self.hmults - o.hmults,
            pmults: self.pmults - o.pmults,
            hadds: self.hadds - o.hadds,
            rescales: self.rescales - o.rescales,
            refreshes: self.refreshes - o.refreshes,
        }
    }
}

impl std::iter::Sum for OpTally {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}
