//! The four-component objective vector: observation reward followed by the
//! collision, intrusion and power costs.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Component names in storage order.
pub const OBJECTIVE_NAMES: [&str; 4] = ["r", "c0", "c1", "c2"];

/// `[reward, collision, intrusion, power]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Objectives(pub [f64; 4]);

impl Objectives {
    pub const ZERO: Objectives = Objectives([0.0; 4]);

    pub fn new(reward: f64, collision: f64, intrusion: f64, power: f64) -> Self {
        Objectives([reward, collision, intrusion, power])
    }

    pub fn reward(&self) -> f64 {
        self.0[0]
    }

    pub fn collision(&self) -> f64 {
        self.0[1]
    }

    pub fn intrusion(&self) -> f64 {
        self.0[2]
    }

    pub fn power(&self) -> f64 {
        self.0[3]
    }

    /// The three costs in `[c0, c1, c2]` order.
    pub fn costs(&self) -> [f64; 3] {
        [self.0[1], self.0[2], self.0[3]]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Objectives) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for Objectives {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Objectives {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for Objectives {
    type Output = Objectives;
    fn add(mut self, rhs: Objectives) -> Objectives {
        self += rhs;
        self
    }
}

impl AddAssign for Objectives {
    fn add_assign(&mut self, rhs: Objectives) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl Sub for Objectives {
    type Output = Objectives;
    fn sub(self, rhs: Objectives) -> Objectives {
        Objectives(std::array::from_fn(|i| self.0[i] - rhs.0[i]))
    }
}

impl Mul<f64> for Objectives {
    type Output = Objectives;
    fn mul(self, k: f64) -> Objectives {
        Objectives(self.0.map(|v| v * k))
    }
}
