use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A point in the 3D cell frame, meters. The BS sits on the z axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn ground(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn horizontal_norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (*self - *other).norm()
    }

    pub fn horizontal_distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// One frame of straight-line flight toward `goal` covering at most
    /// `max_step` meters; arrives exactly when the goal is within reach.
    pub fn step_toward(&self, goal: &Position, max_step: f64) -> Position {
        let delta = *goal - *self;
        let dist = delta.norm();
        if dist > max_step {
            *self + delta * (max_step / dist)
        } else {
            *goal
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Position {
    type Output = Position;
    fn add(self, rhs: Position) -> Position {
        Position::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Position {
    type Output = Position;
    fn sub(self, rhs: Position) -> Position {
        Position::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Position {
    type Output = Position;
    fn mul(self, rhs: f64) -> Position {
        Position::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_is_unit_vector_times_reach() {
        let p = Position::new(0.0, 0.0, 100.0);
        let q = p.step_toward(&Position::new(100.0, 0.0, 100.0), 15.0);
        assert_eq!(q, Position::new(15.0, 0.0, 100.0));
    }

    #[test]
    fn step_arrives_when_close() {
        let p = Position::new(0.0, 0.0, 100.0);
        let goal = Position::new(6.0, 8.0, 100.0);
        assert_eq!(p.step_toward(&goal, 15.0), goal);
    }
}
