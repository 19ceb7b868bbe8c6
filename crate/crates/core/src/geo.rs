//! Planar metric positions.

use serde::{Deserialize, Serialize};

/// Position in a planar metric frame (UTM-style easting/northing, meters).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub east: f64,
    pub north: f64,
}

impl Position {
    pub const fn new(east: f64, north: f64) -> Self {
        Self { east, north }
    }
}

/// Euclidean distance between two positions, in meters.
#[inline]
pub fn geo_distance(a: Position, b: Position) -> f64 {
    geo_distance_sq(a, b).sqrt()
}

/// Squared Euclidean distance, for threshold tests that avoid the sqrt.
#[inline]
pub fn geo_distance_sq(a: Position, b: Position) -> f64 {
    let de = a.east - b.east;
    let dn = a.north - b.north;
    de * de + dn * dn
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pythagorean_triple() {
        let a = Position::new(0.0, 0.0);
        let b = Position::new(3.0, 4.0);
        assert_eq!(geo_distance(a, b), 5.0);
        assert_eq!(geo_distance(b, a), 5.0);
    }

    #[test]
    fn zero_for_identical_points() {
        let p = Position::new(482_113.25, 4_210_774.5);
        assert_eq!(geo_distance(p, p), 0.0);
    }

    #[test]
    fn axis_aligned() {
        let a = Position::new(100.0, 50.0);
        assert_eq!(geo_distance(a, Position::new(100.0, 75.0)), 25.0);
        assert_eq!(geo_distance(a, Position::new(60.0, 50.0)), 40.0);
    }
}
