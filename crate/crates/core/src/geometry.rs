//! Planar direction math, array layouts and the spatial-aliasing frequency.
//!
//! All geometry lives in the horizontal plane. Azimuth is measured in degrees
//! counter-clockwise from the +x axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default speed of sound in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// Allowed microphone spacing range in meters.
pub const MIN_SPACING: f64 = 0.005;
pub const MAX_SPACING: f64 = 0.20;

/// A horizontal-plane direction with its cached unit vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Direction {
    azimuth_deg: f64,
    ux: f64,
    uy: f64,
}

impl Direction {
    pub fn from_azimuth(azimuth_deg: f64) -> Result<Self> {
        if !azimuth_deg.is_finite() {
            return Err(Error::invalid(format!(
                "azimuth must be finite, got {azimuth_deg}"
            )));
        }
        let mut az = azimuth_deg.rem_euclid(360.0);
        // rem_euclid can round up to exactly 360 for tiny negative inputs
        if az >= 360.0 {
            az = 0.0;
        }
        let (uy, ux) = quadrant_exact_sin_cos(az);
        Ok(Direction {
            azimuth_deg: az,
            ux,
            uy,
        })
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth_deg
    }

    pub fn unit(&self) -> [f64; 2] {
        [self.ux, self.uy]
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.ux * other.ux + self.uy * other.uy
    }

    /// Projection of a planar position (meters) onto this direction.
    pub fn project(&self, position: [f64; 2]) -> f64 {
        self.ux * position[0] + self.uy * position[1]
    }
}

impl TryFrom<f64> for Direction {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Direction::from_azimuth(value)
    }
}

impl From<Direction> for f64 {
    fn from(d: Direction) -> f64 {
        d.azimuth_deg
    }
}

/// sin/cos in degrees, exact on the axes.
fn quadrant_exact_sin_cos(deg: f64) -> (f64, f64) {
    if deg == 0.0 {
        (0.0, 1.0)
    } else if deg == 90.0 {
        (1.0, 0.0)
    } else if deg == 180.0 {
        (0.0, -1.0)
    } else if deg == 270.0 {
        (-1.0, 0.0)
    } else {
        deg.to_radians().sin_cos()
    }
}

/// Spatial aliasing frequency `c / (2 d)` of a microphone pair.
pub fn aliasing_frequency(spacing_m: f64, speed_of_sound: f64) -> Result<f64> {
    if !(spacing_m > 0.0) || !spacing_m.is_finite() {
        return Err(Error::invalid(format!(
            "spacing must be positive, got {spacing_m}"
        )));
    }
    if !(speed_of_sound > 0.0) || !speed_of_sound.is_finite() {
        return Err(Error::invalid(format!(
            "speed of sound must be positive, got {speed_of_sound}"
        )));
    }
    Ok(speed_of_sound / (2.0 * spacing_m))
}

/// Sensor layout. The reference layout is a planar cross with sensors ordered
/// (+x, -x, +y, -y).
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    positions: Vec<[f64; 2]>,
    spacing_x: f64,
    spacing_y: f64,
}

impl ArrayGeometry {
    pub fn cross(spacing_x: f64, spacing_y: f64) -> Result<Self> {
        for (name, d) in [("spacing_x", spacing_x), ("spacing_y", spacing_y)] {
            if !(MIN_SPACING..=MAX_SPACING).contains(&d) {
                return Err(Error::invalid(format!(
                    "{name} = {d} m outside [{MIN_SPACING}, {MAX_SPACING}]"
                )));
            }
        }
        Ok(ArrayGeometry {
            positions: vec![
                [spacing_x / 2.0, 0.0],
                [-spacing_x / 2.0, 0.0],
                [0.0, spacing_y / 2.0],
                [0.0, -spacing_y / 2.0],
            ],
            spacing_x,
            spacing_y,
        })
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn spacing_x(&self) -> f64 {
        self.spacing_x
    }

    pub fn spacing_y(&self) -> f64 {
        self.spacing_y
    }

    pub fn num_sensors(&self) -> usize {
        self.positions.len()
    }
}
