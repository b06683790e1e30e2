use rand::{Rng as _, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Direction, MAX_SPACING, MIN_SPACING};
use crate::rng::rng_from_seed;

use super::source::SourceKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingMode {
    /// Both pairs use the same spacing (m).
    Fixed(f64),
    /// Each pair draws its spacing independently from `U(lo, hi)` (m).
    Varying { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceCount {
    Fixed(usize),
    /// Uniform over 1..=4.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub spacing: SpacingMode,
    pub sources: SourceCount,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Source material is drawn uniformly from this list.
    pub kinds: Vec<SourceKind>,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        match self.spacing {
            SpacingMode::Fixed(d) if !(MIN_SPACING..=MAX_SPACING).contains(&d) => {
                return Err(Error::invalid(format!("fixed spacing {d} m out of range")));
            }
            SpacingMode::Varying { lo, hi }
                if !(MIN_SPACING <= lo && lo < hi && hi <= MAX_SPACING) =>
            {
                return Err(Error::invalid(format!(
                    "spacing range [{lo}, {hi}] invalid"
                )));
            }
            _ => {}
        }
        if let SourceCount::Fixed(n) = self.sources {
            if !(1..=4).contains(&n) {
                return Err(Error::invalid(format!("source count {n} not in 1..=4")));
            }
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::invalid("duration must be positive"));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if self.kinds.is_empty() {
            return Err(Error::invalid("at least one source kind is required"));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSource {
    pub direction: Direction,
    pub kind: SourceKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScene {
    pub sources: Vec<SceneSource>,
    pub spacing_x: f64,
    pub spacing_y: f64,
    pub sample_rate: u32,
    pub duration_s: f64,
    pub seed: u64,
}

impl SourceScene {
    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::cross(self.spacing_x, self.spacing_y)
    }

    pub fn directions(&self) -> Vec<Direction> {
        self.sources.iter().map(|s| s.direction).collect()
    }
}

pub fn sample_scene(seed: u64, config: &SceneConfig) -> SourceScene {
    let mut rng = rng_from_seed(seed);
    let (spacing_x, spacing_y) = match config.spacing {
        SpacingMode::Fixed(d) => (d, d),
        SpacingMode::Varying { lo, hi } => {
            let dx = lo + (hi - lo) * rng.random::<f64>();
            let dy = lo + (hi - lo) * rng.random::<f64>();
            (dx, dy)
        }
    };
    let n = match config.sources {
        SourceCount::Fixed(n) => n,
        SourceCount::Random => rng.random_range(1..=4usize),
    };
    let sources = (0..n)
        .map(|_| {
            let azimuth = 360.0 * rng.random::<f64>();
            let kind = config.kinds[rng.random_range(0..config.kinds.len())];
            SceneSource {
                direction: Direction::from_azimuth(azimuth).expect("finite azimuth"),
                kind,
                seed: rng.next_u64(),
            }
        })
        .collect();
    SourceScene {
        sources,
        spacing_x,
        spacing_y,
        sample_rate: config.sample_rate,
        duration_s: config.duration_s,
        seed,
    }
}
