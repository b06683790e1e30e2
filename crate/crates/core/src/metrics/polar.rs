use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized band magnitudes per `(band, azimuth, channel)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarResponse {
    pub bands: Vec<(f64, f64)>,
    pub azimuths_deg: Vec<f64>,
    pub channels: usize,
    /// Flattened `[band][azimuth][channel]`.
    pub magnitudes: Vec<f64>,
    pub seed: u64,
    pub n_signals: usize,
    pub pipeline: String,
}

impl PolarResponse {
    pub fn magnitude(&self, band: usize, azimuth: usize, channel: usize) -> f64 {
        self.magnitudes[(band * self.azimuths_deg.len() + azimuth) * self.channels + channel]
    }

    /// Pattern of one channel in one band over the azimuth grid.
    pub fn pattern(&self, band: usize, channel: usize) -> Vec<f64> {
        (0..self.azimuths_deg.len())
            .map(|a| self.magnitude(band, a, channel))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("band_lo_hz,band_hi_hz,channel,azimuth_deg,magnitude\n");
        for (b, (lo, hi)) in self.bands.iter().enumerate() {
            for c in 0..self.channels {
                for (a, az) in self.azimuths_deg.iter().enumerate() {
                    s.push_str(&format!("{lo},{hi},{c},{az},{}\n", self.magnitude(b, a, c)));
                }
            }
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let s =
            serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Largest dB difference between two magnitude patterns, each normalized to
/// its maximum and floored at `floor_db`.
pub fn pattern_deviation_db(measured: &[f64], ideal: &[f64], floor_db: f64) -> f64 {
    let norm = |p: &[f64]| {
        let peak = p.iter().cloned().fold(0.0, f64::max);
        let floor = 10f64.powf(floor_db / 20.0);
        p.iter()
            .map(move |v| {
                20.0 * (if peak > 0.0 { v.abs() / peak } else { 0.0 })
                    .max(floor)
                    .log10()
            })
            .collect::<Vec<_>>()
    };
    norm(measured)
        .iter()
        .zip(norm(ideal))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}
