//! Pressure-gradient virtual microphones in the STFT domain.
//!
//! Two layouts are supported:
//!
//! * a back-to-back cardioid pair from the x-axis sensors, channels
//!   (right-facing at 0 deg, left-facing at 180 deg);
//! * planar first-order Ambisonics (W, X, Y) from all four sensors.
//!
//! Each differential output is equalized by a Tikhonov-regularized inverse of
//! its raw on-axis response, `H = conj(R) / (|R|^2 + lambda)` with
//! `lambda = 10^(-G_max/10) * max_f |R|^2`, so the on-axis response is close
//! to unity wherever `|R|` is not near a null. DC outputs are zero.

use std::f64::consts::PI;

use ndarray::Array3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Direction;
use crate::signal::Spectrogram;

/// Default equalizer gain ceiling in dB.
pub const DEFAULT_MAX_GAIN_DB: f64 = 30.0;

const J: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BeamLayout {
    CardioidPair { spacing: f64 },
    FoaPlanar { spacing_x: f64, spacing_y: f64 },
}

impl BeamLayout {
    pub fn num_outputs(&self) -> usize {
        match self {
            BeamLayout::CardioidPair { .. } => 2,
            BeamLayout::FoaPlanar { .. } => 3,
        }
    }
}

/// Everything needed to evaluate the beamformer on an STFT grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamformerConfig {
    pub layout: BeamLayout,
    pub speed_of_sound: f64,
    pub max_gain_db: f64,
    pub sample_rate: u32,
    pub fft_size: usize,
}

/// Regularized inverse of a raw on-axis differential response.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizerProfile {
    /// Raw on-axis response per STFT bin.
    pub raw: Vec<Complex64>,
    pub lambda: f64,
    pub max_gain_db: f64,
}

impl EqualizerProfile {
    fn new(raw: Vec<Complex64>, max_gain_db: f64) -> Self {
        let peak = raw.iter().map(|r| r.norm_sqr()).fold(0.0, f64::max);
        let lambda = 10f64.powf(-max_gain_db / 10.0) * peak;
        EqualizerProfile {
            raw,
            lambda,
            max_gain_db,
        }
    }

    pub fn gain_for(&self, r: Complex64) -> Complex64 {
        let den = r.norm_sqr() + self.lambda;
        if den == 0.0 {
            Complex64::default()
        } else {
            r.conj() / den
        }
    }

    /// Realized equalizer at bin `k`; zero at DC.
    pub fn gain(&self, k: usize) -> Complex64 {
        if k == 0 {
            Complex64::default()
        } else {
            self.gain_for(self.raw[k])
        }
    }
}

fn bin_freqs(sample_rate: u32, fft_size: usize) -> impl Iterator<Item = f64> {
    let df = sample_rate as f64 / fft_size as f64;
    (0..=fft_size / 2).map(move |k| k as f64 * df)
}

/// Raw on-axis response of the delay-and-subtract cardioid.
fn cardioid_raw(f: f64, d: f64, c: f64) -> Complex64 {
    let beta = PI * f * d / c;
    2.0 * J * (2.0 * beta).sin() * Complex64::from_polar(1.0, -beta)
}

/// Raw on-axis response of a plain pressure difference.
fn gradient_raw(f: f64, d: f64, c: f64) -> Complex64 {
    2.0 * J * (PI * f * d / c).sin()
}

pub fn cardioid_equalizer(
    d: f64,
    c: f64,
    max_gain_db: f64,
    sample_rate: u32,
    fft_size: usize,
) -> EqualizerProfile {
    EqualizerProfile::new(
        bin_freqs(sample_rate, fft_size)
            .map(|f| cardioid_raw(f, d, c))
            .collect(),
        max_gain_db,
    )
}

pub fn gradient_equalizer(
    d: f64,
    c: f64,
    max_gain_db: f64,
    sample_rate: u32,
    fft_size: usize,
) -> EqualizerProfile {
    EqualizerProfile::new(
        bin_freqs(sample_rate, fft_size)
            .map(|f| gradient_raw(f, d, c))
            .collect(),
        max_gain_db,
    )
}

fn check_channels(mics: &Spectrogram, n: usize, what: &str) -> Result<()> {
    if mics.num_channels() != n {
        return Err(Error::invalid(format!(
            "{what} needs {n} microphone channels, got {}",
            mics.num_channels()
        )));
    }
    Ok(())
}

/// Back-to-back cardioids from the x-axis pair ordered (+x, -x).
///
/// Output channel 0 faces +x (0 deg), channel 1 faces -x (180 deg).
pub fn gradient_cardioid_pair(
    mics: &Spectrogram,
    d: f64,
    c: f64,
    max_gain_db: f64,
) -> Result<Spectrogram> {
    check_channels(mics, 2, "cardioid pair")?;
    let eq = cardioid_equalizer(d, c, max_gain_db, mics.sample_rate(), mics.fft_size());
    let (bins, frames) = (mics.num_bins(), mics.num_frames());
    let data = mics.data();
    let mut out = Array3::<Complex64>::zeros((2, bins, frames));
    for k in 1..bins {
        let f = mics.bin_frequency(k);
        let h = eq.gain(k);
        let delay = Complex64::from_polar(1.0, -2.0 * PI * f * d / c);
        for t in 0..frames {
            let (v1, v2) = (data[[0, k, t]], data[[1, k, t]]);
            out[[0, k, t]] = h * (v1 - delay * v2);
            out[[1, k, t]] = h * (v2 - delay * v1);
        }
    }
    mics.with_data(out)
}

/// Planar first-order Ambisonics (W, X, Y) from sensors ordered (+x, -x, +y, -y).
pub fn foa_planar_encode(
    mics: &Spectrogram,
    dx: f64,
    dy: f64,
    c: f64,
    max_gain_db: f64,
) -> Result<Spectrogram> {
    check_channels(mics, 4, "planar FOA")?;
    let (fs, n) = (mics.sample_rate(), mics.fft_size());
    let eq_x = gradient_equalizer(dx, c, max_gain_db, fs, n);
    let eq_y = gradient_equalizer(dy, c, max_gain_db, fs, n);
    let (bins, frames) = (mics.num_bins(), mics.num_frames());
    let data = mics.data();
    let mut out = Array3::<Complex64>::zeros((3, bins, frames));
    for k in 0..bins {
        let (hx, hy) = (eq_x.gain(k), eq_y.gain(k));
        for t in 0..frames {
            let p = [
                data[[0, k, t]],
                data[[1, k, t]],
                data[[2, k, t]],
                data[[3, k, t]],
            ];
            out[[0, k, t]] = (p[0] + p[1] + p[2] + p[3]) * 0.25;
            out[[1, k, t]] = hx * (p[0] - p[1]);
            out[[2, k, t]] = hy * (p[2] - p[3]);
        }
    }
    mics.with_data(out)
}

impl BeamformerConfig {
    pub fn num_outputs(&self) -> usize {
        self.layout.num_outputs()
    }

    /// Virtual microphones from a 4-channel cross-array spectrogram. The
    /// cardioid layout also accepts just the x-pair.
    pub fn apply(&self, mics: &Spectrogram) -> Result<Spectrogram> {
        let c = self.speed_of_sound;
        match self.layout {
            BeamLayout::CardioidPair { spacing } => {
                let pair = match mics.num_channels() {
                    2 => mics.clone(),
                    4 => {
                        let data = mics.data().slice(ndarray::s![0..2, .., ..]).to_owned();
                        mics.with_data(data)?
                    }
                    n => {
                        return Err(Error::invalid(format!(
                            "cardioid pair needs 2 or 4 microphone channels, got {n}"
                        )))
                    }
                };
                gradient_cardioid_pair(&pair, spacing, c, self.max_gain_db)
            }
            BeamLayout::FoaPlanar {
                spacing_x,
                spacing_y,
            } => foa_planar_encode(mics, spacing_x, spacing_y, c, self.max_gain_db),
        }
    }

    /// Complex response of every virtual microphone to a unit plane wave
    /// (referenced to the array center) from `direction` at `f` Hz.
    pub fn steering_response(&self, direction: &Direction, f: f64) -> Vec<Complex64> {
        self.steering_responses(std::slice::from_ref(direction), f)
            .pop()
            .unwrap_or_default()
    }

    /// [`Self::steering_response`] for many directions at one frequency; the
    /// equalizers are built once.
    pub fn steering_responses(&self, directions: &[Direction], f: f64) -> Vec<Vec<Complex64>> {
        let c = self.speed_of_sound;
        let w = 2.0 * PI * f / c;
        if f == 0.0 {
            let dc = match self.layout {
                BeamLayout::CardioidPair { .. } => vec![Complex64::default(); 2],
                BeamLayout::FoaPlanar { .. } => vec![
                    Complex64::new(1.0, 0.0),
                    Complex64::default(),
                    Complex64::default(),
                ],
            };
            return vec![dc; directions.len()];
        }
        match self.layout {
            BeamLayout::CardioidPair { spacing: d } => {
                let eq =
                    cardioid_equalizer(d, c, self.max_gain_db, self.sample_rate, self.fft_size);
                let h = eq.gain_for(cardioid_raw(f, d, c));
                let delay = Complex64::from_polar(1.0, -2.0 * PI * f * d / c);
                directions
                    .iter()
                    .map(|dir| {
                        let plane =
                            |pos: [f64; 2]| Complex64::from_polar(1.0, w * dir.project(pos));
                        let v1 = plane([d / 2.0, 0.0]);
                        let v2 = plane([-d / 2.0, 0.0]);
                        vec![h * (v1 - delay * v2), h * (v2 - delay * v1)]
                    })
                    .collect()
            }
            BeamLayout::FoaPlanar {
                spacing_x: dx,
                spacing_y: dy,
            } => {
                let hx =
                    gradient_equalizer(dx, c, self.max_gain_db, self.sample_rate, self.fft_size)
                        .gain_for(gradient_raw(f, dx, c));
                let hy =
                    gradient_equalizer(dy, c, self.max_gain_db, self.sample_rate, self.fft_size)
                        .gain_for(gradient_raw(f, dy, c));
                directions
                    .iter()
                    .map(|dir| {
                        let plane =
                            |pos: [f64; 2]| Complex64::from_polar(1.0, w * dir.project(pos));
                        let p = [
                            plane([dx / 2.0, 0.0]),
                            plane([-dx / 2.0, 0.0]),
                            plane([0.0, dy / 2.0]),
                            plane([0.0, -dy / 2.0]),
                        ];
                        vec![
                            (p[0] + p[1] + p[2] + p[3]) * 0.25,
                            hx * (p[0] - p[1]),
                            hy * (p[2] - p[3]),
                        ]
                    })
                    .collect()
            }
        }
    }
}
