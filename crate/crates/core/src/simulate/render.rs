use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::signal::{MonoSignal, MultichannelSignal};

use super::scene::SourceScene;

/// Extra zero padding (samples) beyond the largest delay.
const GUARD: usize = 2048;

/// Render the far-field, anechoic array signals of a scene.
///
/// Delays are taken relative to the array center: a sensor whose position
/// projects positively onto a source direction receives that source earlier.
/// Fractional delays are exact phase ramps on the zero-padded DFT of the
/// whole signal.
pub fn render_array(
    scene: &SourceScene,
    signals: &[MonoSignal],
    geometry: &ArrayGeometry,
    speed_of_sound: f64,
) -> Result<MultichannelSignal> {
    if signals.len() != scene.sources.len() {
        return Err(Error::invalid(format!(
            "{} signals for {} sources",
            signals.len(),
            scene.sources.len()
        )));
    }
    let Some(first) = signals.first() else {
        return Err(Error::invalid("scene has no sources"));
    };
    let len = first.len();
    let fs = first.sample_rate as f64;
    if let Some(bad) = signals.iter().position(|s| s.len() != len) {
        return Err(Error::invalid(format!(
            "source {bad} has {} samples, expected {len}",
            signals[bad].len()
        )));
    }
    if signals.iter().any(|s| s.sample_rate != first.sample_rate) {
        return Err(Error::invalid("sources differ in sample rate"));
    }

    let max_delay = geometry
        .positions()
        .iter()
        .map(|p| p[0].hypot(p[1]))
        .fold(0.0, f64::max)
        / speed_of_sound
        * fs;
    let padded = (len + max_delay.ceil() as usize + GUARD).next_power_of_two();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(padded);
    let ifft = planner.plan_fft_inverse(padded);

    let spectra: Vec<Vec<Complex64>> = signals
        .par_iter()
        .map(|s| {
            let mut buf = vec![Complex64::default(); padded];
            for (b, &v) in buf.iter_mut().zip(&s.samples) {
                b.re = v;
            }
            fft.process(&mut buf);
            buf
        })
        .collect();

    let channels: Vec<Vec<f64>> = geometry
        .positions()
        .par_iter()
        .map(|&pos| {
            let mut acc = vec![Complex64::default(); padded];
            for (src, spec) in scene.sources.iter().zip(&spectra) {
                let tau = -src.direction.project(pos) / speed_of_sound;
                for (k, (a, z)) in acc.iter_mut().zip(spec).enumerate() {
                    *a += z * delay_factor(k, padded, fs, tau);
                }
            }
            ifft.process(&mut acc);
            acc[..len].iter().map(|z| z.re / padded as f64).collect()
        })
        .collect();

    MultichannelSignal::new(channels, first.sample_rate)
}

/// `exp(-j 2 pi f tau)` for DFT bin `k`, with the Nyquist bin kept real.
fn delay_factor(k: usize, n: usize, fs: f64, tau: f64) -> Complex64 {
    if 2 * k == n {
        return Complex64::new((PI * fs * tau).cos(), 0.0);
    }
    let kk = if k < n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    };
    let f = kk * fs / n as f64;
    Complex64::from_polar(1.0, -2.0 * PI * f * tau)
}
