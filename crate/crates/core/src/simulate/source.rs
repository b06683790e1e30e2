use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::signal::{rms, MonoSignal};

/// RMS level of every synthesized source.
pub const SOURCE_RMS: f64 = 0.1;

/// Content below this frequency is removed from every source.
const HIGHPASS_HZ: f64 = 100.0;
const FADE_S: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    White,
    Pink,
    AmNoise,
    Chirp,
    Multitone,
}

impl SourceKind {
    pub const ALL: [SourceKind; 5] = [
        SourceKind::White,
        SourceKind::Pink,
        SourceKind::AmNoise,
        SourceKind::Chirp,
        SourceKind::Multitone,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SourceKind::White => "white",
            SourceKind::Pink => "pink",
            SourceKind::AmNoise => "am_noise",
            SourceKind::Chirp => "chirp",
            SourceKind::Multitone => "multitone",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SourceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown source kind {s:?}")))
    }
}

/// Zero-mean test signal with RMS [`SOURCE_RMS`], deterministic in `seed`.
///
/// Every kind is high-passed at 50 Hz and faded in and out over 10 ms.
pub fn synth_source(
    kind: SourceKind,
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<MonoSignal> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::invalid(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    if sample_rate == 0 {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let fs = sample_rate as f64;
    let n = (duration_s * fs).round() as usize;
    if n < 2 {
        return Err(Error::invalid("duration shorter than two samples"));
    }
    let mut rng = rng_from_seed(seed);

    let mut x: Vec<f64> = match kind {
        SourceKind::White => gaussian(&mut rng, n),
        SourceKind::Pink => {
            let w = gaussian(&mut rng, n);
            shape_spectrum(&w, fs, |f| if f > 0.0 { f.powf(-0.5) } else { 0.0 })
        }
        SourceKind::AmNoise => {
            let rate = 2.0 + 6.0 * rng.random::<f64>();
            let phase = 2.0 * PI * rng.random::<f64>();
            gaussian(&mut rng, n)
                .into_iter()
                .enumerate()
                .map(|(i, v)| v * (1.0 + 0.8 * (2.0 * PI * rate * i as f64 / fs + phase).sin()))
                .collect()
        }
        SourceKind::Chirp => {
            let f0 = 100.0;
            let f1 = 0.45 * fs;
            let span = n as f64 / fs;
            let k = (f1 / f0).ln() / span;
            let phase0 = 2.0 * PI * rng.random::<f64>();
            (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    (phase0 + 2.0 * PI * f0 * ((k * t).exp() - 1.0) / k).sin()
                })
                .collect()
        }
        SourceKind::Multitone => {
            let (lo, hi) = (100f64.ln(), (0.45 * fs).ln());
            let tones: Vec<(f64, f64)> = (0..8)
                .map(|_| {
                    let f = (lo + (hi - lo) * rng.random::<f64>()).exp();
                    (f, 2.0 * PI * rng.random::<f64>())
                })
                .collect();
            (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    tones
                        .iter()
                        .map(|(f, p)| (2.0 * PI * f * t + p).sin())
                        .sum()
                })
                .collect()
        }
    };

    x = shape_spectrum(&x, fs, |f| if f < HIGHPASS_HZ { 0.0 } else { 1.0 });
    apply_fades(&mut x, ((FADE_S * fs).round() as usize).min(n / 2));
    let mean = x.iter().sum::<f64>() / n as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    let r = rms(&x);
    if r > 0.0 {
        let g = SOURCE_RMS / r;
        x.iter_mut().for_each(|v| *v *= g);
    }
    Ok(MonoSignal::new(x, sample_rate))
}

fn gaussian(rng: &mut crate::rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Multiply the spectrum of `x` by a real, frequency-dependent gain.
fn shape_spectrum(x: &[f64], fs: f64, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let kk = if k <= n / 2 { k } else { n - k };
        *z *= gain(kk as f64 * fs / n as f64);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|z| z.re / n as f64).collect()
}

fn apply_fades(x: &mut [f64], len: usize) {
    let n = x.len();
    for i in 0..len {
        let g = 0.5 - 0.5 * (PI * i as f64 / len as f64).cos();
        x[i] *= g;
        x[n - 1 - i] *= g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rms_and_zero_mean() {
        for kind in SourceKind::ALL {
            for seed in 0..3 {
                let s = synth_source(kind, 0.5, 16000, seed).unwrap();
                assert_eq!(s.len(), 8000);
                assert!((s.rms() - SOURCE_RMS).abs() < 1e-6, "{kind}: {}", s.rms());
                let mean = s.samples.iter().sum::<f64>() / s.len() as f64;
                assert!(mean.abs() < 1e-12, "{kind}: mean {mean}");
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        for kind in SourceKind::ALL {
            let a = synth_source(kind, 0.25, 16000, 99).unwrap();
            let b = synth_source(kind, 0.25, 16000, 99).unwrap();
            assert_eq!(a, b);
            let c = synth_source(kind, 0.25, 16000, 100).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn parse_kind() {
        assert_eq!(
            "am_noise".parse::<SourceKind>().unwrap(),
            SourceKind::AmNoise
        );
        assert!(matches!(
            "speech".parse::<SourceKind>(),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn rejects_bad_duration() {
        assert!(synth_source(SourceKind::White, 0.0, 16000, 1).is_err());
        assert!(synth_source(SourceKind::White, -1.0, 16000, 1).is_err());
    }

    /// Welch periodogram with 50% overlapped Hann segments.
    fn welch(x: &[f64], seg: usize) -> Vec<f64> {
        let w = crate::stft::hann_periodic(seg);
        let fft = FftPlanner::new().plan_fft_forward(seg);
        let mut psd = vec![0.0; seg / 2 + 1];
        let mut count = 0;
        let mut start = 0;
        while start + seg <= x.len() {
            let mut buf: Vec<Complex64> = (0..seg)
                .map(|i| Complex64::new(x[start + i] * w[i], 0.0))
                .collect();
            fft.process(&mut buf);
            for k in 0..psd.len() {
                psd[k] += buf[k].norm_sqr();
            }
            count += 1;
            start += seg / 2;
        }
        psd.iter().map(|p| p / count as f64).collect()
    }

    #[test]
    fn pink_slope_is_minus_three_db_per_octave() {
        let fs = 16000.0;
        let s = synth_source(SourceKind::Pink, 8.0, 16000, 5).unwrap();
        let seg = 2048;
        let psd = welch(&s.samples, seg);
        // least-squares line of dB against log2(f) over [100 Hz, fs/4]
        let pts: Vec<(f64, f64)> = (1..psd.len())
            .map(|k| (k as f64 * fs / seg as f64, psd[k]))
            .filter(|(f, _)| (100.0..=fs / 4.0).contains(f))
            .map(|(f, p)| (f.log2(), 10.0 * p.log10()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        assert!((slope + 3.0).abs() <= 1.0, "slope {slope} dB/oct");
    }
}
