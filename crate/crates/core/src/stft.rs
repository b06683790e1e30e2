//! Short-time Fourier transform with a periodic Hann window at 50% overlap.
//!
//! The signal is padded with `fft_size / 2` zeros in front and at least as many
//! at the back, so every input sample is covered by two frames. Synthesis is
//! weighted overlap-add normalized by the summed squared window.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::signal::{MultichannelSignal, Spectrogram};

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Number of frames produced for a signal of `len` samples.
pub fn num_frames(len: usize, hop: usize) -> usize {
    1 + len.div_ceil(hop)
}

fn check_config(fft_size: usize, hop: usize) -> Result<()> {
    if fft_size < 2 || !fft_size.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "fft_size must be even and >= 2, got {fft_size}"
        )));
    }
    if hop != fft_size / 2 {
        return Err(Error::UnsupportedConfiguration(format!(
            "hop {hop} is not fft_size/2 = {}",
            fft_size / 2
        )));
    }
    Ok(())
}

pub fn stft_forward(
    signal: &MultichannelSignal,
    fft_size: usize,
    hop: usize,
) -> Result<Spectrogram> {
    check_config(fft_size, hop)?;
    let len = signal.len();
    if len < fft_size {
        return Err(Error::invalid(format!(
            "signal of {len} samples is shorter than fft_size {fft_size}"
        )));
    }
    let bins = fft_size / 2 + 1;
    let frames = num_frames(len, hop);
    let window = hann_periodic(fft_size);
    let fft = FftPlanner::new().plan_fft_forward(fft_size);

    let per_channel: Vec<Vec<Complex64>> = signal
        .channels()
        .par_iter()
        .map(|x| analyze_channel(x, &window, &fft, frames, hop))
        .collect();

    let mut data = Array3::<Complex64>::zeros((signal.num_channels(), bins, frames));
    for (c, frames_data) in per_channel.into_iter().enumerate() {
        let mut ch = data.index_axis_mut(Axis(0), c);
        for t in 0..frames {
            for k in 0..bins {
                ch[[k, t]] = frames_data[t * bins + k];
            }
        }
    }
    Spectrogram::new(data, signal.sample_rate(), fft_size, hop, len)
}

/// Frame-major spectra `[t * bins + k]` for one channel.
fn analyze_channel(
    x: &[f64],
    window: &[f64],
    fft: &Arc<dyn Fft<f64>>,
    frames: usize,
    hop: usize,
) -> Vec<Complex64> {
    let n = window.len();
    let bins = n / 2 + 1;
    let pad = n / 2;
    let mut out = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::default(); n];
    for t in 0..frames {
        let start = (t * hop) as isize - pad as isize;
        for (i, b) in buf.iter_mut().enumerate() {
            let idx = start + i as isize;
            let s = if idx >= 0 && (idx as usize) < x.len() {
                x[idx as usize]
            } else {
                0.0
            };
            *b = Complex64::new(s * window[i], 0.0);
        }
        fft.process(&mut buf);
        out.extend_from_slice(&buf[..bins]);
    }
    out
}

pub fn stft_inverse(spec: &Spectrogram) -> Result<MultichannelSignal> {
    let fft_size = spec.fft_size();
    let hop = spec.hop();
    check_config(fft_size, hop).map_err(|e| match e {
        Error::UnsupportedConfiguration(m) => Error::InvalidArgument(m),
        other => other,
    })?;
    if spec.num_bins() != fft_size / 2 + 1 {
        return Err(Error::invalid(format!(
            "{} bins inconsistent with fft_size {fft_size}",
            spec.num_bins()
        )));
    }
    let len = spec.signal_len();
    let frames = spec.num_frames();
    if frames != num_frames(len, hop) {
        return Err(Error::invalid(format!(
            "{frames} frames inconsistent with a {len}-sample signal"
        )));
    }

    let window = hann_periodic(fft_size);
    let ifft = FftPlanner::new().plan_fft_inverse(fft_size);
    let padded_len = fft_size + (frames - 1) * hop;

    let mut norm = vec![0.0; padded_len];
    for t in 0..frames {
        for (i, w) in window.iter().enumerate() {
            norm[t * hop + i] += w * w;
        }
    }

    let channels: Vec<Vec<f64>> = (0..spec.num_channels())
        .into_par_iter()
        .map(|c| {
            let ch = spec.channel(c);
            let mut acc = vec![0.0; padded_len];
            let mut buf = vec![Complex64::default(); fft_size];
            let scale = 1.0 / fft_size as f64;
            for t in 0..frames {
                for k in 0..=fft_size / 2 {
                    buf[k] = ch[[k, t]];
                }
                for k in 1..fft_size / 2 {
                    buf[fft_size - k] = ch[[k, t]].conj();
                }
                ifft.process(&mut buf);
                for (i, w) in window.iter().enumerate() {
                    acc[t * hop + i] += buf[i].re * scale * w;
                }
            }
            let pad = fft_size / 2;
            (pad..pad + len)
                .map(|i| {
                    if norm[i] > 1e-12 {
                        acc[i] / norm[i]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    MultichannelSignal::new(channels, spec.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn shape_and_zero_signal() {
        let sig = MultichannelSignal::new(vec![vec![0.0; 4000]], 16000).unwrap();
        let spec = stft_forward(&sig, 1024, 512).unwrap();
        assert_eq!(spec.num_bins(), 513);
        assert_eq!(spec.num_frames(), 1 + 4000usize.div_ceil(512));
        assert!(spec.data().iter().all(|z| z.norm() == 0.0));
        let back = stft_inverse(&spec).unwrap();
        assert_eq!(back.len(), 4000);
        assert!(back.channel(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_configuration() {
        let sig = MultichannelSignal::new(vec![vec![0.0; 4000]], 16000).unwrap();
        assert!(matches!(
            stft_forward(&sig, 1024, 256),
            Err(Error::UnsupportedConfiguration(_))
        ));
        assert!(matches!(
            stft_forward(&sig, 8192, 4096),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn inverse_rejects_inconsistent_frames() {
        let sig = MultichannelSignal::new(vec![noise(3000, 1)], 16000).unwrap();
        let spec = stft_forward(&sig, 512, 256).unwrap();
        let data = spec.data().slice(ndarray::s![.., .., ..5]).to_owned();
        let cut = Spectrogram::new(data, 16000, 512, 256, 3000).unwrap();
        assert!(matches!(stft_inverse(&cut), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn bin_centered_sine_peaks_at_its_bin() {
        let n = 512;
        let k0 = 37;
        let fs = 16000.0;
        let f = k0 as f64 * fs / n as f64;
        let x: Vec<f64> = (0..4096)
            .map(|i| (2.0 * PI * f * i as f64 / fs).sin())
            .collect();
        let sig = MultichannelSignal::new(vec![x.clone()], 16000).unwrap();
        let spec = stft_forward(&sig, n, n / 2).unwrap();

        // direct DFT of one interior frame
        let window = hann_periodic(n);
        let t = 4;
        let start = t * n / 2 - n / 2;
        let expected: f64 = {
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..n {
                let v = x[start + i] * window[i];
                let ph = -2.0 * PI * (k0 * i) as f64 / n as f64;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            (re * re + im * im).sqrt()
        };
        let col = spec.channel(0);
        let peak = (0..spec.num_bins())
            .max_by(|&a, &b| col[[a, t]].norm().partial_cmp(&col[[b, t]].norm()).unwrap())
            .unwrap();
        assert_eq!(peak, k0);
        assert!((col[[k0, t]].norm() - expected).abs() < 1e-9 * expected);
        // hann * sine at a bin center: |X[k0]| = N/4
        assert!((expected - n as f64 / 4.0).abs() < 1e-9);
    }

    #[test]
    fn channels_are_independent() {
        let a = noise(5000, 3);
        let b = noise(5000, 4);
        let both = MultichannelSignal::new(vec![a.clone(), b.clone()], 16000).unwrap();
        let sa = stft_forward(&MultichannelSignal::new(vec![a], 16000).unwrap(), 512, 256).unwrap();
        let sb = stft_forward(&MultichannelSignal::new(vec![b], 16000).unwrap(), 512, 256).unwrap();
        let s = stft_forward(&both, 512, 256).unwrap();
        assert_eq!(s.channel(0), sa.channel(0));
        assert_eq!(s.channel(1), sb.channel(0));
    }

    #[test]
    fn round_trip_on_random_noise() {
        for seed in 0..10 {
            let len = 3000 + 17 * seed as usize;
            let x = noise(len, seed);
            let sig = MultichannelSignal::new(vec![x.clone()], 16000).unwrap();
            let back = stft_inverse(&stft_forward(&sig, 256, 128).unwrap()).unwrap();
            assert_eq!(back.len(), len);
            let err: f64 = x
                .iter()
                .zip(back.channel(0))
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            let norm: f64 = x.iter().map(|a| a * a).sum();
            assert!((err / norm).sqrt() < 1e-7);
        }
    }

    #[test]
    fn parseval_per_frame() {
        let n = 256;
        let x = noise(2000, 9);
        let sig = MultichannelSignal::new(vec![x.clone()], 16000).unwrap();
        let spec = stft_forward(&sig, n, n / 2).unwrap();
        let window = hann_periodic(n);
        let ch = spec.channel(0);
        for t in 0..spec.num_frames() {
            let start = (t * n / 2) as isize - (n / 2) as isize;
            let time_energy: f64 = (0..n)
                .map(|i| {
                    let idx = start + i as isize;
                    let s = if idx >= 0 && (idx as usize) < x.len() {
                        x[idx as usize]
                    } else {
                        0.0
                    };
                    (s * window[i]).powi(2)
                })
                .sum();
            let mut freq_energy = ch[[0, t]].norm_sqr() + ch[[n / 2, t]].norm_sqr();
            for k in 1..n / 2 {
                freq_energy += 2.0 * ch[[k, t]].norm_sqr();
            }
            freq_energy /= n as f64;
            if time_energy > 0.0 {
                assert!((time_energy - freq_energy).abs() <= 1e-9 * time_energy);
            }
        }
    }
}
