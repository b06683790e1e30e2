//! Time-domain signals and the complex spectrogram container.

use ndarray::{Array3, ArrayView2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MonoSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl MonoSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        MonoSignal {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Equal-length channels sharing a sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSignal {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl MultichannelSignal {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::invalid("signal needs at least one channel"));
        }
        let n = channels[0].len();
        if let Some(bad) = channels.iter().position(|c| c.len() != n) {
            return Err(Error::invalid(format!(
                "channel {bad} has {} samples, expected {n}",
                channels[bad].len()
            )));
        }
        Ok(MultichannelSignal {
            channels,
            sample_rate,
        })
    }

    pub fn from_mono(signal: MonoSignal) -> Self {
        MultichannelSignal {
            channels: vec![signal.samples],
            sample_rate: signal.sample_rate,
        }
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// New signal made of the listed channels, in the listed order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            let ch = self
                .channels
                .get(i)
                .ok_or_else(|| Error::invalid(format!("channel {i} out of range")))?;
            out.push(ch.clone());
        }
        MultichannelSignal::new(out, self.sample_rate)
    }
}

/// Complex time-frequency grid laid out as `[channel, bin, frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Array3<Complex64>,
    sample_rate: u32,
    fft_size: usize,
    hop: usize,
    /// Length in samples of the signal this grid was computed from.
    signal_len: usize,
}

impl Spectrogram {
    pub fn new(
        data: Array3<Complex64>,
        sample_rate: u32,
        fft_size: usize,
        hop: usize,
        signal_len: usize,
    ) -> Result<Self> {
        if data.shape()[1] != fft_size / 2 + 1 {
            return Err(Error::invalid(format!(
                "{} bins do not match fft_size {fft_size}",
                data.shape()[1]
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("spectrogram contains non-finite entries"));
        }
        Ok(Spectrogram {
            data,
            sample_rate,
            fft_size,
            hop,
            signal_len,
        })
    }

    /// Replace the data keeping the time-frequency layout metadata.
    pub fn with_data(&self, data: Array3<Complex64>) -> Result<Self> {
        if data.shape()[1..] != self.data.shape()[1..] {
            return Err(Error::invalid(format!(
                "grid {:?} does not match {:?}",
                &data.shape()[1..],
                &self.data.shape()[1..]
            )));
        }
        Spectrogram::new(
            data,
            self.sample_rate,
            self.fft_size,
            self.hop,
            self.signal_len,
        )
    }

    pub fn zeros_like(&self, channels: usize) -> Self {
        Spectrogram {
            data: Array3::zeros((channels, self.num_bins(), self.num_frames())),
            ..self.clone()
        }
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<Complex64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> ArrayView2<'_, Complex64> {
        self.data.index_axis(Axis(0), c)
    }

    pub fn num_channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn num_bins(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn num_frames(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    /// Center frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.fft_size as f64
    }

    pub fn same_grid(&self, other: &Spectrogram) -> bool {
        self.data.shape()[1..] == other.data.shape()[1..]
            && self.sample_rate == other.sample_rate
            && self.fft_size == other.fft_size
    }
}
