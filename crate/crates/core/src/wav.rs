//! RIFF/WAVE I/O. Output is always IEEE float 32-bit, interleaved.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::signal::MultichannelSignal;

pub fn write_wav(path: impl AsRef<Path>, signal: &MultichannelSignal) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: signal.num_channels() as u16,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    };
    let mut writer = WavWriter::create(path, spec).map_err(wrap)?;
    for i in 0..signal.len() {
        for ch in signal.channels() {
            writer.write_sample(ch[i] as f32).map_err(wrap)?;
        }
    }
    writer.finalize().map_err(wrap)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelSignal> {
    let path = path.as_ref();
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    };
    let mut reader = WavReader::open(path).map_err(wrap)?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    if n_ch == 0 {
        return Err(Error::format(path, "no channels"));
    }
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wrap)?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wrap)?
        }
    };
    let frames = interleaved.len() / n_ch;
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (c, &v) in frame.iter().enumerate() {
            channels[c].push(v);
        }
    }
    MultichannelSignal::new(channels, spec.sample_rate)
}
