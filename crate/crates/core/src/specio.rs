//! Binary spectrogram files (`.spec`).
//!
//! Layout: `b"DASP"`, u32 LE version (1), u32 LE header length, a UTF-8 JSON
//! header `{sample_rate, fft_size, hop, signal_len, channels, bins, frames}`,
//! then `channels * bins * frames` complex values as f64 LE `(re, im)` pairs
//! in `[channel, bin, frame]` row-major order.

use std::fs;
use std::path::Path;

use ndarray::Array3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Spectrogram;

pub const SPEC_MAGIC: &[u8; 4] = b"DASP";
pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    sample_rate: u32,
    fft_size: usize,
    hop: usize,
    signal_len: usize,
    channels: usize,
    bins: usize,
    frames: usize,
}

pub fn write_spectrogram(path: impl AsRef<Path>, spec: &Spectrogram) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        sample_rate: spec.sample_rate(),
        fft_size: spec.fft_size(),
        hop: spec.hop(),
        signal_len: spec.signal_len(),
        channels: spec.num_channels(),
        bins: spec.num_bins(),
        frames: spec.num_frames(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::format(path, e.to_string()))?;
    let mut out = Vec::with_capacity(12 + json.len() + 16 * spec.data().len());
    out.extend_from_slice(SPEC_MAGIC);
    out.extend_from_slice(&SPEC_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for z in spec.data().iter() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_spectrogram(path: impl AsRef<Path>) -> Result<Spectrogram> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..4] != SPEC_MAGIC {
        return Err(Error::format(path, "not a spectrogram file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != SPEC_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported spectrogram version {version}"),
        ));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let start = 12usize
        .checked_add(hlen)
        .filter(|&s| s <= bytes.len())
        .ok_or_else(|| Error::format(path, "truncated header"))?;
    let h: Header = serde_json::from_slice(&bytes[12..start])
        .map_err(|e| Error::format(path, format!("header: {e}")))?;
    let n = h
        .channels
        .checked_mul(h.bins)
        .and_then(|x| x.checked_mul(h.frames))
        .ok_or_else(|| Error::format(path, "header dimensions overflow"))?;
    let data = &bytes[start..];
    if data.len() != 16 * n {
        return Err(Error::format(
            path,
            format!("expected {} data bytes, found {}", 16 * n, data.len()),
        ));
    }
    let values: Vec<Complex64> = data
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    let arr = Array3::from_shape_vec((h.channels, h.bins, h.frames), values)
        .map_err(|e| Error::format(path, e.to_string()))?;
    Spectrogram::new(arr, h.sample_rate, h.fft_size, h.hop, h.signal_len)
        .map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Spectrogram {
        let data = Array3::from_shape_fn((2, 5, 3), |(c, k, t)| {
            Complex64::new(c as f64 + 0.5 * k as f64, -(t as f64) / 3.0)
        });
        Spectrogram::new(data, 16000, 8, 4, 9).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.spec");
        let s = sample();
        write_spectrogram(&p, &s).unwrap();
        assert_eq!(read_spectrogram(&p).unwrap(), s);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.spec");
        fs::write(&p, b"RIFF0000").unwrap();
        assert!(matches!(read_spectrogram(&p), Err(Error::Format { .. })));
        write_spectrogram(&p, &sample()).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        let err = read_spectrogram(&p).unwrap_err();
        assert!(err.to_string().contains("data bytes"), "{err}");
    }
}
