//! Decoders, the alias-free target encoder and the per-tile filtering model
//! `y(n, k) = D * M(n, k) * v(n, k)`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Direction;
use crate::signal::Spectrogram;

/// Frequency-independent real decoder, `Q x V`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    directions: Vec<Direction>,
}

impl DecoderMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        entries: Vec<f64>,
        directions: Vec<Direction>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("decoder needs at least one row and column"));
        }
        if entries.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{} entries for a {rows}x{cols} decoder",
                entries.len()
            )));
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::invalid("decoder entries must be finite"));
        }
        if !directions.is_empty() && directions.len() != rows {
            return Err(Error::invalid("one decode direction per decoder row"));
        }
        Ok(DecoderMatrix {
            rows,
            cols,
            entries,
            directions,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.cols + c]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn decode(&self, v: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| v[c] * self.get(r, c)).sum())
            .collect()
    }
}

pub fn identity_decoder(v: usize) -> Result<DecoderMatrix> {
    let mut e = vec![0.0; v * v];
    for i in 0..v {
        e[i * v + i] = 1.0;
    }
    DecoderMatrix::new(v, v, e, Vec::new())
}

/// In-phase first-order decoder from (W, X, Y) to cardioids at `directions`:
/// row `q` is `[0.5, 0.5 cos phi_q, 0.5 sin phi_q]`.
pub fn cardioid_fan_decoder(directions: &[Direction]) -> Result<DecoderMatrix> {
    if directions.is_empty() {
        return Err(Error::invalid("decoder needs at least one direction"));
    }
    let entries = directions
        .iter()
        .flat_map(|d| {
            let [x, y] = d.unit();
            [0.5, 0.5 * x, 0.5 * y]
        })
        .collect();
    DecoderMatrix::new(directions.len(), 3, entries, directions.to_vec())
}

/// Alias-free first-order encoder, `Q x K`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    alpha: f64,
}

impl EncoderMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn get(&self, q: usize, k: usize) -> f64 {
        self.entries[q * self.cols + k]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// `E[q][k] = alpha + (1 - alpha) * (u_q . u_k)`.
///
/// `alpha = 0` is a figure-of-eight, `0.5` a cardioid, `1` omnidirectional.
pub fn target_encoder(
    decode_dirs: &[Direction],
    source_dirs: &[Direction],
    alpha: f64,
) -> Result<EncoderMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "shape coefficient {alpha} not in [0, 1]"
        )));
    }
    let entries = decode_dirs
        .iter()
        .flat_map(|q| {
            source_dirs
                .iter()
                .map(move |k| alpha + (1.0 - alpha) * q.dot(k))
        })
        .collect();
    Ok(EncoderMatrix {
        rows: decode_dirs.len(),
        cols: source_dirs.len(),
        entries,
        alpha,
    })
}

/// Alias-free targets `t = E s` per tile from the per-source STFTs.
pub fn make_targets(encoder: &EncoderMatrix, sources: &Spectrogram) -> Result<Spectrogram> {
    if encoder.cols() != sources.num_channels() {
        return Err(Error::invalid(format!(
            "encoder has {} columns but there are {} sources",
            encoder.cols(),
            sources.num_channels()
        )));
    }
    let s = sources.data();
    let (bins, frames) = (sources.num_bins(), sources.num_frames());
    let mut out = Array3::<Complex64>::zeros((encoder.rows(), bins, frames));
    for q in 0..encoder.rows() {
        for k in 0..encoder.cols() {
            let e = encoder.get(q, k);
            if e == 0.0 {
                continue;
            }
            let src = s.index_axis(ndarray::Axis(0), k);
            let mut dst = out.index_axis_mut(ndarray::Axis(0), q);
            dst.zip_mut_with(&src, |d, &x| *d += x * e);
        }
    }
    sources.with_data(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    Diag,
    Full,
}

impl FilterMode {
    /// Complex entries stored per tile.
    pub fn entries_per_tile(self, v: usize) -> usize {
        match self {
            FilterMode::Diag => v,
            FilterMode::Full => v * v,
        }
    }
}

/// Per-tile de-aliasing filters, stored `[frame][bin][entry]`; full mode
/// entries are row-major `V x V`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterField {
    mode: FilterMode,
    v: usize,
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
}

impl FilterField {
    pub fn zeros(mode: FilterMode, v: usize, frames: usize, bins: usize) -> Self {
        FilterField {
            mode,
            v,
            frames,
            bins,
            data: vec![Complex64::default(); frames * bins * mode.entries_per_tile(v)],
        }
    }

    pub fn identity(mode: FilterMode, v: usize, frames: usize, bins: usize) -> Self {
        let mut f = Self::zeros(mode, v, frames, bins);
        for t in 0..frames {
            for k in 0..bins {
                f.set_identity(t, k);
            }
        }
        f
    }

    pub fn from_data(
        mode: FilterMode,
        v: usize,
        frames: usize,
        bins: usize,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        if data.len() != frames * bins * mode.entries_per_tile(v) {
            return Err(Error::invalid(format!(
                "{} filter entries for a {frames}x{bins} field with V={v}",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("filter field contains non-finite entries"));
        }
        Ok(FilterField {
            mode,
            v,
            frames,
            bins,
            data,
        })
    }

    pub fn mode(&self) -> FilterMode {
        self.mode
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    pub fn num_bins(&self) -> usize {
        self.bins
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    fn offset(&self, t: usize, k: usize) -> usize {
        (t * self.bins + k) * self.mode.entries_per_tile(self.v)
    }

    pub fn tile(&self, t: usize, k: usize) -> &[Complex64] {
        let o = self.offset(t, k);
        &self.data[o..o + self.mode.entries_per_tile(self.v)]
    }

    pub fn tile_mut(&mut self, t: usize, k: usize) -> &mut [Complex64] {
        let o = self.offset(t, k);
        let n = self.mode.entries_per_tile(self.v);
        &mut self.data[o..o + n]
    }

    pub fn set_identity(&mut self, t: usize, k: usize) {
        let (mode, v) = (self.mode, self.v);
        let tile = self.tile_mut(t, k);
        tile.fill(Complex64::default());
        for i in 0..v {
            let idx = match mode {
                FilterMode::Diag => i,
                FilterMode::Full => i * v + i,
            };
            tile[idx] = Complex64::new(1.0, 0.0);
        }
    }

    /// Full-mode copy; diagonal filters get zero off-diagonals.
    pub fn to_full(&self) -> FilterField {
        match self.mode {
            FilterMode::Full => self.clone(),
            FilterMode::Diag => {
                let mut out = FilterField::zeros(FilterMode::Full, self.v, self.frames, self.bins);
                for t in 0..self.frames {
                    for k in 0..self.bins {
                        let d = self.tile(t, k).to_vec();
                        let full = out.tile_mut(t, k);
                        for i in 0..self.v {
                            full[i * self.v + i] = d[i];
                        }
                    }
                }
                out
            }
        }
    }

    /// `M v` for one tile.
    pub fn apply_tile(&self, t: usize, k: usize, v: &[Complex64]) -> Vec<Complex64> {
        let m = self.tile(t, k);
        match self.mode {
            FilterMode::Diag => m.iter().zip(v).map(|(a, b)| a * b).collect(),
            FilterMode::Full => (0..self.v)
                .map(|r| (0..self.v).map(|c| m[r * self.v + c] * v[c]).sum())
                .collect(),
        }
    }
}

/// Decode filtered virtual microphones: `y = D (M v)` on every tile.
pub fn apply_filter(
    decoder: &DecoderMatrix,
    filters: &FilterField,
    vmics: &Spectrogram,
) -> Result<Spectrogram> {
    let v = vmics.num_channels();
    if decoder.cols() != v || filters.v() != v {
        return Err(Error::invalid(format!(
            "decoder ({}x{}) / filter (V={}) do not match {v} virtual microphones",
            decoder.rows(),
            decoder.cols(),
            filters.v()
        )));
    }
    let (bins, frames) = (vmics.num_bins(), vmics.num_frames());
    if filters.num_bins() != bins || filters.num_frames() != frames {
        return Err(Error::invalid(format!(
            "filter grid {}x{} does not match spectrogram {}x{}",
            filters.num_bins(),
            filters.num_frames(),
            bins,
            frames
        )));
    }
    let q = decoder.rows();
    let data = vmics.data();
    // [bin][frame][q]
    let mut flat = vec![Complex64::default(); bins * frames * q];
    flat.par_chunks_mut(frames * q)
        .enumerate()
        .for_each(|(k, chunk)| {
            let mut tile = vec![Complex64::default(); v];
            for t in 0..frames {
                for (i, z) in tile.iter_mut().enumerate() {
                    *z = data[[i, k, t]];
                }
                let y = decoder.decode(&filters.apply_tile(t, k, &tile));
                chunk[t * q..(t + 1) * q].copy_from_slice(&y);
            }
        });
    let out = Array3::from_shape_fn((q, bins, frames), |(c, k, t)| {
        flat[(k * frames + t) * q + c]
    });
    vmics.with_data(out)
}

const FILTER_MAGIC: &[u8; 4] = b"DAFF";

/// Write a filter field: magic `DAFF`, then little-endian u32 mode
/// (0 diag, 1 full), frames, bins, V, then interleaved re/im f32 entries.
pub fn write_filter_field(path: impl AsRef<Path>, field: &FilterField) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(20 + field.data.len() * 8);
    buf.extend_from_slice(FILTER_MAGIC);
    let mode = match field.mode {
        FilterMode::Diag => 0u32,
        FilterMode::Full => 1u32,
    };
    for x in [mode, field.frames as u32, field.bins as u32, field.v as u32] {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for z in &field.data {
        buf.extend_from_slice(&(z.re as f32).to_le_bytes());
        buf.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_filter_field(path: impl AsRef<Path>) -> Result<FilterField> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || &bytes[..4] != FILTER_MAGIC {
        return Err(Error::format(path, "not a filter field"));
    }
    let word =
        |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let mode = match word(0) {
        0 => FilterMode::Diag,
        1 => FilterMode::Full,
        m => return Err(Error::format(path, format!("unknown filter mode {m}"))),
    };
    let (frames, bins, v) = (word(1), word(2), word(3));
    let n = frames * bins * mode.entries_per_tile(v);
    if bytes.len() != 20 + 8 * n {
        return Err(Error::format(path, "truncated filter field"));
    }
    let data = bytes[20..]
        .chunks_exact(8)
        .map(|c| {
            Complex64::new(
                f32::from_le_bytes(c[..4].try_into().unwrap()) as f64,
                f32::from_le_bytes(c[4..].try_into().unwrap()) as f64,
            )
        })
        .collect();
    FilterField::from_data(mode, v, frames, bins, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn dir(a: f64) -> Direction {
        Direction::from_azimuth(a).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rand_c(rng: &mut Xoshiro256PlusPlus) -> Complex64 {
        c(
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
        )
    }

    fn spec(
        channels: usize,
        bins: usize,
        frames: usize,
        rng: &mut Xoshiro256PlusPlus,
    ) -> Spectrogram {
        let n = 2 * (bins - 1);
        let data = Array3::from_shape_fn((channels, bins, frames), |_| rand_c(rng));
        Spectrogram::new(data, 16000, n, n / 2, n * (frames - 1) / 2).unwrap()
    }

    #[test]
    fn identity_decoders() {
        let d = identity_decoder(2).unwrap();
        assert_eq!(d.entries(), &[1.0, 0.0, 0.0, 1.0]);
        let d = identity_decoder(3).unwrap();
        assert_eq!(d.rows(), 3);
        let v = [c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 1.0)];
        assert_eq!(d.decode(&v), v.to_vec());
    }

    #[test]
    fn cardioid_fan_rows() {
        let fan = cardioid_fan_decoder(&[dir(0.0), dir(180.0), dir(90.0), dir(270.0)]).unwrap();
        assert_eq!(&fan.entries()[..3], &[0.5, 0.5, 0.0]);
        let w = fan.decode(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(w.iter().all(|z| *z == c(0.5, 0.0)));
        let y = fan.decode(&[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let expected = [1.0, 0.0, 0.5, 0.5];
        for (z, e) in y.iter().zip(expected) {
            assert!((z - c(e, 0.0)).norm() < 1e-15);
        }
        assert!(cardioid_fan_decoder(&[]).is_err());
    }

    #[test]
    fn in_phase_decode_has_no_negative_lobe() {
        let fan = cardioid_fan_decoder(&[dir(0.0), dir(180.0), dir(90.0), dir(270.0)]).unwrap();
        for a in 0..360 {
            let [x, y] = dir(a as f64).unit();
            let out = fan.decode(&[c(1.0, 0.0), c(x, 0.0), c(y, 0.0)]);
            assert!(out.iter().all(|z| z.re >= -1e-15 && z.im == 0.0));
        }
    }

    #[test]
    fn encoder_pattern_values() {
        let e = |q: f64, k: f64, a: f64| target_encoder(&[dir(q)], &[dir(k)], a).unwrap().get(0, 0);
        assert_eq!(e(0.0, 0.0, 0.5), 1.0);
        assert_eq!(e(0.0, 180.0, 0.5), 0.0);
        assert_eq!(e(0.0, 90.0, 0.0), 0.0);
        for k in [0.0, 33.0, 90.0, 180.0, 271.0] {
            assert_eq!(e(17.0, k, 1.0), 1.0);
        }
        assert!(matches!(
            target_encoder(&[dir(0.0)], &[dir(0.0)], 1.5),
            Err(Error::InvalidArgument(_))
        ));
        assert!(target_encoder(&[dir(0.0)], &[dir(0.0)], -0.1).is_err());
    }

    #[test]
    fn make_targets_cases() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let s = spec(1, 5, 4, &mut rng);
        let e = EncoderMatrix {
            rows: 2,
            cols: 1,
            entries: vec![1.0, 0.0],
            alpha: 0.5,
        };
        let t = make_targets(&e, &s).unwrap();
        assert_eq!(t.channel(0), s.channel(0));
        assert!(t.channel(1).iter().all(|z| z.norm() == 0.0));

        // random case against a per-tile brute force
        let s = spec(3, 7, 5, &mut rng);
        let e = target_encoder(
            &[dir(0.0), dir(180.0), dir(90.0), dir(270.0)],
            &[dir(10.0), dir(130.0), dir(250.0)],
            0.5,
        )
        .unwrap();
        let t = make_targets(&e, &s).unwrap();
        for q in 0..4 {
            for k in 0..7 {
                for n in 0..5 {
                    let mut acc = c(0.0, 0.0);
                    for src in 0..3 {
                        acc += s.data()[[src, k, n]] * e.get(q, src);
                    }
                    assert!((t.data()[[q, k, n]] - acc).norm() < 1e-12);
                }
            }
        }
        let bad = spec(2, 7, 5, &mut rng);
        assert!(make_targets(&e, &bad).is_err());
    }

    #[test]
    fn two_equal_sources_sum_rows() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
        let one = spec(1, 5, 3, &mut rng);
        let data = ndarray::concatenate(ndarray::Axis(0), &[one.data().view(), one.data().view()])
            .unwrap();
        let two = one.with_data(data).unwrap();
        let e = target_encoder(&[dir(0.0), dir(180.0)], &[dir(60.0), dir(60.0)], 0.5).unwrap();
        let t = make_targets(&e, &two).unwrap();
        for q in 0..2 {
            let r = e.get(q, 0);
            for (a, b) in t.channel(q).iter().zip(one.channel(0)) {
                assert!((a - b * (2.0 * r)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn apply_filter_cases() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
        let v = spec(3, 6, 4, &mut rng);
        let fan = cardioid_fan_decoder(&[dir(0.0), dir(180.0), dir(90.0), dir(270.0)]).unwrap();

        // pass-through
        let id = FilterField::identity(FilterMode::Full, 3, 4, 6);
        let y = apply_filter(&fan, &id, &v).unwrap();
        for k in 0..6 {
            for t in 0..4 {
                let tile: Vec<_> = (0..3).map(|i| v.data()[[i, k, t]]).collect();
                let expected = fan.decode(&tile);
                for (q, e) in expected.iter().enumerate() {
                    assert!((y.data()[[q, k, t]] - e).norm() < 1e-15);
                }
            }
        }

        // diag read-off
        let ones =
            Spectrogram::new(Array3::from_elem((2, 3, 1), c(1.0, 0.0)), 16000, 4, 2, 0).unwrap();
        let mut m = FilterField::identity(FilterMode::Diag, 2, 1, 3);
        m.tile_mut(0, 1)
            .copy_from_slice(&[c(2.0, 0.0), c(0.0, 3.0)]);
        let y = apply_filter(&identity_decoder(2).unwrap(), &m, &ones).unwrap();
        assert_eq!(y.data()[[0, 1, 0]], c(2.0, 0.0));
        assert_eq!(y.data()[[1, 1, 0]], c(0.0, 3.0));

        // random full case against brute force
        let data: Vec<Complex64> = (0..4 * 6 * 9).map(|_| rand_c(&mut rng)).collect();
        let m = FilterField::from_data(FilterMode::Full, 3, 4, 6, data).unwrap();
        let y = apply_filter(&fan, &m, &v).unwrap();
        for k in 0..6 {
            for t in 0..4 {
                let tile = m.tile(t, k);
                for q in 0..4 {
                    let mut acc = c(0.0, 0.0);
                    for r in 0..3 {
                        let mut mv = c(0.0, 0.0);
                        for cc in 0..3 {
                            mv += tile[r * 3 + cc] * v.data()[[cc, k, t]];
                        }
                        acc += mv * fan.get(q, r);
                    }
                    assert!((y.data()[[q, k, t]] - acc).norm() < 1e-12);
                }
            }
        }

        // diag equals full with zero off-diagonals
        let data: Vec<Complex64> = (0..4 * 6 * 3).map(|_| rand_c(&mut rng)).collect();
        let diag = FilterField::from_data(FilterMode::Diag, 3, 4, 6, data).unwrap();
        let a = apply_filter(&fan, &diag, &v).unwrap();
        let b = apply_filter(&fan, &diag.to_full(), &v).unwrap();
        assert_eq!(a, b);

        assert!(apply_filter(&identity_decoder(2).unwrap(), &diag, &v).is_err());
        let small = FilterField::identity(FilterMode::Diag, 3, 3, 6);
        assert!(apply_filter(&fan, &small, &v).is_err());
    }

    #[test]
    fn apply_filter_is_linear() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(6);
        let a = spec(2, 5, 3, &mut rng);
        let b = spec(2, 5, 3, &mut rng);
        let data: Vec<Complex64> = (0..3 * 5 * 4).map(|_| rand_c(&mut rng)).collect();
        let m = FilterField::from_data(FilterMode::Full, 2, 3, 5, data).unwrap();
        let d = identity_decoder(2).unwrap();
        let sum = a.with_data(a.data() + b.data()).unwrap();
        let ya = apply_filter(&d, &m, &a).unwrap();
        let yb = apply_filter(&d, &m, &b).unwrap();
        let ys = apply_filter(&d, &m, &sum).unwrap();
        for ((x, y), z) in ya.data().iter().zip(yb.data()).zip(ys.data()) {
            assert!((x + y - z).norm() < 1e-12);
        }
    }

    #[test]
    fn filter_field_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.daff");
        let data: Vec<Complex64> = (0..2 * 3 * 4)
            .map(|i| c(i as f64 * 0.5, -(i as f64)))
            .collect();
        let m = FilterField::from_data(FilterMode::Full, 2, 2, 3, data).unwrap();
        write_filter_field(&p, &m).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"DAFF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(bytes.len(), 20 + 24 * 8);
        assert_eq!(read_filter_field(&p).unwrap(), m);
        fs::write(&p, &bytes[..30]).unwrap();
        assert!(read_filter_field(&p).is_err());
    }
}
