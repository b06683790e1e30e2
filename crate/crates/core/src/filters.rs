//! Non-neural filter predictors.
//!
//! The per-tile oracles fit `D M v ~= t` exactly on every time-frequency tile
//! using the ground-truth targets, so they bound what the filtering model can
//! achieve. They need the clean sources and are evaluation devices only. The
//! LTI baseline fits one full matrix per frequency over a grid of directions
//! and cannot adapt to the signal.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamform::BeamformerConfig;
use crate::codec::{target_encoder, DecoderMatrix, FilterField, FilterMode};
use crate::error::{Error, Result};
use crate::geometry::Direction;
use crate::linalg::{norm_sqr, solve_hpd};
use crate::signal::Spectrogram;

/// Tiles with `||v||` below this get a zero filter.
pub const DEGENERATE_TILE_NORM: f64 = 1e-12;

/// Tikhonov weight of a least-squares filter fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    /// Used as is.
    Absolute(f64),
    /// Multiplied by `||A||_F^2 / V` of the system being solved.
    Relative(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-9)
    }
}

impl Ridge {
    fn resolve(self, frob_sqr: f64, v: usize) -> f64 {
        match self {
            Ridge::Absolute(e) => e,
            Ridge::Relative(r) => r * frob_sqr / v as f64,
        }
    }
}

/// Diagonal filter minimizing `||D diag(v) m - t||^2 + eps ||m||^2`.
pub fn oracle_tile_diag(
    decoder: &DecoderMatrix,
    v: &[Complex64],
    t: &[Complex64],
    ridge: Ridge,
) -> Vec<Complex64> {
    let (q, n) = (decoder.rows(), decoder.cols());
    if norm_sqr(v).sqrt() < DEGENERATE_TILE_NORM {
        return vec![Complex64::default(); n];
    }
    // A = D diag(v)
    let a: Vec<Complex64> = (0..q)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .map(|(r, c)| v[c] * decoder.get(r, c))
        .collect();
    let eps = ridge.resolve(norm_sqr(&a), n).max(0.0);
    let mut normal = vec![Complex64::default(); n * n];
    let mut rhs = vec![Complex64::default(); n];
    for i in 0..n {
        for j in 0..n {
            normal[i * n + j] = (0..q).map(|r| a[r * n + i].conj() * a[r * n + j]).sum();
        }
        normal[i * n + i] += eps;
        rhs[i] = (0..q).map(|r| a[r * n + i].conj() * t[r]).sum();
    }
    solve_hpd(&normal, &rhs).unwrap_or_else(|| {
        // singular without ridge: retry with a vanishing one
        let scale = (0..n)
            .map(|i| normal[i * n + i].re)
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        for i in 0..n {
            normal[i * n + i] += 1e-14 * scale;
        }
        solve_hpd(&normal, &rhs).unwrap_or_else(|| vec![Complex64::default(); n])
    })
}

/// Full `V x V` filter (row-major) minimizing
/// `||(v^T kron D) vec(M) - t||^2 + eps ||M||_F^2`.
///
/// Solved in the dual: `M = (D^T z) v^H` with
/// `(||v||^2 D D^T + eps I) z = t`.
pub fn oracle_tile_full(
    decoder: &DecoderMatrix,
    v: &[Complex64],
    t: &[Complex64],
    ridge: Ridge,
) -> Vec<Complex64> {
    let (q, n) = (decoder.rows(), decoder.cols());
    let vv = norm_sqr(v);
    if vv.sqrt() < DEGENERATE_TILE_NORM {
        return vec![Complex64::default(); n * n];
    }
    let d_frob: f64 = decoder.entries().iter().map(|x| x * x).sum();
    let mut eps = ridge.resolve(vv * d_frob, n);
    if !(eps > 0.0) {
        eps = 1e-14 * vv * d_frob;
    }
    let mut gram = vec![Complex64::default(); q * q];
    for i in 0..q {
        for j in 0..q {
            let dd: f64 = (0..n).map(|c| decoder.get(i, c) * decoder.get(j, c)).sum();
            gram[i * q + j] = Complex64::new(vv * dd, 0.0);
        }
        gram[i * q + i] += eps;
    }
    let Some(z) = solve_hpd(&gram, t) else {
        return vec![Complex64::default(); n * n];
    };
    let w: Vec<Complex64> = (0..n)
        .map(|r| (0..q).map(|i| z[i] * decoder.get(i, r)).sum())
        .collect();
    let mut m = vec![Complex64::default(); n * n];
    for r in 0..n {
        for c in 0..n {
            m[r * n + c] = w[r] * v[c].conj();
        }
    }
    m
}

/// `||D M v - t||` for a diag (`V` entries) or full (`V*V`) tile filter.
pub fn tile_residual(
    decoder: &DecoderMatrix,
    filter: &[Complex64],
    v: &[Complex64],
    t: &[Complex64],
) -> f64 {
    let n = v.len();
    let mv: Vec<Complex64> = if filter.len() == n {
        filter.iter().zip(v).map(|(a, b)| a * b).collect()
    } else {
        (0..n)
            .map(|r| (0..n).map(|c| filter[r * n + c] * v[c]).sum())
            .collect()
    };
    let y = decoder.decode(&mv);
    y.iter()
        .zip(t)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Per-tile oracle filters for a whole utterance.
pub fn oracle_filters(
    mode: FilterMode,
    decoder: &DecoderMatrix,
    vmics: &Spectrogram,
    targets: &Spectrogram,
    ridge: Ridge,
) -> Result<FilterField> {
    let v = vmics.num_channels();
    let q = decoder.rows();
    if decoder.cols() != v || targets.num_channels() != q || !vmics.same_grid(targets) {
        return Err(Error::invalid(format!(
            "oracle needs {v} virtual mics, a {q}x{v} decoder and {q} targets on the same grid"
        )));
    }
    let (bins, frames) = (vmics.num_bins(), vmics.num_frames());
    let per = mode.entries_per_tile(v);
    let (vd, td) = (vmics.data(), targets.data());
    let columns: Vec<Vec<Complex64>> = (0..bins)
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::with_capacity(frames * per);
            let mut vt = vec![Complex64::default(); v];
            let mut tt = vec![Complex64::default(); q];
            for n in 0..frames {
                for (i, z) in vt.iter_mut().enumerate() {
                    *z = vd[[i, k, n]];
                }
                for (i, z) in tt.iter_mut().enumerate() {
                    *z = td[[i, k, n]];
                }
                let m = match mode {
                    FilterMode::Diag => oracle_tile_diag(decoder, &vt, &tt, ridge),
                    FilterMode::Full => oracle_tile_full(decoder, &vt, &tt, ridge),
                };
                out.extend(m);
            }
            out
        })
        .collect();
    let mut field = FilterField::zeros(mode, v, frames, bins);
    for (k, col) in columns.iter().enumerate() {
        for n in 0..frames {
            field
                .tile_mut(n, k)
                .copy_from_slice(&col[n * per..(n + 1) * per]);
        }
    }
    Ok(field)
}

/// Frequency-indexed static filters from a direction-grid least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiFilter {
    v: usize,
    /// Full row-major `V x V` filter per STFT bin.
    per_bin: Vec<Vec<Complex64>>,
}

impl LtiFilter {
    pub fn matrix(&self, k: usize) -> &[Complex64] {
        &self.per_bin[k]
    }

    pub fn num_bins(&self) -> usize {
        self.per_bin.len()
    }

    /// Repeat the per-bin filters over `frames` frames.
    pub fn to_field(&self, frames: usize) -> FilterField {
        let bins = self.per_bin.len();
        let mut field = FilterField::zeros(FilterMode::Full, self.v, frames, bins);
        for n in 0..frames {
            for k in 0..bins {
                field.tile_mut(n, k).copy_from_slice(&self.per_bin[k]);
            }
        }
        field
    }
}

/// Static full filter for one frequency:
/// `argmin_M sum_theta ||D M a(theta) - e(theta)||^2 + eps ||M||_F^2`.
pub fn lti_ls_matrix(
    beamformer: &BeamformerConfig,
    decoder: &DecoderMatrix,
    target_dirs: &[Direction],
    alpha: f64,
    grid: &[Direction],
    f: f64,
    ridge: Ridge,
) -> Result<Vec<Complex64>> {
    let n = decoder.cols();
    if beamformer.num_outputs() != n {
        return Err(Error::invalid(
            "decoder does not match the beamformer outputs",
        ));
    }
    if grid.is_empty() {
        return Err(Error::invalid("direction grid is empty"));
    }
    let q = decoder.rows();
    if target_dirs.len() != q {
        return Err(Error::invalid(format!(
            "{} target directions for {q} decoder rows",
            target_dirs.len()
        )));
    }
    let encoder = target_encoder(target_dirs, grid, alpha)?;
    // normal equations in vec(M) (column-major index c*n + r):
    // (C kron G + eps I) vec(M) = sum_theta conj(a) kron (D^T e)
    let g: Vec<f64> = (0..n * n)
        .map(|i| {
            (0..q)
                .map(|r| decoder.get(r, i / n) * decoder.get(r, i % n))
                .sum()
        })
        .collect();
    let mut cov = vec![Complex64::default(); n * n];
    let mut rhs = vec![Complex64::default(); n * n];
    let mut energy = 0.0;
    for (j, a) in beamformer.steering_responses(grid, f).iter().enumerate() {
        energy += norm_sqr(a);
        let dte: Vec<f64> = (0..n)
            .map(|r| (0..q).map(|i| decoder.get(i, r) * encoder.get(i, j)).sum())
            .collect();
        for c in 0..n {
            for c2 in 0..n {
                cov[c * n + c2] += a[c].conj() * a[c2];
            }
            for r in 0..n {
                rhs[c * n + r] += a[c].conj() * dte[r];
            }
        }
    }
    let d_frob: f64 = decoder.entries().iter().map(|x| x * x).sum();
    let eps = ridge.resolve(energy * d_frob, n).max(0.0);
    let dim = n * n;
    let mut normal = vec![Complex64::default(); dim * dim];
    for c in 0..n {
        for r in 0..n {
            for c2 in 0..n {
                for r2 in 0..n {
                    normal[(c * n + r) * dim + c2 * n + r2] = cov[c * n + c2] * g[r * n + r2];
                }
            }
        }
    }
    for i in 0..dim {
        normal[i * dim + i] += eps;
    }
    let vec_m = solve_hpd(&normal, &rhs).ok_or_else(|| {
        Error::Numeric(format!("static least-squares system is singular at {f} Hz"))
    })?;
    let mut m = vec![Complex64::default(); dim];
    for c in 0..n {
        for r in 0..n {
            m[r * n + c] = vec_m[c * n + r];
        }
    }
    Ok(m)
}

/// Default relative ridge of the static fit.
pub const LTI_RIDGE: Ridge = Ridge::Relative(1e-9);

/// Static filters for every bin of the beamformer's STFT grid. Bins where the
/// fit is singular (e.g. DC with all-zero responses) get a zero filter.
pub fn lti_ls_filter(
    beamformer: &BeamformerConfig,
    decoder: &DecoderMatrix,
    target_dirs: &[Direction],
    alpha: f64,
    grid: &[Direction],
    ridge: Ridge,
) -> Result<LtiFilter> {
    let n = decoder.cols();
    let bins = beamformer.fft_size / 2 + 1;
    let df = beamformer.sample_rate as f64 / beamformer.fft_size as f64;
    let per_bin = (0..bins)
        .into_par_iter()
        .map(|k| {
            match lti_ls_matrix(
                beamformer,
                decoder,
                target_dirs,
                alpha,
                grid,
                k as f64 * df,
                ridge,
            ) {
                Ok(m) => Ok(m),
                Err(Error::Numeric(_)) => Ok(vec![Complex64::default(); n * n]),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LtiFilter { v: n, per_bin })
}
