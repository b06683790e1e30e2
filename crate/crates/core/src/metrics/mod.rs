//! Objective evaluation: complex scale-invariant SNR, the PHASEN loss, and
//! spatial-response sweeps.

mod polar;
mod sweep;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Spectrogram;

pub use polar::{pattern_deviation_db, PolarResponse};
pub use sweep::{spatial_sweep, SweepConfig};

/// Relative error floor of the C-Si-SNR; caps the value at 120 dB.
pub const CSISNR_EPS: f64 = 1e-12;
/// Lowest reported C-Si-SNR (an estimate orthogonal to its target).
pub const CSISNR_FLOOR_DB: f64 = -120.0;
pub const PHASEN_POWER: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CSiSnr {
    pub per_channel_db: Vec<f64>,
    pub mean_db: f64,
}

fn check_shapes(estimate: &Spectrogram, target: &Spectrogram) -> Result<()> {
    if estimate.data().dim() != target.data().dim() {
        return Err(Error::invalid(format!(
            "estimate shape {:?} differs from target shape {:?}",
            estimate.data().dim(),
            target.data().dim()
        )));
    }
    Ok(())
}

/// C-Si-SNR of one flattened channel.
pub fn c_si_snr_channel(estimate: &[Complex64], target: &[Complex64]) -> Option<f64> {
    let xx: f64 = target.iter().map(|z| z.norm_sqr()).sum();
    if xx == 0.0 {
        return None;
    }
    let dot: Complex64 = estimate.iter().zip(target).map(|(e, x)| e * x.conj()).sum();
    let a = dot / xx;
    let ss = a.norm_sqr() * xx;
    let err: f64 = estimate
        .iter()
        .zip(target)
        .map(|(e, x)| (e - a * x).norm_sqr())
        .sum();
    let v = 10.0 * (ss / (err + CSISNR_EPS * ss)).log10();
    Some(if v.is_nan() {
        CSISNR_FLOOR_DB
    } else {
        v.max(CSISNR_FLOOR_DB)
    })
}

/// Per-channel and mean C-Si-SNR over all tiles.
pub fn c_si_snr(estimate: &Spectrogram, target: &Spectrogram) -> Result<CSiSnr> {
    check_shapes(estimate, target)?;
    let per_channel_db = (0..target.num_channels())
        .map(|q| {
            let e: Vec<Complex64> = estimate.channel(q).iter().copied().collect();
            let t: Vec<Complex64> = target.channel(q).iter().copied().collect();
            c_si_snr_channel(&e, &t).ok_or(Error::UndefinedMetric { channel: q })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_db = per_channel_db.iter().sum::<f64>() / per_channel_db.len() as f64;
    Ok(CSiSnr {
        per_channel_db,
        mean_db,
    })
}

fn compress(z: Complex64, p: f64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        Complex64::default()
    } else {
        z * (r.powf(p) / r)
    }
}

/// PHASEN loss with power compression `p`, averaged over channels.
pub fn phasen_loss(estimate: &Spectrogram, target: &Spectrogram, p: f64) -> Result<f64> {
    check_shapes(estimate, target)?;
    let q = target.num_channels();
    let mut total = 0.0;
    for c in 0..q {
        let (e, t) = (estimate.channel(c), target.channel(c));
        let n = t.len() as f64;
        let (mut amp, mut pha) = (0.0, 0.0);
        for (y, x) in e.iter().zip(t.iter()) {
            amp += (x.norm().powf(p) - y.norm().powf(p)).powi(2);
            pha += (compress(*x, p) - compress(*y, p)).norm_sqr();
        }
        total += 0.5 * amp / n + 0.5 * pha / n;
    }
    Ok(total / q as f64)
}

/// Default analysis bands: `[0, fa)`, `[fa, 2fa)`, `[2fa, 4fa)`, `[4fa, fs/2]`,
/// clipped to Nyquist; empty bands are dropped.
pub fn band_partition(f_alias: f64, sample_rate: u32) -> Result<Vec<(f64, f64)>> {
    let nyq = sample_rate as f64 / 2.0;
    if !(f_alias > 0.0 && f_alias < nyq) {
        return Err(Error::invalid(format!(
            "aliasing frequency {f_alias} Hz must lie in (0, {nyq}) Hz"
        )));
    }
    let edges = [0.0, f_alias, 2.0 * f_alias, 4.0 * f_alias, nyq];
    Ok(edges
        .windows(2)
        .map(|w| (w[0].min(nyq), w[1].min(nyq)))
        .filter(|(lo, hi)| hi > lo)
        .collect())
}
