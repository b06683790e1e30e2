use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{
    decode_with, predict_filters_for, scene_targets, scene_vmics, FilterSpec, PipelineConfig,
};
use crate::geometry::Direction;
use crate::rng::{derive_seed, rng_from_seed};
use crate::signal::Spectrogram;
use crate::simulate::{
    render_array, synth_source, SceneSource, SourceKind, SourceScene, SpacingMode,
};

use super::band_partition;
use super::polar::PolarResponse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub azimuths_deg: Vec<f64>,
    /// Independent white-noise bursts per direction.
    pub n_signals: usize,
    /// Defaults to [`band_partition`] of the nominal aliasing frequency.
    pub bands: Option<Vec<(f64, f64)>>,
    pub seed: u64,
    pub duration_s: f64,
}

impl SweepConfig {
    /// `grid` equally spaced azimuths starting at 0.
    pub fn uniform(grid: usize, n_signals: usize, seed: u64) -> Self {
        SweepConfig {
            azimuths_deg: (0..grid).map(|i| 360.0 * i as f64 / grid as f64).collect(),
            n_signals,
            bands: None,
            seed,
            duration_s: 0.5,
        }
    }
}

fn band_bins(spec: &Spectrogram, (lo, hi): (f64, f64)) -> Vec<usize> {
    let nyq = spec.sample_rate() as f64 / 2.0;
    (0..spec.num_bins())
        .filter(|&k| {
            let f = spec.bin_frequency(k);
            f >= lo && (f < hi || (hi >= nyq && f <= hi))
        })
        .collect()
}

/// Per-channel RMS magnitude of `spec` in each band.
fn band_rms(spec: &Spectrogram, bands: &[Vec<usize>]) -> Vec<f64> {
    let d = spec.data();
    let mut out = Vec::with_capacity(bands.len() * spec.num_channels());
    for bins in bands {
        for c in 0..spec.num_channels() {
            let mut acc = 0.0;
            for &k in bins {
                for n in 0..spec.num_frames() {
                    acc += d[[c, k, n]].norm_sqr();
                }
            }
            out.push((acc / (bins.len() * spec.num_frames()) as f64).sqrt());
        }
    }
    out
}

fn one_render(
    config: &PipelineConfig,
    filter: &FilterSpec,
    direction: Direction,
    seed: u64,
    duration_s: f64,
    bands: &[(f64, f64)],
) -> Result<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    let (dx, dy) = match config.spacing {
        SpacingMode::Fixed(d) => (d, d),
        SpacingMode::Varying { lo, hi } => (
            lo + (hi - lo) * rng.random::<f64>(),
            lo + (hi - lo) * rng.random::<f64>(),
        ),
    };
    let src_seed = derive_seed(seed, 0);
    let scene = SourceScene {
        sources: vec![SceneSource {
            direction,
            kind: SourceKind::White,
            seed: src_seed,
        }],
        spacing_x: dx,
        spacing_y: dy,
        sample_rate: config.sample_rate,
        duration_s,
        seed,
    };
    let sources = vec![synth_source(
        SourceKind::White,
        duration_s,
        config.sample_rate,
        src_seed,
    )?];
    let mixture = render_array(&scene, &sources, &scene.geometry()?, config.speed_of_sound)?;
    let vmics = scene_vmics(config, (dx, dy), &mixture)?;
    let targets = if filter.kind().needs_targets() {
        Some(scene_targets(config, &scene, &sources)?)
    } else {
        None
    };
    let field = predict_filters_for(config, filter, (dx, dy), &vmics, targets.as_ref())?;
    let decoded = decode_with(config, &field, &vmics)?;
    let bins: Vec<Vec<usize>> = bands.iter().map(|&b| band_bins(&decoded, b)).collect();
    if let Some(i) = bins.iter().position(|b| b.is_empty()) {
        return Err(Error::invalid(format!(
            "band {:?} contains no STFT bin",
            bands[i]
        )));
    }
    Ok(band_rms(&decoded, &bins))
}

/// Render one source at a time from every grid direction, run the pipeline,
/// and aggregate per-band RMS magnitudes of each decoded channel (mean over
/// signals), normalized per band and channel to a maximum of 1.
pub fn spatial_sweep(
    config: &PipelineConfig,
    filter: &FilterSpec,
    sweep: &SweepConfig,
) -> Result<PolarResponse> {
    config.validate()?;
    if sweep.azimuths_deg.is_empty() {
        return Err(Error::invalid("sweep grid is empty"));
    }
    if sweep.n_signals == 0 {
        return Err(Error::invalid(
            "sweep needs at least one signal per direction",
        ));
    }
    let nyq = config.sample_rate as f64 / 2.0;
    let bands = match &sweep.bands {
        Some(b) => b.clone(),
        None => band_partition(config.aliasing_frequency()?, config.sample_rate)?,
    };
    if bands.is_empty()
        || bands
            .iter()
            .any(|&(lo, hi)| !(lo >= 0.0 && lo < hi && hi <= nyq))
    {
        return Err(Error::invalid(format!(
            "bands must lie within [0, {nyq}] Hz"
        )));
    }
    let channels = config.decoder()?.rows();
    let per_az = sweep
        .azimuths_deg
        .par_iter()
        .enumerate()
        .map(|(a, &az)| {
            let run = || -> Result<Vec<f64>> {
                let dir = Direction::from_azimuth(az)?;
                let az_seed = derive_seed(sweep.seed, a as u64);
                let mut acc = vec![0.0; bands.len() * channels];
                for j in 0..sweep.n_signals {
                    let m = one_render(
                        config,
                        filter,
                        dir,
                        derive_seed(az_seed, j as u64),
                        sweep.duration_s,
                        &bands,
                    )?;
                    acc.iter_mut().zip(m).for_each(|(s, v)| *s += v);
                }
                acc.iter_mut().for_each(|s| *s /= sweep.n_signals as f64);
                Ok(acc)
            };
            run().map_err(|e| Error::AtAzimuth {
                azimuth_deg: az,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_az = sweep.azimuths_deg.len();
    let mut magnitudes = vec![0.0; bands.len() * n_az * channels];
    for b in 0..bands.len() {
        for c in 0..channels {
            let peak = (0..n_az)
                .map(|a| per_az[a][b * channels + c])
                .fold(0.0, f64::max);
            for a in 0..n_az {
                let v = per_az[a][b * channels + c];
                magnitudes[(b * n_az + a) * channels + c] = if peak > 0.0 { v / peak } else { 0.0 };
            }
        }
    }
    Ok(PolarResponse {
        bands,
        azimuths_deg: sweep.azimuths_deg.clone(),
        channels,
        magnitudes,
        seed: sweep.seed,
        n_signals: sweep.n_signals,
        pipeline: format!("{}/{}", config.preset, filter.kind()),
    })
}
