use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::{apply_filter, make_targets, target_encoder, FilterField, FilterMode};
use crate::error::{Error, Result};
use crate::filters::{lti_ls_filter, oracle_filters, Ridge, LTI_RIDGE};
use crate::geometry::Direction;
use crate::metrics::{c_si_snr, CSiSnr};
use crate::nnmask::{predict_filters, WeightBundle};
use crate::signal::{MonoSignal, MultichannelSignal, Spectrogram};
use crate::simulate::{render_array, sample_scene, synth_scene_sources, SourceScene};
use crate::stft::stft_forward;

use super::PipelineConfig;

/// Directions in the static least-squares fit.
pub const LTI_GRID_SIZE: usize = 360;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Identity,
    OracleDiag,
    OracleFull,
    Lti,
    Nn,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Identity => "identity",
            FilterKind::OracleDiag => "oracle_diag",
            FilterKind::OracleFull => "oracle_full",
            FilterKind::Lti => "lti",
            FilterKind::Nn => "nn",
        }
    }

    pub fn needs_targets(self) -> bool {
        matches!(self, FilterKind::OracleDiag | FilterKind::OracleFull)
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    /// Accepts `oracle-diag` as well as `oracle_diag`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        [
            FilterKind::Identity,
            FilterKind::OracleDiag,
            FilterKind::OracleFull,
            FilterKind::Lti,
            FilterKind::Nn,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::invalid(format!("unknown filter {s:?}")))
    }
}

/// A filter predictor ready to run.
#[derive(Debug, Clone)]
pub enum FilterSpec {
    Identity,
    OracleDiag,
    OracleFull,
    Lti,
    Nn(Box<WeightBundle>),
}

impl FilterSpec {
    /// The `nn` kind needs a weight bundle; other kinds ignore it.
    pub fn new(kind: FilterKind, weights: Option<WeightBundle>) -> Result<Self> {
        Ok(match kind {
            FilterKind::Identity => FilterSpec::Identity,
            FilterKind::OracleDiag => FilterSpec::OracleDiag,
            FilterKind::OracleFull => FilterSpec::OracleFull,
            FilterKind::Lti => FilterSpec::Lti,
            FilterKind::Nn => {
                FilterSpec::Nn(Box::new(weights.ok_or_else(|| {
                    Error::Config("the nn filter needs a weight bundle".into())
                })?))
            }
        })
    }

    pub fn kind(&self) -> FilterKind {
        match self {
            FilterSpec::Identity => FilterKind::Identity,
            FilterSpec::OracleDiag => FilterKind::OracleDiag,
            FilterSpec::OracleFull => FilterKind::OracleFull,
            FilterSpec::Lti => FilterKind::Lti,
            FilterSpec::Nn(_) => FilterKind::Nn,
        }
    }
}

/// A scene with its clean sources and rendered array signals.
#[derive(Debug, Clone)]
pub struct SimulatedScene {
    pub scene: SourceScene,
    pub sources: Vec<MonoSignal>,
    pub mixture: MultichannelSignal,
}

pub fn simulate_scene(config: &PipelineConfig, seed: u64) -> Result<SimulatedScene> {
    let scene = sample_scene(seed, &config.scene_config());
    let sources = synth_scene_sources(&scene)?;
    let mixture = render_array(&scene, &sources, &scene.geometry()?, config.speed_of_sound)?;
    Ok(SimulatedScene {
        scene,
        sources,
        mixture,
    })
}

fn check_rate(config: &PipelineConfig, rate: u32) -> Result<()> {
    if rate != config.sample_rate {
        return Err(Error::Config(format!(
            "input is at {rate} Hz but preset {} runs at {} Hz",
            config.preset, config.sample_rate
        )));
    }
    Ok(())
}

/// Virtual microphones of a 4-channel (or x-pair) array recording.
pub fn scene_vmics(
    config: &PipelineConfig,
    spacing: (f64, f64),
    mixture: &MultichannelSignal,
) -> Result<Spectrogram> {
    check_rate(config, mixture.sample_rate())?;
    let mics = stft_forward(mixture, config.fft_size, config.hop)?;
    config.beamformer(spacing.0, spacing.1).apply(&mics)
}

/// Alias-free targets `t = E s` for the scene's sources.
pub fn scene_targets(
    config: &PipelineConfig,
    scene: &SourceScene,
    sources: &[MonoSignal],
) -> Result<Spectrogram> {
    if sources.len() != scene.sources.len() || sources.is_empty() {
        return Err(Error::invalid(format!(
            "{} source signals for {} scene sources",
            sources.len(),
            scene.sources.len()
        )));
    }
    check_rate(config, sources[0].sample_rate)?;
    let stacked = MultichannelSignal::new(
        sources.iter().map(|s| s.samples.clone()).collect(),
        sources[0].sample_rate,
    )?;
    let spec = stft_forward(&stacked, config.fft_size, config.hop)?;
    let encoder = target_encoder(
        &config.target_directions()?,
        &scene.directions(),
        config.alpha,
    )?;
    make_targets(&encoder, &spec)
}

fn lti_grid() -> Vec<Direction> {
    (0..LTI_GRID_SIZE)
        .map(|i| Direction::from_azimuth(360.0 * i as f64 / LTI_GRID_SIZE as f64).expect("finite"))
        .collect()
}

/// Filters for one utterance. Oracles need the targets.
pub fn predict_filters_for(
    config: &PipelineConfig,
    filter: &FilterSpec,
    spacing: (f64, f64),
    vmics: &Spectrogram,
    targets: Option<&Spectrogram>,
) -> Result<FilterField> {
    let v = vmics.num_channels();
    let (bins, frames) = (vmics.num_bins(), vmics.num_frames());
    let oracle = |mode| {
        let t = targets.ok_or_else(|| {
            Error::Config("oracle filters need the ground-truth scene (clean sources)".into())
        })?;
        oracle_filters(mode, &config.decoder()?, vmics, t, Ridge::default())
    };
    match filter {
        FilterSpec::Identity => Ok(FilterField::identity(FilterMode::Diag, v, frames, bins)),
        FilterSpec::OracleDiag => oracle(FilterMode::Diag),
        FilterSpec::OracleFull => oracle(FilterMode::Full),
        FilterSpec::Lti => {
            let lti = lti_ls_filter(
                &config.beamformer(spacing.0, spacing.1),
                &config.decoder()?,
                &config.target_directions()?,
                config.alpha,
                &lti_grid(),
                LTI_RIDGE,
            )?;
            Ok(lti.to_field(frames))
        }
        FilterSpec::Nn(bundle) => predict_filters(bundle, vmics),
    }
}

pub fn decode_with(
    config: &PipelineConfig,
    filters: &FilterField,
    vmics: &Spectrogram,
) -> Result<Spectrogram> {
    apply_filter(&config.decoder()?, filters, vmics)
}

#[derive(Debug, Clone)]
pub struct SceneOutput {
    pub vmics: Spectrogram,
    pub targets: Spectrogram,
    pub decoded: Spectrogram,
    pub score: CSiSnr,
    /// Score of the unfiltered (identity) decode of the same scene.
    pub identity_score: CSiSnr,
}

/// Beamform, filter, decode and score one scene.
pub fn process_scene(
    config: &PipelineConfig,
    filter: &FilterSpec,
    scene: &SourceScene,
    sources: &[MonoSignal],
    mixture: &MultichannelSignal,
) -> Result<SceneOutput> {
    let spacing = (scene.spacing_x, scene.spacing_y);
    let vmics = scene_vmics(config, spacing, mixture)?;
    let targets = scene_targets(config, scene, sources)?;
    if !vmics.same_grid(&targets) {
        return Err(Error::invalid("mixture and sources have different lengths"));
    }
    let identity = decode_with(
        config,
        &FilterField::identity(
            FilterMode::Diag,
            vmics.num_channels(),
            vmics.num_frames(),
            vmics.num_bins(),
        ),
        &vmics,
    )?;
    let identity_score = c_si_snr(&identity, &targets)?;
    let (decoded, score) = if matches!(filter, FilterSpec::Identity) {
        (identity, identity_score.clone())
    } else {
        let field = predict_filters_for(config, filter, spacing, &vmics, Some(&targets))?;
        let decoded = decode_with(config, &field, &vmics)?;
        let score = c_si_snr(&decoded, &targets)?;
        (decoded, score)
    };
    Ok(SceneOutput {
        vmics,
        targets,
        decoded,
        score,
        identity_score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{preset, PresetName, Scale};

    fn short(name: PresetName) -> PipelineConfig {
        let mut c = preset(name, Scale::Desk);
        c.duration_s = 0.5;
        c
    }

    #[test]
    fn filter_kind_names() {
        assert_eq!(
            "oracle-diag".parse::<FilterKind>().unwrap(),
            FilterKind::OracleDiag
        );
        assert_eq!(
            "oracle_full".parse::<FilterKind>().unwrap(),
            FilterKind::OracleFull
        );
        assert!("wiener".parse::<FilterKind>().is_err());
        assert!(matches!(
            FilterSpec::new(FilterKind::Nn, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn oracle_without_targets_is_config_error() {
        let cfg = short(PresetName::IFix);
        let s = simulate_scene(&cfg, 3).unwrap();
        let v = scene_vmics(&cfg, (s.scene.spacing_x, s.scene.spacing_y), &s.mixture).unwrap();
        let r = predict_filters_for(&cfg, &FilterSpec::OracleDiag, (0.06, 0.06), &v, None);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn identity_scores_equal_baseline() {
        let cfg = short(PresetName::IiFix);
        let s = simulate_scene(&cfg, 4).unwrap();
        let out = process_scene(
            &cfg,
            &FilterSpec::Identity,
            &s.scene,
            &s.sources,
            &s.mixture,
        )
        .unwrap();
        assert_eq!(out.score, out.identity_score);
        assert_eq!(out.decoded.num_channels(), 4);
    }

    #[test]
    fn oracles_beat_identity() {
        for name in PresetName::ALL {
            let cfg = short(name);
            let s = simulate_scene(&cfg, 11).unwrap();
            let d = process_scene(
                &cfg,
                &FilterSpec::OracleDiag,
                &s.scene,
                &s.sources,
                &s.mixture,
            )
            .unwrap();
            let f = process_scene(
                &cfg,
                &FilterSpec::OracleFull,
                &s.scene,
                &s.sources,
                &s.mixture,
            )
            .unwrap();
            assert!(
                d.score.mean_db > d.identity_score.mean_db + 10.0,
                "{name}: {:?}",
                d.score
            );
            assert!(f.score.mean_db >= d.score.mean_db - 0.1, "{name}");
        }
    }

    #[test]
    fn wrong_rate_is_config_error() {
        let cfg = short(PresetName::IFix);
        let mut other = cfg.clone();
        other.sample_rate = 8000;
        let s = simulate_scene(&other, 1).unwrap();
        assert!(matches!(
            process_scene(
                &cfg,
                &FilterSpec::Identity,
                &s.scene,
                &s.sources,
                &s.mixture
            ),
            Err(Error::Config(_))
        ));
    }
}
