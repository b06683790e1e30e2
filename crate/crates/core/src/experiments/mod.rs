//! Canonical configurations of the two experiments (back-to-back cardioids
//! with an identity decoder; planar FOA decoded to a four-cardioid fan) in the
//! fixed- and varying-spacing regimes, and end-to-end evaluation.

mod pipeline;
mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::beamform::{BeamLayout, BeamformerConfig, DEFAULT_MAX_GAIN_DB};
use crate::codec::{cardioid_fan_decoder, identity_decoder, DecoderMatrix};
use crate::error::{Error, Result};
use crate::geometry::{aliasing_frequency, Direction, SPEED_OF_SOUND};
use crate::simulate::{SceneConfig, SourceCount, SourceKind, SpacingMode};

pub use pipeline::{
    decode_with, predict_filters_for, process_scene, scene_targets, scene_vmics, simulate_scene,
    FilterKind, FilterSpec, SceneOutput, SimulatedScene, LTI_GRID_SIZE,
};
pub use report::{evaluate_dataset, evaluate_synthetic, Report, SceneReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    CardioidPair,
    FoaPlanar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DecoderSpec {
    Identity,
    CardioidFan { azimuths_deg: Vec<f64> },
}

/// Everything that defines one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub preset: String,
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub spacing: SpacingMode,
    pub layout: LayoutKind,
    pub decoder: DecoderSpec,
    /// Look direction of every decoded channel, used for the targets.
    pub target_azimuths_deg: Vec<f64>,
    pub alpha: f64,
    pub duration_s: f64,
    pub sources: SourceCount,
    pub kinds: Vec<SourceKind>,
    pub speed_of_sound: f64,
    pub max_gain_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    IFix,
    IVar,
    IiFix,
    IiVar,
}

impl PresetName {
    pub const ALL: [PresetName; 4] = [
        PresetName::IFix,
        PresetName::IVar,
        PresetName::IiFix,
        PresetName::IiVar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PresetName::IFix => "i_fix",
            PresetName::IVar => "i_var",
            PresetName::IiFix => "ii_fix",
            PresetName::IiVar => "ii_var",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown preset {s:?} (expected i_fix, i_var, ii_fix or ii_var)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// 44.1 kHz, 2048-point frames, 3 cm fixed spacing, 5 s scenes.
    Paper,
    /// 16 kHz, 1024-point frames, 6 cm fixed spacing, 2 s scenes.
    Desk,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            _ => Err(Error::invalid(format!(
                "unknown scale {s:?} (expected paper or desk)"
            ))),
        }
    }
}

pub const VAR_SPACING: (f64, f64) = (0.01, 0.10);
const FAN_AZIMUTHS: [f64; 4] = [0.0, 180.0, 90.0, 270.0];

pub fn preset(name: PresetName, scale: Scale) -> PipelineConfig {
    let (sample_rate, fft_size, fixed, duration_s) = match scale {
        Scale::Paper => (44100, 2048, 0.03, 5.0),
        Scale::Desk => (16000, 1024, 0.06, 2.0),
    };
    let spacing = match name {
        PresetName::IFix | PresetName::IiFix => SpacingMode::Fixed(fixed),
        PresetName::IVar | PresetName::IiVar => SpacingMode::Varying {
            lo: VAR_SPACING.0,
            hi: VAR_SPACING.1,
        },
    };
    let (layout, decoder, targets) = match name {
        PresetName::IFix | PresetName::IVar => (
            LayoutKind::CardioidPair,
            DecoderSpec::Identity,
            vec![0.0, 180.0],
        ),
        PresetName::IiFix | PresetName::IiVar => (
            LayoutKind::FoaPlanar,
            DecoderSpec::CardioidFan {
                azimuths_deg: FAN_AZIMUTHS.to_vec(),
            },
            FAN_AZIMUTHS.to_vec(),
        ),
    };
    PipelineConfig {
        preset: name.name().into(),
        sample_rate,
        fft_size,
        hop: fft_size / 2,
        spacing,
        layout,
        decoder,
        target_azimuths_deg: targets,
        alpha: 0.5,
        duration_s,
        sources: SourceCount::Random,
        kinds: SourceKind::ALL.to_vec(),
        speed_of_sound: SPEED_OF_SOUND,
        max_gain_db: DEFAULT_MAX_GAIN_DB,
    }
}

fn dirs(azimuths: &[f64]) -> Result<Vec<Direction>> {
    azimuths
        .iter()
        .map(|&a| Direction::from_azimuth(a))
        .collect()
}

impl PipelineConfig {
    pub fn num_vmics(&self) -> usize {
        match self.layout {
            LayoutKind::CardioidPair => 2,
            LayoutKind::FoaPlanar => 3,
        }
    }

    pub fn decoder(&self) -> Result<DecoderMatrix> {
        match &self.decoder {
            DecoderSpec::Identity => identity_decoder(self.num_vmics()),
            DecoderSpec::CardioidFan { azimuths_deg } => cardioid_fan_decoder(&dirs(azimuths_deg)?),
        }
    }

    pub fn target_directions(&self) -> Result<Vec<Direction>> {
        dirs(&self.target_azimuths_deg)
    }

    pub fn beamformer(&self, spacing_x: f64, spacing_y: f64) -> BeamformerConfig {
        let layout = match self.layout {
            LayoutKind::CardioidPair => BeamLayout::CardioidPair { spacing: spacing_x },
            LayoutKind::FoaPlanar => BeamLayout::FoaPlanar {
                spacing_x,
                spacing_y,
            },
        };
        BeamformerConfig {
            layout,
            speed_of_sound: self.speed_of_sound,
            max_gain_db: self.max_gain_db,
            sample_rate: self.sample_rate,
            fft_size: self.fft_size,
        }
    }

    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            spacing: self.spacing,
            sources: self.sources,
            duration_s: self.duration_s,
            sample_rate: self.sample_rate,
            kinds: self.kinds.clone(),
        }
    }

    /// Fixed spacing, or the middle of the varying range.
    pub fn nominal_spacing(&self) -> f64 {
        match self.spacing {
            SpacingMode::Fixed(d) => d,
            SpacingMode::Varying { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn aliasing_frequency(&self) -> Result<f64> {
        aliasing_frequency(self.nominal_spacing(), self.speed_of_sound)
    }

    /// Check internal consistency; problems are configuration errors.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("{}: {m}", self.preset)));
        if self.fft_size < 4 || !self.fft_size.is_multiple_of(2) || self.hop * 2 != self.fft_size {
            return bad(format!(
                "fft_size {} / hop {} must be even with 50% overlap",
                self.fft_size, self.hop
            ));
        }
        if let Err(e) = self.scene_config().validate() {
            return bad(e.to_string());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} not in [0, 1]", self.alpha));
        }
        if !(self.speed_of_sound > 0.0) || !(self.max_gain_db > 0.0) {
            return bad("speed of sound and max gain must be positive".into());
        }
        let d = self.decoder().map_err(|e| Error::Config(e.to_string()))?;
        if d.cols() != self.num_vmics() {
            return bad(format!(
                "decoder has {} columns for {} virtual mics",
                d.cols(),
                self.num_vmics()
            ));
        }
        if self.target_azimuths_deg.len() != d.rows() {
            return bad(format!(
                "{} target directions for {} decoded channels",
                self.target_azimuths_deg.len(),
                d.rows()
            ));
        }
        self.target_directions()
            .map_err(|e| Error::Config(e.to_string()))?;
        let samples = self.scene_config().num_samples();
        if samples < self.fft_size {
            return bad(format!(
                "{samples}-sample scenes are shorter than one frame"
            ));
        }
        Ok(())
    }
}
