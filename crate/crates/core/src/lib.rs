//! Spatial-aliasing reduction for beamformed spatial-audio capture with a
//! four-microphone cross array.
//!
//! The pipeline: simulate far-field scenes, transform to the STFT domain,
//! form low-order virtual microphones, predict time-frequency filters (per-tile
//! oracles, a static least-squares baseline, or a U-Net), decode, and score.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod beamform;
pub mod codec;
pub mod error;
pub mod experiments;
pub mod filters;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod nnmask;
pub mod rng;
pub mod signal;
pub mod simulate;
pub mod specio;
pub mod stft;
pub mod wav;

pub use beamform::{BeamLayout, BeamformerConfig, EqualizerProfile};
pub use codec::{
    apply_filter, cardioid_fan_decoder, identity_decoder, make_targets, target_encoder,
    DecoderMatrix, EncoderMatrix, FilterField, FilterMode,
};
pub use error::{Error, Result};
pub use experiments::{preset, FilterKind, FilterSpec, PipelineConfig, PresetName, Report, Scale};
pub use filters::{
    lti_ls_filter, oracle_filters, oracle_tile_diag, oracle_tile_full, LtiFilter, Ridge,
};
pub use geometry::{aliasing_frequency, ArrayGeometry, Direction, SPEED_OF_SOUND};
pub use metrics::{
    band_partition, c_si_snr, phasen_loss, spatial_sweep, CSiSnr, PolarResponse, SweepConfig,
};
pub use nnmask::{load_weights, save_weights, Descriptor, WeightBundle};
pub use signal::{MonoSignal, MultichannelSignal, Spectrogram};
pub use specio::{read_spectrogram, write_spectrogram};
pub use stft::{stft_forward, stft_inverse};
