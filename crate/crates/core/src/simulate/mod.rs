//! Anechoic far-field simulation of the cross array: scene sampling,
//! synthetic source material, rendering and dataset generation.

mod dataset;
mod render;
mod scene;
mod source;

pub use dataset::{
    generate_dataset, load_manifest, load_record, load_scene_file, synth_scene_sources,
    DatasetConfig, DatasetManifest, LoadedScene, ManifestRecord, MANIFEST_FILE, SCENE_FILE,
};
pub use render::render_array;
pub use scene::{sample_scene, SceneConfig, SceneSource, SourceCount, SourceScene, SpacingMode};
pub use source::{synth_source, SourceKind, SOURCE_RMS};
