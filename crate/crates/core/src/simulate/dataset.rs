use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Direction;
use crate::rng::derive_seed;
use crate::signal::{MonoSignal, MultichannelSignal};
use crate::wav::{read_wav, write_wav};

use super::render::render_array;
use super::scene::{sample_scene, SceneConfig, SceneSource, SourceScene};
use super::source::{synth_source, SourceKind};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
/// Per-scene copy of the manifest record, paths relative to the scene directory.
pub const SCENE_FILE: &str = "scene.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub scene: SceneConfig,
    pub n_scenes: usize,
    pub master_seed: u64,
    pub speed_of_sound: f64,
}

/// One line of `manifest.jsonl`. Paths are relative to the dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub scene_id: String,
    pub spacing_x: f64,
    pub spacing_y: f64,
    pub azimuths_deg: Vec<f64>,
    pub source_kinds: Vec<SourceKind>,
    pub source_seeds: Vec<u64>,
    pub source_paths: Vec<String>,
    pub mixture_path: String,
    pub seed: u64,
    pub sample_rate: u32,
    pub duration_s: f64,
}

impl ManifestRecord {
    pub fn scene(&self) -> Result<SourceScene> {
        let n = self.azimuths_deg.len();
        if self.source_kinds.len() != n
            || self.source_seeds.len() != n
            || self.source_paths.len() != n
        {
            return Err(Error::invalid(format!(
                "{}: per-source fields have inconsistent lengths",
                self.scene_id
            )));
        }
        let sources = (0..n)
            .map(|i| {
                Ok(SceneSource {
                    direction: Direction::from_azimuth(self.azimuths_deg[i])?,
                    kind: self.source_kinds[i],
                    seed: self.source_seeds[i],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SourceScene {
            sources,
            spacing_x: self.spacing_x,
            spacing_y: self.spacing_y,
            sample_rate: self.sample_rate,
            duration_s: self.duration_s,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

/// A scene read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub scene: SourceScene,
    pub sources: Vec<MonoSignal>,
    pub mixture: MultichannelSignal,
}

impl DatasetManifest {
    /// Check that every referenced file exists and matches the declared
    /// sample rate and duration.
    pub fn validate(&self) -> Result<()> {
        for rec in &self.records {
            let expected = (rec.duration_s * rec.sample_rate as f64).round() as usize;
            let mut paths = rec.source_paths.clone();
            paths.push(rec.mixture_path.clone());
            for p in paths {
                let full = self.root.join(&p);
                let sig = read_wav(&full)?;
                if sig.sample_rate() != rec.sample_rate || sig.len() != expected {
                    return Err(Error::format(
                        full,
                        format!(
                            "expected {expected} samples at {} Hz, found {} at {} Hz",
                            rec.sample_rate,
                            sig.len(),
                            sig.sample_rate()
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn load(&self, index: usize) -> Result<LoadedScene> {
        let rec = self
            .records
            .get(index)
            .ok_or_else(|| Error::invalid(format!("no record {index}")))?;
        load_record(&self.root, rec)
    }
}

pub fn load_record(root: &Path, rec: &ManifestRecord) -> Result<LoadedScene> {
    let scene = rec.scene()?;
    let sources = rec
        .source_paths
        .iter()
        .map(|p| {
            let full = root.join(p);
            let sig = read_wav(&full)?;
            if sig.num_channels() != 1 {
                return Err(Error::format(full, "source WAV must be mono"));
            }
            let sr = sig.sample_rate();
            Ok(MonoSignal::new(sig.into_channels().remove(0), sr))
        })
        .collect::<Result<Vec<_>>>()?;
    let mixture = read_wav(root.join(&rec.mixture_path))?;
    Ok(LoadedScene {
        scene,
        sources,
        mixture,
    })
}

pub fn load_manifest(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = dir.as_ref().to_path_buf();
    let path = root.join(MANIFEST_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(&path, format!("line {}: {e}", i + 1)))?;
        records.push(rec);
    }
    Ok(DatasetManifest { root, records })
}

fn write_scene_file(scene_dir: &Path, rec: &ManifestRecord) -> Result<()> {
    let prefix = format!("{}/", rec.scene_id);
    let strip = |p: &String| p.strip_prefix(&prefix).unwrap_or(p).to_string();
    let local = ManifestRecord {
        source_paths: rec.source_paths.iter().map(strip).collect(),
        mixture_path: strip(&rec.mixture_path),
        ..rec.clone()
    };
    let path = scene_dir.join(SCENE_FILE);
    let json =
        serde_json::to_string_pretty(&local).map_err(|e| Error::format(&path, e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

/// Read a single-scene record (`scene.json`); its paths resolve against the
/// file's directory.
pub fn load_scene_file(path: impl AsRef<Path>) -> Result<LoadedScene> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rec: ManifestRecord =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    load_record(path.parent().unwrap_or(Path::new(".")), &rec)
}

/// Sources of a scene, synthesized from their seeds.
pub fn synth_scene_sources(scene: &SourceScene) -> Result<Vec<MonoSignal>> {
    scene
        .sources
        .iter()
        .map(|s| synth_source(s.kind, scene.duration_s, scene.sample_rate, s.seed))
        .collect()
}

/// Render `n_scenes` scenes under `out_dir` and write `manifest.jsonl`.
///
/// Scene `i` is sampled from `derive_seed(master_seed, i)`, so the whole tree
/// is reproducible from the master seed.
pub fn generate_dataset(
    config: &DatasetConfig,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    config.scene.validate()?;
    let root = out_dir.as_ref().to_path_buf();
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;

    let records = (0..config.n_scenes)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(config.master_seed, i as u64);
            let scene = sample_scene(seed, &config.scene);
            let sources = synth_scene_sources(&scene)?;
            let mixture =
                render_array(&scene, &sources, &scene.geometry()?, config.speed_of_sound)?;

            let scene_id = format!("scene_{i:05}");
            let scene_dir = root.join(&scene_id);
            fs::create_dir_all(&scene_dir).map_err(|e| Error::io(&scene_dir, e))?;
            let mut source_paths = Vec::with_capacity(sources.len());
            for (k, s) in sources.into_iter().enumerate() {
                let rel = format!("{scene_id}/source_{k}.wav");
                write_wav(root.join(&rel), &MultichannelSignal::from_mono(s))?;
                source_paths.push(rel);
            }
            let mixture_path = format!("{scene_id}/mixture.wav");
            write_wav(root.join(&mixture_path), &mixture)?;

            let rec = ManifestRecord {
                scene_id,
                spacing_x: scene.spacing_x,
                spacing_y: scene.spacing_y,
                azimuths_deg: scene
                    .sources
                    .iter()
                    .map(|s| s.direction.azimuth_deg())
                    .collect(),
                source_kinds: scene.sources.iter().map(|s| s.kind).collect(),
                source_seeds: scene.sources.iter().map(|s| s.seed).collect(),
                source_paths,
                mixture_path,
                seed,
                sample_rate: scene.sample_rate,
                duration_s: scene.duration_s,
            };
            write_scene_file(&scene_dir, &rec)?;
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;

    let path = root.join(MANIFEST_FILE);
    let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    for rec in &records {
        let line = serde_json::to_string(rec).map_err(|e| Error::format(&path, e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| Error::io(&path, e))?;
    }
    Ok(DatasetManifest { root, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{SourceCount, SpacingMode};

    fn config(spacing: SpacingMode) -> DatasetConfig {
        DatasetConfig {
            scene: SceneConfig {
                spacing,
                sources: SourceCount::Random,
                duration_s: 0.25,
                sample_rate: 16000,
                kinds: SourceKind::ALL.to_vec(),
            },
            n_scenes: 2,
            master_seed: 1234,
            speed_of_sound: 343.0,
        }
    }

    fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push((
                        p.strip_prefix(dir).unwrap().to_path_buf(),
                        fs::read(&p).unwrap(),
                    ));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn reproducible_and_complete() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = config(SpacingMode::Fixed(0.03));
        let ma = generate_dataset(&cfg, a.path()).unwrap();
        generate_dataset(&cfg, b.path()).unwrap();
        assert_eq!(ma.records.len(), 2);
        assert_eq!(tree(a.path()), tree(b.path()));
        for r in &ma.records {
            assert_eq!(r.spacing_x, 0.03);
            assert_eq!(r.spacing_y, 0.03);
        }
        let loaded = load_manifest(a.path()).unwrap();
        assert_eq!(loaded.records, ma.records);
        loaded.validate().unwrap();
        let scene = loaded.load(0).unwrap();
        assert_eq!(scene.mixture.num_channels(), 4);
        assert_eq!(scene.sources.len(), scene.scene.sources.len());
        let own = load_scene_file(a.path().join("scene_00000").join(SCENE_FILE)).unwrap();
        assert_eq!(own.mixture, scene.mixture);
        assert_eq!(own.scene, scene.scene);
    }

    #[test]
    fn validate_detects_missing_file() {
        let a = tempfile::tempdir().unwrap();
        let m = generate_dataset(&config(SpacingMode::Fixed(0.03)), a.path()).unwrap();
        fs::remove_file(a.path().join(&m.records[1].mixture_path)).unwrap();
        let err = m.validate().unwrap_err();
        assert!(err.to_string().contains("mixture.wav"));
    }

    #[test]
    fn unwritable_output_reports_path() {
        let a = tempfile::tempdir().unwrap();
        let blocker = a.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let err =
            generate_dataset(&config(SpacingMode::Fixed(0.03)), blocker.join("sub")).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
    }
}
