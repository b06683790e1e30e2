//! `dealias`: command-line driver for simulation, beamforming, filtering,
//! evaluation and spatial sweeps.
//!
//! Channel order: array mics are `+x, -x, +y, -y`; the cardioid pair is
//! (right, left); the FOA layout is (W, X, Y).

mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dealias_core::experiments::{
    decode_with, evaluate_dataset, evaluate_synthetic, predict_filters_for, scene_targets,
    scene_vmics,
};
use dealias_core::simulate::{
    generate_dataset, load_manifest, load_scene_file, DatasetConfig, LoadedScene, SpacingMode,
};
use dealias_core::wav::{read_wav, write_wav};
use dealias_core::{
    c_si_snr, load_weights, read_spectrogram, spatial_sweep, stft_forward, stft_inverse,
    write_spectrogram, Error, FilterKind, FilterSpec, PipelineConfig, Spectrogram, SweepConfig,
};
use serde_json::json;

use config::ConfigArgs;

/// Bad flags or arguments (exit code 2).
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug, Parser)]
#[command(
    name = "dealias",
    version,
    about = "Spatial-aliasing reduction laboratory"
)]
struct Cli {
    /// Worker threads (default: DEALIAS_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dataset operations.
    Dataset {
        #[command(subcommand)]
        action: DatasetCommand,
    },
    /// Turn a 4-channel array recording into virtual microphones.
    Beamform(BeamformArgs),
    /// Filter and decode virtual microphones.
    Dealias(DealiasArgs),
    /// Score a filter over a dataset or freshly simulated scenes.
    Eval(EvalArgs),
    /// Measure directional responses one source at a time.
    Sweep(SweepArgs),
    /// Inspect files.
    Inspect {
        #[command(subcommand)]
        what: InspectCommand,
    },
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Simulate scenes and write WAVs plus manifest.jsonl.
    Gen {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum InspectCommand {
    /// Print a weight bundle's descriptor and tensor table.
    Weights { path: PathBuf },
}

/// Spacing of the recording: explicit, from a scene file, or the preset's
/// fixed spacing.
#[derive(Debug, Clone, Args)]
struct SpacingArgs {
    /// Mic-pair spacing in metres (both pairs).
    #[arg(long)]
    spacing: Option<f64>,
    /// Spacing of the y pair, if it differs.
    #[arg(long)]
    spacing_y: Option<f64>,
}

#[derive(Debug, Args)]
struct BeamformArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    spacing: SpacingArgs,
    /// Scene record (scene.json) to take the spacing from.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Array recording (WAV).
    #[arg(long = "in")]
    input: PathBuf,
    /// Virtual microphones: `.spec` for a spectrogram, otherwise WAV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DealiasArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    spacing: SpacingArgs,
    /// Virtual microphones (`.spec` or WAV).
    #[arg(long = "in")]
    input: PathBuf,
    /// identity, oracle-diag, oracle-full, lti or nn.
    #[arg(long)]
    filter: String,
    /// Weight bundle for the nn filter.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Ground-truth scene (scene.json); required by the oracles, enables scoring.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Decoded output (`.spec` or WAV).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Dataset directory with manifest.jsonl. Without it, scenes are simulated.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Number of simulated scenes when no dataset is given.
    #[arg(long, default_value_t = 16)]
    scenes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    filter: String,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    filter: String,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Number of equally spaced azimuths.
    #[arg(long, default_value_t = 360)]
    grid: usize,
    /// Noise bursts per direction.
    #[arg(long, default_value_t = 16)]
    signals: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Burst length in seconds.
    #[arg(long, default_value_t = 0.5)]
    burst: f64,
    /// Polar response CSV.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON copy with provenance.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match setup_threads(cli.threads).and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn one_line(e: &anyhow::Error) -> String {
    e.chain()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(": ")
        .replace('\n', " ")
}

fn core_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::UnsupportedConfiguration(_) | Error::Config(_) => 2,
        Error::NotAWeightFile(_)
        | Error::CorruptWeights(_)
        | Error::Io { .. }
        | Error::Format { .. } => 3,
        Error::UndefinedMetric { .. } | Error::Numeric(_) => 4,
        Error::AtAzimuth { source, .. } => core_code(source),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
        if let Some(core) = cause.downcast_ref::<Error>() {
            return core_code(core);
        }
    }
    3
}

fn setup_threads(flag: Option<usize>) -> anyhow::Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("DEALIAS_THREADS") {
            Ok(s) if !s.trim().is_empty() => Some(
                s.trim()
                    .parse()
                    .map_err(|_| Usage(format!("DEALIAS_THREADS={s:?} is not a thread count")))?,
            ),
            _ => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Usage("thread count must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Dataset {
            action:
                DatasetCommand::Gen {
                    cfg,
                    scenes,
                    seed,
                    out,
                },
        } => dataset_gen(&cfg.resolve()?, scenes, seed, &out),
        Command::Beamform(a) => beamform(a),
        Command::Dealias(a) => dealias(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Inspect {
            what: InspectCommand::Weights { path },
        } => inspect_weights(&path),
    }
}

fn filter_spec(name: &str, weights: Option<&Path>) -> anyhow::Result<FilterSpec> {
    let kind: FilterKind = name.parse().map_err(|e: Error| Usage(e.to_string()))?;
    let bundle = match (kind, weights) {
        (FilterKind::Nn, Some(p)) => Some(load_weights(p)?),
        (FilterKind::Nn, None) => return Err(Usage("--filter nn needs --weights".into()).into()),
        (_, Some(_)) => {
            return Err(Usage(format!("--weights only applies to --filter nn, not {name}")).into())
        }
        (_, None) => None,
    };
    Ok(FilterSpec::new(kind, bundle)?)
}

fn resolve_spacing(
    cfg: &PipelineConfig,
    args: &SpacingArgs,
    scene: Option<&LoadedScene>,
) -> anyhow::Result<Option<(f64, f64)>> {
    Ok(match (args.spacing, args.spacing_y, scene) {
        (Some(x), y, _) => Some((x, y.unwrap_or(x))),
        (None, Some(_), _) => return Err(Usage("--spacing-y needs --spacing".into()).into()),
        (None, None, Some(s)) => Some((s.scene.spacing_x, s.scene.spacing_y)),
        (None, None, None) => match cfg.spacing {
            SpacingMode::Fixed(d) => Some((d, d)),
            SpacingMode::Varying { .. } => None,
        },
    })
}

fn is_spec(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "spec")
}

fn read_vmics(cfg: &PipelineConfig, path: &Path) -> anyhow::Result<Spectrogram> {
    let spec = if is_spec(path) {
        read_spectrogram(path)?
    } else {
        let sig = read_wav(path)?;
        if sig.sample_rate() != cfg.sample_rate {
            return Err(Error::Config(format!(
                "{} is at {} Hz but preset {} runs at {} Hz",
                path.display(),
                sig.sample_rate(),
                cfg.preset,
                cfg.sample_rate
            ))
            .into());
        }
        stft_forward(&sig, cfg.fft_size, cfg.hop)?
    };
    if spec.sample_rate() != cfg.sample_rate
        || spec.fft_size() != cfg.fft_size
        || spec.hop() != cfg.hop
    {
        return Err(Error::Config(format!(
            "{}: grid {} Hz / {} / {} does not match preset {} ({} Hz / {} / {})",
            path.display(),
            spec.sample_rate(),
            spec.fft_size(),
            spec.hop(),
            cfg.preset,
            cfg.sample_rate,
            cfg.fft_size,
            cfg.hop
        ))
        .into());
    }
    if spec.num_channels() != cfg.num_vmics() {
        return Err(Error::Config(format!(
            "{} has {} channels; preset {} uses {} virtual microphones",
            path.display(),
            spec.num_channels(),
            cfg.preset,
            cfg.num_vmics()
        ))
        .into());
    }
    Ok(spec)
}

fn write_output(path: &Path, spec: &Spectrogram) -> anyhow::Result<()> {
    if is_spec(path) {
        write_spectrogram(path, spec)?;
    } else {
        write_wav(path, &stft_inverse(spec)?)?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn dataset_gen(cfg: &PipelineConfig, scenes: usize, seed: u64, out: &Path) -> anyhow::Result<()> {
    if scenes == 0 {
        return Err(Usage("--scenes must be at least 1".into()).into());
    }
    let manifest = generate_dataset(
        &DatasetConfig {
            scene: cfg.scene_config(),
            n_scenes: scenes,
            master_seed: seed,
            speed_of_sound: cfg.speed_of_sound,
        },
        out,
    )?;
    println!(
        "wrote {} scenes to {}",
        manifest.records.len(),
        out.display()
    );
    Ok(())
}

fn beamform(a: BeamformArgs) -> anyhow::Result<()> {
    let cfg = a.cfg.resolve()?;
    let scene = a.scene.as_deref().map(load_scene_file).transpose()?;
    let spacing = resolve_spacing(&cfg, &a.spacing, scene.as_ref())?.ok_or_else(|| {
        Usage(format!(
            "preset {} has varying spacing; pass --spacing or --scene",
            cfg.preset
        ))
    })?;
    let mixture = read_wav(&a.input)?;
    if mixture.num_channels() != 4 {
        return Err(Error::Format {
            path: a.input.clone(),
            message: format!(
                "expected 4 array channels, found {}",
                mixture.num_channels()
            ),
        }
        .into());
    }
    let vmics = scene_vmics(&cfg, spacing, &mixture)?;
    write_output(&a.out, &vmics)
}

fn dealias(a: DealiasArgs) -> anyhow::Result<()> {
    let cfg = a.cfg.resolve()?;
    let filter = filter_spec(&a.filter, a.weights.as_deref())?;
    if filter.kind().needs_targets() && a.scene.is_none() {
        return Err(Error::Config(format!(
            "--filter {} needs the ground-truth scene; pass --scene scene.json",
            a.filter
        ))
        .into());
    }
    let scene = a.scene.as_deref().map(load_scene_file).transpose()?;
    let vmics = read_vmics(&cfg, &a.input)?;
    let targets = match &scene {
        Some(s) => {
            let t = scene_targets(&cfg, &s.scene, &s.sources)?;
            if !t.same_grid(&vmics) {
                return Err(Error::Config(format!(
                    "{} does not match the length of the scene's sources",
                    a.input.display()
                ))
                .into());
            }
            Some(t)
        }
        None => None,
    };
    let spacing = match resolve_spacing(&cfg, &a.spacing, scene.as_ref())? {
        Some(s) => s,
        None if filter.kind() == FilterKind::Lti => {
            return Err(Usage(format!(
                "--filter lti on preset {} needs --spacing or --scene",
                cfg.preset
            ))
            .into())
        }
        None => {
            let d = cfg.nominal_spacing();
            (d, d)
        }
    };
    let field = predict_filters_for(&cfg, &filter, spacing, &vmics, targets.as_ref())?;
    let decoded = decode_with(&cfg, &field, &vmics)?;
    write_output(&a.out, &decoded)?;

    let mut report = json!({
        "preset": cfg.preset,
        "filter_kind": filter.kind().name(),
        "channels": decoded.num_channels(),
        "bins": decoded.num_bins(),
        "frames": decoded.num_frames(),
    });
    if let Some(t) = &targets {
        let score = c_si_snr(&decoded, t)?;
        let identity = decode_with(
            &cfg,
            &predict_filters_for(&cfg, &FilterSpec::Identity, spacing, &vmics, None)?,
            &vmics,
        )?;
        let base = c_si_snr(&identity, t)?;
        report["c_si_snr_db"] = json!(score.mean_db);
        report["per_channel_db"] = json!(score.per_channel_db);
        report["identity_db"] = json!(base.mean_db);
        report["improvement_db"] = json!(score.mean_db - base.mean_db);
        println!(
            "{}: C-Si-SNR {:.2} dB (identity {:.2} dB)",
            filter.kind(),
            score.mean_db,
            base.mean_db
        );
    }
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let cfg = a.cfg.resolve()?;
    let filter = filter_spec(&a.filter, a.weights.as_deref())?;
    let report = match &a.dataset {
        Some(dir) => {
            let manifest = load_manifest(dir)?;
            if manifest.records.is_empty() {
                return Err(Error::Format {
                    path: dir.join("manifest.jsonl"),
                    message: "no scenes".into(),
                }
                .into());
            }
            evaluate_dataset(&cfg, &filter, &manifest)?
        }
        None => {
            if a.scenes == 0 {
                return Err(Usage("--scenes must be at least 1".into()).into());
            }
            evaluate_synthetic(&cfg, &filter, a.scenes, a.seed)?
        }
    };
    write_json(&a.report, &serde_json::to_value(&report)?)?;
    println!(
        "{} / {}: {:.2} +- {:.2} dB over {} scenes (identity {:.2} dB, improvement {:.2} dB)",
        report.preset,
        report.filter_kind,
        report.mean_db,
        report.std_db,
        report.n_scenes,
        report.identity_mean_db,
        report.improvement_db
    );
    Ok(())
}

fn sweep(a: SweepArgs) -> anyhow::Result<()> {
    let cfg = a.cfg.resolve()?;
    let filter = filter_spec(&a.filter, a.weights.as_deref())?;
    let mut sc = SweepConfig::uniform(a.grid, a.signals, a.seed);
    sc.duration_s = a.burst;
    let polar = spatial_sweep(&cfg, &filter, &sc)?;
    polar.write_csv(&a.out)?;
    if let Some(j) = &a.json {
        polar.write_json(j)?;
    }
    println!(
        "wrote {} bands x {} azimuths x {} channels to {}",
        polar.bands.len(),
        polar.azimuths_deg.len(),
        polar.channels,
        a.out.display()
    );
    Ok(())
}

fn inspect_weights(path: &Path) -> anyhow::Result<()> {
    let bundle = load_weights(path)?;
    let d = bundle.descriptor();
    println!(
        "descriptor: v={} mode={} depth={} base_channels={}",
        d.v,
        serde_json::to_value(d.mode)?.as_str().unwrap_or("?"),
        d.depth,
        d.base_channels
    );
    println!("{:<24} {:<20} {:>10}", "tensor", "shape", "params");
    let mut total = 0;
    for t in bundle.tensors() {
        let shape = format!("{:?}", t.shape);
        println!("{:<24} {:<20} {:>10}", t.name, shape, t.numel());
        total += t.numel();
    }
    println!("total parameters: {total}");
    Ok(())
}
