//! Pipeline configuration from presets, JSON files and flags (flags win).

use std::fs;
use std::path::PathBuf;

use clap::Args;
use dealias_core::{preset, PipelineConfig, PresetName, Scale};
use serde_json::{Map, Value};

use crate::Usage;

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Experiment preset: i_fix, i_var, ii_fix or ii_var.
    #[arg(long)]
    pub preset: Option<String>,
    /// Preset scale: paper (44.1 kHz, 3 cm) or desk (16 kHz, 6 cm).
    #[arg(long)]
    pub scale: Option<String>,
    /// JSON file with pipeline fields layered over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Target directivity mix in [0, 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Scene length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> anyhow::Result<PipelineConfig> {
        let overlay = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Usage(format!("{}: {e}", path.display())))?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => {
                        return Err(
                            Usage(format!("{}: expected a JSON object", path.display())).into()
                        )
                    }
                    Err(e) => return Err(Usage(format!("{}: {e}", path.display())).into()),
                }
            }
            None => Map::new(),
        };
        let preset_name = self
            .preset
            .clone()
            .or_else(|| {
                overlay
                    .get("preset")
                    .and_then(Value::as_str)
                    .map(String::from)
            })
            .ok_or_else(|| {
                Usage("--preset is required (or a \"preset\" field in --config)".into())
            })?;
        let scale_name = self
            .scale
            .clone()
            .or_else(|| {
                overlay
                    .get("scale")
                    .and_then(Value::as_str)
                    .map(String::from)
            })
            .unwrap_or_else(|| "paper".into());
        let scale: Scale = scale_name
            .parse()
            .map_err(|e: dealias_core::Error| Usage(e.to_string()))?;

        let mut cfg: PipelineConfig = match preset_name.parse::<PresetName>() {
            Ok(name) => {
                let mut base = match serde_json::to_value(preset(name, scale))? {
                    Value::Object(m) => m,
                    _ => unreachable!("config serializes to an object"),
                };
                for (k, v) in overlay {
                    if k != "scale" {
                        base.insert(k, v);
                    }
                }
                base.insert("preset".into(), Value::String(name.name().into()));
                serde_json::from_value(Value::Object(base))
                    .map_err(|e| Usage(format!("config: {e}")))?
            }
            // a custom name needs a complete configuration
            Err(e) if self.config.is_some() && self.preset.is_none() => {
                let mut m = overlay;
                m.remove("scale");
                serde_json::from_value(Value::Object(m))
                    .map_err(|err| Usage(format!("config: {err} ({e})")))?
            }
            Err(e) => return Err(Usage(e.to_string()).into()),
        };
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(d) = self.duration {
            cfg.duration_s = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
