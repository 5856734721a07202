use std::path::Path;

use anyhow::{bail, Context};
use derivlab::seqspace::DualSettings;
use derivlab::SpaceDescriptor;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Run settings shared by every command.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub support_cap: usize,
    pub dual_tolerance: f64,
    pub trials: usize,
    pub output_format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            support_cap: 16,
            dual_tolerance: 1e-6,
            trials: 1000,
            output_format: OutputFormat::Csv,
        }
    }
}

/// The config file: a flat JSON object, every key optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    support_cap: Option<usize>,
    dual_tolerance: Option<f64>,
    trials: Option<usize>,
    output_format: Option<OutputFormat>,
}

/// Flag values; `Some` overrides the file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub support_cap: Option<usize>,
    pub dual_tolerance: Option<f64>,
    pub trials: Option<usize>,
    pub output_format: Option<OutputFormat>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, flags: Overrides) -> anyhow::Result<RunConfig> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str::<ConfigFile>(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => ConfigFile::default(),
        };
        let d = RunConfig::default();
        let cfg = RunConfig {
            seed: flags.seed.or(file.seed).unwrap_or(d.seed),
            support_cap: flags.support_cap.or(file.support_cap).unwrap_or(d.support_cap),
            dual_tolerance: flags.dual_tolerance.or(file.dual_tolerance).unwrap_or(d.dual_tolerance),
            trials: flags.trials.or(file.trials).unwrap_or(d.trials),
            output_format: flags.output_format.or(file.output_format).unwrap_or(d.output_format),
        };
        if cfg.support_cap == 0 || cfg.trials == 0 {
            bail!("support_cap and trials must be positive");
        }
        if !(cfg.dual_tolerance > 0.0 && cfg.dual_tolerance.is_finite()) {
            bail!("dual_tolerance must be positive");
        }
        Ok(cfg)
    }

    /// Applies the support cap and dual tolerance to a parsed space.
    pub fn space(&self, spec: &str) -> anyhow::Result<SpaceDescriptor> {
        let s: SpaceDescriptor = spec.parse()?;
        let bound = s.intrinsic_support().map_or(self.support_cap, |len| len.min(self.support_cap));
        let settings = DualSettings {
            tolerance: self.dual_tolerance,
            ..s.dual_settings
        };
        Ok(s.with_support_bound(bound)?.with_dual_settings(settings))
    }
}
