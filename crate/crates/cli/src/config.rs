use std::fs;
use std::path::Path;

use ffn_core::inference::{AssemblyOptions, SeedConfig};
use ffn_core::synth::SynthConfig;
use ffn_core::training::TrainingConfig;
use ffn_core::Dims;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// How many worlds `ffn synth` writes to each split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_worlds: usize,
    pub eval_worlds: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_worlds: 10,
            eval_worlds: 5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub training: TrainingConfig,
    pub seeds: SeedConfig,
    pub assembly: AssemblyOptions,
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub fov: Option<Dims>,
    pub delta: Option<Dims>,
    pub t_move: Option<f32>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path` (or starts from defaults), applies overrides, validates,
    /// and fills derived fields.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::parse(&text).map_err(|e| match e {
                    CliError::Config(msg) => CliError::Config(format!("{}: {msg}", p.display())),
                    other => other,
                })?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = overrides.seed {
            cfg.synth.seed = seed;
            cfg.training.seed = seed;
        }
        if let Some(fov) = overrides.fov {
            cfg.training.fov = fov;
        }
        if let Some(delta) = overrides.delta {
            cfg.training.delta = delta;
        }
        if let Some(t) = overrides.t_move {
            cfg.training.t_move = t;
        }
        // A derived field cannot be re-derived once a file has pinned it, so
        // overriding fov or delta clears the pins the file may carry.
        if overrides.fov.is_some() || overrides.delta.is_some() {
            cfg.training.example = None;
            if overrides.fov.is_some() {
                cfg.training.modules = None;
            }
        }
        cfg.validate()?;
        cfg.training = cfg.training.resolved();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.synth.validate()?;
        self.training.validate()?;
        self.seeds.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }
}

/// Parses `17,17,9` or `17x17x9`.
pub fn parse_dims(s: &str) -> Result<Dims, String> {
    let parts: Vec<&str> = s.split([',', 'x']).map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three components, got `{s}`"));
    }
    let mut out = [0usize; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| format!("`{p}` is not a non-negative integer"))?;
    }
    Ok(out)
}
