//! Effective run configuration: defaults, then an optional TOML file, then
//! command-line flags. The result is echoed as `config.toml` next to every
//! run's outputs and can be fed back with `--config` to repeat the run.

use std::path::{Path, PathBuf};

use rtmix::model::ModelKind;
use rtmix::sampler::SamplerConfig;
use rtmix::simulate::{DesignSpec, LinearTruth, MixtureTruth};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub chains: usize,
    pub warmup: usize,
    pub samples: usize,
    pub target_accept: f64,
    pub max_leapfrog: usize,
    pub starts: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerSettings {
            chains: d.n_chains,
            warmup: d.n_warmup,
            samples: d.n_samples,
            target_accept: d.target_accept,
            max_leapfrog: d.max_leapfrog,
            starts: d.n_starts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSettings {
    pub participants: usize,
    pub items: usize,
}

impl Default for DesignSettings {
    fn default() -> Self {
        DesignSettings {
            participants: 37,
            items: 15,
        }
    }
}

/// Everything a run depends on. Plain values come before tables so the
/// TOML echo serializes in one pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand that wrote this config; informational on input.
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub model: ModelKind,
    pub k: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Simulated datasets in `recover`.
    pub replicates: usize,
    /// Posterior predictive replicates in `ppc`.
    pub ppc_draws: usize,
    /// Credible level for recovery intervals.
    pub level: f64,
    pub sampler: SamplerSettings,
    pub design: DesignSettings,
    pub linear: LinearTruth,
    pub mixture: MixtureTruth,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            data: None,
            model: ModelKind::Mixture,
            k: 10,
            seed: 1,
            out: PathBuf::from("rtmix-out"),
            replicates: 10,
            ppc_draws: 200,
            level: 0.95,
            sampler: SamplerSettings::default(),
            design: DesignSettings::default(),
            linear: LinearTruth::reference(),
            mixture: MixtureTruth::reference(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn sampler_config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            n_chains: self.sampler.chains,
            n_warmup: self.sampler.warmup,
            n_samples: self.sampler.samples,
            seed,
            target_accept: self.sampler.target_accept,
            max_leapfrog: self.sampler.max_leapfrog,
            n_starts: self.sampler.starts,
            ..SamplerConfig::default()
        }
    }

    pub fn design(&self, seed: u64) -> DesignSpec {
        DesignSpec::new(self.design.participants, self.design.items, seed)
    }

    pub fn data_path(&self) -> Result<&Path, CliError> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("`{}` needs a data file (--data)", self.command)))
    }

    /// Checks the settings that no library call would reject on its own.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.k < 2 {
            return bad(format!("--k must be at least 2, got {}", self.k));
        }
        if self.replicates == 0 || self.ppc_draws == 0 {
            return bad("replicate counts must be at least 1".into());
        }
        if self.design.participants == 0 || self.design.items == 0 {
            return bad("the design needs at least one participant and one item".into());
        }
        self.sampler_config(self.seed).validate().map_err(CliError::from)
    }
}
