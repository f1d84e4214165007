use std::path::Path;

use edcforge_core::decay::EdcGrid;
use edcforge_core::ism::SimParams;
use edcforge_core::nn::{ModelShape, TrainConfig};
use edcforge_core::pipeline::GenerateOptions;
use serde::{Deserialize, Serialize};

/// Everything a run can be configured with. Loaded from TOML, then
/// overridden by command-line flags, then echoed next to the outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub generate: GenerateOptions,
    pub train: TrainSection,
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    #[serde(flatten)]
    pub config: TrainConfig,
    pub model: ModelShape,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSection {
    pub sim: SimParams,
    pub grid: EdcGrid,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {}", path.display(), e.message()))
    }

    /// The seed flag wins over the file; a file-level seed wins over the
    /// section defaults.
    pub fn apply_seed(&mut self, flag: Option<u64>) {
        if let Some(s) = flag.or(self.seed) {
            self.seed = Some(s);
            self.generate.seed = s;
            self.train.config.seed = s;
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes to TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip() {
        let mut c = RunConfig::default();
        c.apply_seed(Some(7));
        c.threads = Some(3);
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = toml::from_str(
            "seed = 3\n[generate]\nn_rooms = 50\n[train]\nmax_epochs = 4\n[train.model]\nhidden = 16\n",
        )
        .unwrap();
        assert_eq!(c.generate.n_rooms, 50);
        assert_eq!(c.generate.grid, EdcGrid::default());
        assert_eq!(c.train.config.max_epochs, 4);
        assert_eq!(c.train.config.patience, 10);
        assert_eq!(c.train.model.hidden, 16);
        assert_eq!(c.train.model.dense, 2048);
    }

    #[test]
    fn seed_precedence() {
        let mut c: RunConfig = toml::from_str("seed = 3").unwrap();
        c.apply_seed(None);
        assert_eq!((c.generate.seed, c.train.config.seed), (3, 3));
        c.apply_seed(Some(9));
        assert_eq!((c.generate.seed, c.train.config.seed), (9, 9));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 3").is_err());
    }
}
