use std::path::Path;

use afdc::model::NetworkConfig;
use afdc::pipeline::{SynthSpec, WarpRange};
use afdc::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Sizes of the synthetic splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for DataSizes {
    fn default() -> Self {
        DataSizes {
            train: 600,
            val: 150,
            test: 300,
        }
    }
}

/// Everything a run reads from `--config`. Missing sections take the
/// synthetic-experiment defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub synth: SynthSpec,
    pub data: DataSizes,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut train = TrainConfig::with_epochs(10);
        train.lr_initial = 0.2;
        train.warp = WarpRange { min: 32, max: 40 };
        RunConfig {
            network: NetworkConfig::experiment(true),
            train,
            synth: SynthSpec::default(),
            data: DataSizes::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: afdc::Error| CliError::Usage(format!("config: {e}"));
        self.network.validate().map_err(usage)?;
        self.train.validate().map_err(usage)?;
        self.synth.validate().map_err(usage)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"data":{"train":10}}"#).unwrap();
        assert_eq!(c.data.train, 10);
        assert_eq!(c.data.test, 300);
        assert_eq!(c.train.lr_initial, 0.2);
        assert!(serde_json::from_str::<RunConfig>(r#"{"trian":{}}"#).is_err());
    }

    #[test]
    fn round_trip() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }
}
