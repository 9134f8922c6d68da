//! Run configuration: one TOML file with a section per module.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sstt::SsttConfig;
use crate::trainer::{ArchConfig, TrainConfig};
use crate::world::WorldConfig;

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_rates() -> Vec<f64> {
    vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
}

/// Seeds and duplication rates for the sweep commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_rates")]
    pub rates: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            seeds: default_seeds(),
            rates: default_rates(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub sstt: SsttConfig,
    pub model: ArchConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: SweepConfig,
}

pub const BUNDLED: [(&str, &str); 3] = [
    ("tiny", include_str!("../configs/tiny.toml")),
    ("desk", include_str!("../configs/desk.toml")),
    ("stress", include_str!("../configs/stress.toml")),
];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().replace('\n', " ")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.sstt.validate()?;
        self.train.validate(self.world.num_cameras)?;
        if self.eval.seeds.is_empty() {
            return Err(Error::Config("eval.seeds must not be empty".into()));
        }
        if self.eval.rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config("eval.rates must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn bundled(name: &str) -> Option<Self> {
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_toml(text).expect("bundled config is valid"))
    }

    /// A bundled config name, or a path to a TOML file.
    pub fn resolve(spec: &str) -> Result<Self> {
        if let Some(c) = Self::bundled(spec) {
            return Ok(c);
        }
        let path = Path::new(spec);
        if !path.exists() {
            let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
            return Err(Error::Config(format!(
                "{spec} is neither a bundled config ({}) nor a file",
                names.join(", ")
            )));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Replace every seed with values derived from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.world.seed = seed;
        self.train.seed = seed;
        let n = self.eval.seeds.len() as u64;
        self.eval.seeds = (0..n).map(|i| seed.wrapping_add(i)).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_parse() {
        for (name, _) in BUNDLED {
            assert!(RunConfig::bundled(name).is_some(), "{name}");
        }
    }

    #[test]
    fn resolve_names_and_paths() {
        assert_eq!(RunConfig::resolve("tiny").unwrap(), RunConfig::bundled("tiny").unwrap());
        assert!(matches!(RunConfig::resolve("no-such-config"), Err(Error::Config(_))));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, BUNDLED[0].1).unwrap();
        assert_eq!(
            RunConfig::resolve(path.to_str().unwrap()).unwrap(),
            RunConfig::bundled(BUNDLED[0].0).unwrap()
        );
    }

    #[test]
    fn reseed_replaces_every_seed() {
        let mut c = RunConfig::bundled("tiny").unwrap();
        c.reseed(40);
        assert_eq!((c.world.seed, c.train.seed), (40, 40));
        assert_eq!(c.eval.seeds, vec![40, 41, 42]);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = BUNDLED[0].1.replace("[sstt]", "[sstt]\ntemporal_gapp = 3.0");
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::Config(_))));
    }

    #[test]
    fn desk_world_has_the_acceptance_shape() {
        let c = RunConfig::bundled("desk").unwrap();
        assert_eq!(c.world.num_cameras, 4);
        assert!(c.world.num_train_identities() >= 60);
        assert!(c.world.num_test_identities >= 40);
        assert!(c.eval.seeds.len() >= 3);
    }
}
