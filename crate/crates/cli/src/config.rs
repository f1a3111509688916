use std::path::Path;

use resc::env::EnvConfig;
use resc::ppo::PpoConfig;
use resc::{Error, Result};
use serde::{Deserialize, Serialize};

/// Contents of a `--config` file. Every table is optional.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: Option<EnvConfig>,
    pub ppo: Option<PpoConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(env) = &c.env {
            env.validate()?;
        }
        if let Some(ppo) = &c.ppo {
            ppo.validate()?;
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
