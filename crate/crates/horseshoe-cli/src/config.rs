use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use horseshoe::{Error, MapParams, Result};

pub const DEFAULT_SEED: u64 = 42;

/// Contents of a `--config` file. Parameters are given inline under
/// `params`, through `params_file` (relative to the config file), or as the
/// top-level object itself.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    params: Option<MapParams>,
    params_file: Option<PathBuf>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
    name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: MapParams,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if value.get("lambda").is_some() {
            let params = MapParams::from_json(&text)?;
            return Ok(RunConfig { params, seed: DEFAULT_SEED, output_dir: PathBuf::from("out"), cache_dir: None });
        }
        let file: ConfigFile = serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let params = match (file.params, file.params_file) {
            (Some(p), None) => MapParams::from_json(&serde_json::to_string(&p).expect("params serialize"))?,
            (None, Some(f)) => {
                let f = base.join(f);
                let text = std::fs::read_to_string(&f).map_err(|e| Error::Config(format!("{}: {e}", f.display())))?;
                MapParams::from_json(&text)?
            }
            (Some(_), Some(_)) => return Err(Error::Config("give either params or params_file, not both".into())),
            (None, None) => return Err(Error::Config("missing params".into())),
        };
        Ok(RunConfig {
            params,
            seed: file.seed.unwrap_or(DEFAULT_SEED),
            output_dir: file.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            cache_dir: file.cache_dir,
        })
    }
}
