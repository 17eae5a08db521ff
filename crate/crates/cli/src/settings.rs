//! Global options after merging flags, the config file and defaults, in that
//! order of precedence.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use voxmeta_core::{Error, Result};

use crate::args::GlobalArgs;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    jobs: Option<usize>,
    cache_dir: Option<PathBuf>,
    force: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub force: bool,
    pub cache_dir: PathBuf,
}

const DEFAULT_CACHE_DIR: &str = ".voxmeta-cache";

impl Settings {
    pub fn resolve(args: &GlobalArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => load(path)?,
            None => FileConfig::default(),
        };
        let jobs = args.jobs.or(file.jobs);
        if jobs == Some(0) {
            return Err(Error::validation("--jobs must be at least 1"));
        }
        Ok(Settings {
            seed: args.seed.or(file.seed),
            jobs,
            force: args.force || file.force.unwrap_or(false),
            cache_dir: args
                .cache_dir
                .clone()
                .or(file.cache_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR)),
        })
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::validation("this command is randomized: pass --seed or set seed in --config"))
    }
}

fn load(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::at_path(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}
