//! Run-config loading: strict keys, paths relative to the config file.

use std::fs;
use std::path::{Path, PathBuf};

use cookcnn::train::TrainConfig;
use cookcnn::Error;

pub fn load(path: &Path) -> Result<TrainConfig, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut cfg: TrainConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let resolve = |p: &mut PathBuf| {
        if !p.as_os_str().is_empty() && p.is_relative() {
            *p = base.join(&*p);
        }
    };
    resolve(&mut cfg.data);
    resolve(&mut cfg.out);
    if let Some(p) = cfg.stats_file.as_mut() {
        resolve(p);
    }
    Ok(cfg)
}
