//! Run-directory plumbing: timestamped directories owning a config
//! snapshot, the seeds used, and any metrics/checkpoint files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::{config_snapshot, Config};
use crate::CliError;

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    /// Creates `{root}/{name}-{millis}[-n]`; the suffix resolves collisions
    /// so concurrent runs own their directories exclusively.
    pub fn create(root: &Path, name: &str, config: &Config, seeds: &[u64]) -> Result<Self, CliError> {
        let millis = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        let mut attempt = 0u32;
        let path = loop {
            let candidate = if attempt == 0 {
                root.join(format!("{name}-{millis}"))
            } else {
                root.join(format!("{name}-{millis}-{attempt}"))
            };
            match fs::create_dir_all(root).and_then(|()| fs::create_dir(&candidate)) {
                Ok(()) => break candidate,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists && attempt < 1000 => {
                    attempt += 1;
                }
                Err(e) => return Err(CliError::Runtime(format!("cannot create run dir: {e}"))),
            }
        };
        fs::write(path.join("config.toml"), config_snapshot(config)?)?;
        let seed_lines: Vec<String> = seeds.iter().map(u64::to_string).collect();
        fs::write(path.join("seeds.txt"), seed_lines.join("\n") + "\n")?;
        println!("run directory: {}", path.display());
        Ok(Self { path })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(self.file(name), text)?;
        Ok(())
    }
}
