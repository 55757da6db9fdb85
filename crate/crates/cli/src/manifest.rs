use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

/// Provenance of one output directory. Written when a command starts and
/// rewritten when it finishes, so a crashed run still leaves a record.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    /// SHA-256 of the resolved config, after path resolution and seed override.
    pub config_hash: String,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub version: String,
    pub status: String,
    pub started_at_unix: f64,
    pub finished_at_unix: Option<f64>,
    pub wall_clock_secs: Option<f64>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    /// Creates the output directory, stores the resolved config next to the
    /// manifest and records the run as started.
    pub fn start<C: Serialize>(
        command: &str,
        config_path: Option<&Path>,
        config: &C,
        out: &Path,
        seed: u64,
    ) -> Result<Self> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let resolved = toml::to_string(config).context("serialising resolved config")?;
        std::fs::write(out.join(RESOLVED_CONFIG_FILE), &resolved)?;
        let m = Self {
            command: command.to_string(),
            config_path: config_path.map(Path::to_path_buf),
            config_hash: sha256_hex(resolved.as_bytes()),
            output_dir: out.to_path_buf(),
            seed,
            workers: rayon::current_num_threads(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            status: "running".into(),
            started_at_unix: unix_now(),
            finished_at_unix: None,
            wall_clock_secs: None,
        };
        m.write()?;
        log::info!("event=start command={command} out={} config_hash={} seed={seed}", out.display(), m.config_hash);
        Ok(m)
    }

    pub fn finish(mut self) -> Result<()> {
        let now = unix_now();
        self.status = "ok".into();
        self.finished_at_unix = Some(now);
        self.wall_clock_secs = Some(now - self.started_at_unix);
        self.write()?;
        log::info!("event=finish command={} secs={:.3}", self.command, now - self.started_at_unix);
        Ok(())
    }

    fn write(&self) -> Result<()> {
        let text = toml::to_string(self).context("serialising manifest")?;
        std::fs::write(self.output_dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}
