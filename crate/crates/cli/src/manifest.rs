use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Passed,
    Failed,
    Error,
}

/// Provenance of one CLI invocation. Written before any heavy work and
/// rewritten with the final status once outputs are complete.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub spec: Option<PathBuf>,
    pub parameters: Value,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub tool_version: String,
    pub git_describe: String,
    pub started_unix: u64,
    pub wall_clock_seconds: Option<f64>,
    pub outputs: Vec<String>,
    pub status: Status,
    #[serde(skip)]
    started: Option<Instant>,
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

impl RunManifest {
    pub fn begin(
        command: &str,
        spec: Option<PathBuf>,
        parameters: Value,
        seed: u64,
        out_dir: &Path,
        outputs: &[&str],
    ) -> Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let manifest = RunManifest {
            command: command.into(),
            spec,
            parameters,
            seed,
            out_dir: out_dir.to_path_buf(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            git_describe: git_describe(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_clock_seconds: None,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            status: Status::Running,
            started: Some(Instant::now()),
        };
        manifest.write()?;
        Ok(manifest)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        debug_assert!(self.outputs.iter().any(|o| o == name), "{name} not declared");
        self.out_dir.join(name)
    }

    pub fn finish(&mut self, status: Status) -> Result<()> {
        self.wall_clock_seconds = self.started.map(|s| s.elapsed().as_secs_f64());
        self.status = status;
        self.write()
    }

    fn write(&self) -> Result<()> {
        let path = self.out_dir.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}
