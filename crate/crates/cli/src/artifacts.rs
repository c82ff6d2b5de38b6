use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ribgraph::cloud::{load_point_cloud, save_point_cloud, CloudFormat, PointCloud};
use serde::Serialize;

use crate::CliError;

/// Output directory that every artifact of one command is written into.
pub struct ArtifactDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl ArtifactDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::input(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::input(format!("{name}: {e}")))?;
        text.push('\n');
        self.text(name, &text)
    }

    pub fn cloud(&mut self, name: &str, cloud: &PointCloud) -> Result<(), CliError> {
        let path = self.path(name);
        save_point_cloud(cloud, &path, CloudFormat::Ply)?;
        self.written.push(path);
        Ok(())
    }
}

pub fn read_cloud(path: &Path) -> Result<PointCloud, CliError> {
    let format = CloudFormat::from_path(path)
        .ok_or_else(|| CliError::input(format!("{}: expected a .ply or .csv point cloud", path.display())))?;
    Ok(load_point_cloud(path, format)?)
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Per-stage wall-clock times in milliseconds.
#[derive(Default)]
pub struct StageClock {
    pub stages: BTreeMap<String, f64>,
}

impl StageClock {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages
            .insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
        out
    }
}

pub fn unix_seconds() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Run-specific facts that must not appear in the reproducible artifacts.
#[derive(Serialize)]
pub struct Metadata<T: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub runtime_ms: T,
}
