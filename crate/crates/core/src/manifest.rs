//! Per-job `manifest.json`: which stage produced which artifact, and when.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Pipeline stages in execution order, one per persisted artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Draft,
    Segmentation,
    Indexed,
    Assets,
    Template,
    Refined,
    Final,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Draft,
        Stage::Segmentation,
        Stage::Indexed,
        Stage::Assets,
        Stage::Template,
        Stage::Refined,
        Stage::Final,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Draft => "draft",
            Stage::Segmentation => "segmentation",
            Stage::Indexed => "indexed",
            Stage::Assets => "assets",
            Stage::Template => "template",
            Stage::Refined => "refined",
            Stage::Final => "final",
        }
    }

    /// Artifact path relative to the job directory.
    pub fn artifact(self) -> &'static str {
        match self {
            Stage::Draft => "raw.png",
            Stage::Segmentation => "masks/",
            Stage::Indexed => "indexed.png",
            Stage::Assets => "assets/",
            Stage::Template => "template.svg",
            Stage::Refined => "refined.svg",
            Stage::Final => "final.svg",
        }
    }

    /// Stages whose artifacts this stage reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Draft => &[],
            Stage::Segmentation => &[Stage::Draft],
            Stage::Indexed => &[Stage::Segmentation],
            Stage::Assets => &[Stage::Draft, Stage::Segmentation],
            Stage::Template => &[Stage::Indexed, Stage::Segmentation],
            Stage::Refined => &[Stage::Template, Stage::Draft, Stage::Indexed, Stage::Segmentation],
            Stage::Final => &[Stage::Refined, Stage::Assets],
        }
    }

    fn position(self) -> usize {
        Stage::ALL.iter().position(|s| *s == self).unwrap_or(usize::MAX)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest is corrupt: {0}")]
    Corrupt(String),
    #[error("artifact `{0}` listed in manifest does not exist")]
    MissingArtifact(String),
    #[error("manifest io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineManifest {
    pub job_id: String,
    pub k_count: usize,
    pub style_hash: Option<String>,
    pub refinement_iterations: u32,
    pub stages: Vec<(Stage, String)>,
    pub timestamps: Vec<(Stage, DateTime<Utc>)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    job_id: String,
    k_count: usize,
    style_hash: Option<String>,
    refinement_iterations: u32,
    stages: IndexMap<String, String>,
    timestamps: IndexMap<String, DateTime<Utc>>,
}

impl PipelineManifest {
    pub fn new(job_id: impl Into<String>) -> Self {
        Self {
            job_id: job_id.into(),
            k_count: 0,
            style_hash: None,
            refinement_iterations: 0,
            stages: Vec::new(),
            timestamps: Vec::new(),
        }
    }

    pub fn artifact(&self, stage: Stage) -> Option<&str> {
        self.stages.iter().find(|(s, _)| *s == stage).map(|(_, p)| p.as_str())
    }

    /// Records (or replaces) a stage's artifact, keeping pipeline order.
    pub fn record(&mut self, stage: Stage, at: DateTime<Utc>) {
        upsert(&mut self.stages, stage, stage.artifact().to_string());
        upsert(&mut self.timestamps, stage, at);
    }

    pub fn to_json(&self) -> String {
        let file = ManifestFile {
            job_id: self.job_id.clone(),
            k_count: self.k_count,
            style_hash: self.style_hash.clone(),
            refinement_iterations: self.refinement_iterations,
            stages: self.stages.iter().map(|(s, p)| (s.name().to_string(), p.clone())).collect(),
            timestamps: self.timestamps.iter().map(|(s, t)| (s.name().to_string(), *t)).collect(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("manifest serializes");
        out.push('\n');
        out
    }

    /// Parses manifest JSON and checks schema and stage order only.
    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        let file: ManifestFile =
            serde_json::from_str(text).map_err(|e| ManifestError::Corrupt(e.to_string()))?;
        if let Some(hash) = &file.style_hash {
            if hash.len() != 64 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(ManifestError::Corrupt(format!("style_hash `{hash}` is not a 256-bit hex digest")));
            }
        }
        let stages = ordered_stages(file.stages.into_iter(), "stages")?;
        let timestamps = ordered_stages(file.timestamps.into_iter(), "timestamps")?;
        Ok(Self {
            job_id: file.job_id,
            k_count: file.k_count,
            style_hash: file.style_hash,
            refinement_iterations: file.refinement_iterations,
            stages,
            timestamps,
        })
    }

    pub fn save(&self, job_dir: &Path) -> Result<PathBuf, ManifestError> {
        let path = job_dir.join(MANIFEST_FILE);
        let tmp = job_dir.join(".manifest.json.tmp");
        fs::write(&tmp, self.to_json())?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// Reads `manifest.json` without checking that artifacts exist.
    pub fn read(job_dir: &Path) -> Result<Self, ManifestError> {
        let text = fs::read_to_string(job_dir.join(MANIFEST_FILE))?;
        Self::from_json(&text)
    }
}

fn upsert<T>(list: &mut Vec<(Stage, T)>, stage: Stage, value: T) {
    if let Some(slot) = list.iter_mut().find(|(s, _)| *s == stage) {
        slot.1 = value;
    } else {
        let at = list.iter().position(|(s, _)| s.position() > stage.position()).unwrap_or(list.len());
        list.insert(at, (stage, value));
    }
}

fn ordered_stages<T>(
    entries: impl Iterator<Item = (String, T)>,
    field: &str,
) -> Result<Vec<(Stage, T)>, ManifestError> {
    let mut out: Vec<(Stage, T)> = Vec::new();
    for (name, value) in entries {
        let stage: Stage = name.parse().map_err(ManifestError::Corrupt)?;
        if let Some((prev, _)) = out.last() {
            if prev.position() >= stage.position() {
                return Err(ManifestError::Corrupt(format!(
                    "{field}: `{stage}` listed after `{prev}`, out of pipeline order"
                )));
            }
        }
        out.push((stage, value));
    }
    Ok(out)
}

/// Loads `manifest.json` from a job directory and checks that every listed
/// artifact exists.
pub fn load_manifest(job_dir: &Path) -> Result<PipelineManifest, ManifestError> {
    let manifest = PipelineManifest::read(job_dir)?;
    for (_, rel) in &manifest.stages {
        if !job_dir.join(rel).exists() {
            return Err(ManifestError::MissingArtifact(rel.clone()));
        }
    }
    Ok(manifest)
}
