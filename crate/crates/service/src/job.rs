//! Job records and their forward-only state machine.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use figforge_core::pipeline::store::{write_atomic, JobMode};
use figforge_core::Stage;
use serde::{Deserialize, Serialize};

pub const STATE_FILE: &str = "state.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running { stage: Option<Stage> },
    Done,
    Failed { stage: Option<Stage>, reason: String },
}

impl JobState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobState::Done | JobState::Failed { .. })
    }

    /// Whether `next` may follow `self`. Running may repeat while its stage
    /// only moves forward.
    pub fn may_become(&self, next: &JobState) -> bool {
        match (self, next) {
            (JobState::Queued, JobState::Running { .. } | JobState::Failed { .. }) => true,
            (JobState::Running { stage: a }, JobState::Running { stage: b }) => match (a, b) {
                (Some(a), Some(b)) => a <= b,
                (None, _) => true,
                (Some(_), None) => false,
            },
            (JobState::Running { .. }, JobState::Done | JobState::Failed { .. }) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub mode: JobMode,
    #[serde(flatten)]
    pub state: JobState,
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
    pub feedback_submitted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IllegalTransition;

/// In-memory index of jobs mirrored to `state.json` in each job directory.
#[derive(Clone)]
pub struct JobTable {
    root: PathBuf,
    jobs: Arc<Mutex<HashMap<String, Job>>>,
}

impl JobTable {
    /// Loads every job under `root`. Jobs left queued or running by an
    /// earlier process are marked failed.
    pub fn open(root: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(root)?;
        let mut jobs = HashMap::new();
        for entry in std::fs::read_dir(root)? {
            let dir = entry?.path();
            let Ok(text) = std::fs::read_to_string(dir.join(STATE_FILE)) else { continue };
            let Ok(mut job) = serde_json::from_str::<Job>(&text) else { continue };
            if !job.state.is_terminal() {
                job.state = JobState::Failed { stage: None, reason: "interrupted by a service restart".into() };
                job.updated = Utc::now();
                let _ = write_atomic(&dir.join(STATE_FILE), &serde_json::to_vec_pretty(&job).expect("job serializes"));
            }
            jobs.insert(job.id.clone(), job);
        }
        Ok(Self { root: root.to_path_buf(), jobs: Arc::new(Mutex::new(jobs)) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.jobs.lock().expect("job table lock").get(id).cloned()
    }

    fn persist(&self, job: &Job) {
        let bytes = serde_json::to_vec_pretty(job).expect("job serializes");
        if let Err(e) = write_atomic(&self.dir(&job.id).join(STATE_FILE), &bytes) {
            tracing::warn!(job = %job.id, "could not persist state: {e}");
        }
    }

    pub fn insert(&self, id: String, mode: JobMode) -> Job {
        let now = Utc::now();
        let job = Job { id: id.clone(), mode, state: JobState::Queued, created: now, updated: now, feedback_submitted: false };
        self.persist(&job);
        self.jobs.lock().expect("job table lock").insert(id, job.clone());
        job
    }

    pub fn transition(&self, id: &str, next: JobState) -> Result<Job, IllegalTransition> {
        let mut jobs = self.jobs.lock().expect("job table lock");
        let job = jobs.get_mut(id).ok_or(IllegalTransition)?;
        if !job.state.may_become(&next) {
            return Err(IllegalTransition);
        }
        job.state = next;
        job.updated = Utc::now();
        let snapshot = job.clone();
        drop(jobs);
        self.persist(&snapshot);
        Ok(snapshot)
    }

    pub fn mark_feedback(&self, id: &str) -> Option<Job> {
        let mut jobs = self.jobs.lock().expect("job table lock");
        let job = jobs.get_mut(id)?;
        job.feedback_submitted = true;
        job.updated = Utc::now();
        let snapshot = job.clone();
        drop(jobs);
        self.persist(&snapshot);
        Some(snapshot)
    }
}
