//! Rating rubric records, append-only storage and aggregation.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FEEDBACK_FILE: &str = "feedback.ndjson";

/// Likert metrics, in the order they are reported.
pub const METRICS: [&str; 4] = ["semantic_correctness", "information_completeness", "visual_quality", "style_consistency"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    #[serde(default)]
    pub job_id: String,
    pub semantic_correctness: i64,
    pub information_completeness: i64,
    pub visual_quality: i64,
    pub style_consistency: i64,
    pub usability: i64,
    /// Only rated for vectorize jobs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversion_correctness: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeedbackError {
    #[error("{field} = {value} is outside {min}..={max}")]
    OutOfRange { field: &'static str, value: i64, min: i64, max: i64 },
    #[error("job_id must not be empty")]
    MissingJob,
}

impl FeedbackRecord {
    pub fn likert(&self) -> [i64; 4] {
        [self.semantic_correctness, self.information_completeness, self.visual_quality, self.style_consistency]
    }

    pub fn validate(&self) -> Result<(), FeedbackError> {
        if self.job_id.trim().is_empty() {
            return Err(FeedbackError::MissingJob);
        }
        let check = |field, value, min, max| {
            if (min..=max).contains(&value) {
                Ok(())
            } else {
                Err(FeedbackError::OutOfRange { field, value, min, max })
            }
        };
        for (name, v) in METRICS.iter().zip(self.likert()) {
            check(name, v, 1, 5)?;
        }
        check("usability", self.usability, 0, 1)?;
        if let Some(c) = self.conversion_correctness {
            check("conversion_correctness", c, 1, 5)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub n: u64,
    /// Absent when `n == 0`.
    pub mean: Option<f64>,
    /// Counts of ratings 1..=5.
    pub histogram: [u64; 5],
}

impl MetricSummary {
    fn from_values(values: impl IntoIterator<Item = i64>) -> Self {
        let mut histogram = [0u64; 5];
        let mut sum = 0i64;
        let mut n = 0u64;
        for v in values {
            histogram[(v - 1) as usize] += 1;
            sum += v;
            n += 1;
        }
        let mean = (n > 0).then(|| sum as f64 / n as f64);
        Self { n, mean, histogram }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackAggregate {
    pub n: u64,
    pub metrics: indexmap::IndexMap<String, MetricSummary>,
    pub conversion_correctness: MetricSummary,
    pub usability_count: u64,
}

/// Exact aggregation. Records are assumed validated.
pub fn aggregate_feedback(records: &[FeedbackRecord]) -> FeedbackAggregate {
    let metrics = METRICS
        .iter()
        .enumerate()
        .map(|(i, name)| (name.to_string(), MetricSummary::from_values(records.iter().map(|r| r.likert()[i]))))
        .collect();
    FeedbackAggregate {
        n: records.len() as u64,
        metrics,
        conversion_correctness: MetricSummary::from_values(records.iter().filter_map(|r| r.conversion_correctness)),
        usability_count: records.iter().filter(|r| r.usability == 1).count() as u64,
    }
}

/// Validates and appends one line. The line is written with a single
/// `write_all` on an append-mode handle so concurrent writers never
/// interleave within a record.
pub fn append_feedback(path: &Path, record: &FeedbackRecord) -> Result<(), AppendError> {
    record.validate()?;
    let mut line = serde_json::to_string(record).expect("record serializes");
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(line.as_bytes())?;
    f.sync_data()?;
    Ok(())
}

#[derive(Debug, Error)]
pub enum AppendError {
    #[error(transparent)]
    Invalid(#[from] FeedbackError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads every stored record; lines that fail to parse or validate are
/// skipped so one bad line cannot poison the aggregate.
pub fn read_feedback(path: &Path) -> std::io::Result<Vec<FeedbackRecord>> {
    let f = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if let Ok(r) = serde_json::from_str::<FeedbackRecord>(&line) {
            if r.validate().is_ok() {
                out.push(r);
            }
        }
    }
    Ok(out)
}
