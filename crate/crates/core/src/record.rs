//! Terminal annotation records: one annotator's final label for one task.

use serde::{Deserialize, Serialize};

use crate::traversal::{ClassificationSession, LoggedAnswer, TerminalLabel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub record_id: String,
    pub campaign_id: String,
    pub task_id: String,
    pub annotator_id: String,
    pub result: TerminalLabel,
    #[serde(default)]
    pub answer_log: Vec<LoggedAnswer>,
    pub started_at: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ended_at: Option<i64>,
}

impl AnnotationRecord {
    /// Builds a record from a terminal session. Returns `None` while the
    /// session is still asking questions.
    pub fn from_session(
        record_id: impl Into<String>,
        campaign_id: impl Into<String>,
        annotator_id: impl Into<String>,
        session: &ClassificationSession,
    ) -> Option<Self> {
        let result = session.result.clone()?;
        Some(AnnotationRecord {
            record_id: record_id.into(),
            campaign_id: campaign_id.into(),
            task_id: session.task_id.clone(),
            annotator_id: annotator_id.into(),
            result,
            answer_log: session.answer_log.clone(),
            started_at: session.started_at,
            ended_at: session.ended_at,
        })
    }

    pub fn duration_secs(&self) -> Option<f64> {
        self.ended_at.map(|e| (e - self.started_at) as f64 / 1000.0)
    }
}
