//! Annotation campaigns: datasets, hierarchies, sessions and records kept in
//! an event-sourced store, plus the HTTP service that exposes them.
//!
//! All state changes are [`Event`]s. The [`CampaignStore`] validates an
//! event, appends it to the [`Journal`], then applies it; reopening the
//! store replays the journal through the same apply step, so a restarted
//! service ends up in exactly the state it had before.

mod config;
mod journal;
mod service;
mod store;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{Diagnostic, HierarchyDocument, HierarchyError};
use crate::localization::{AnnotationTask, ImageRecord, LocalizationError, LocalizationStrategy};
use crate::outcomes::{GoldAssignment, OutcomeError};
use crate::record::AnnotationRecord;
use crate::traversal::{AskAnswer, LabelingScheme, TraversalConfig, TraversalError};

pub use config::ServiceConfig;
pub use journal::{Journal, JournalEntry};
pub use service::{router, serve, AppState};
pub use store::{
    export_jsonl, Assignment, CampaignStats, CampaignStore, ExportLine, NextTask, Progress,
    SessionEntry, Split,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignStatus {
    Draft,
    Open,
    Closed,
}

impl fmt::Display for CampaignStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CampaignStatus::Draft => "draft",
            CampaignStatus::Open => "open",
            CampaignStatus::Closed => "closed",
        })
    }
}

/// What a campaign is created from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub campaign_id: String,
    pub hierarchy_version: String,
    pub images: Vec<ImageRecord>,
    #[serde(default)]
    pub strategy: LocalizationStrategy,
    #[serde(default)]
    pub labeling_scheme: LabelingScheme,
    #[serde(default)]
    pub traversal: TraversalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    #[serde(flatten)]
    pub spec: CampaignSpec,
    pub status: CampaignStatus,
    /// Materialized once, when the campaign opens.
    pub tasks: Vec<AnnotationTask>,
    pub created_at: i64,
}

impl Campaign {
    pub fn id(&self) -> &str {
        &self.spec.campaign_id
    }

    pub fn task(&self, task_id: &str) -> Option<&AnnotationTask> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageRecord> {
        self.spec.images.iter().find(|i| i.image_id == image_id)
    }
}

/// Every state change the store knows about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    HierarchyRegistered {
        version: String,
        document: HierarchyDocument,
    },
    CampaignCreated {
        spec: CampaignSpec,
        at_ms: i64,
    },
    CampaignOpened {
        campaign_id: String,
        tasks: Vec<AnnotationTask>,
        at_ms: i64,
    },
    CampaignClosed {
        campaign_id: String,
        at_ms: i64,
    },
    GoldLoaded {
        campaign_id: String,
        golds: Vec<GoldAssignment>,
    },
    SessionStarted {
        session_id: String,
        campaign_id: String,
        task_id: String,
        annotator_id: String,
        at_ms: i64,
    },
    /// An answer to a live session. When it finishes the session, the
    /// resulting record is committed as part of the same event.
    AnswerSubmitted {
        session_id: String,
        answer: AskAnswer,
        at_ms: i64,
    },
    /// A record produced outside the service's own sessions.
    RecordCommitted {
        record: AnnotationRecord,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Traversal(#[from] TraversalError),
    #[error(transparent)]
    Localization(#[from] LocalizationError),
    #[error(transparent)]
    Outcome(#[from] OutcomeError),
    #[error("hierarchy has error diagnostics: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    UnusableHierarchy(Vec<Diagnostic>),
    #[error("unknown hierarchy version `{0}`")]
    UnknownHierarchy(String),
    #[error("unknown campaign `{0}`")]
    UnknownCampaign(String),
    #[error("campaign `{0}` already exists")]
    DuplicateCampaign(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task id `{0}` exists in several campaigns; pass campaign_id")]
    AmbiguousTask(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown image `{0}`")]
    UnknownImage(String),
    #[error("campaign `{campaign}` is {status}, expected {expected}")]
    WrongStatus {
        campaign: String,
        status: CampaignStatus,
        expected: CampaignStatus,
    },
    #[error(
        "annotator `{annotator}` already has a record for task `{task}` in campaign `{campaign}`"
    )]
    DuplicateRecord {
        campaign: String,
        task: String,
        annotator: String,
    },
    #[error("session `{0}` is not terminal")]
    NotTerminal(String),
    #[error("campaign `{0}` has no records")]
    EmptyCampaign(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("journal is corrupt at line {line}: {message}")]
    CorruptJournal { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}

impl StoreError {
    /// Stable machine-readable code used in error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::Hierarchy(HierarchyError::UnknownNode(_)) => "unknown_node",
            StoreError::Hierarchy(_) => "invalid_hierarchy",
            StoreError::Traversal(TraversalError::Terminal) => "session_terminal",
            StoreError::Traversal(_) => "traversal_error",
            StoreError::Localization(_) => "invalid_dataset",
            StoreError::Outcome(_) => "invalid_gold",
            StoreError::UnusableHierarchy(_) => "unusable_hierarchy",
            StoreError::UnknownHierarchy(_) => "unknown_hierarchy",
            StoreError::UnknownCampaign(_) => "unknown_campaign",
            StoreError::DuplicateCampaign(_) => "duplicate_campaign",
            StoreError::UnknownTask(_) => "unknown_task",
            StoreError::AmbiguousTask(_) => "ambiguous_task",
            StoreError::UnknownSession(_) => "unknown_session",
            StoreError::UnknownImage(_) => "unknown_image",
            StoreError::WrongStatus { .. } => "wrong_status",
            StoreError::DuplicateRecord { .. } => "duplicate_record",
            StoreError::NotTerminal(_) => "not_terminal",
            StoreError::EmptyCampaign(_) => "empty_campaign",
            StoreError::Invalid(_) => "invalid_request",
            StoreError::CorruptJournal { .. } => "corrupt_journal",
            StoreError::Io(_) => "io_error",
        }
    }
}
