//! Guided classification sessions.
//!
//! A session asks the annotator one differentia at a time. It first checks
//! the root differentia; a negative answer discharges the object. Otherwise
//! it descends: at each level the children are asked in ordinal order and
//! the first `yes` is entered. When no child holds, the session stops at the
//! current node (the most specific node known to hold). Reaching a leaf also
//! stops it.
//!
//! `unsure` steers exactly like `no` but stays distinguishable in the log.

use std::fmt;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{Diagnostic, Hierarchy, HierarchyError};

/// Reserved category id for discharged objects.
pub const DISCHARGED: &str = "DISCHARGED";
/// Reserved category id for objects an annotator could not place.
pub const UNRECOGNISED: &str = "UNRECOGNISED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AskAnswer {
    Yes,
    No,
    Unsure,
}

impl AskAnswer {
    pub fn is_yes(self) -> bool {
        self == AskAnswer::Yes
    }
}

impl fmt::Display for AskAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AskAnswer::Yes => "yes",
            AskAnswer::No => "no",
            AskAnswer::Unsure => "unsure",
        })
    }
}

impl FromStr for AskAnswer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "yes" | "y" => Ok(AskAnswer::Yes),
            "no" | "n" => Ok(AskAnswer::No),
            "unsure" | "u" | "idk" => Ok(AskAnswer::Unsure),
            other => Err(format!("unknown answer `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionStage {
    RootCheck,
    ChildCheck,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub node_id: String,
    pub differentia: String,
    /// Genus-differentia definition of the candidate node, for display.
    pub definition_path: Vec<String>,
    pub stage: QuestionStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    AwaitingRoot,
    Descending,
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedAnswer {
    pub node_id: String,
    pub answer: AskAnswer,
    /// UTC milliseconds at receipt.
    pub at_ms: i64,
    /// Set when the session answered on the annotator's behalf.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthetic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Node,
    Discharged,
}

/// How a terminal label is rendered in exports and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelingScheme {
    /// The differentia text of the node.
    #[default]
    Differentia,
    /// The conventional category name of the node.
    Category,
}

impl FromStr for LabelingScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "differentia" => Ok(LabelingScheme::Differentia),
            "category" => Ok(LabelingScheme::Category),
            other => Err(format!(
                "unknown scheme `{other}` (expected differentia or category)"
            )),
        }
    }
}

/// Final outcome of a session.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TerminalLabel {
    pub kind: LabelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<String>,
    pub differentia_label: String,
    pub category_label: String,
}

impl TerminalLabel {
    pub fn node(h: &Hierarchy, id: &str) -> Result<Self, HierarchyError> {
        let n = h.node(id)?;
        Ok(TerminalLabel {
            kind: LabelKind::Node,
            node_id: Some(n.node_id.clone()),
            differentia_label: n.differentia.clone(),
            category_label: n.category_label.clone(),
        })
    }

    pub fn discharged() -> Self {
        TerminalLabel {
            kind: LabelKind::Discharged,
            node_id: None,
            differentia_label: "Discharged".into(),
            category_label: "Discharged".into(),
        }
    }

    /// Resolves a category id: a node id or [`DISCHARGED`].
    pub fn from_category(h: &Hierarchy, category: &str) -> Result<Self, HierarchyError> {
        if category == DISCHARGED {
            Ok(Self::discharged())
        } else {
            Self::node(h, category)
        }
    }

    /// Resolves free-form label text: a node id, `DISCHARGED` (any case),
    /// or a category label or differentia naming exactly one node.
    pub fn resolve(h: &Hierarchy, text: &str) -> Result<Self, HierarchyError> {
        let text = text.trim();
        if h.contains(text) {
            return Self::node(h, text);
        }
        if text.eq_ignore_ascii_case(DISCHARGED) {
            return Ok(Self::discharged());
        }
        for field in [
            (|n: &crate::hierarchy::HierarchyNode| n.category_label.as_str()) as fn(&_) -> &str,
            |n| n.differentia.as_str(),
        ] {
            let hits: Vec<_> = h.nodes().filter(|n| field(n) == text).collect();
            if let [n] = hits.as_slice() {
                return Self::node(h, &n.node_id);
            }
        }
        Err(HierarchyError::UnknownNode(text.to_owned()))
    }

    pub fn is_discharged(&self) -> bool {
        self.kind == LabelKind::Discharged
    }

    /// Nominal category identity: the node id, or [`DISCHARGED`].
    pub fn category_id(&self) -> &str {
        self.node_id.as_deref().unwrap_or(DISCHARGED)
    }

    pub fn label(&self, scheme: LabelingScheme) -> &str {
        match scheme {
            LabelingScheme::Differentia => &self.differentia_label,
            LabelingScheme::Category => &self.category_label,
        }
    }
}

impl fmt::Display for TerminalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node_id {
            Some(id) => write!(
                f,
                "{id} {} / {}",
                self.category_label, self.differentia_label
            ),
            None => f.write_str("Discharged"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TraversalConfig {
    /// Answer `yes` on the annotator's behalf when the root differentia is
    /// flagged as not visually checkable.
    #[serde(default)]
    pub auto_accept_nonvisual_root: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraversalError {
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("hierarchy has {} error diagnostic(s)", .0.len())]
    UnusableHierarchy(Vec<Diagnostic>),
    #[error("session is already terminal")]
    Terminal,
    #[error("session was started on hierarchy {expected}, got {found}")]
    VersionMismatch { expected: String, found: String },
}

/// Resumable state of one guided classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationSession {
    pub session_id: String,
    pub task_id: String,
    pub hierarchy_version: String,
    pub config: TraversalConfig,
    pub current_node: String,
    pub pending_child_index: usize,
    pub answer_log: Vec<LoggedAnswer>,
    pub state: SessionState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<TerminalLabel>,
    pub started_at: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ended_at: Option<i64>,
}

/// Either the next question or the finished label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prompt {
    Question(Question),
    Terminal(TerminalLabel),
}

pub fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

impl ClassificationSession {
    pub fn is_terminal(&self) -> bool {
        self.state == SessionState::Terminal
    }

    /// Wall time between start and the terminal answer, in seconds.
    pub fn duration_secs(&self) -> Option<f64> {
        self.ended_at.map(|e| (e - self.started_at) as f64 / 1000.0)
    }

    /// True when the session stopped at a node after at least one `unsure`
    /// among the answers that followed the last `yes`.
    pub fn stopped_on_unsure(&self) -> bool {
        self.result
            .as_ref()
            .is_some_and(|r| stopped_on_unsure(r, &self.answer_log))
    }

    fn check_version(&self, h: &Hierarchy) -> Result<(), TraversalError> {
        if self.hierarchy_version != h.version() {
            return Err(TraversalError::VersionMismatch {
                expected: self.hierarchy_version.clone(),
                found: h.version().to_owned(),
            });
        }
        Ok(())
    }

    fn finish(&mut self, result: TerminalLabel, at_ms: i64) {
        self.state = SessionState::Terminal;
        self.result = Some(result);
        self.ended_at = Some(at_ms);
    }

    /// Moves onto `id`, terminating at once when it is a leaf.
    fn enter(&mut self, h: &Hierarchy, id: &str, at_ms: i64) -> Result<(), TraversalError> {
        self.current_node = id.to_owned();
        self.pending_child_index = 0;
        self.state = SessionState::Descending;
        if h.is_leaf(id)? {
            self.finish(TerminalLabel::node(h, id)?, at_ms);
        }
        Ok(())
    }
}

/// Same test as [`ClassificationSession::stopped_on_unsure`], for a
/// stored result and its answer log.
pub fn stopped_on_unsure(result: &TerminalLabel, log: &[LoggedAnswer]) -> bool {
    if result.is_discharged() {
        return false;
    }
    let tail = match log.iter().rposition(|a| a.answer.is_yes()) {
        Some(i) => &log[i + 1..],
        None => log,
    };
    tail.iter().any(|a| a.answer == AskAnswer::Unsure)
}

fn ensure_usable(h: &Hierarchy) -> Result<(), TraversalError> {
    let errors: Vec<_> = h
        .validate()
        .into_iter()
        .filter(Diagnostic::is_error)
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(TraversalError::UnusableHierarchy(errors))
    }
}

/// Starts a session at the given instant.
pub fn start_session_at(
    h: &Hierarchy,
    session_id: impl Into<String>,
    task_id: impl Into<String>,
    config: TraversalConfig,
    at_ms: i64,
) -> Result<ClassificationSession, TraversalError> {
    ensure_usable(h)?;
    let root = h.root();
    let mut s = ClassificationSession {
        session_id: session_id.into(),
        task_id: task_id.into(),
        hierarchy_version: h.version().to_owned(),
        config,
        current_node: root.node_id.clone(),
        pending_child_index: 0,
        answer_log: Vec::new(),
        state: SessionState::AwaitingRoot,
        result: None,
        started_at: at_ms,
        ended_at: None,
    };
    if config.auto_accept_nonvisual_root && !root.visually_checkable {
        s.answer_log.push(LoggedAnswer {
            node_id: root.node_id.clone(),
            answer: AskAnswer::Yes,
            at_ms,
            synthetic: true,
        });
        let root_id = root.node_id.clone();
        s.enter(h, &root_id, at_ms)?;
    }
    Ok(s)
}

/// Starts a session now, with an id derived from the task and the clock.
pub fn start_session(
    h: &Hierarchy,
    task_id: &str,
    config: TraversalConfig,
) -> Result<ClassificationSession, TraversalError> {
    let now = now_ms();
    start_session_at(h, format!("{task_id}@{now}"), task_id, config, now)
}

pub fn current_question(
    h: &Hierarchy,
    s: &ClassificationSession,
) -> Result<Prompt, TraversalError> {
    s.check_version(h)?;
    let (node, stage) = match s.state {
        SessionState::Terminal => {
            let result = s.result.clone().expect("terminal sessions carry a result");
            return Ok(Prompt::Terminal(result));
        }
        SessionState::AwaitingRoot => (h.root(), QuestionStage::RootCheck),
        SessionState::Descending => {
            let kids = h.children(&s.current_node)?;
            let node = kids.get(s.pending_child_index).copied().ok_or_else(|| {
                HierarchyError::UnknownNode(format!(
                    "{} child #{}",
                    s.current_node, s.pending_child_index
                ))
            })?;
            (node, QuestionStage::ChildCheck)
        }
    };
    Ok(Prompt::Question(Question {
        node_id: node.node_id.clone(),
        differentia: node.differentia.clone(),
        definition_path: h.reconstruct_definition(&node.node_id)?,
        stage,
    }))
}

/// Applies one answer to the pending question, stamped with `at_ms`.
pub fn submit_answer_at(
    h: &Hierarchy,
    s: &mut ClassificationSession,
    answer: AskAnswer,
    at_ms: i64,
) -> Result<(), TraversalError> {
    s.check_version(h)?;
    match s.state {
        SessionState::Terminal => Err(TraversalError::Terminal),
        SessionState::AwaitingRoot => {
            let root_id = h.root().node_id.clone();
            s.answer_log.push(LoggedAnswer {
                node_id: root_id.clone(),
                answer,
                at_ms,
                synthetic: false,
            });
            if answer.is_yes() {
                s.enter(h, &root_id, at_ms)
            } else {
                s.finish(TerminalLabel::discharged(), at_ms);
                Ok(())
            }
        }
        SessionState::Descending => {
            let kids: Vec<String> = h
                .children(&s.current_node)?
                .iter()
                .map(|n| n.node_id.clone())
                .collect();
            let child = kids
                .get(s.pending_child_index)
                .cloned()
                .ok_or_else(|| HierarchyError::UnknownNode(s.current_node.clone()))?;
            s.answer_log.push(LoggedAnswer {
                node_id: child.clone(),
                answer,
                at_ms,
                synthetic: false,
            });
            if answer.is_yes() {
                return s.enter(h, &child, at_ms);
            }
            s.pending_child_index += 1;
            if s.pending_child_index >= kids.len() {
                let here = s.current_node.clone();
                s.finish(TerminalLabel::node(h, &here)?, at_ms);
            }
            Ok(())
        }
    }
}

pub fn submit_answer(
    h: &Hierarchy,
    s: &mut ClassificationSession,
    answer: AskAnswer,
) -> Result<(), TraversalError> {
    submit_answer_at(h, s, answer, now_ms())
}

/// Drives a session to completion by asking `oracle` about each candidate
/// node. Returns the finished session, log included.
pub fn run_with_oracle(
    h: &Hierarchy,
    mut oracle: impl FnMut(&str) -> AskAnswer,
    config: TraversalConfig,
) -> Result<ClassificationSession, TraversalError> {
    let mut s = start_session_at(h, "oracle", "oracle", config, 0)?;
    let mut step = 0;
    while let Prompt::Question(q) = current_question(h, &s)? {
        step += 1;
        submit_answer_at(h, &mut s, oracle(&q.node_id), step)?;
    }
    Ok(s)
}

pub fn classify_with_oracle(
    h: &Hierarchy,
    oracle: impl FnMut(&str) -> AskAnswer,
    config: TraversalConfig,
) -> Result<TerminalLabel, TraversalError> {
    let s = run_with_oracle(h, oracle, config)?;
    Ok(s.result.expect("terminal"))
}

/// Rebuilds a session from its identity and recorded answers. Synthetic
/// entries are regenerated by the start step and skipped.
pub fn replay_session(
    h: &Hierarchy,
    session_id: &str,
    task_id: &str,
    config: TraversalConfig,
    started_at: i64,
    log: &[LoggedAnswer],
) -> Result<ClassificationSession, TraversalError> {
    let mut s = start_session_at(h, session_id, task_id, config, started_at)?;
    for entry in log.iter().filter(|e| !e.synthetic) {
        submit_answer_at(h, &mut s, entry.answer, entry.at_ms)?;
    }
    Ok(s)
}

/// Oracle answering `yes` exactly on the root path of `target`.
pub fn path_oracle(
    h: &Hierarchy,
    target: &str,
) -> Result<impl Fn(&str) -> AskAnswer, HierarchyError> {
    let path: Vec<String> = h.path_to(target)?.into_iter().map(str::to_owned).collect();
    Ok(move |id: &str| {
        if path.iter().any(|p| p == id) {
            AskAnswer::Yes
        } else {
            AskAnswer::No
        }
    })
}
