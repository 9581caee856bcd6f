//! Auditing annotations against gold labels, and simulated annotators that
//! reproduce the typical mistake sources.
//!
//! Outcome of an annotated label against the gold label:
//!
//! | annotated vs gold            | outcome               |
//! |------------------------------|-----------------------|
//! | both discharged              | `correct_discharge`   |
//! | one discharged               | `discharged_vs_gold`  |
//! | same node                    | `correct`             |
//! | strict ancestor of gold      | `generic`             |
//! | strict descendant of gold    | `restricted`          |
//! | anything else                | `misplaced`           |

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{Hierarchy, HierarchyError, Relation};
use crate::seed::{self, SimRng};
use crate::traversal::{
    classify_with_oracle, AskAnswer, TerminalLabel, TraversalConfig, TraversalError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Correct,
    Generic,
    Restricted,
    Misplaced,
    DischargedVsGold,
    CorrectDischarge,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 6] = [
        OutcomeKind::Correct,
        OutcomeKind::Generic,
        OutcomeKind::Restricted,
        OutcomeKind::Misplaced,
        OutcomeKind::DischargedVsGold,
        OutcomeKind::CorrectDischarge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Correct => "correct",
            OutcomeKind::Generic => "generic",
            OutcomeKind::Restricted => "restricted",
            OutcomeKind::Misplaced => "misplaced",
            OutcomeKind::DischargedVsGold => "discharged_vs_gold",
            OutcomeKind::CorrectDischarge => "correct_discharge",
        }
    }
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAssignment {
    pub task_id: String,
    pub gold: TerminalLabel,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OutcomeError {
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Traversal(#[from] TraversalError),
    #[error("no gold label for task `{0}`")]
    MissingGold(String),
    #[error("task `{0}` has more than one gold label")]
    DuplicateGold(String),
    #[error("invalid annotator model: {0}")]
    InvalidModel(String),
    #[error("line {line}: {message}")]
    BadLine { line: usize, message: String },
}

pub fn classify_outcome(
    h: &Hierarchy,
    annotated: &TerminalLabel,
    gold: &TerminalLabel,
) -> Result<OutcomeKind, HierarchyError> {
    let kind = match (&annotated.node_id, &gold.node_id) {
        (None, None) => OutcomeKind::CorrectDischarge,
        (Some(a), None) | (None, Some(a)) => {
            h.node(a)?;
            OutcomeKind::DischargedVsGold
        }
        (Some(a), Some(g)) => match h.relation(a, g)? {
            Relation::Equal => OutcomeKind::Correct,
            Relation::Ancestor => OutcomeKind::Generic,
            Relation::Descendant => OutcomeKind::Restricted,
            Relation::Unrelated => OutcomeKind::Misplaced,
        },
    };
    Ok(kind)
}

/// Behaviour of a simulated annotator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnnotatorModel {
    /// Answers truthfully.
    Perfect,
    /// Classifies a uniformly chosen wrong node as if it were the object.
    Mislabeler,
    /// Sees features that are not there: keeps answering `yes` for
    /// `overshoot` levels below the gold node.
    PartialView { overshoot: u32 },
    /// Knows the hierarchy only down to `depth_cap` (root = depth 1; the
    /// root differentia is always affirmed).
    KnowledgeLimited { depth_cap: u32 },
    /// Truthful answers, each flipped with probability `epsilon`.
    Noisy { epsilon: f64 },
}

impl AnnotatorModel {
    pub fn validate(&self) -> Result<(), OutcomeError> {
        match *self {
            AnnotatorModel::Noisy { epsilon } if !(0.0..=1.0).contains(&epsilon) => Err(
                OutcomeError::InvalidModel(format!("epsilon {epsilon} outside [0, 1]")),
            ),
            AnnotatorModel::PartialView { overshoot: 0 } => Err(OutcomeError::InvalidModel(
                "overshoot must be at least 1".into(),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for AnnotatorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotatorModel::Perfect => f.write_str("perfect"),
            AnnotatorModel::Mislabeler => f.write_str("mislabeler"),
            AnnotatorModel::PartialView { overshoot } => write!(f, "partial_view:{overshoot}"),
            AnnotatorModel::KnowledgeLimited { depth_cap } => {
                write!(f, "knowledge_limited:{depth_cap}")
            }
            AnnotatorModel::Noisy { epsilon } => write!(f, "noisy:{epsilon}"),
        }
    }
}

/// Parses `perfect`, `mislabeler`, `partial_view[:N]`,
/// `knowledge_limited:N` or `noisy:EPS`.
impl FromStr for AnnotatorModel {
    type Err = OutcomeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let bad = |m: &str| OutcomeError::InvalidModel(format!("`{s}`: {m}"));
        let model = match (name, arg) {
            ("perfect", None) => AnnotatorModel::Perfect,
            ("mislabeler" | "mi", None) => AnnotatorModel::Mislabeler,
            ("partial_view" | "soii", None) => AnnotatorModel::PartialView { overshoot: 1 },
            ("partial_view" | "soii", Some(a)) => AnnotatorModel::PartialView {
                overshoot: a.parse().map_err(|_| bad("overshoot must be an integer"))?,
            },
            ("knowledge_limited" | "soia", Some(a)) => AnnotatorModel::KnowledgeLimited {
                depth_cap: a.parse().map_err(|_| bad("depth cap must be an integer"))?,
            },
            ("noisy", Some(a)) => AnnotatorModel::Noisy {
                epsilon: a.parse().map_err(|_| bad("epsilon must be a number"))?,
            },
            _ => return Err(bad("unknown model or missing parameter")),
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedAnnotatorModel {
    pub model: AnnotatorModel,
    pub seed: u64,
}

impl SimulatedAnnotatorModel {
    pub fn new(model: AnnotatorModel, seed: u64) -> Self {
        SimulatedAnnotatorModel { model, seed }
    }
}

fn yes_on(path: &[&str], id: &str) -> AskAnswer {
    if path.contains(&id) {
        AskAnswer::Yes
    } else {
        AskAnswer::No
    }
}

/// Label a simulated annotator gives to an object whose true label is
/// `gold`. The traversal runs with its default configuration.
pub fn simulate_label(
    h: &Hierarchy,
    gold: &TerminalLabel,
    sim: &SimulatedAnnotatorModel,
) -> Result<TerminalLabel, OutcomeError> {
    sim.model.validate()?;
    if let Some(id) = &gold.node_id {
        h.node(id)?;
    }
    let mut rng = seed::rng(sim.seed);
    let gold_path: Vec<&str> = match &gold.node_id {
        Some(id) => h.path_to(id)?,
        None => Vec::new(),
    };
    let cfg = TraversalConfig::default();

    let label = match sim.model {
        AnnotatorModel::Perfect => classify_with_oracle(h, |id| yes_on(&gold_path, id), cfg)?,
        AnnotatorModel::KnowledgeLimited { depth_cap } => {
            let cap = (depth_cap as usize).max(1);
            let known = &gold_path[..gold_path.len().min(cap)];
            classify_with_oracle(h, |id| yes_on(known, id), cfg)?
        }
        AnnotatorModel::PartialView { overshoot } => {
            let mut target = gold_path.clone();
            if let Some(&last) = target.last() {
                let mut here = last;
                for _ in 0..overshoot {
                    let kids = h.children(here)?;
                    match kids.choose(&mut rng) {
                        Some(k) => {
                            here = k.node_id.as_str();
                            target.push(here);
                        }
                        None => break,
                    }
                }
            }
            classify_with_oracle(h, |id| yes_on(&target, id), cfg)?
        }
        AnnotatorModel::Mislabeler => {
            let others: Vec<&str> = h
                .nodes()
                .map(|n| n.node_id.as_str())
                .filter(|id| Some(*id) != gold.node_id.as_deref())
                .collect();
            let wrong_path = match others.choose(&mut rng) {
                Some(id) => h.path_to(id)?,
                None => Vec::new(),
            };
            classify_with_oracle(h, |id| yes_on(&wrong_path, id), cfg)?
        }
        AnnotatorModel::Noisy { epsilon } => {
            let rng: &mut SimRng = &mut rng;
            classify_with_oracle(
                h,
                |id| {
                    let truth = yes_on(&gold_path, id);
                    if rng.random_bool(epsilon) {
                        match truth {
                            AskAnswer::Yes => AskAnswer::No,
                            _ => AskAnswer::Yes,
                        }
                    } else {
                        truth
                    }
                },
                cfg,
            )?
        }
    };
    Ok(label)
}

pub fn simulate_annotator(
    h: &Hierarchy,
    gold_node: &str,
    sim: &SimulatedAnnotatorModel,
) -> Result<TerminalLabel, OutcomeError> {
    let gold = TerminalLabel::node(h, gold_node)?;
    simulate_label(h, &gold, sim)
}

/// One (gold, annotated) cell of the confusion listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionEntry {
    pub gold: String,
    pub annotated: String,
    pub outcome: OutcomeKind,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub total: usize,
    pub counts: BTreeMap<OutcomeKind, usize>,
    pub confusion: Vec<ConfusionEntry>,
}

impl AuditReport {
    pub fn count(&self, kind: OutcomeKind) -> usize {
        self.counts.get(&kind).copied().unwrap_or(0)
    }

    /// Outcome counts followed by the confusion listing, with both the
    /// differentia and the category label of each category id.
    pub fn render(&self, h: &Hierarchy) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<20} {:>7}\n", "outcome", "count"));
        for k in OutcomeKind::ALL {
            out.push_str(&format!("{:<20} {:>7}\n", k.as_str(), self.count(k)));
        }
        out.push_str(&format!("{:<20} {:>7}\n", "total", self.total));
        if self.confusion.is_empty() {
            return out;
        }
        let describe = |id: &str| match TerminalLabel::from_category(h, id) {
            Ok(l) if l.is_discharged() => "Discharged".to_owned(),
            Ok(l) => format!("{id} {} ({})", l.category_label, l.differentia_label),
            Err(_) => id.to_owned(),
        };
        let rows: Vec<(String, String, &ConfusionEntry)> = self
            .confusion
            .iter()
            .map(|e| (describe(&e.gold), describe(&e.annotated), e))
            .collect();
        let gw = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(4);
        let aw = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(9);
        out.push('\n');
        out.push_str(&format!(
            "{:<gw$}  {:<aw$}  {:<18}  {:>5}\n",
            "gold", "annotated", "outcome", "count"
        ));
        for (g, a, e) in rows {
            out.push_str(&format!(
                "{g:<gw$}  {a:<aw$}  {:<18}  {:>5}\n",
                e.outcome.as_str(),
                e.count
            ));
        }
        out
    }
}

pub fn audit_report(
    h: &Hierarchy,
    annotations: &[(String, TerminalLabel)],
    golds: &[GoldAssignment],
) -> Result<AuditReport, OutcomeError> {
    let mut gold_by_task: HashMap<&str, &TerminalLabel> = HashMap::new();
    for g in golds {
        if gold_by_task.insert(&g.task_id, &g.gold).is_some() {
            return Err(OutcomeError::DuplicateGold(g.task_id.clone()));
        }
    }
    let mut counts: BTreeMap<OutcomeKind, usize> =
        OutcomeKind::ALL.iter().map(|&k| (k, 0)).collect();
    let mut cells: BTreeMap<(String, String), (OutcomeKind, usize)> = BTreeMap::new();
    for (task, label) in annotations {
        let gold = gold_by_task
            .get(task.as_str())
            .ok_or_else(|| OutcomeError::MissingGold(task.clone()))?;
        let kind = classify_outcome(h, label, gold)?;
        *counts.entry(kind).or_default() += 1;
        cells
            .entry((
                gold.category_id().to_owned(),
                label.category_id().to_owned(),
            ))
            .or_insert((kind, 0))
            .1 += 1;
    }
    Ok(AuditReport {
        total: annotations.len(),
        counts,
        confusion: cells
            .into_iter()
            .map(|((gold, annotated), (outcome, count))| ConfusionEntry {
                gold,
                annotated,
                outcome,
                count,
            })
            .collect(),
    })
}

/// One line of a gold or label file: `{"task_id", "label"}` plus an
/// optional annotator. The label is resolved with [`TerminalLabel::resolve`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelLine {
    pub task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_id: Option<String>,
    pub label: String,
}

/// Reads JSON lines of [`LabelLine`], skipping blank lines.
pub fn read_label_lines(reader: impl std::io::BufRead) -> Result<Vec<LabelLine>, OutcomeError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let bad = |message: String| OutcomeError::BadLine {
            line: i + 1,
            message,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

/// Resolves label lines into (task, label) pairs.
pub fn resolve_labels(
    h: &Hierarchy,
    lines: &[LabelLine],
) -> Result<Vec<(String, TerminalLabel)>, OutcomeError> {
    lines
        .iter()
        .map(|l| Ok((l.task_id.clone(), TerminalLabel::resolve(h, &l.label)?)))
        .collect()
}

pub fn resolve_golds(
    h: &Hierarchy,
    lines: &[LabelLine],
) -> Result<Vec<GoldAssignment>, OutcomeError> {
    Ok(resolve_labels(h, lines)?
        .into_iter()
        .map(|(task_id, gold)| GoldAssignment { task_id, gold })
        .collect())
}
