//! Genus-differentia classification hierarchies.
//!
//! A [`Hierarchy`] is a tree of labelled concepts. Each node carries one
//! lexical sense (sense id, synset, gloss), a category label and the
//! differentia that separates it from its siblings. The genus of a node is
//! its parent; only the root stores a free-text genus term, because its own
//! genus lies outside the tree.
//!
//! Hierarchies are immutable once loaded. Changing one means loading a new
//! document, which gets a new [`Hierarchy::version`].

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const FIXTURE_MUSICAL_INSTRUMENTS: &str = include_str!("../fixtures/musical_instruments.json");

/// Errors raised while loading or querying a hierarchy.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate node id `{0}`")]
    DuplicateNodeId(String),
    #[error("node `{node}` references missing parent `{parent}`")]
    DanglingParent { node: String, parent: String },
    #[error("multiple root nodes: {}", .0.join(", "))]
    MultipleRoots(Vec<String>),
    #[error("document has no root node")]
    NoRoot,
    #[error("declared root `{declared}` does not match parentless node `{actual}`")]
    RootMismatch { declared: String, actual: String },
    #[error("cycle detected through node `{0}`")]
    Cycle(String),
    #[error("unknown node id `{0}`")]
    UnknownNode(String),
    #[error("cannot read hierarchy: {0}")]
    Io(String),
}

/// One lexical meaning: the sense identifier, its synonym set and its gloss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sense {
    pub sense_id: String,
    pub synset: Vec<String>,
    pub gloss: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyNode {
    pub node_id: String,
    pub sense: Sense,
    /// Preferred lemma used when exporting category labels.
    pub category_label: String,
    pub differentia: String,
    pub parent: Option<String>,
    pub visually_checkable: bool,
    /// Position among siblings, taken from document order.
    pub ordinal: usize,
    /// Free-text genus of the root. Absent on every other node.
    pub root_genus_term: Option<String>,
}

/// Interchange form of a single node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDocument {
    pub id: String,
    pub parent: Option<String>,
    pub sense_id: String,
    pub synset: Vec<String>,
    pub category_label: String,
    pub gloss: String,
    pub differentia: String,
    pub visually_checkable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_genus_term: Option<String>,
}

/// Interchange form of a whole hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyDocument {
    pub root: String,
    pub nodes: Vec<NodeDocument>,
}

/// How two nodes sit relative to each other in the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Equal,
    /// The first node is a strict ancestor of the second.
    Ancestor,
    /// The first node is a strict descendant of the second.
    Descendant,
    Unrelated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticCode {
    SiblingDifferentiaCollision,
    DuplicateSenseId,
    EmptySenseId,
    EmptyDifferentia,
    EmptySynset,
    DuplicateLemma,
    MissingRootGenus,
    NotVisuallyCheckable,
    ParentEmptyingDifferentia,
}

impl DiagnosticCode {
    pub const ALL: [DiagnosticCode; 9] = [
        DiagnosticCode::SiblingDifferentiaCollision,
        DiagnosticCode::DuplicateSenseId,
        DiagnosticCode::EmptySenseId,
        DiagnosticCode::EmptyDifferentia,
        DiagnosticCode::EmptySynset,
        DiagnosticCode::DuplicateLemma,
        DiagnosticCode::MissingRootGenus,
        DiagnosticCode::NotVisuallyCheckable,
        DiagnosticCode::ParentEmptyingDifferentia,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticCode::SiblingDifferentiaCollision => "sibling-differentia-collision",
            DiagnosticCode::DuplicateSenseId => "duplicate-sense-id",
            DiagnosticCode::EmptySenseId => "empty-sense-id",
            DiagnosticCode::EmptyDifferentia => "empty-differentia",
            DiagnosticCode::EmptySynset => "empty-synset",
            DiagnosticCode::DuplicateLemma => "duplicate-lemma",
            DiagnosticCode::MissingRootGenus => "missing-root-genus",
            DiagnosticCode::NotVisuallyCheckable => "not-visually-checkable",
            DiagnosticCode::ParentEmptyingDifferentia => "parent-emptying-differentia",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            DiagnosticCode::NotVisuallyCheckable | DiagnosticCode::ParentEmptyingDifferentia => {
                Severity::Warning
            }
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A finding from [`Hierarchy::validate`]. Error-severity diagnostics make a
/// hierarchy unusable for campaigns; warnings do not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    pub node_id: Option<String>,
    pub message: String,
}

impl Diagnostic {
    fn new(code: DiagnosticCode, node_id: Option<&str>, message: String) -> Self {
        Diagnostic {
            severity: code.severity(),
            code,
            node_id: node_id.map(str::to_owned),
            message,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match &self.node_id {
            Some(id) => write!(f, "{sev}[{}] node {id}: {}", self.code, self.message),
            None => write!(f, "{sev}[{}]: {}", self.code, self.message),
        }
    }
}

/// A loaded, structurally valid classification tree.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    nodes: Vec<HierarchyNode>,
    index: HashMap<String, usize>,
    children: Vec<Vec<usize>>,
    root: usize,
    version: String,
}

impl PartialEq for Hierarchy {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.nodes == other.nodes
    }
}

impl Eq for Hierarchy {}

impl Hierarchy {
    /// Parses a hierarchy from its JSON interchange form.
    pub fn from_json(source: &str) -> Result<Self, HierarchyError> {
        let doc: HierarchyDocument =
            serde_json::from_str(source).map_err(|e| HierarchyError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        Self::from_document(doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HierarchyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HierarchyError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The bundled Musical Instrument hierarchy (nine nodes, ids `1` … `1_3`).
    pub fn musical_instruments() -> Self {
        Self::from_json(FIXTURE_MUSICAL_INSTRUMENTS).expect("bundled fixture is well-formed")
    }

    /// Raw JSON of the bundled Musical Instrument hierarchy.
    pub fn musical_instruments_json() -> &'static str {
        FIXTURE_MUSICAL_INSTRUMENTS
    }

    pub fn from_document(doc: HierarchyDocument) -> Result<Self, HierarchyError> {
        let mut index = HashMap::with_capacity(doc.nodes.len());
        for (i, n) in doc.nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(HierarchyError::DuplicateNodeId(n.id.clone()));
            }
        }

        let mut roots = Vec::new();
        for n in &doc.nodes {
            match &n.parent {
                None => roots.push(n.id.clone()),
                Some(p) if !index.contains_key(p) => {
                    return Err(HierarchyError::DanglingParent {
                        node: n.id.clone(),
                        parent: p.clone(),
                    })
                }
                Some(_) => {}
            }
        }
        let root_id = match roots.len() {
            0 => {
                // Every node has a parent inside the document, so they cannot
                // all be acyclic.
                return match doc.nodes.first() {
                    Some(n) => Err(HierarchyError::Cycle(n.id.clone())),
                    None => Err(HierarchyError::NoRoot),
                };
            }
            1 => roots.pop().unwrap(),
            _ => return Err(HierarchyError::MultipleRoots(roots)),
        };
        if root_id != doc.root {
            return Err(HierarchyError::RootMismatch {
                declared: doc.root.clone(),
                actual: root_id,
            });
        }

        let mut children: Vec<Vec<usize>> = vec![Vec::new(); doc.nodes.len()];
        for (i, n) in doc.nodes.iter().enumerate() {
            if let Some(p) = &n.parent {
                children[index[p]].push(i);
            }
        }

        let root = index[&root_id];
        let mut reached = vec![false; doc.nodes.len()];
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            reached[i] = true;
            stack.extend(children[i].iter().copied());
        }
        if let Some(i) = reached.iter().position(|r| !r) {
            return Err(HierarchyError::Cycle(doc.nodes[i].id.clone()));
        }

        let mut ordinals = vec![0usize; doc.nodes.len()];
        for kids in &children {
            for (ord, &k) in kids.iter().enumerate() {
                ordinals[k] = ord;
            }
        }

        let version = document_digest(&doc);
        let nodes = doc
            .nodes
            .into_iter()
            .zip(ordinals)
            .map(|(n, ordinal)| HierarchyNode {
                node_id: n.id,
                sense: Sense {
                    sense_id: n.sense_id,
                    synset: n.synset,
                    gloss: n.gloss,
                },
                category_label: n.category_label,
                differentia: n.differentia,
                parent: n.parent,
                visually_checkable: n.visually_checkable,
                ordinal,
                root_genus_term: n.root_genus_term,
            })
            .collect();

        Ok(Hierarchy {
            nodes,
            index,
            children,
            root,
            version,
        })
    }

    pub fn to_document(&self) -> HierarchyDocument {
        HierarchyDocument {
            root: self.root().node_id.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDocument {
                    id: n.node_id.clone(),
                    parent: n.parent.clone(),
                    sense_id: n.sense.sense_id.clone(),
                    synset: n.sense.synset.clone(),
                    category_label: n.category_label.clone(),
                    gloss: n.sense.gloss.clone(),
                    differentia: n.differentia.clone(),
                    visually_checkable: n.visually_checkable,
                    root_genus_term: n.root_genus_term.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("hierarchy serializes")
    }

    /// Content digest of the document this hierarchy was loaded from.
    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> &HierarchyNode {
        &self.nodes[self.root]
    }

    /// Nodes in document order.
    pub fn nodes(&self) -> impl Iterator<Item = &HierarchyNode> {
        self.nodes.iter()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn node(&self, id: &str) -> Result<&HierarchyNode, HierarchyError> {
        self.index
            .get(id)
            .map(|&i| &self.nodes[i])
            .ok_or_else(|| HierarchyError::UnknownNode(id.to_owned()))
    }

    /// Position of `id` in document order. Used to sort reports.
    pub fn document_position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    fn idx(&self, id: &str) -> Result<usize, HierarchyError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| HierarchyError::UnknownNode(id.to_owned()))
    }

    /// Children of `id`, sorted by ordinal.
    pub fn children(&self, id: &str) -> Result<Vec<&HierarchyNode>, HierarchyError> {
        let i = self.idx(id)?;
        Ok(self.children[i].iter().map(|&c| &self.nodes[c]).collect())
    }

    pub fn is_leaf(&self, id: &str) -> Result<bool, HierarchyError> {
        Ok(self.children[self.idx(id)?].is_empty())
    }

    /// Node ids on the path from the root down to `id`, both included.
    pub fn path_to(&self, id: &str) -> Result<Vec<&str>, HierarchyError> {
        let mut i = self.idx(id)?;
        let mut path = vec![self.nodes[i].node_id.as_str()];
        while let Some(p) = &self.nodes[i].parent {
            i = self.index[p];
            path.push(self.nodes[i].node_id.as_str());
        }
        path.reverse();
        Ok(path)
    }

    /// Number of nodes on the root path of `id`; the root has depth 1.
    pub fn depth(&self, id: &str) -> Result<usize, HierarchyError> {
        Ok(self.path_to(id)?.len())
    }

    /// Depth of the deepest node.
    pub fn height(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| self.depth(&n.node_id).unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// The recursive genus-differentia definition of `id`: the root's genus
    /// term followed by every differentia from the root down to `id`.
    pub fn reconstruct_definition(&self, id: &str) -> Result<Vec<String>, HierarchyError> {
        let path = self.path_to(id)?;
        let mut out = Vec::with_capacity(path.len() + 1);
        if let Some(g) = &self.root().root_genus_term {
            out.push(g.clone());
        }
        for p in path {
            out.push(self.nodes[self.index[p]].differentia.clone());
        }
        Ok(out)
    }

    pub fn relation(&self, a: &str, b: &str) -> Result<Relation, HierarchyError> {
        self.idx(a)?;
        self.idx(b)?;
        if a == b {
            return Ok(Relation::Equal);
        }
        if self.path_to(b)?.contains(&a) {
            return Ok(Relation::Ancestor);
        }
        if self.path_to(a)?.contains(&b) {
            return Ok(Relation::Descendant);
        }
        Ok(Relation::Unrelated)
    }

    /// Checks the semantic constraints that loading does not enforce.
    pub fn validate(&self) -> Vec<Diagnostic> {
        use DiagnosticCode as C;
        let mut out = Vec::new();

        let mut sense_owner: HashMap<&str, &str> = HashMap::new();
        for n in &self.nodes {
            let id = n.node_id.as_str();
            if n.sense.sense_id.trim().is_empty() {
                out.push(Diagnostic::new(
                    C::EmptySenseId,
                    Some(id),
                    "sense id is empty".into(),
                ));
            } else if let Some(first) = sense_owner.insert(&n.sense.sense_id, id) {
                out.push(Diagnostic::new(
                    C::DuplicateSenseId,
                    Some(id),
                    format!(
                        "sense id `{}` already used by node {first}",
                        n.sense.sense_id
                    ),
                ));
                sense_owner.insert(&n.sense.sense_id, first);
            }
            if n.differentia.trim().is_empty() {
                out.push(Diagnostic::new(
                    C::EmptyDifferentia,
                    Some(id),
                    "differentia is empty".into(),
                ));
            }
            if n.sense.synset.is_empty() {
                out.push(Diagnostic::new(
                    C::EmptySynset,
                    Some(id),
                    "synset has no lemmas".into(),
                ));
            } else {
                let mut seen = HashSet::new();
                for lemma in &n.sense.synset {
                    if !seen.insert(lemma.to_lowercase()) {
                        out.push(Diagnostic::new(
                            C::DuplicateLemma,
                            Some(id),
                            format!("lemma `{lemma}` repeats in synset"),
                        ));
                    }
                }
            }
            if n.parent.is_none()
                && n.root_genus_term
                    .as_deref()
                    .is_none_or(|g| g.trim().is_empty())
            {
                out.push(Diagnostic::new(
                    C::MissingRootGenus,
                    Some(id),
                    "root has no genus term".into(),
                ));
            }
            if !n.visually_checkable {
                out.push(Diagnostic::new(
                    C::NotVisuallyCheckable,
                    Some(id),
                    format!(
                        "differentia `{}` is not recognizable visually",
                        n.differentia
                    ),
                ));
            }
        }

        for kids in &self.children {
            let normalized: Vec<String> = kids
                .iter()
                .map(|&k| normalize_differentia(&self.nodes[k].differentia))
                .collect();
            for i in 0..kids.len() {
                for j in (i + 1)..kids.len() {
                    let (a, b) = (&self.nodes[kids[i]], &self.nodes[kids[j]]);
                    if normalized[i] == normalized[j] {
                        out.push(Diagnostic::new(
                            C::SiblingDifferentiaCollision,
                            Some(&b.node_id),
                            format!(
                                "differentia `{}` collides with sibling {}",
                                b.differentia, a.node_id
                            ),
                        ));
                    } else if is_negation_pair(&normalized[i], &normalized[j]) {
                        out.push(Diagnostic::new(
                            C::ParentEmptyingDifferentia,
                            Some(&a.node_id),
                            format!(
                                "siblings {} (`{}`) and {} (`{}`) negate each other and empty their parent",
                                a.node_id, a.differentia, b.node_id, b.differentia
                            ),
                        ));
                    }
                }
            }
        }
        out
    }

    /// True when validation reports no error-severity diagnostics.
    pub fn is_usable(&self) -> bool {
        !self.validate().iter().any(Diagnostic::is_error)
    }
}

fn document_digest(doc: &HierarchyDocument) -> String {
    let bytes = serde_json::to_vec(doc).expect("document serializes");
    let digest = Sha256::digest(&bytes);
    hex::encode(&digest[..8])
}

/// Lowercases, strips punctuation and collapses whitespace.
pub fn normalize_differentia(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect::<String>()
        .to_lowercase();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Positive readings of a normalized negative differentia.
fn positive_forms(d: &str) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(rest) = d.strip_prefix("with no ") {
        out.push(format!("with {rest}"));
        out.push(rest.to_owned());
    }
    if let Some(rest) = d.strip_prefix("without ") {
        out.push(format!("with {rest}"));
        out.push(rest.to_owned());
    }
    if let Some(rest) = d.strip_prefix("no ") {
        out.push(rest.to_owned());
    }
    out
}

fn is_negation_pair(a: &str, b: &str) -> bool {
    positive_forms(a).iter().any(|p| p == b) || positive_forms(b).iter().any(|p| p == a)
}

const CONNECTIVES: &[&str] = &["that", "which", "is", "played", "by"];

/// Splits a gloss into the span matching `genus_label` and the differentia
/// that follows it. Returns `None` when the label does not occur.
pub fn split_gloss(gloss: &str, genus_label: &str) -> Option<(String, String)> {
    if genus_label.is_empty() {
        return None;
    }
    let (start, end) = find_case_insensitive(gloss, genus_label)?;
    let genus = gloss[start..end].to_owned();
    let mut words: Vec<&str> = gloss[end..].split_whitespace().collect();
    let skip = words
        .iter()
        .take_while(|w| CONNECTIVES.contains(&w.to_lowercase().as_str()))
        .count();
    words.drain(..skip);
    Some((genus, words.join(" ")))
}

fn find_case_insensitive(haystack: &str, needle: &str) -> Option<(usize, usize)> {
    for (start, _) in haystack.char_indices() {
        let mut hay = haystack[start..].char_indices();
        let mut matched = true;
        let mut end = start;
        for nc in needle.chars() {
            match hay.next() {
                Some((off, hc)) if hc.to_lowercase().eq(nc.to_lowercase()) => {
                    end = start + off + hc.len_utf8();
                }
                _ => {
                    matched = false;
                    break;
                }
            }
        }
        if matched {
            return Some((start, end));
        }
    }
    None
}
