//! Guided, genus-differentia image annotation.
//!
//! A classificationist publishes a [`hierarchy`] of concepts, each defined
//! by its parent (the genus) plus a distinguishing property (the
//! differentia). Images are split into per-object tasks by
//! [`localization`]. Annotators then label each object through a
//! [`traversal`] session that only ever asks whether a differentia holds.
//! [`outcomes`] audits the resulting labels against gold, [`agreement`]
//! measures inter-annotator reliability, and [`campaign`] persists the whole
//! workflow behind a small HTTP service.

pub mod agreement;
pub mod campaign;
pub mod cli;
pub mod hierarchy;
pub mod localization;
pub mod outcomes;
pub mod record;
pub mod seed;
pub mod simulate;
pub mod traversal;

pub use agreement::{
    agreement_report, build_reliability, krippendorff_alpha, timing_stats, AgreementReport,
    ReliabilityMatrix, TimingStats,
};
pub use hierarchy::{Diagnostic, Hierarchy, HierarchyError, HierarchyNode, Relation};
pub use localization::{AnnotationTask, ImageRecord, LocalizationStrategy, ObjectRegion};
pub use outcomes::{classify_outcome, AnnotatorModel, GoldAssignment, OutcomeKind};
pub use record::AnnotationRecord;
pub use traversal::{
    AskAnswer, ClassificationSession, LabelingScheme, TerminalLabel, TraversalConfig,
};
