//! Synthetic campaigns: several simulated annotators labelling every gold
//! task, summarised with the same agreement and audit reports a real
//! campaign gets.

use serde::{Deserialize, Serialize};

use crate::agreement::{agreement_report_with, build_reliability, AgreementReport, AlphaOptions};
use crate::hierarchy::Hierarchy;
use crate::outcomes::{
    audit_report, simulate_label, AnnotatorModel, AuditReport, GoldAssignment, OutcomeError,
    SimulatedAnnotatorModel,
};
use crate::record::AnnotationRecord;
use crate::seed;

pub const SIMULATED_CAMPAIGN: &str = "simulation";

pub fn annotator_name(i: usize) -> String {
    format!("sim{:02}", i + 1)
}

/// One record per (annotator, gold task). Annotator `i` labels task `t`
/// with seed `derive(derive(seed, i), t)`, so adding annotators or tasks
/// leaves existing draws untouched.
pub fn simulate_records(
    h: &Hierarchy,
    golds: &[GoldAssignment],
    model: AnnotatorModel,
    annotators: usize,
    base_seed: u64,
) -> Result<Vec<AnnotationRecord>, OutcomeError> {
    model.validate()?;
    let mut out = Vec::with_capacity(golds.len() * annotators);
    for i in 0..annotators {
        let annotator = annotator_name(i);
        let annotator_seed = seed::derive(base_seed, i as u64);
        for g in golds {
            let sim =
                SimulatedAnnotatorModel::new(model, seed::derive_str(annotator_seed, &g.task_id));
            let result = simulate_label(h, &g.gold, &sim)?;
            out.push(AnnotationRecord {
                record_id: format!("{annotator}:{}", g.task_id),
                campaign_id: SIMULATED_CAMPAIGN.into(),
                task_id: g.task_id.clone(),
                annotator_id: annotator.clone(),
                result,
                answer_log: Vec::new(),
                started_at: 0,
                ended_at: None,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub model: AnnotatorModel,
    pub generator: String,
    pub seed: u64,
    pub annotators: usize,
    pub tasks: usize,
    /// `None` when alpha is undefined (fewer than two annotators or no tasks).
    pub agreement: Option<AgreementReport>,
    pub audit: AuditReport,
}

pub fn simulate_campaign(
    h: &Hierarchy,
    golds: &[GoldAssignment],
    model: AnnotatorModel,
    annotators: usize,
    base_seed: u64,
) -> Result<(Vec<AnnotationRecord>, SimulationReport), OutcomeError> {
    let records = simulate_records(h, golds, model, annotators, base_seed)?;
    let agreement = build_reliability(&records)
        .ok()
        .and_then(|m| agreement_report_with(&m, Some(h), AlphaOptions::default()).ok());
    let labels: Vec<_> = records
        .iter()
        .map(|r| (r.task_id.clone(), r.result.clone()))
        .collect();
    let audit = audit_report(h, &labels, golds)?;
    let report = SimulationReport {
        model,
        generator: seed::GENERATOR.into(),
        seed: base_seed,
        annotators,
        tasks: golds.len(),
        agreement,
        audit,
    };
    Ok((records, report))
}

/// `copies` gold tasks per hierarchy node, named `<node>#<k>`.
pub fn gold_per_node(h: &Hierarchy, copies: usize) -> Vec<GoldAssignment> {
    h.nodes()
        .flat_map(|n| {
            (0..copies).map(move |k| GoldAssignment {
                task_id: format!("{}#{k}", n.node_id),
                gold: crate::traversal::TerminalLabel::node(h, &n.node_id).expect("node exists"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outcomes::OutcomeKind;

    #[test]
    fn perfect_annotators_agree_fully() {
        let h = Hierarchy::musical_instruments();
        let golds = gold_per_node(&h, 2);
        let (records, report) =
            simulate_campaign(&h, &golds, AnnotatorModel::Perfect, 8, 1).unwrap();
        assert_eq!(records.len(), 8 * 18);
        assert_eq!(report.agreement.unwrap().alpha, 1.0);
        assert_eq!(report.audit.count(OutcomeKind::Correct), 8 * 18);
    }

    #[test]
    fn seeds_are_stable_under_growth() {
        let h = Hierarchy::musical_instruments();
        let golds = gold_per_node(&h, 1);
        let m = AnnotatorModel::Noisy { epsilon: 0.3 };
        let small = simulate_records(&h, &golds, m, 2, 5).unwrap();
        let large = simulate_records(&h, &golds, m, 4, 5).unwrap();
        assert_eq!(small[..], large[..small.len()]);
    }

    #[test]
    fn single_annotator_has_no_alpha() {
        let h = Hierarchy::musical_instruments();
        let (_, report) =
            simulate_campaign(&h, &gold_per_node(&h, 1), AnnotatorModel::Perfect, 1, 0).unwrap();
        assert!(report.agreement.is_none());
    }
}
