//! Cross-diagram consistency rules over parsed entity graphs.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::graph::{EntityGraph, EntityKind};
use crate::kind::DiagramKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyRule {
    /// A sequence participant has no class or component counterpart.
    ParticipantWithoutStructure,
    /// A component deployed in the deployment diagram is absent from the
    /// component diagram.
    DeployedComponentUnknown,
    /// A use-case actor never takes part in any behavioral diagram.
    ActorWithoutBehavior,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConsistencyFinding {
    pub rule: ConsistencyRule,
    /// Diagram the orphan entity was found in.
    pub subject: DiagramKind,
    /// Diagrams searched for a counterpart.
    pub reference: Vec<DiagramKind>,
    pub entity: String,
}

pub const BEHAVIORAL_KINDS: [DiagramKind; 4] = [
    DiagramKind::ActivityDiagram,
    DiagramKind::SequenceDiagram,
    DiagramKind::CollaborationDiagram,
    DiagramKind::StateDiagram,
];

fn keys_of(graphs: &BTreeMap<DiagramKind, EntityGraph>, kinds: &[DiagramKind]) -> HashSet<String> {
    kinds
        .iter()
        .filter_map(|k| graphs.get(k))
        .flat_map(|g| g.entities.iter())
        .flat_map(|e| e.match_keys())
        .collect()
}

fn orphans(
    graphs: &BTreeMap<DiagramKind, EntityGraph>,
    rule: ConsistencyRule,
    subject: DiagramKind,
    subject_kinds: &[EntityKind],
    reference: &[DiagramKind],
) -> Vec<ConsistencyFinding> {
    let Some(graph) = graphs.get(&subject) else {
        return Vec::new();
    };
    let known = keys_of(graphs, reference);
    graph
        .entities
        .iter()
        .filter(|e| subject_kinds.contains(&e.kind))
        .filter(|e| !e.match_keys().any(|k| known.contains(&k)))
        .map(|e| ConsistencyFinding {
            rule,
            subject,
            reference: reference.to_vec(),
            entity: e.display_name().to_string(),
        })
        .collect()
}

/// Runs the three cross-view rules. Missing diagrams contribute no
/// entities. Findings are sorted by rule, then entity name.
pub fn check_consistency(graphs: &BTreeMap<DiagramKind, EntityGraph>) -> Vec<ConsistencyFinding> {
    let mut findings = orphans(
        graphs,
        ConsistencyRule::ParticipantWithoutStructure,
        DiagramKind::SequenceDiagram,
        &[EntityKind::Participant],
        &[DiagramKind::ClassDiagram, DiagramKind::ComponentDiagram],
    );
    findings.extend(orphans(
        graphs,
        ConsistencyRule::DeployedComponentUnknown,
        DiagramKind::DeploymentDiagram,
        &[EntityKind::Component],
        &[DiagramKind::ComponentDiagram],
    ));
    findings.extend(orphans(
        graphs,
        ConsistencyRule::ActorWithoutBehavior,
        DiagramKind::UseCaseDiagram,
        &[EntityKind::Actor],
        &BEHAVIORAL_KINDS,
    ));
    findings.sort();
    findings.dedup();
    findings
}
