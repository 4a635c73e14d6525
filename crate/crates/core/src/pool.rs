//! Append-only, revisioned artifact store shared by the pipeline.

use std::collections::BTreeMap;

use archflow_puml::ViewKind;
use serde::{Deserialize, Serialize};

use crate::artifact::{
    AgentRole, Artifact, ArtifactKind, ArchitectureDocumentation, AtamReport, EvaluationBundle, InvariantViolation,
    MismatchReport, RequirementsDecomposition, Validate, ViewArtifact, ViewModelSet,
};
use crate::gateway::ChatExchange;

#[derive(Debug, thiserror::Error)]
pub enum PoolError {
    #[error(transparent)]
    Invariant(#[from] InvariantViolation),
    #[error("{kind} cannot be appended before {missing}")]
    MissingInput { kind: ArtifactKind, missing: ArtifactKind },
    #[error("{0} may not produce {1}")]
    WrongProducer(AgentRole, ArtifactKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub seq: u64,
    pub kind: ArtifactKind,
    pub producer: AgentRole,
    pub revision: u32,
    pub artifact: Artifact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub agent: AgentRole,
    pub task: String,
    pub exchange: ChatExchange,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoolRecord", into = "PoolRecord")]
pub struct ArtifactPool {
    entries: Vec<PoolEntry>,
    current: BTreeMap<ArtifactKind, usize>,
    transcript: Vec<TranscriptEntry>,
}

#[derive(Serialize, Deserialize)]
struct PoolRecord {
    entries: Vec<PoolEntry>,
    #[serde(default)]
    transcript: Vec<TranscriptEntry>,
}

impl From<PoolRecord> for ArtifactPool {
    fn from(r: PoolRecord) -> Self {
        let current = r.entries.iter().enumerate().map(|(i, e)| (e.kind, i)).collect();
        ArtifactPool { entries: r.entries, current, transcript: r.transcript }
    }
}

impl From<ArtifactPool> for PoolRecord {
    fn from(p: ArtifactPool) -> Self {
        PoolRecord { entries: p.entries, transcript: p.transcript }
    }
}

fn expected_producer(kind: ArtifactKind) -> AgentRole {
    match kind {
        ArtifactKind::Decomposition => AgentRole::Analyst,
        ArtifactKind::View(_) => AgentRole::Modeler,
        ArtifactKind::Documentation => AgentRole::Designer,
        ArtifactKind::AtamReport | ArtifactKind::MismatchReport => AgentRole::Evaluator,
    }
}

impl ArtifactPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Revision the next artifact of `kind` will receive.
    pub fn next_revision(&self, kind: ArtifactKind) -> u32 {
        self.current(kind).map_or(1, |e| e.revision + 1)
    }

    /// Validates and stores `artifact`, returning its sequence number.
    pub fn append(&mut self, artifact: Artifact, producer: AgentRole) -> Result<u64, PoolError> {
        let kind = artifact.kind();
        if expected_producer(kind) != producer {
            return Err(PoolError::WrongProducer(producer, kind));
        }
        artifact.validate()?;
        if let Artifact::MismatchReport(report) = &artifact {
            let decomposition = self.decomposition().ok_or(PoolError::MissingInput {
                kind,
                missing: ArtifactKind::Decomposition,
            })?;
            report.validate_against(decomposition)?;
        }
        let seq = self.entries.len() as u64 + 1;
        let revision = self.next_revision(kind);
        self.entries.push(PoolEntry { seq, kind, producer, revision, artifact });
        self.current.insert(kind, self.entries.len() - 1);
        Ok(seq)
    }

    pub fn current(&self, kind: ArtifactKind) -> Option<&PoolEntry> {
        self.current.get(&kind).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    /// Every revision of `kind`, oldest first.
    pub fn history(&self, kind: ArtifactKind) -> impl Iterator<Item = &PoolEntry> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }

    pub fn decomposition(&self) -> Option<&RequirementsDecomposition> {
        match &self.current(ArtifactKind::Decomposition)?.artifact {
            Artifact::Decomposition(d) => Some(d),
            _ => None,
        }
    }

    pub fn view(&self, view: ViewKind) -> Option<&ViewArtifact> {
        match &self.current(ArtifactKind::View(view))?.artifact {
            Artifact::View(v) => Some(v),
            _ => None,
        }
    }

    /// Current revision of all five views, if every view exists.
    pub fn views(&self) -> Option<ViewModelSet> {
        let mut set = ViewModelSet::default();
        for v in ViewKind::ALL {
            *set.slot_mut(v) = self.view(v)?.diagrams.clone();
        }
        Some(set)
    }

    pub fn documentation(&self) -> Option<&ArchitectureDocumentation> {
        match &self.current(ArtifactKind::Documentation)?.artifact {
            Artifact::Documentation(d) => Some(d),
            _ => None,
        }
    }

    pub fn atam_report(&self) -> Option<&AtamReport> {
        match &self.current(ArtifactKind::AtamReport)?.artifact {
            Artifact::AtamReport(a) => Some(a),
            _ => None,
        }
    }

    pub fn mismatch_report(&self) -> Option<&MismatchReport> {
        match &self.current(ArtifactKind::MismatchReport)?.artifact {
            Artifact::MismatchReport(m) => Some(m),
            _ => None,
        }
    }

    pub fn evaluation(&self) -> Option<EvaluationBundle> {
        Some(EvaluationBundle::new(self.atam_report()?, self.mismatch_report()?))
    }

    pub fn record_exchange(&mut self, agent: AgentRole, task: impl Into<String>, exchange: ChatExchange) {
        self.transcript.push(TranscriptEntry { agent, task: task.into(), exchange });
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::*;

    fn decomposition() -> RequirementsDecomposition {
        RequirementsDecomposition {
            functional: vec![RequirementItem {
                id: RequirementId::new(RequirementCategory::Functional, 1),
                category: RequirementCategory::Functional,
                text: "play".into(),
                source_span: None,
                quality_attributes: vec![],
                group: None,
            }],
            non_functional: vec![],
            asrs: vec![],
            design_constraints: vec![],
            srs_digest: String::new(),
        }
    }

    fn report(n: u64, total: u64, cite: &str) -> MismatchReport {
        MismatchReport {
            mismatches: (0..n)
                .map(|i| MismatchEntry {
                    id: format!("M-{i}"),
                    description: "d".into(),
                    impact: "i".into(),
                    recommendation: "r".into(),
                    suspected_owner: AgentRole::Modeler,
                    related_requirement_ids: vec![cite.parse().unwrap()],
                })
                .collect(),
            mismatch_rate: MismatchRate::new(n, total).unwrap(),
            denominator_policy: DenominatorPolicy::default(),
            traceability: TraceabilityMatrix::default(),
            consistency: vec![],
        }
    }

    #[test]
    fn revisions_increase_per_kind() {
        let mut pool = ArtifactPool::new();
        assert_eq!(pool.next_revision(ArtifactKind::Decomposition), 1);
        pool.append(Artifact::Decomposition(decomposition()), AgentRole::Analyst).unwrap();
        pool.append(Artifact::Decomposition(decomposition()), AgentRole::Analyst).unwrap();
        assert_eq!(pool.current(ArtifactKind::Decomposition).unwrap().revision, 2);
        assert_eq!(pool.history(ArtifactKind::Decomposition).count(), 2);
        assert_eq!(pool.next_revision(ArtifactKind::Documentation), 1);
    }

    #[test]
    fn mismatch_reports_are_checked_against_the_decomposition() {
        let mut pool = ArtifactPool::new();
        let err = pool.append(Artifact::MismatchReport(report(1, 1, "FR-001")), AgentRole::Evaluator);
        assert!(matches!(err, Err(PoolError::MissingInput { .. })));
        pool.append(Artifact::Decomposition(decomposition()), AgentRole::Analyst).unwrap();
        assert!(pool.append(Artifact::MismatchReport(report(1, 1, "FR-002")), AgentRole::Evaluator).is_err());
        assert!(pool.append(Artifact::MismatchReport(report(1, 5, "FR-001")), AgentRole::Evaluator).is_err());
        pool.append(Artifact::MismatchReport(report(1, 1, "FR-001")), AgentRole::Evaluator).unwrap();
    }

    #[test]
    fn producers_are_enforced_and_failures_leave_no_trace() {
        let mut pool = ArtifactPool::new();
        assert!(matches!(
            pool.append(Artifact::Decomposition(decomposition()), AgentRole::Designer),
            Err(PoolError::WrongProducer(..))
        ));
        let mut bad = decomposition();
        bad.functional[0].text.clear();
        assert!(pool.append(Artifact::Decomposition(bad), AgentRole::Analyst).is_err());
        assert!(pool.entries().is_empty());
    }

    #[test]
    fn serde_round_trip_rebuilds_the_index() {
        let mut pool = ArtifactPool::new();
        pool.append(Artifact::Decomposition(decomposition()), AgentRole::Analyst).unwrap();
        let json = serde_json::to_string(&pool).unwrap();
        let back: ArtifactPool = serde_json::from_str(&json).unwrap();
        assert_eq!(back, pool);
        assert!(back.decomposition().is_some());
    }
}
