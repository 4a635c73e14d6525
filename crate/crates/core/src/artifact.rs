//! Typed artifacts exchanged between agents through the pool.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use archflow_puml::{ConsistencyFinding, DiagramKind, EntityGraph, ValidationError, ViewKind};
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invariant violated: {0}")]
pub struct InvariantViolation(pub String);

fn violation(msg: impl Into<String>) -> InvariantViolation {
    InvariantViolation(msg.into())
}

pub trait Validate {
    fn validate(&self) -> Result<(), InvariantViolation>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Analyst,
    Modeler,
    Designer,
    Evaluator,
}

impl AgentRole {
    pub fn name(self) -> &'static str {
        match self {
            AgentRole::Analyst => "analyst",
            AgentRole::Modeler => "modeler",
            AgentRole::Designer => "designer",
            AgentRole::Evaluator => "evaluator",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentRole {
    type Err = InvariantViolation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "analyst" => Ok(AgentRole::Analyst),
            "modeler" | "modeller" => Ok(AgentRole::Modeler),
            "designer" => Ok(AgentRole::Designer),
            "evaluator" => Ok(AgentRole::Evaluator),
            other => Err(violation(format!("unknown agent `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RequirementCategory {
    Functional,
    NonFunctional,
    ArchitecturallySignificant,
    DesignConstraint,
}

impl RequirementCategory {
    pub const ALL: [RequirementCategory; 4] = [
        RequirementCategory::Functional,
        RequirementCategory::NonFunctional,
        RequirementCategory::ArchitecturallySignificant,
        RequirementCategory::DesignConstraint,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            RequirementCategory::Functional => "FR",
            RequirementCategory::NonFunctional => "NFR",
            RequirementCategory::ArchitecturallySignificant => "ASR",
            RequirementCategory::DesignConstraint => "DC",
        }
    }

    pub fn from_prefix(prefix: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.prefix().eq_ignore_ascii_case(prefix))
    }
}

static ID_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(FR|NFR|ASR|DC)-(\d{3,})$").expect("id regex"));

/// Stable requirement identifier such as `FR-003`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RequirementId(String);

impl RequirementId {
    pub fn new(category: RequirementCategory, ordinal: usize) -> Self {
        RequirementId(format!("{}-{ordinal:03}", category.prefix()))
    }

    pub fn category(&self) -> RequirementCategory {
        let prefix = self.0.split('-').next().unwrap_or_default();
        RequirementCategory::from_prefix(prefix).expect("validated at construction")
    }

    pub fn ordinal(&self) -> usize {
        self.0.rsplit('-').next().and_then(|n| n.parse().ok()).unwrap_or(0)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Canonical form of a loosely written id (`fr-3` becomes `FR-003`).
    pub fn normalize(raw: &str) -> Option<Self> {
        let (prefix, num) = raw.trim().split_once('-')?;
        let category = RequirementCategory::from_prefix(prefix)?;
        let n: usize = num.trim().parse().ok()?;
        Some(RequirementId::new(category, n))
    }
}

impl TryFrom<String> for RequirementId {
    type Error = InvariantViolation;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        if ID_RE.is_match(&value) {
            Ok(RequirementId(value))
        } else {
            Err(violation(format!("`{value}` is not a requirement id (<CAT>-<nnn>)")))
        }
    }
}

impl FromStr for RequirementId {
    type Err = InvariantViolation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RequirementId::try_from(s.to_string())
    }
}

impl From<RequirementId> for String {
    fn from(id: RequirementId) -> String {
        id.0
    }
}

impl fmt::Display for RequirementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Character range `[start, end)` into the SRS text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementItem {
    pub id: RequirementId,
    pub category: RequirementCategory,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_span: Option<SourceSpan>,
    #[serde(default)]
    pub quality_attributes: Vec<String>,
    /// Grouping label assigned by the analyst (functional area).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl Validate for RequirementItem {
    fn validate(&self) -> Result<(), InvariantViolation> {
        if self.id.category() != self.category {
            return Err(violation(format!("{} is filed as {:?}", self.id, self.category)));
        }
        if self.text.trim().is_empty() {
            return Err(violation(format!("{} has empty text", self.id)));
        }
        if let Some(span) = self.source_span {
            if span.start > span.end {
                return Err(violation(format!("{} has an inverted source span", self.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsrRecord {
    #[serde(flatten)]
    pub base: RequirementItem,
    pub architectural_impact: String,
    #[serde(default)]
    pub related_components: Vec<String>,
}

impl Validate for AsrRecord {
    fn validate(&self) -> Result<(), InvariantViolation> {
        self.base.validate()?;
        if self.base.category != RequirementCategory::ArchitecturallySignificant {
            return Err(violation(format!("{} is not architecturally significant", self.base.id)));
        }
        if self.base.quality_attributes.iter().all(|q| q.trim().is_empty()) {
            return Err(violation(format!("{} has no quality attribute", self.base.id)));
        }
        Ok(())
    }
}

/// Which requirements count toward the mismatch-rate denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorPolicy {
    /// Functional plus non-functional requirements.
    #[default]
    FunctionalAndNonFunctional,
    /// All four requirement lists.
    AllRequirements,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementsDecomposition {
    pub functional: Vec<RequirementItem>,
    pub non_functional: Vec<RequirementItem>,
    pub asrs: Vec<AsrRecord>,
    pub design_constraints: Vec<RequirementItem>,
    pub srs_digest: String,
}

impl RequirementsDecomposition {
    /// |FR| + |NFR|.
    pub fn total_countable(&self) -> usize {
        self.functional.len() + self.non_functional.len()
    }

    pub fn countable(&self, policy: DenominatorPolicy) -> usize {
        match policy {
            DenominatorPolicy::FunctionalAndNonFunctional => self.total_countable(),
            DenominatorPolicy::AllRequirements => {
                self.total_countable() + self.asrs.len() + self.design_constraints.len()
            }
        }
    }

    pub fn items(&self) -> impl Iterator<Item = &RequirementItem> {
        self.functional
            .iter()
            .chain(&self.non_functional)
            .chain(self.asrs.iter().map(|a| &a.base))
            .chain(&self.design_constraints)
    }

    pub fn ids(&self) -> BTreeSet<RequirementId> {
        self.items().map(|i| i.id.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.items().next().is_none()
    }

    /// Distinct functional groups, in first-seen order.
    pub fn functional_groups(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for g in self.functional.iter().filter_map(|i| i.group.as_deref()) {
            if !seen.contains(&g) {
                seen.push(g);
            }
        }
        seen
    }
}

impl Validate for RequirementsDecomposition {
    fn validate(&self) -> Result<(), InvariantViolation> {
        let lists: [(&str, RequirementCategory, Vec<&RequirementItem>); 4] = [
            ("functional", RequirementCategory::Functional, self.functional.iter().collect()),
            ("non_functional", RequirementCategory::NonFunctional, self.non_functional.iter().collect()),
            ("asrs", RequirementCategory::ArchitecturallySignificant, self.asrs.iter().map(|a| &a.base).collect()),
            ("design_constraints", RequirementCategory::DesignConstraint, self.design_constraints.iter().collect()),
        ];
        for (name, category, items) in &lists {
            for item in items {
                item.validate()?;
                if item.category != *category {
                    return Err(violation(format!("{} appears in the {name} list", item.id)));
                }
            }
        }
        for asr in &self.asrs {
            asr.validate()?;
        }
        let mut seen = HashSet::new();
        for item in self.items() {
            if !seen.insert(&item.id) {
                return Err(violation(format!("duplicate requirement id {}", item.id)));
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ParseResult {
    Valid { graph: EntityGraph },
    Invalid { errors: Vec<ValidationError> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagram {
    pub kind: DiagramKind,
    pub source: String,
    pub parse_result: ParseResult,
    pub revision: u32,
}

impl Diagram {
    /// Parses `source` and records the outcome.
    pub fn parsed(kind: DiagramKind, source: impl Into<String>, revision: u32) -> Self {
        let source = source.into();
        let parse_result = match archflow_puml::parse(&source, kind) {
            Ok(graph) => ParseResult::Valid { graph },
            Err(errors) => ParseResult::Invalid { errors },
        };
        Diagram { kind, source, parse_result, revision }
    }

    pub fn graph(&self) -> Option<&EntityGraph> {
        match &self.parse_result {
            ParseResult::Valid { graph } => Some(graph),
            ParseResult::Invalid { .. } => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.graph().is_some()
    }
}

impl Validate for Diagram {
    fn validate(&self) -> Result<(), InvariantViolation> {
        if self.revision == 0 {
            return Err(violation(format!("{} has revision 0", self.kind)));
        }
        let trimmed = self.source.trim();
        if !trimmed.to_ascii_lowercase().starts_with("@startuml") || !trimmed.to_ascii_lowercase().ends_with("@enduml") {
            return Err(violation(format!("{} source is not delimited by @startuml/@enduml", self.kind)));
        }
        Ok(())
    }
}

/// The diagrams of one architecture view, as produced by one modeler call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewArtifact {
    pub view: ViewKind,
    pub diagrams: Vec<Diagram>,
}

impl Validate for ViewArtifact {
    fn validate(&self) -> Result<(), InvariantViolation> {
        let expected: BTreeSet<_> = self.view.diagram_kinds().iter().copied().collect();
        let mut got = BTreeSet::new();
        for d in &self.diagrams {
            d.validate()?;
            if d.kind.view() != self.view {
                return Err(violation(format!("{} does not belong to the {} view", d.kind, self.view)));
            }
            if !got.insert(d.kind) {
                return Err(violation(format!("{} appears twice in the {} view", d.kind, self.view)));
            }
        }
        if got != expected {
            let missing: Vec<_> = expected.difference(&got).map(|k| k.title()).collect();
            return Err(violation(format!("{} view is missing {}", self.view, missing.join(", "))));
        }
        Ok(())
    }
}

/// The five views together.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewModelSet {
    pub logical: Vec<Diagram>,
    pub development: Vec<Diagram>,
    pub process: Vec<Diagram>,
    pub physical: Vec<Diagram>,
    pub scenario: Vec<Diagram>,
}

impl ViewModelSet {
    pub fn slot(&self, view: ViewKind) -> &Vec<Diagram> {
        match view {
            ViewKind::Logical => &self.logical,
            ViewKind::Development => &self.development,
            ViewKind::Process => &self.process,
            ViewKind::Physical => &self.physical,
            ViewKind::Scenario => &self.scenario,
        }
    }

    pub fn slot_mut(&mut self, view: ViewKind) -> &mut Vec<Diagram> {
        match view {
            ViewKind::Logical => &mut self.logical,
            ViewKind::Development => &mut self.development,
            ViewKind::Process => &mut self.process,
            ViewKind::Physical => &mut self.physical,
            ViewKind::Scenario => &mut self.scenario,
        }
    }

    pub fn diagrams(&self) -> impl Iterator<Item = &Diagram> {
        ViewKind::ALL.into_iter().flat_map(|v| self.slot(v).iter())
    }

    pub fn get(&self, kind: DiagramKind) -> Option<&Diagram> {
        self.slot(kind.view()).iter().find(|d| d.kind == kind)
    }

    pub fn view_artifact(&self, view: ViewKind) -> ViewArtifact {
        ViewArtifact { view, diagrams: self.slot(view).clone() }
    }

    /// All eleven kinds present exactly once.
    pub fn is_complete(&self) -> bool {
        let kinds: Vec<_> = self.diagrams().map(|d| d.kind).collect();
        let unique: BTreeSet<_> = kinds.iter().copied().collect();
        kinds.len() == DiagramKind::ALL.len() && unique.len() == DiagramKind::ALL.len()
    }

    /// Entity graphs of every parse-valid diagram.
    pub fn graphs(&self) -> BTreeMap<DiagramKind, EntityGraph> {
        self.diagrams()
            .filter_map(|d| d.graph().map(|g| (d.kind, g.clone())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("precondition violated: {} is not parse-valid", kinds.iter().map(|k| k.title()).collect::<Vec<_>>().join(", "))]
pub struct PreconditionViolated {
    pub kinds: Vec<DiagramKind>,
}

/// Cross-view consistency findings over a set of parse-valid diagrams.
pub fn cross_view_check(views: &ViewModelSet) -> Result<Vec<ConsistencyFinding>, PreconditionViolated> {
    let invalid: Vec<DiagramKind> = views.diagrams().filter(|d| !d.is_valid()).map(|d| d.kind).collect();
    if !invalid.is_empty() {
        return Err(PreconditionViolated { kinds: invalid });
    }
    Ok(archflow_puml::check_consistency(&views.graphs()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonFile {
    pub path: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrototypeSkeleton {
    pub text: String,
    #[serde(default)]
    pub files: Vec<SkeletonFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureDocumentation {
    pub goals: String,
    pub detailed_design: String,
    pub component_connector_specs: String,
    pub key_technologies: String,
    pub design_decisions: String,
    pub decision_rationale: String,
    pub prototype_skeleton: PrototypeSkeleton,
}

/// Section identifiers and headings in document order.
pub const DOCUMENTATION_SECTIONS: [(&str, &str); 7] = [
    ("goals", "Goals"),
    ("detailed_design", "Detailed Architecture Design"),
    ("component_connector_specs", "Component & Connector Specifications"),
    ("key_technologies", "Key Technologies"),
    ("design_decisions", "Design Decisions"),
    ("decision_rationale", "Design Decision Rationale"),
    ("prototype_skeleton", "Executable Prototype Skeleton"),
];

impl ArchitectureDocumentation {
    pub fn sections(&self) -> [(&'static str, &str); 7] {
        [
            ("goals", &self.goals),
            ("detailed_design", &self.detailed_design),
            ("component_connector_specs", &self.component_connector_specs),
            ("key_technologies", &self.key_technologies),
            ("design_decisions", &self.design_decisions),
            ("decision_rationale", &self.decision_rationale),
            ("prototype_skeleton", &self.prototype_skeleton.text),
        ]
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Architecture Documentation\n");
        for ((_, heading), (_, body)) in DOCUMENTATION_SECTIONS.iter().zip(self.sections()) {
            out.push_str(&format!("\n## {heading}\n\n{}\n", body.trim_end()));
        }
        if !self.prototype_skeleton.files.is_empty() {
            out.push_str("\n### Scaffold files\n\n");
            for f in &self.prototype_skeleton.files {
                out.push_str(&format!("- `skeleton/{}`\n", f.path));
            }
        }
        out
    }
}

/// Scaffold paths must stay inside the bundle's skeleton directory.
pub fn is_safe_relative_path(path: &str) -> bool {
    !path.is_empty()
        && !path.starts_with('/')
        && !path.contains('\\')
        && !path.contains(':')
        && path.split('/').all(|c| !c.is_empty() && c != "." && c != "..")
}

impl Validate for ArchitectureDocumentation {
    fn validate(&self) -> Result<(), InvariantViolation> {
        for (name, body) in self.sections() {
            if body.trim().is_empty() {
                return Err(violation(format!("documentation section `{name}` is empty")));
            }
        }
        for f in &self.prototype_skeleton.files {
            if !is_safe_relative_path(&f.path) {
                return Err(violation(format!("scaffold path `{}` escapes the skeleton directory", f.path)));
            }
        }
        Ok(())
    }
}

pub const ATAM_HEADINGS: [&str; 4] = ["Scenarios", "Risks", "Sensitivity Points", "Trade-offs"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtamReport {
    pub text: String,
    /// Body under each required heading, keyed by the canonical heading.
    pub sections: BTreeMap<String, String>,
}

impl Validate for AtamReport {
    fn validate(&self) -> Result<(), InvariantViolation> {
        for h in ATAM_HEADINGS {
            if !self.sections.contains_key(h) {
                return Err(violation(format!("ATAM report lacks the `{h}` heading")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MismatchEntry {
    pub id: String,
    pub description: String,
    pub impact: String,
    pub recommendation: String,
    pub suspected_owner: AgentRole,
    #[serde(default)]
    pub related_requirement_ids: Vec<RequirementId>,
}

/// Exact mismatch rate, kept as a fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MismatchRate {
    pub mismatches: u64,
    pub total: u64,
}

impl MismatchRate {
    pub fn new(mismatches: u64, total: u64) -> Option<Self> {
        (total > 0).then_some(MismatchRate { mismatches, total })
    }

    pub fn as_f64(self) -> f64 {
        self.mismatches as f64 / self.total as f64
    }

    /// Rounded half-up to three decimals, computed in integers.
    pub fn render(self) -> String {
        let thousandths = (2 * 1000 * self.mismatches as u128 + self.total as u128) / (2 * self.total as u128);
        format!("{}.{:03}", thousandths / 1000, thousandths % 1000)
    }

    /// Strict rational comparison.
    pub fn lt(self, other: MismatchRate) -> bool {
        (self.mismatches as u128) * (other.total as u128) < (other.mismatches as u128) * (self.total as u128)
    }

    pub fn exceeds(self, threshold: f64) -> bool {
        self.as_f64() > threshold
    }
}

impl fmt::Display for MismatchRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {} = {}", self.mismatches, self.total, self.render())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLink {
    /// Artifact path inside the run bundle, e.g. `views/process/sequence`.
    pub artifact: String,
    pub element: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceabilityMatrix {
    pub rows: BTreeMap<RequirementId, Vec<TraceLink>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub mismatches: Vec<MismatchEntry>,
    pub mismatch_rate: MismatchRate,
    pub denominator_policy: DenominatorPolicy,
    pub traceability: TraceabilityMatrix,
    #[serde(default)]
    pub consistency: Vec<ConsistencyFinding>,
}

impl Validate for MismatchReport {
    fn validate(&self) -> Result<(), InvariantViolation> {
        if self.mismatch_rate.mismatches != self.mismatches.len() as u64 {
            return Err(violation(format!(
                "stored rate counts {} mismatches but the report lists {}",
                self.mismatch_rate.mismatches,
                self.mismatches.len()
            )));
        }
        if self.mismatch_rate.total == 0 {
            return Err(violation("mismatch rate has a zero denominator"));
        }
        let mut ids = HashSet::new();
        for m in &self.mismatches {
            if !ids.insert(&m.id) {
                return Err(violation(format!("duplicate mismatch id {}", m.id)));
            }
            if m.suspected_owner == AgentRole::Evaluator {
                return Err(violation(format!("{} is routed to the evaluator", m.id)));
            }
        }
        Ok(())
    }
}

impl MismatchReport {
    /// Cross-artifact checks against the decomposition the report was built from.
    pub fn validate_against(&self, decomposition: &RequirementsDecomposition) -> Result<(), InvariantViolation> {
        self.validate()?;
        let ids = decomposition.ids();
        for m in &self.mismatches {
            if let Some(bad) = m.related_requirement_ids.iter().find(|r| !ids.contains(*r)) {
                return Err(violation(format!("{} cites unknown requirement {bad}", m.id)));
            }
        }
        let expected = decomposition.countable(self.denominator_policy) as u64;
        if self.mismatch_rate.total != expected {
            return Err(violation(format!(
                "rate denominator {} differs from the decomposition's {expected}",
                self.mismatch_rate.total
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationBundle {
    pub atam_report: AtamReport,
    pub mismatches: Vec<MismatchEntry>,
    pub mismatch_rate: MismatchRate,
    pub traceability: TraceabilityMatrix,
}

impl EvaluationBundle {
    pub fn new(atam: &AtamReport, report: &MismatchReport) -> Self {
        EvaluationBundle {
            atam_report: atam.clone(),
            mismatches: report.mismatches.clone(),
            mismatch_rate: report.mismatch_rate,
            traceability: report.traceability.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArtifactKind {
    Decomposition,
    View(ViewKind),
    Documentation,
    AtamReport,
    MismatchReport,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 9] = [
        ArtifactKind::Decomposition,
        ArtifactKind::View(ViewKind::Logical),
        ArtifactKind::View(ViewKind::Development),
        ArtifactKind::View(ViewKind::Process),
        ArtifactKind::View(ViewKind::Physical),
        ArtifactKind::View(ViewKind::Scenario),
        ArtifactKind::Documentation,
        ArtifactKind::AtamReport,
        ArtifactKind::MismatchReport,
    ];
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArtifactKind::Decomposition => f.write_str("decomposition"),
            ArtifactKind::View(v) => write!(f, "view:{v}"),
            ArtifactKind::Documentation => f.write_str("documentation"),
            ArtifactKind::AtamReport => f.write_str("atam_report"),
            ArtifactKind::MismatchReport => f.write_str("mismatch_report"),
        }
    }
}

impl FromStr for ArtifactKind {
    type Err = InvariantViolation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decomposition" => Ok(ArtifactKind::Decomposition),
            "documentation" => Ok(ArtifactKind::Documentation),
            "atam_report" => Ok(ArtifactKind::AtamReport),
            "mismatch_report" => Ok(ArtifactKind::MismatchReport),
            other => other
                .strip_prefix("view:")
                .and_then(|v| v.parse().ok())
                .map(ArtifactKind::View)
                .ok_or_else(|| violation(format!("unknown artifact kind `{other}`"))),
        }
    }
}

impl Serialize for ArtifactKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ArtifactKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Artifact {
    Decomposition(RequirementsDecomposition),
    View(ViewArtifact),
    Documentation(ArchitectureDocumentation),
    AtamReport(AtamReport),
    MismatchReport(MismatchReport),
}

impl Artifact {
    pub fn kind(&self) -> ArtifactKind {
        match self {
            Artifact::Decomposition(_) => ArtifactKind::Decomposition,
            Artifact::View(v) => ArtifactKind::View(v.view),
            Artifact::Documentation(_) => ArtifactKind::Documentation,
            Artifact::AtamReport(_) => ArtifactKind::AtamReport,
            Artifact::MismatchReport(_) => ArtifactKind::MismatchReport,
        }
    }
}

impl Validate for Artifact {
    fn validate(&self) -> Result<(), InvariantViolation> {
        match self {
            Artifact::Decomposition(d) => d.validate(),
            Artifact::View(v) => v.validate(),
            Artifact::Documentation(d) => d.validate(),
            Artifact::AtamReport(a) => a.validate(),
            Artifact::MismatchReport(m) => m.validate(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(cat: RequirementCategory, n: usize) -> RequirementItem {
        RequirementItem {
            id: RequirementId::new(cat, n),
            category: cat,
            text: format!("requirement {n}"),
            source_span: None,
            quality_attributes: vec![],
            group: None,
        }
    }

    #[test]
    fn ids_are_zero_padded_and_checked() {
        assert_eq!(RequirementId::new(RequirementCategory::Functional, 3).as_str(), "FR-003");
        assert_eq!(RequirementId::new(RequirementCategory::NonFunctional, 1234).as_str(), "NFR-1234");
        assert!("FR-3".parse::<RequirementId>().is_err());
        assert!("XR-003".parse::<RequirementId>().is_err());
        assert_eq!(RequirementId::normalize("asr-7").unwrap().as_str(), "ASR-007");
        assert_eq!("DC-010".parse::<RequirementId>().unwrap().category(), RequirementCategory::DesignConstraint);
        assert!(serde_json::from_str::<RequirementId>("\"FR-01\"").is_err());
    }

    #[test]
    fn rate_rendering_rounds_half_up() {
        assert_eq!(MismatchRate::new(6, 32).unwrap().render(), "0.188");
        assert_eq!(MismatchRate::new(10, 32).unwrap().render(), "0.313");
        assert_eq!(MismatchRate::new(0, 32).unwrap().render(), "0.000");
        assert_eq!(MismatchRate::new(32, 32).unwrap().render(), "1.000");
        assert_eq!(MismatchRate::new(1, 3).unwrap().render(), "0.333");
        assert_eq!(MismatchRate::new(2, 3).unwrap().render(), "0.667");
        assert_eq!(MismatchRate::new(1, 8).unwrap().render(), "0.125");
        assert_eq!(MismatchRate::new(1, 16).unwrap().render(), "0.063");
        assert!(MismatchRate::new(1, 0).is_none());
        assert_eq!(MismatchRate::new(6, 32).unwrap().as_f64(), 0.1875);
        assert_eq!(MismatchRate::new(6, 32).unwrap().to_string(), "6 / 32 = 0.188");
    }

    #[test]
    fn rate_comparison_is_exact() {
        let a = MismatchRate::new(1, 3).unwrap();
        let b = MismatchRate::new(2, 6).unwrap();
        assert!(!a.lt(b) && !b.lt(a));
        assert!(MismatchRate::new(0, 5).unwrap().lt(a));
    }

    #[test]
    fn decomposition_invariants() {
        let mut d = RequirementsDecomposition {
            functional: vec![item(RequirementCategory::Functional, 1), item(RequirementCategory::Functional, 2)],
            non_functional: vec![item(RequirementCategory::NonFunctional, 1)],
            asrs: vec![AsrRecord {
                base: RequirementItem {
                    quality_attributes: vec!["Performance".into()],
                    ..item(RequirementCategory::ArchitecturallySignificant, 1)
                },
                architectural_impact: "cache".into(),
                related_components: vec![],
            }],
            design_constraints: vec![item(RequirementCategory::DesignConstraint, 1)],
            srs_digest: sha256_hex(b"srs"),
        };
        d.validate().unwrap();
        assert_eq!(d.total_countable(), 3);
        assert_eq!(d.countable(DenominatorPolicy::AllRequirements), 5);

        d.asrs[0].base.quality_attributes.clear();
        assert!(d.validate().is_err());
        d.asrs[0].base.quality_attributes.push("Security".into());

        d.functional[1].id = RequirementId::new(RequirementCategory::Functional, 1);
        assert!(d.validate().unwrap_err().0.contains("duplicate"));
        d.functional[1].id = RequirementId::new(RequirementCategory::NonFunctional, 9);
        assert!(d.validate().is_err());
    }

    #[test]
    fn artifact_kind_strings_round_trip() {
        for k in ArtifactKind::ALL {
            assert_eq!(k.to_string().parse::<ArtifactKind>().unwrap(), k);
        }
        assert_eq!(ArtifactKind::View(ViewKind::Process).to_string(), "view:process");
    }

    #[test]
    fn view_artifact_requires_its_exact_kinds() {
        let d = |k| Diagram::parsed(k, "@startuml\n@enduml", 1);
        let v = ViewArtifact {
            view: ViewKind::Physical,
            diagrams: vec![d(DiagramKind::DeploymentDiagram), d(DiagramKind::ContainerDiagram)],
        };
        v.validate().unwrap();
        let missing = ViewArtifact { view: ViewKind::Physical, diagrams: vec![d(DiagramKind::DeploymentDiagram)] };
        assert!(missing.validate().unwrap_err().0.contains("Container Diagram"));
        let foreign = ViewArtifact {
            view: ViewKind::Physical,
            diagrams: vec![d(DiagramKind::DeploymentDiagram), d(DiagramKind::ClassDiagram)],
        };
        assert!(foreign.validate().is_err());
    }

    #[test]
    fn safe_paths() {
        assert!(is_safe_relative_path("src/app/main.py"));
        for bad in ["", "/etc/passwd", "../x", "a/../b", "a//b", "C:\\x", "./a"] {
            assert!(!is_safe_relative_path(bad), "{bad}");
        }
    }
}
