//! The eleven diagram kinds and the five architecture views that group them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the five "4+1" architecture views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    Logical,
    Development,
    Process,
    Physical,
    Scenario,
}

impl ViewKind {
    pub const ALL: [ViewKind; 5] = [
        ViewKind::Logical,
        ViewKind::Development,
        ViewKind::Process,
        ViewKind::Physical,
        ViewKind::Scenario,
    ];

    /// Diagram kinds belonging to this view, in presentation order.
    pub fn diagram_kinds(self) -> &'static [DiagramKind] {
        use DiagramKind::*;
        match self {
            ViewKind::Logical => &[ClassDiagram, ObjectDiagram, StateDiagram],
            ViewKind::Development => &[PackageDiagram, ComponentDiagram],
            ViewKind::Process => &[ActivityDiagram, SequenceDiagram, CollaborationDiagram],
            ViewKind::Physical => &[DeploymentDiagram, ContainerDiagram],
            ViewKind::Scenario => &[UseCaseDiagram],
        }
    }

    /// Lower-case identifier used in file paths and prompt task names.
    pub fn slug(self) -> &'static str {
        match self {
            ViewKind::Logical => "logical",
            ViewKind::Development => "development",
            ViewKind::Process => "process",
            ViewKind::Physical => "physical",
            ViewKind::Scenario => "scenario",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            ViewKind::Logical => "Logical View",
            ViewKind::Development => "Development View",
            ViewKind::Process => "Process View",
            ViewKind::Physical => "Physical View",
            ViewKind::Scenario => "Scenario View",
        }
    }
}

impl fmt::Display for ViewKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for ViewKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ViewKind::ALL
            .into_iter()
            .find(|v| v.slug().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

/// Concrete UML diagram kinds produced for the views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DiagramKind {
    ClassDiagram,
    ObjectDiagram,
    StateDiagram,
    PackageDiagram,
    ComponentDiagram,
    ActivityDiagram,
    SequenceDiagram,
    CollaborationDiagram,
    DeploymentDiagram,
    ContainerDiagram,
    UseCaseDiagram,
}

impl DiagramKind {
    pub const ALL: [DiagramKind; 11] = [
        DiagramKind::ClassDiagram,
        DiagramKind::ObjectDiagram,
        DiagramKind::StateDiagram,
        DiagramKind::PackageDiagram,
        DiagramKind::ComponentDiagram,
        DiagramKind::ActivityDiagram,
        DiagramKind::SequenceDiagram,
        DiagramKind::CollaborationDiagram,
        DiagramKind::DeploymentDiagram,
        DiagramKind::ContainerDiagram,
        DiagramKind::UseCaseDiagram,
    ];

    pub fn view(self) -> ViewKind {
        use DiagramKind::*;
        match self {
            ClassDiagram | ObjectDiagram | StateDiagram => ViewKind::Logical,
            PackageDiagram | ComponentDiagram => ViewKind::Development,
            ActivityDiagram | SequenceDiagram | CollaborationDiagram => ViewKind::Process,
            DeploymentDiagram | ContainerDiagram => ViewKind::Physical,
            UseCaseDiagram => ViewKind::Scenario,
        }
    }

    /// File stem used in run bundles, e.g. `views/process/sequence.puml`.
    pub fn slug(self) -> &'static str {
        use DiagramKind::*;
        match self {
            ClassDiagram => "class",
            ObjectDiagram => "object",
            StateDiagram => "state",
            PackageDiagram => "package",
            ComponentDiagram => "component",
            ActivityDiagram => "activity",
            SequenceDiagram => "sequence",
            CollaborationDiagram => "collaboration",
            DeploymentDiagram => "deployment",
            ContainerDiagram => "container",
            UseCaseDiagram => "use_case",
        }
    }

    /// Human heading, as agents are asked to write it ("Sequence Diagram").
    pub fn title(self) -> &'static str {
        use DiagramKind::*;
        match self {
            ClassDiagram => "Class Diagram",
            ObjectDiagram => "Object Diagram",
            StateDiagram => "State Diagram",
            PackageDiagram => "Package Diagram",
            ComponentDiagram => "Component Diagram",
            ActivityDiagram => "Activity Diagram",
            SequenceDiagram => "Sequence Diagram",
            CollaborationDiagram => "Collaboration Diagram",
            DeploymentDiagram => "Deployment Diagram",
            ContainerDiagram => "Container Diagram",
            UseCaseDiagram => "Use Case Diagram",
        }
    }

    /// Kinds whose entities describe behaviour rather than structure.
    pub fn is_behavioral(self) -> bool {
        matches!(
            self,
            DiagramKind::ActivityDiagram
                | DiagramKind::SequenceDiagram
                | DiagramKind::CollaborationDiagram
                | DiagramKind::StateDiagram
        )
    }
}

impl fmt::Display for DiagramKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown kind `{0}`")]
pub struct UnknownKind(pub String);

impl FromStr for DiagramKind {
    type Err = UnknownKind;

    /// Accepts the slug (`use_case`), the title (`Use Case Diagram`) or the
    /// variant name (`UseCaseDiagram`), case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        let folded = folded.strip_suffix("diagram").unwrap_or(&folded);
        DiagramKind::ALL
            .into_iter()
            .find(|k| k.slug().replace('_', "") == folded)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}
