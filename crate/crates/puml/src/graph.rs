use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kind::DiagramKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Class,
    Object,
    State,
    Package,
    Component,
    Actor,
    Usecase,
    Node,
    Container,
    Participant,
    Activity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Association,
    Inheritance,
    Composition,
    Aggregation,
    Dependency,
    Message,
    Transition,
    Include,
    Extend,
    Deploys,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    /// Identifier used by relations (the alias when one is given).
    pub name: String,
    /// Display text when it differs from `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub kind: EntityKind,
    /// Created from a relation endpoint rather than an explicit declaration.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub implicit: bool,
}

impl Entity {
    pub fn display_name(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }

    /// Folded spellings this entity answers to in cross-diagram matching.
    pub fn match_keys(&self) -> impl Iterator<Item = String> + '_ {
        std::iter::once(fold_name(&self.name)).chain(self.label.as_deref().map(fold_name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub from: String,
    pub to: String,
    pub kind: RelationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    MissingStartMarker,
    MissingEndMarker,
    UnbalancedBlock,
    UnknownConstructForKind,
    MalformedRelation,
    DuplicateEntity,
}

impl ErrorCode {
    /// Whether this code invalidates the diagram. Unknown constructs are
    /// reported but tolerated.
    pub fn is_fatal(self) -> bool {
        self != ErrorCode::UnknownConstructForKind
    }
}

/// A problem found in a diagram source. `line` is 1-based; 0 means the
/// problem concerns the file as a whole.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationError {
    pub line: usize,
    pub code: ErrorCode,
    pub message: String,
}

impl ValidationError {
    pub fn new(line: usize, code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            line,
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {:?}: {}", self.line, self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityGraph {
    pub diagram_kind: DiagramKind,
    pub entities: Vec<Entity>,
    pub relations: Vec<Relation>,
    /// Non-fatal findings (unknown constructs).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<ValidationError>,
}

impl EntityGraph {
    pub fn new(diagram_kind: DiagramKind) -> Self {
        Self {
            diagram_kind,
            entities: Vec::new(),
            relations: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn entity(&self, name: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.name == name)
    }

    pub fn entities_of(&self, kind: EntityKind) -> impl Iterator<Item = &Entity> {
        self.entities.iter().filter(move |e| e.kind == kind)
    }

    pub fn relations_of(&self, kind: RelationKind) -> impl Iterator<Item = &Relation> {
        self.relations.iter().filter(move |r| r.kind == kind)
    }

    /// Every relation endpoint names an entity of this graph.
    pub fn endpoints_resolve(&self) -> bool {
        self.relations
            .iter()
            .all(|r| self.entity(&r.from).is_some() && self.entity(&r.to).is_some())
    }
}

/// Case-insensitive comparison key with whitespace and underscores removed.
pub fn fold_name(name: &str) -> String {
    name.chars()
        .filter(|c| !c.is_whitespace() && *c != '_')
        .flat_map(char::to_lowercase)
        .collect()
}
