//! Structural validation for the PlantUML subset used by architecture views.
//!
//! [`parse`] turns a diagram source into an [`EntityGraph`] or a list of
//! [`ValidationError`]s; [`check_consistency`] compares the graphs of a full
//! view set and reports entities that have no counterpart where one is
//! expected.

mod consistency;
mod graph;
mod kind;
mod parser;

pub use consistency::{check_consistency, ConsistencyFinding, ConsistencyRule, BEHAVIORAL_KINDS};
pub use graph::{fold_name, Entity, EntityGraph, EntityKind, ErrorCode, Relation, RelationKind, ValidationError};
pub use kind::{DiagramKind, UnknownKind, ViewKind};
pub use parser::{parse, parse_bytes};
