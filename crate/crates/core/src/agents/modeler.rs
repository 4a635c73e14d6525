use std::collections::BTreeMap;

use archflow_puml::{DiagramKind, ViewKind};

use super::text::{fence, heading_text, looks_like_heading};
use super::{combine, render_mismatches, requirement_values, AgentContext, AgentError, AgentOutcome, Exhausted};
use crate::artifact::{AgentRole, Diagram, MismatchEntry, RequirementsDecomposition, ViewModelSet};
use crate::prompts::Placeholder;

pub fn view_task(view: ViewKind) -> String {
    format!("{}_view", view.slug())
}

/// Diagram kind named by a heading-like line.
fn heading_kind(line: &str) -> Option<DiagramKind> {
    let mentions = line.to_ascii_lowercase().contains("diagram");
    if !looks_like_heading(line) && !mentions {
        return None;
    }
    let mut text = heading_text(line);
    if let Some(open) = text.find('(') {
        text.truncate(open);
    }
    if let Some(dash) = text.find(" - ").or_else(|| text.find(" – ")) {
        text.truncate(dash);
    }
    text.trim().parse().ok()
}

/// PlantUML text inside a block, trimmed to its start and end markers.
fn diagram_source(block: &str) -> String {
    let lines: Vec<&str> = block.lines().collect();
    let start = lines.iter().position(|l| l.trim_start().to_ascii_lowercase().starts_with("@startuml"));
    let end = lines.iter().rposition(|l| l.trim().eq_ignore_ascii_case("@enduml"));
    match (start, end) {
        (Some(s), Some(e)) if e >= s => lines[s..=e].join("\n"),
        (Some(s), _) => lines[s..].join("\n"),
        _ => block.trim().to_string(),
    }
}

/// Splits a reply into (heading kind, diagram source) pairs in order.
fn extract_blocks(text: &str) -> Vec<(Option<DiagramKind>, String)> {
    let mut out = Vec::new();
    let mut heading: Option<DiagramKind> = None;
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        if let Some(lang) = fence(line) {
            let mut body = Vec::new();
            for inner in lines.by_ref() {
                if fence(inner).is_some_and(str::is_empty) {
                    break;
                }
                body.push(inner);
            }
            let body = body.join("\n");
            let lang = lang.to_ascii_lowercase();
            if body.to_ascii_lowercase().contains("@startuml") || matches!(lang.as_str(), "plantuml" | "puml" | "uml") {
                out.push((heading.take(), diagram_source(&body)));
            }
        } else if line.trim_start().to_ascii_lowercase().starts_with("@startuml") {
            let mut body = vec![line];
            for inner in lines.by_ref() {
                body.push(inner);
                if inner.trim().eq_ignore_ascii_case("@enduml") {
                    break;
                }
            }
            out.push((heading.take(), body.join("\n")));
        } else if let Some(kind) = heading_kind(line) {
            heading = Some(kind);
        }
    }
    out
}

/// Parses one view reply. Valid diagrams are merged into `accepted`, so a
/// retry only has to fix what was wrong. Succeeds once every kind of the
/// view is accepted.
pub fn parse_view_response(
    text: &str,
    view: ViewKind,
    revision: u32,
    accepted: &mut BTreeMap<DiagramKind, Diagram>,
) -> Result<(Vec<Diagram>, Vec<String>), Vec<String>> {
    let expected = view.diagram_kinds();
    let mut warnings = Vec::new();
    let mut errors = Vec::new();
    let mut seen = Vec::new();
    for (kind, source) in extract_blocks(text) {
        let kind = match kind {
            Some(k) => k,
            None => match expected.iter().find(|k| !seen.contains(*k)) {
                Some(k) if expected.len() == 1 || seen.len() < expected.len() => {
                    warnings.push(format!("unlabelled diagram taken as {}", k.title()));
                    *k
                }
                _ => {
                    warnings.push("ignored an unlabelled extra diagram".into());
                    continue;
                }
            },
        };
        if !expected.contains(&kind) {
            warnings.push(format!("ignored {}: not part of the {} view", kind.title(), view.title()));
            continue;
        }
        if seen.contains(&kind) {
            warnings.push(format!("ignored a second {}", kind.title()));
            continue;
        }
        seen.push(kind);
        let diagram = Diagram::parsed(kind, source, revision);
        match &diagram.parse_result {
            crate::artifact::ParseResult::Valid { .. } => {
                accepted.insert(kind, diagram);
            }
            crate::artifact::ParseResult::Invalid { errors: errs } => {
                for e in errs {
                    errors.push(format!("{}: {e}", kind.title()));
                }
            }
        }
    }
    for kind in expected {
        if !accepted.contains_key(kind) && !seen.contains(kind) {
            errors.push(format!("missing the {} (write a `### {}` heading followed by a fenced @startuml block)", kind.title(), kind.title()));
        }
    }
    if expected.iter().all(|k| accepted.contains_key(k)) {
        let diagrams = expected.iter().map(|k| accepted[k].clone()).collect();
        return Ok((diagrams, warnings));
    }
    Err(errors)
}

fn generate_view(
    ctx: &AgentContext<'_>,
    view: ViewKind,
    values: &BTreeMap<Placeholder, String>,
    revision: u32,
) -> Result<AgentOutcome<Vec<Diagram>>, AgentError> {
    let task = view_task(view);
    let prompt = ctx.render(AgentRole::Modeler, &task, values.clone())?;
    let mut accepted = BTreeMap::new();
    let result = ctx.ask(AgentRole::Modeler, &task, &prompt, |t| parse_view_response(t, view, revision, &mut accepted));
    match result {
        Ok(o) => Ok(o),
        Err(Exhausted::Gateway(e)) => Err(e.into()),
        Err(Exhausted::Parse { .. }) => {
            let kinds = view
                .diagram_kinds()
                .iter()
                .filter(|k| !accepted.contains_key(*k))
                .map(|k| k.title().to_string())
                .collect();
            Err(AgentError::ViewIncomplete { view, kinds })
        }
    }
}

/// Generates all five views, one request per view, in parallel.
pub fn modeler_generate_views(
    ctx: &AgentContext<'_>,
    decomposition: &RequirementsDecomposition,
    revision: u32,
    repair: &[MismatchEntry],
) -> Result<AgentOutcome<ViewModelSet>, AgentError> {
    let mut values = requirement_values(decomposition);
    values.insert(Placeholder::Mr, render_mismatches(repair));
    let results: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = ViewKind::ALL
            .into_iter()
            .map(|view| {
                let values = &values;
                scope.spawn(move || (view, generate_view(ctx, view, values, revision)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("view worker panicked")).collect()
    });
    let mut set = ViewModelSet::default();
    let mut parts = Vec::new();
    for (view, result) in results {
        let outcome = result?;
        *set.slot_mut(view) = outcome.artifact.clone();
        parts.push(outcome.map(|_| ()));
    }
    debug_assert!(set.is_complete());
    Ok(combine(set, parts))
}
