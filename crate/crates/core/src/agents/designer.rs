use std::sync::LazyLock;

use regex::{Regex, RegexBuilder};

use super::text::fence;
use super::{render_mismatches, render_views, requirement_values, AgentContext, AgentError, AgentOutcome, Exhausted};
use crate::artifact::{
    is_safe_relative_path, AgentRole, ArchitectureDocumentation, MismatchEntry, PrototypeSkeleton,
    RequirementsDecomposition, SkeletonFile, Validate, ViewModelSet, DOCUMENTATION_SECTIONS,
};
use crate::prompts::Placeholder;

static SECTION_RE: LazyLock<Regex> = LazyLock::new(|| {
    RegexBuilder::new(
        r"^[\s#>]*(?:\*\*|__)?\s*(?:\d+[.)]\s*)?(goals|detailed\s+architecture\s+design|components?\s*(?:&|and)\s*connectors?\s+specifications?|key\s+technolog(?:y|ies)|design\s+decisions?\s+rationale|design\s+decisions?|executable\s+prototype\s+skeleton)\s*(?:\*\*|__)?\s*(?::\s*(?:\*\*|__)?\s*(.*))?$",
    )
    .case_insensitive(true)
    .build()
    .expect("section regex")
});

static FILE_RE: LazyLock<Regex> = LazyLock::new(|| {
    RegexBuilder::new(r"^[\s#>*_-]*(?:file|path)\s*:\s*[`*_]*([^`*\s]+)[`*_]*\s*$")
        .case_insensitive(true)
        .build()
        .expect("file regex")
});

fn section_id(title: &str) -> &'static str {
    let t = title.to_ascii_lowercase();
    if t.starts_with("goals") {
        "goals"
    } else if t.starts_with("detailed") {
        "detailed_design"
    } else if t.starts_with("component") {
        "component_connector_specs"
    } else if t.starts_with("key") {
        "key_technologies"
    } else if t.contains("rationale") {
        "decision_rationale"
    } else if t.starts_with("design") {
        "design_decisions"
    } else {
        "prototype_skeleton"
    }
}

fn parse_skeleton_files(text: &str) -> (Vec<SkeletonFile>, Vec<String>) {
    let mut files = Vec::new();
    let mut warnings = Vec::new();
    let mut pending: Option<String> = None;
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        if let Some(c) = FILE_RE.captures(line) {
            pending = Some(c[1].replace('\\', "/"));
        } else if fence(line).is_some() {
            let mut body = Vec::new();
            for inner in lines.by_ref() {
                if fence(inner).is_some_and(str::is_empty) {
                    break;
                }
                body.push(inner);
            }
            let Some(path) = pending.take() else { continue };
            let path = path.trim_start_matches("./").to_string();
            if !is_safe_relative_path(&path) {
                warnings.push(format!("skipped scaffold file with unsafe path `{path}`"));
                continue;
            }
            if files.iter().any(|f: &SkeletonFile| f.path == path) {
                warnings.push(format!("skipped duplicate scaffold file `{path}`"));
                continue;
            }
            let mut content = body.join("\n");
            content.push('\n');
            files.push(SkeletonFile { path, content });
        }
    }
    (files, warnings)
}

/// Splits a documentation reply into its seven sections.
pub fn parse_documentation(text: &str) -> Result<(ArchitectureDocumentation, Vec<String>), Vec<String>> {
    let mut bodies: Vec<(&'static str, Vec<&str>)> = Vec::new();
    let mut in_fence = false;
    for line in text.lines() {
        if fence(line).is_some() {
            in_fence = !in_fence;
        }
        if !in_fence {
            if let Some(c) = SECTION_RE.captures(line) {
                let id = section_id(&c[1]);
                if !bodies.iter().any(|(s, _)| *s == id) {
                    let inline = c.get(2).map(|m| m.as_str()).filter(|s| !s.trim().is_empty());
                    bodies.push((id, inline.into_iter().collect()));
                    continue;
                }
            }
        }
        if let Some((_, body)) = bodies.last_mut() {
            body.push(line);
        }
    }
    let get = |id: &str| {
        bodies
            .iter()
            .find(|(s, _)| *s == id)
            .map(|(_, b)| b.join("\n").trim().to_string())
            .unwrap_or_default()
    };
    let errors: Vec<String> = DOCUMENTATION_SECTIONS
        .iter()
        .filter(|(id, _)| get(id).is_empty())
        .map(|(id, heading)| format!("section `{heading}` ({id}) is missing or empty"))
        .collect();
    if !errors.is_empty() {
        return Err(errors);
    }
    let skeleton_text = get("prototype_skeleton");
    let (files, mut warnings) = parse_skeleton_files(&skeleton_text);
    if files.is_empty() {
        warnings.push("prototype skeleton lists no scaffold files".into());
    }
    let doc = ArchitectureDocumentation {
        goals: get("goals"),
        detailed_design: get("detailed_design"),
        component_connector_specs: get("component_connector_specs"),
        key_technologies: get("key_technologies"),
        design_decisions: get("design_decisions"),
        decision_rationale: get("decision_rationale"),
        prototype_skeleton: PrototypeSkeleton { text: skeleton_text, files },
    };
    doc.validate().map_err(|e| vec![e.0])?;
    Ok((doc, warnings))
}

/// First section absent from a reply, by identifier.
fn first_missing(text: &str) -> Option<&'static str> {
    let present: Vec<&str> = text
        .lines()
        .filter_map(|l| SECTION_RE.captures(l).map(|c| section_id(&c[1])))
        .collect();
    DOCUMENTATION_SECTIONS.iter().map(|(id, _)| *id).find(|id| !present.contains(id))
}

pub fn designer_generate_documentation(
    ctx: &AgentContext<'_>,
    decomposition: &RequirementsDecomposition,
    views: &ViewModelSet,
    repair: &[MismatchEntry],
) -> Result<AgentOutcome<ArchitectureDocumentation>, AgentError> {
    if !views.is_complete() {
        return Err(AgentError::ViewsIncomplete);
    }
    let mut values = requirement_values(decomposition);
    values.insert(Placeholder::Av, render_views(views));
    values.insert(Placeholder::Mr, render_mismatches(repair));
    let prompt = ctx.render(AgentRole::Designer, "documentation", values)?;
    let mut last_reply = String::new();
    let result = ctx.ask(AgentRole::Designer, "documentation", &prompt, |t| {
        last_reply = t.to_string();
        parse_documentation(t)
    });
    match result {
        Ok(o) => Ok(o),
        Err(Exhausted::Gateway(e)) => Err(e.into()),
        Err(Exhausted::Parse { messages, .. }) => match first_missing(&last_reply) {
            Some(id) => Err(AgentError::SectionMissing(id.to_string())),
            None => Err(AgentError::ParseFailure {
                agent: AgentRole::Designer,
                task: "documentation".into(),
                attempts: ctx.max_parse_retries + 1,
                messages,
            }),
        },
    }
}
