use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::{Regex, RegexBuilder};

use super::text::{char_span, split_list, unquote};
use super::{combine, render_mismatches, AgentContext, AgentError, AgentOutcome};
use crate::artifact::{
    sha256_hex, AgentRole, AsrRecord, MismatchEntry, RequirementCategory, RequirementId, RequirementItem,
    RequirementsDecomposition, SourceSpan, Validate,
};
use crate::prompts::Placeholder;

fn ci(pattern: &str) -> Regex {
    RegexBuilder::new(pattern).case_insensitive(true).build().expect("static regex")
}

static HEADERS: LazyLock<[(RequirementCategory, Regex); 4]> = LazyLock::new(|| {
    let deco = r"^[\s#*>_]*";
    let tail = r"[\s*_:]*$";
    [
        (RequirementCategory::Functional, ci(&format!(r"{deco}functional\s+requirements{tail}"))),
        (RequirementCategory::NonFunctional, ci(&format!(r"{deco}non[\s-]*functional\s+requirements{tail}"))),
        (RequirementCategory::ArchitecturallySignificant, ci(&format!(r"{deco}the\s+asrs\s+are\s*:[\s*_]*$"))),
        (RequirementCategory::DesignConstraint, ci(&format!(r"{deco}design\s+constraints{tail}"))),
    ]
});

static ITEM_RE: LazyLock<Regex> = LazyLock::new(|| {
    ci(r"^\s*(?:[-*•+]\s*|\d+[.)]\s*)?(?:\*\*)?\[?(FR|NFR|ASR|DC)\s*-\s*(\d+)\]?(?:\*\*)?(?:\s*[:.)\-\x{2013}\x{2014}]\s*|\s+|$)(.*)$")
});
static GROUP_RE: LazyLock<Regex> =
    LazyLock::new(|| ci(r"^\s*(?:#+\s*)?(?:\*\*)?\s*category\s*[:\-–]\s*(.+?)\s*(?:\*\*)?\s*$"));
static MD_GROUP_RE: LazyLock<Regex> = LazyLock::new(|| ci(r"^\s*#{2,6}\s+(.+?)\s*$"));
static QA_RE: LazyLock<Regex> =
    LazyLock::new(|| ci(r"^\s*[-*•]?\s*(?:\*\*)?(?:related\s+)?quality\s+attributes?(?:\(s\))?(?:\*\*)?\s*:\s*(.*)$"));
static ASR_FIELD_RE: LazyLock<Regex> = LazyLock::new(|| {
    ci(r"^\s*[-*•]?\s*(?:\*\*)?(original\s+text|related\s+quality\s+attributes?(?:\(s\))?|quality\s+attributes?(?:\(s\))?|architectural\s+impact|related\s+components?)(?:\*\*)?\s*:\s*(?:\*\*)?\s*(.*)$")
});

fn header_title(category: RequirementCategory) -> &'static str {
    match category {
        RequirementCategory::Functional => "Functional Requirements:",
        RequirementCategory::NonFunctional => "Non-Functional Requirements:",
        RequirementCategory::ArchitecturallySignificant => "The ASRs are:",
        RequirementCategory::DesignConstraint => "Design Constraints:",
    }
}

/// Lines between this category's header and the next recognised header.
fn section_lines(text: &str, category: RequirementCategory) -> Result<Vec<&str>, Vec<String>> {
    let lines: Vec<&str> = text.lines().collect();
    let is_header = |line: &str, c: RequirementCategory| HEADERS.iter().any(|(k, re)| *k == c && re.is_match(line));
    let start = lines
        .iter()
        .position(|l| is_header(l, category))
        .ok_or_else(|| vec![format!("missing the `{}` header line", header_title(category))])?;
    let body = &lines[start + 1..];
    let end = body
        .iter()
        .position(|l| HEADERS.iter().any(|(k, re)| *k != category && re.is_match(l)))
        .unwrap_or(body.len());
    Ok(body[..end].to_vec())
}

struct RawItem {
    number: usize,
    text: String,
    group: Option<String>,
    qualities: Vec<String>,
    impact: String,
    components: Vec<String>,
}

fn finish<F>(items: Vec<RawItem>, category: RequirementCategory, srs: &str, mut build: F) -> Result<(Vec<String>, usize), Vec<String>>
where
    F: FnMut(RequirementItem, RawItem),
{
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    let count = items.len();
    for (i, raw) in items.into_iter().enumerate() {
        let id = RequirementId::new(category, i + 1);
        if raw.number != i + 1 {
            warnings.push(format!("{}-{} renumbered as {id}", category.prefix(), raw.number));
        }
        let text = unquote(raw.text.trim()).to_string();
        if text.is_empty() {
            errors.push(format!("{id} has no requirement text"));
            continue;
        }
        let source_span = char_span(srs, &text).map(|(start, end)| SourceSpan { start, end });
        let item = RequirementItem {
            id,
            category,
            text,
            source_span,
            quality_attributes: raw.qualities.clone(),
            group: raw.group.clone(),
        };
        build(item, raw);
    }
    if errors.is_empty() {
        Ok((warnings, count))
    } else {
        Err(errors)
    }
}

/// Parses an FR, NFR or DC list reply.
pub fn parse_requirement_list(
    text: &str,
    category: RequirementCategory,
    srs: &str,
) -> Result<(Vec<RequirementItem>, Vec<String>), Vec<String>> {
    assert_ne!(category, RequirementCategory::ArchitecturallySignificant, "use parse_asr_list");
    let lines = section_lines(text, category)?;
    let mut raw: Vec<RawItem> = Vec::new();
    let mut errors = Vec::new();
    let mut group: Option<String> = None;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(c) = ITEM_RE.captures(line) {
            let prefix = c[1].to_ascii_uppercase();
            if prefix != category.prefix() {
                errors.push(format!("item `{}` does not belong in the {} list", line.trim(), category.prefix()));
                continue;
            }
            raw.push(RawItem {
                number: c[2].parse().unwrap_or(0),
                text: c[3].trim().to_string(),
                group: group.clone(),
                qualities: Vec::new(),
                impact: String::new(),
                components: Vec::new(),
            });
        } else if let Some(c) = QA_RE.captures(line) {
            match raw.last_mut() {
                Some(item) => item.qualities.extend(split_list(&c[1])),
                None => errors.push("quality attributes given before any item".into()),
            }
        } else if let Some(c) = GROUP_RE.captures(line).or_else(|| MD_GROUP_RE.captures(line)) {
            group = Some(c[1].trim().trim_end_matches(':').to_string());
        } else if let Some(item) = raw.last_mut() {
            let extra = line.trim();
            if !super::text::is_nothing(extra.trim_start_matches(['-', '*', ' '])) {
                if !item.text.is_empty() {
                    item.text.push(' ');
                }
                item.text.push_str(extra);
            }
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let mut out = Vec::new();
    let (mut warnings, _) = finish(raw, category, srs, |item, _| out.push(item))?;
    if category == RequirementCategory::NonFunctional {
        warnings.extend(out.iter().filter(|i| i.quality_attributes.is_empty()).map(|i| format!("{} names no quality attribute", i.id)));
    }
    Ok((out, warnings))
}

/// Parses the ASR reply. The `The ASRs are:` delimiter is mandatory and
/// every record must name a quality attribute.
pub fn parse_asr_list(text: &str, srs: &str) -> Result<(Vec<AsrRecord>, Vec<String>), Vec<String>> {
    let category = RequirementCategory::ArchitecturallySignificant;
    let lines = section_lines(text, category)?;
    let mut raw: Vec<RawItem> = Vec::new();
    let mut last_field: Option<String> = None;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(c) = ASR_FIELD_RE.captures(line) {
            let Some(item) = raw.last_mut() else {
                return Err(vec!["ASR field given before any ASR-nnn item".into()]);
            };
            let field = c[1].to_ascii_lowercase();
            let value = c[2].trim().to_string();
            if field.starts_with("original") {
                item.text = value;
            } else if field.contains("quality") {
                item.qualities.extend(split_list(&value));
            } else if field.starts_with("architectural") {
                item.impact = value;
            } else {
                item.components.extend(split_list(&value));
            }
            last_field = Some(field);
        } else if let Some(c) = ITEM_RE.captures(line) {
            if !c[1].eq_ignore_ascii_case("ASR") {
                return Err(vec![format!("item `{}` does not belong in the ASR list", line.trim())]);
            }
            raw.push(RawItem {
                number: c[2].parse().unwrap_or(0),
                text: c[3].trim().to_string(),
                group: None,
                qualities: Vec::new(),
                impact: String::new(),
                components: Vec::new(),
            });
            last_field = None;
        } else if let (Some(item), Some(field)) = (raw.last_mut(), last_field.as_deref()) {
            let extra = line.trim();
            let target = if field.starts_with("original") {
                &mut item.text
            } else if field.starts_with("architectural") {
                &mut item.impact
            } else {
                continue;
            };
            target.push(' ');
            target.push_str(extra);
        }
    }
    let missing_qa: Vec<String> = raw
        .iter()
        .enumerate()
        .filter(|(_, r)| r.qualities.is_empty())
        .map(|(i, _)| format!("{} has no quality attribute", RequirementId::new(category, i + 1)))
        .collect();
    if !missing_qa.is_empty() {
        return Err(missing_qa);
    }
    let mut out = Vec::new();
    let (mut warnings, _) = finish(raw, category, srs, |base, raw| {
        out.push(AsrRecord { base, architectural_impact: raw.impact.trim().to_string(), related_components: raw.components })
    })?;
    warnings.extend(out.iter().filter(|a| a.architectural_impact.is_empty()).map(|a| format!("{} states no architectural impact", a.base.id)));
    Ok((out, warnings))
}

const TASKS: [(&str, RequirementCategory); 4] = [
    ("fr", RequirementCategory::Functional),
    ("nfr", RequirementCategory::NonFunctional),
    ("asr", RequirementCategory::ArchitecturallySignificant),
    ("dc", RequirementCategory::DesignConstraint),
];

/// Runs the four requirement-extraction tasks and merges their results.
pub fn analyst_decompose(
    ctx: &AgentContext<'_>,
    srs: &str,
    repair: &[MismatchEntry],
) -> Result<AgentOutcome<RequirementsDecomposition>, AgentError> {
    if srs.trim().is_empty() {
        return Err(AgentError::EmptySrs);
    }
    let agent = AgentRole::Analyst;
    let values = BTreeMap::from([(Placeholder::Srs, srs.to_string()), (Placeholder::Mr, render_mismatches(repair))]);
    let mut decomposition = RequirementsDecomposition {
        functional: Vec::new(),
        non_functional: Vec::new(),
        asrs: Vec::new(),
        design_constraints: Vec::new(),
        srs_digest: sha256_hex(srs.as_bytes()),
    };
    let mut parts = Vec::new();
    for (task, category) in TASKS {
        let prompt = ctx.render(agent, task, values.clone())?;
        let fail = |e: super::Exhausted| e.into_parse_failure(agent, task);
        if category == RequirementCategory::ArchitecturallySignificant {
            let outcome = ctx.ask(agent, task, &prompt, |t| parse_asr_list(t, srs)).map_err(fail)?;
            decomposition.asrs = outcome.artifact.clone();
            parts.push(outcome.map(|_| ()));
        } else {
            let outcome = ctx.ask(agent, task, &prompt, |t| parse_requirement_list(t, category, srs)).map_err(fail)?;
            let slot = match category {
                RequirementCategory::Functional => &mut decomposition.functional,
                RequirementCategory::NonFunctional => &mut decomposition.non_functional,
                _ => &mut decomposition.design_constraints,
            };
            *slot = outcome.artifact.clone();
            parts.push(outcome.map(|_| ()));
        }
    }
    if decomposition.is_empty() {
        return Err(AgentError::EmptyDecomposition);
    }
    decomposition.validate()?;
    Ok(combine(decomposition, parts))
}
