use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use archflow_puml::{fold_name, ConsistencyFinding};
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::text::{heading_text, looks_like_heading, split_list};
use super::{combine, render_views, requirement_values, AgentContext, AgentError, AgentOutcome};
use crate::artifact::{
    cross_view_check, AgentRole, ArchitectureDocumentation, InvariantViolation, AtamReport, DenominatorPolicy, MismatchEntry, MismatchRate, MismatchReport,
    RequirementId, RequirementsDecomposition, TraceLink, TraceabilityMatrix, ViewModelSet, ATAM_HEADINGS,
};
use crate::prompts::Placeholder;

fn ci(p: &str) -> Regex {
    RegexBuilder::new(p).case_insensitive(true).build().expect("static regex")
}

static ENTRY_RE: LazyLock<Regex> = LazyLock::new(|| ci(r"^[\s#>*_-]*\[?\s*mismatch\s*#?\s*(\d+)\s*\]?[\s*_:]*(.*)$"));
static FIELD_RE: LazyLock<Regex> = LazyLock::new(|| {
    ci(r"^\s*[-*•]?\s*(?:\*\*|__)?(description|impact|recommendation|related\s+requirements?(?:\s+ids?)?|requirements?)(?:\*\*|__)?\s*:\s*(?:\*\*|__)?\s*(.*)$")
});
static NONE_RE: LazyLock<Regex> =
    LazyLock::new(|| ci(r"\bno\s+mismatch(?:es)?\s+(?:were\s+|was\s+|have\s+been\s+)?(?:found|identified|detected)\b"));
static ID_CITE_RE: LazyLock<Regex> = LazyLock::new(|| ci(r"\b(FR|NFR|ASR|DC)\s*-\s*(\d+)\b"));

/// Keyword rule assigning mismatches to the agent that should repair them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnerRule {
    pub owner: AgentRole,
    pub keywords: Vec<String>,
}

/// Ordered owner rules; the first rule with a keyword found in the
/// entry's description or recommendation wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnerRules {
    pub rules: Vec<OwnerRule>,
    pub default_owner: AgentRole,
}

impl Default for OwnerRules {
    fn default() -> Self {
        let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect();
        OwnerRules {
            rules: vec![
                OwnerRule {
                    owner: AgentRole::Analyst,
                    keywords: words(&[
                        "misclassified",
                        "classified as",
                        "categorization",
                        "categorisation",
                        "requirement list",
                        "requirements list",
                        "decomposition",
                        "missing requirement",
                        "ambiguous requirement",
                    ]),
                },
                OwnerRule {
                    owner: AgentRole::Designer,
                    keywords: words(&[
                        "documentation",
                        "design decision",
                        "rationale",
                        "key technolog",
                        "prototype",
                        "skeleton",
                        "connector specification",
                    ]),
                },
                OwnerRule {
                    owner: AgentRole::Modeler,
                    keywords: words(&["diagram", "view", "component", "deployment", "sequence", "class"]),
                },
            ],
            default_owner: AgentRole::Modeler,
        }
    }
}

impl OwnerRules {
    pub fn validate(&self) -> Result<(), String> {
        let bad = |r: AgentRole| r == AgentRole::Evaluator;
        if bad(self.default_owner) || self.rules.iter().any(|r| bad(r.owner)) {
            return Err("mismatches cannot be routed to the evaluator".into());
        }
        Ok(())
    }
}

pub fn infer_owner(rules: &OwnerRules, description: &str, recommendation: &str) -> AgentRole {
    let haystack = format!("{description}\n{recommendation}").to_lowercase();
    rules
        .rules
        .iter()
        .find(|r| r.keywords.iter().any(|k| haystack.contains(&k.to_lowercase())))
        .map_or(rules.default_owner, |r| r.owner)
}

/// Locates the four required headings and the text under each.
pub fn parse_atam(text: &str) -> Result<(AtamReport, Vec<String>), Vec<String>> {
    let canonical = |line: &str| -> Option<&'static str> {
        if !looks_like_heading(line) {
            return None;
        }
        let h = heading_text(line).to_lowercase().replace(['-', ' '], "");
        ATAM_HEADINGS.into_iter().find(|c| {
            let key = c.to_lowercase().replace(['-', ' '], "");
            h == key || h.ends_with(&key) || h.starts_with(&key)
        })
    };
    let mut sections: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    let mut current: Option<&'static str> = None;
    for line in text.lines() {
        if let Some(c) = canonical(line) {
            if !sections.contains_key(c) {
                sections.insert(c.to_string(), Vec::new());
                current = Some(c);
                continue;
            }
        } else if line.trim_start().starts_with('#') && line.trim_start().trim_start_matches('#').starts_with(' ') {
            let level = line.trim_start().chars().take_while(|c| *c == '#').count();
            if level <= 2 {
                current = None;
                continue;
            }
        }
        if let Some(c) = current {
            sections.get_mut(c).expect("section exists").push(line);
        }
    }
    let missing: Vec<String> = ATAM_HEADINGS
        .iter()
        .filter(|h| !sections.contains_key(**h))
        .map(|h| format!("missing the `{h}` heading"))
        .collect();
    if !missing.is_empty() {
        return Err(missing);
    }
    let sections: BTreeMap<String, String> = sections.into_iter().map(|(k, v)| (k, v.join("\n").trim().to_string())).collect();
    let warnings = sections.iter().filter(|(_, v)| v.is_empty()).map(|(k, _)| format!("`{k}` section is empty")).collect();
    Ok((AtamReport { text: text.to_string(), sections }, warnings))
}

struct RawEntry {
    number: String,
    description: Vec<String>,
    impact: Vec<String>,
    recommendation: Vec<String>,
    related: Vec<String>,
    loose: Vec<String>,
}

/// Parses mismatch blocks. Requirement ids are normalized and checked
/// against `known`; citations of unknown ids are dropped with a warning.
pub fn parse_mismatches(
    text: &str,
    known: &BTreeSet<RequirementId>,
    rules: &OwnerRules,
) -> Result<(Vec<MismatchEntry>, Vec<String>), Vec<String>> {
    let mut raw: Vec<RawEntry> = Vec::new();
    let mut field: Option<&'static str> = None;
    for line in text.lines() {
        if let Some(c) = ENTRY_RE.captures(line) {
            let rest = c[2].trim().to_string();
            raw.push(RawEntry {
                number: c[1].to_string(),
                description: Vec::new(),
                impact: Vec::new(),
                recommendation: Vec::new(),
                related: Vec::new(),
                loose: if rest.is_empty() { Vec::new() } else { vec![rest] },
            });
            field = None;
            continue;
        }
        let Some(entry) = raw.last_mut() else { continue };
        if let Some(c) = FIELD_RE.captures(line) {
            let name = c[1].to_ascii_lowercase();
            let f: &'static str = if name.starts_with("desc") {
                "description"
            } else if name.starts_with("impact") {
                "impact"
            } else if name.starts_with("recomm") {
                "recommendation"
            } else {
                "related"
            };
            let value = c[2].trim().to_string();
            if !value.is_empty() {
                entry.field_mut(f).push(value);
            }
            field = Some(f);
        } else if !line.trim().is_empty() {
            match field {
                Some(f) if f != "related" => entry.field_mut(f).push(line.trim().to_string()),
                _ => entry.loose.push(line.trim().to_string()),
            }
        }
    }
    if raw.is_empty() {
        if NONE_RE.is_match(text) {
            return Ok((Vec::new(), Vec::new()));
        }
        return Err(vec!["no `[mismatch N]` blocks and no `No mismatches found.` line".into()]);
    }
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    let mut entries = Vec::new();
    for (i, r) in raw.into_iter().enumerate() {
        let id = format!("M-{:03}", i + 1);
        let description = r.description.join(" ");
        if description.is_empty() {
            errors.push(format!("[mismatch {}] has no Description", r.number));
            continue;
        }
        let impact = r.impact.join(" ");
        let recommendation = r.recommendation.join(" ");
        for (name, v) in [("Impact", &impact), ("Recommendation", &recommendation)] {
            if v.is_empty() {
                warnings.push(format!("[mismatch {}] has no {name}", r.number));
            }
        }
        let mut cited = Vec::new();
        let sources = r.related.iter().flat_map(|s| split_list(s)).chain(
            [&description, &impact, &recommendation].into_iter().chain(r.loose.iter()).flat_map(|s| {
                ID_CITE_RE.find_iter(s).map(|m| m.as_str().to_string()).collect::<Vec<_>>()
            }),
        );
        for raw_id in sources {
            let Some(id_norm) = ID_CITE_RE.find(&raw_id).and_then(|m| RequirementId::normalize(&m.as_str().replace(' ', ""))) else {
                continue;
            };
            if !known.contains(&id_norm) {
                warnings.push(format!("[mismatch {}] cites unknown requirement {id_norm}", r.number));
            } else if !cited.contains(&id_norm) {
                cited.push(id_norm);
            }
        }
        let suspected_owner = infer_owner(rules, &description, &recommendation);
        entries.push(MismatchEntry { id, description, impact, recommendation, suspected_owner, related_requirement_ids: cited });
    }
    if errors.is_empty() {
        Ok((entries, warnings))
    } else {
        Err(errors)
    }
}

impl RawEntry {
    fn field_mut(&mut self, f: &str) -> &mut Vec<String> {
        match f {
            "description" => &mut self.description,
            "impact" => &mut self.impact,
            "recommendation" => &mut self.recommendation,
            _ => &mut self.related,
        }
    }
}

/// Minimum folded length for an entity name to count as mentioned.
const MIN_MATCH_LEN: usize = 4;

/// Links every requirement to the mismatch entries citing it and to the
/// diagram entities its text mentions.
pub fn build_traceability(
    decomposition: &RequirementsDecomposition,
    views: &ViewModelSet,
    mismatches: &[MismatchEntry],
) -> TraceabilityMatrix {
    let mut rows = BTreeMap::new();
    for item in decomposition.items() {
        let folded = fold_name(&item.text);
        let mut links = Vec::new();
        for d in views.diagrams() {
            let Some(graph) = d.graph() else { continue };
            let artifact = format!("views/{}/{}", d.kind.view().slug(), d.kind.slug());
            let mut seen = BTreeSet::new();
            for e in &graph.entities {
                let name = e.display_name();
                let key = fold_name(name);
                if key.chars().count() >= MIN_MATCH_LEN && folded.contains(&key) && seen.insert(key) {
                    links.push(TraceLink { artifact: artifact.clone(), element: name.to_string() });
                }
            }
        }
        for m in mismatches.iter().filter(|m| m.related_requirement_ids.contains(&item.id)) {
            links.push(TraceLink { artifact: "evaluation/mismatch".into(), element: m.id.clone() });
        }
        rows.insert(item.id.clone(), links);
    }
    TraceabilityMatrix { rows }
}

fn render_findings(findings: &[ConsistencyFinding]) -> String {
    if findings.is_empty() {
        return "Automated consistency findings: none.".into();
    }
    let mut out = String::from("Automated consistency findings:\n");
    for f in findings {
        let refs: Vec<_> = f.reference.iter().map(|k| k.title()).collect();
        out.push_str(&format!("- {:?}: `{}` in the {} has no counterpart in {}\n", f.rule, f.entity, f.subject.title(), refs.join(" or ")));
    }
    out
}

/// Evaluation output: both reports.
#[derive(Debug, Clone)]
pub struct Assessment {
    pub atam: AtamReport,
    pub mismatches: MismatchReport,
}

pub fn evaluator_assess(
    ctx: &AgentContext<'_>,
    srs: &str,
    decomposition: &RequirementsDecomposition,
    views: &ViewModelSet,
    documentation: &ArchitectureDocumentation,
    rules: &OwnerRules,
    policy: DenominatorPolicy,
) -> Result<AgentOutcome<Assessment>, AgentError> {
    if !views.is_complete() {
        return Err(AgentError::ViewsIncomplete);
    }
    let total = decomposition.countable(policy) as u64;
    if total == 0 {
        return Err(AgentError::DenominatorZero);
    }
    let agent = AgentRole::Evaluator;
    let consistency = cross_view_check(views).map_err(|e| InvariantViolation(e.to_string()))?;
    let mut values = requirement_values(decomposition);
    values.insert(Placeholder::Srs, srs.to_string());
    values.insert(Placeholder::Ad, documentation.to_markdown());
    let views_text = render_views(views);

    values.insert(Placeholder::Av, views_text.clone());
    let prompt = ctx.render(agent, "atam", values.clone())?;
    let atam = ctx.ask(agent, "atam", &prompt, parse_atam).map_err(|e| e.into_parse_failure(agent, "atam"))?;

    values.insert(Placeholder::Av, format!("{views_text}{}", render_findings(&consistency)));
    let prompt = ctx.render(agent, "mismatch", values)?;
    let known = decomposition.ids();
    let found = ctx
        .ask(agent, "mismatch", &prompt, |t| parse_mismatches(t, &known, rules))
        .map_err(|e| e.into_parse_failure(agent, "mismatch"))?;

    let entries = found.artifact.clone();
    let report = MismatchReport {
        mismatch_rate: MismatchRate::new(entries.len() as u64, total).ok_or(AgentError::DenominatorZero)?,
        denominator_policy: policy,
        traceability: build_traceability(decomposition, views, &entries),
        consistency,
        mismatches: entries,
    };
    report.validate_against(decomposition)?;
    let assessment = Assessment { atam: atam.artifact.clone(), mismatches: report };
    Ok(combine(assessment, vec![atam.map(|_| ()), found.map(|_| ())]))
}
