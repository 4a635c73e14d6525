//! The four role agents. Each renders its prompt from pool artifacts,
//! calls the gateway, and parses the reply into a typed artifact,
//! re-prompting with the parser's complaints when the reply is unusable.

mod analyst;
mod designer;
mod evaluator;
mod modeler;
mod text;

use std::collections::BTreeMap;
use std::sync::Mutex;

use archflow_puml::ViewKind;

use crate::artifact::{
    AgentRole, AsrRecord, InvariantViolation, MismatchEntry, RequirementItem, RequirementsDecomposition, ViewModelSet,
};
use crate::gateway::{script_key, ChatBackend, GatewayError};
use crate::knowledge::{format_context, Embedder, KnowledgeError, KnowledgeStore};
use crate::pool::TranscriptEntry;
use crate::prompts::{Placeholder, PromptLibrary, RenderedPrompt, TemplateError};

pub use analyst::{analyst_decompose, parse_asr_list, parse_requirement_list};
pub use designer::{designer_generate_documentation, parse_documentation};
pub use evaluator::{
    build_traceability, evaluator_assess, infer_owner, Assessment, parse_atam, parse_mismatches, OwnerRule, OwnerRules,
};
pub use modeler::{modeler_generate_views, parse_view_response};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Invariant(#[from] InvariantViolation),
    #[error("{agent}/{task}: reply still unusable after {attempts} attempt(s): {}", messages.join("; "))]
    ParseFailure { agent: AgentRole, task: String, attempts: u32, messages: Vec<String> },
    #[error("SRS text is empty")]
    EmptySrs,
    #[error("analyst returned no requirements at all")]
    EmptyDecomposition,
    #[error("{view} view incomplete after retries; failing kinds: {}", kinds.join(", "))]
    ViewIncomplete { view: ViewKind, kinds: Vec<String> },
    #[error("documentation section `{0}` missing after retries")]
    SectionMissing(String),
    #[error("decomposition has no countable requirements")]
    DenominatorZero,
    #[error("views are incomplete")]
    ViewsIncomplete,
}

/// Parsed artifact plus the exchanges that produced it.
#[derive(Debug, Clone)]
pub struct AgentOutcome<T> {
    pub artifact: T,
    pub exchanges: Vec<TranscriptEntry>,
    /// Largest number of attempts any single task needed.
    pub parse_attempts: u32,
    pub warnings: Vec<String>,
}

impl<T> AgentOutcome<T> {
    fn map<U>(self, f: impl FnOnce(T) -> U) -> AgentOutcome<U> {
        AgentOutcome { artifact: f(self.artifact), exchanges: self.exchanges, parse_attempts: self.parse_attempts, warnings: self.warnings }
    }
}

/// Per-(agent, task) request counter producing script keys.
#[derive(Debug, Default)]
pub struct KeyCounter {
    counts: Mutex<BTreeMap<(AgentRole, String), u32>>,
}

impl KeyCounter {
    pub fn next(&self, agent: AgentRole, task: &str) -> String {
        let mut counts = self.counts.lock().expect("key counter");
        let n = counts.entry((agent, task.to_string())).or_insert(0);
        *n += 1;
        script_key(agent.name(), task, *n)
    }
}

#[derive(Clone, Copy)]
pub struct KnowledgeAccess<'a> {
    pub store: &'a KnowledgeStore,
    pub embedder: &'a dyn Embedder,
    pub k: usize,
}

/// Everything an agent needs besides its input artifacts.
#[derive(Clone, Copy)]
pub struct AgentContext<'a> {
    pub backend: &'a dyn ChatBackend,
    pub prompts: &'a PromptLibrary,
    pub keys: &'a KeyCounter,
    pub knowledge: Option<KnowledgeAccess<'a>>,
    pub max_parse_retries: u32,
}

pub const DEFAULT_MAX_PARSE_RETRIES: u32 = 2;

fn feedback(messages: &[String]) -> String {
    let mut s = String::from("\n\nYour previous reply could not be used:\n");
    for m in messages {
        s.push_str("- ");
        s.push_str(m);
        s.push('\n');
    }
    s.push_str("Reply again, following the required layout exactly.\n");
    s
}

impl<'a> AgentContext<'a> {
    /// Renders a template, filling `{RK}` from the knowledge store when the
    /// template asks for it.
    pub fn render(
        &self,
        agent: AgentRole,
        task: &str,
        mut values: BTreeMap<Placeholder, String>,
    ) -> Result<RenderedPrompt, AgentError> {
        let template = self.prompts.get(agent, task);
        if template.placeholders().contains(&Placeholder::Rk) {
            let block = match self.knowledge {
                Some(kn) => {
                    values.insert(Placeholder::Rk, String::new());
                    let query = template.render(&values)?.user_text;
                    let hits = kn.store.retrieve(kn.embedder, &query, kn.k)?;
                    format_context(&hits)
                }
                None => format_context(&[]),
            };
            values.insert(Placeholder::Rk, block);
        } else {
            values.remove(&Placeholder::Rk);
        }
        Ok(template.render(&values)?)
    }

    /// Sends the prompt, parsing each reply with `parse`. Failed parses are
    /// retried with the parser's messages appended.
    pub(crate) fn ask<T>(
        &self,
        agent: AgentRole,
        task: &str,
        prompt: &RenderedPrompt,
        mut parse: impl FnMut(&str) -> Result<(T, Vec<String>), Vec<String>>,
    ) -> Result<AgentOutcome<T>, Exhausted> {
        let mut exchanges = Vec::new();
        let mut messages = Vec::new();
        let attempts = self.max_parse_retries + 1;
        for attempt in 1..=attempts {
            let user = if attempt == 1 { prompt.user_text.clone() } else { format!("{}{}", prompt.user_text, feedback(&messages)) };
            let key = self.keys.next(agent, task);
            let exchange = self.backend.complete(&key, &prompt.system_text, &user).map_err(Exhausted::Gateway)?;
            let parsed = parse(&exchange.response_text);
            exchanges.push(TranscriptEntry { agent, task: task.to_string(), exchange });
            match parsed {
                Ok((artifact, warnings)) => {
                    return Ok(AgentOutcome { artifact, exchanges, parse_attempts: attempt, warnings });
                }
                Err(m) => messages = m,
            }
        }
        Err(Exhausted::Parse { attempts, messages })
    }
}

pub(crate) enum Exhausted {
    Gateway(GatewayError),
    Parse { attempts: u32, messages: Vec<String> },
}

impl Exhausted {
    fn into_parse_failure(self, agent: AgentRole, task: &str) -> AgentError {
        match self {
            Exhausted::Gateway(e) => AgentError::Gateway(e),
            Exhausted::Parse { attempts, messages } => {
                AgentError::ParseFailure { agent, task: task.to_string(), attempts, messages }
            }
        }
    }
}

/// Merges several outcomes' bookkeeping into one.
fn combine<T>(artifact: T, parts: Vec<AgentOutcome<()>>) -> AgentOutcome<T> {
    let mut out = AgentOutcome { artifact, exchanges: Vec::new(), parse_attempts: 0, warnings: Vec::new() };
    for p in parts {
        out.exchanges.extend(p.exchanges);
        out.parse_attempts = out.parse_attempts.max(p.parse_attempts);
        out.warnings.extend(p.warnings);
    }
    out
}

const NONE: &str = "None.";

pub fn render_functional(items: &[RequirementItem]) -> String {
    if items.is_empty() {
        return NONE.into();
    }
    let mut out = String::new();
    let mut group: Option<&str> = None;
    for i in items {
        if i.group.as_deref() != group {
            group = i.group.as_deref();
            if let Some(g) = group {
                out.push_str(&format!("Category: {g}\n"));
            }
        }
        out.push_str(&format!("- {}: {}\n", i.id, i.text));
    }
    out
}

pub fn render_non_functional(items: &[RequirementItem]) -> String {
    if items.is_empty() {
        return NONE.into();
    }
    items
        .iter()
        .map(|i| {
            if i.quality_attributes.is_empty() {
                format!("- {}: {}\n", i.id, i.text)
            } else {
                format!("- {}: {}\n  Quality attributes: {}\n", i.id, i.text, i.quality_attributes.join(", "))
            }
        })
        .collect()
}

pub fn render_asrs(items: &[AsrRecord]) -> String {
    if items.is_empty() {
        return NONE.into();
    }
    items
        .iter()
        .map(|a| {
            let components = if a.related_components.is_empty() { "none".to_string() } else { a.related_components.join(", ") };
            format!(
                "- {}: {}\n  Quality attributes: {}\n  Architectural impact: {}\n  Related components: {}\n",
                a.base.id,
                a.base.text,
                a.base.quality_attributes.join(", "),
                a.architectural_impact,
                components
            )
        })
        .collect()
}

pub fn render_views(views: &ViewModelSet) -> String {
    let mut out = String::new();
    for view in ViewKind::ALL {
        out.push_str(&format!("{} View\n", view.title()));
        for d in views.slot(view) {
            out.push_str(&format!("### {}\n```plantuml\n{}\n```\n", d.kind.title(), d.source.trim()));
        }
        out.push('\n');
    }
    out
}

pub fn render_mismatches(entries: &[MismatchEntry]) -> String {
    if entries.is_empty() {
        return NONE.into();
    }
    entries
        .iter()
        .map(|m| {
            let ids: Vec<_> = m.related_requirement_ids.iter().map(|i| i.as_str()).collect();
            format!(
                "[{}]\nDescription: {}\nImpact: {}\nRecommendation: {}\nRelated requirements: {}\n",
                m.id,
                m.description,
                m.impact,
                m.recommendation,
                if ids.is_empty() { "none".to_string() } else { ids.join(", ") }
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Placeholder values derived from a decomposition.
pub fn requirement_values(d: &RequirementsDecomposition) -> BTreeMap<Placeholder, String> {
    BTreeMap::from([
        (Placeholder::Fr, render_functional(&d.functional)),
        (Placeholder::Nfr, render_non_functional(&d.non_functional)),
        (Placeholder::Asr, render_asrs(&d.asrs)),
        (Placeholder::Dc, render_non_functional(&d.design_constraints)),
    ])
}
