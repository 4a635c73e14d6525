//! Prompt templates with `{NAME}` placeholders.
//!
//! A template file has three sections introduced by `[system]`, `[user]`
//! and `[format]` lines. The rendered user message is the user section
//! followed by the format section.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;

use crate::artifact::AgentRole;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Placeholder {
    Srs,
    Fr,
    Nfr,
    Asr,
    Dc,
    Av,
    Ad,
    Rk,
    Mr,
}

impl Placeholder {
    pub const ALL: [Placeholder; 9] = [
        Placeholder::Srs,
        Placeholder::Fr,
        Placeholder::Nfr,
        Placeholder::Asr,
        Placeholder::Dc,
        Placeholder::Av,
        Placeholder::Ad,
        Placeholder::Rk,
        Placeholder::Mr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Placeholder::Srs => "SRS",
            Placeholder::Fr => "FR",
            Placeholder::Nfr => "NFR",
            Placeholder::Asr => "ASR",
            Placeholder::Dc => "DC",
            Placeholder::Av => "AV",
            Placeholder::Ad => "AD",
            Placeholder::Rk => "RK",
            Placeholder::Mr => "MR",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("{origin}: missing `[{section}]` section")]
    MissingSection { origin: String, section: &'static str },
    #[error("{origin}: unknown placeholder `{{{name}}}`")]
    UnknownPlaceholder { origin: String, name: String },
    #[error("{origin}: {agent} templates may not use `{{{placeholder}}}`")]
    ForbiddenPlaceholder { origin: String, agent: AgentRole, placeholder: Placeholder },
    #[error("{origin}: the system section may not contain placeholders")]
    PlaceholderInSystem { origin: String },
    #[error("{origin}: no value supplied for `{{{placeholder}}}`")]
    MissingValue { origin: String, placeholder: Placeholder },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

static PLACEHOLDER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([A-Z][A-Z_]*)\}").expect("placeholder regex"));

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub agent: AgentRole,
    pub task: String,
    pub system_text: String,
    pub user_text: String,
    pub output_grammar: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system_text: String,
    pub user_text: String,
}

fn split_sections(text: &str) -> BTreeMap<&'static str, String> {
    let mut out: BTreeMap<&'static str, String> = BTreeMap::new();
    let mut current: Option<&'static str> = None;
    for line in text.lines() {
        let section = match line.trim() {
            "[system]" => Some("system"),
            "[user]" => Some("user"),
            "[format]" => Some("format"),
            _ => None,
        };
        if let Some(s) = section {
            current = Some(s);
            out.entry(s).or_default();
            continue;
        }
        if let Some(s) = current {
            let buf = out.entry(s).or_default();
            buf.push_str(line);
            buf.push('\n');
        }
    }
    for v in out.values_mut() {
        *v = v.trim().to_string();
    }
    out
}

/// Agents allowed to receive retrieved knowledge.
fn may_use_rk(agent: AgentRole) -> bool {
    matches!(agent, AgentRole::Modeler | AgentRole::Designer)
}

impl PromptTemplate {
    pub fn parse(agent: AgentRole, task: &str, text: &str, origin: &str) -> Result<Self, TemplateError> {
        let mut sections = split_sections(text);
        let mut take = |section: &'static str| {
            sections
                .remove(section)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| TemplateError::MissingSection { origin: origin.to_string(), section })
        };
        let template = PromptTemplate {
            agent,
            task: task.to_string(),
            system_text: take("system")?,
            user_text: take("user")?,
            output_grammar: take("format")?,
        };
        template.check(origin)?;
        Ok(template)
    }

    fn check(&self, origin: &str) -> Result<(), TemplateError> {
        if PLACEHOLDER_RE.is_match(&self.system_text) {
            return Err(TemplateError::PlaceholderInSystem { origin: origin.to_string() });
        }
        for p in self.placeholders_checked(origin)? {
            if p == Placeholder::Rk && !may_use_rk(self.agent) {
                return Err(TemplateError::ForbiddenPlaceholder {
                    origin: origin.to_string(),
                    agent: self.agent,
                    placeholder: p,
                });
            }
        }
        Ok(())
    }

    fn placeholders_checked(&self, origin: &str) -> Result<Vec<Placeholder>, TemplateError> {
        let mut out = Vec::new();
        for text in [&self.user_text, &self.output_grammar] {
            for cap in PLACEHOLDER_RE.captures_iter(text) {
                let name = &cap[1];
                let p = Placeholder::from_name(name).ok_or_else(|| TemplateError::UnknownPlaceholder {
                    origin: origin.to_string(),
                    name: name.to_string(),
                })?;
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        Ok(out)
    }

    /// Placeholders referenced by the template, in first-use order.
    pub fn placeholders(&self) -> Vec<Placeholder> {
        self.placeholders_checked("").unwrap_or_default()
    }

    pub fn render(&self, values: &BTreeMap<Placeholder, String>) -> Result<RenderedPrompt, TemplateError> {
        let origin = format!("{}/{}", self.agent, self.task);
        let fill = |text: &str| -> Result<String, TemplateError> {
            let mut out = String::with_capacity(text.len());
            let mut last = 0;
            for cap in PLACEHOLDER_RE.captures_iter(text) {
                let m = cap.get(0).expect("whole match");
                let p = Placeholder::from_name(&cap[1]).ok_or_else(|| TemplateError::UnknownPlaceholder {
                    origin: origin.clone(),
                    name: cap[1].to_string(),
                })?;
                let value = values
                    .get(&p)
                    .ok_or_else(|| TemplateError::MissingValue { origin: origin.clone(), placeholder: p })?;
                out.push_str(&text[last..m.start()]);
                out.push_str(value.trim_end());
                last = m.end();
            }
            out.push_str(&text[last..]);
            Ok(out)
        };
        let user = fill(&self.user_text)?;
        let grammar = fill(&self.output_grammar)?;
        Ok(RenderedPrompt { system_text: self.system_text.clone(), user_text: format!("{user}\n\n{grammar}\n") })
    }
}

/// Every (agent, task) pair the pipeline issues, with its built-in template.
pub const DEFAULT_TEMPLATES: [(AgentRole, &str, &str); 12] = [
    (AgentRole::Analyst, "fr", include_str!("../prompts/analyst/fr.txt")),
    (AgentRole::Analyst, "nfr", include_str!("../prompts/analyst/nfr.txt")),
    (AgentRole::Analyst, "asr", include_str!("../prompts/analyst/asr.txt")),
    (AgentRole::Analyst, "dc", include_str!("../prompts/analyst/dc.txt")),
    (AgentRole::Modeler, "logical_view", include_str!("../prompts/modeler/logical_view.txt")),
    (AgentRole::Modeler, "development_view", include_str!("../prompts/modeler/development_view.txt")),
    (AgentRole::Modeler, "process_view", include_str!("../prompts/modeler/process_view.txt")),
    (AgentRole::Modeler, "physical_view", include_str!("../prompts/modeler/physical_view.txt")),
    (AgentRole::Modeler, "scenario_view", include_str!("../prompts/modeler/scenario_view.txt")),
    (AgentRole::Designer, "documentation", include_str!("../prompts/designer/documentation.txt")),
    (AgentRole::Evaluator, "atam", include_str!("../prompts/evaluator/atam.txt")),
    (AgentRole::Evaluator, "mismatch", include_str!("../prompts/evaluator/mismatch.txt")),
];

#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<(AgentRole, String), PromptTemplate>,
}

impl PromptLibrary {
    pub fn builtin() -> Self {
        Self::load(None).expect("built-in templates are valid")
    }

    /// Built-in templates, each replaced by `<dir>/<agent>/<task>.txt` when
    /// that file exists.
    pub fn load(dir: Option<&Path>) -> Result<Self, TemplateError> {
        let mut templates = BTreeMap::new();
        for (agent, task, builtin) in DEFAULT_TEMPLATES {
            let path = dir.map(|d| d.join(agent.name()).join(format!("{task}.txt")));
            let template = match path.filter(|p| p.is_file()) {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)
                        .map_err(|e| TemplateError::Io { path: p.clone(), message: e.to_string() })?;
                    PromptTemplate::parse(agent, task, &text, &p.display().to_string())?
                }
                None => PromptTemplate::parse(agent, task, builtin, &format!("builtin {agent}/{task}"))?,
            };
            templates.insert((agent, task.to_string()), template);
        }
        Ok(PromptLibrary { templates })
    }

    pub fn get(&self, agent: AgentRole, task: &str) -> &PromptTemplate {
        self.templates
            .get(&(agent, task.to_string()))
            .unwrap_or_else(|| panic!("no template for {agent}/{task}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_and_respect_knowledge_scope() {
        let lib = PromptLibrary::builtin();
        assert_eq!(lib.iter().count(), 12);
        for t in lib.iter() {
            let uses_rk = t.placeholders().contains(&Placeholder::Rk);
            assert_eq!(uses_rk, may_use_rk(t.agent), "{}/{}", t.agent, t.task);
        }
        assert_eq!(lib.get(AgentRole::Analyst, "fr").placeholders(), vec![Placeholder::Srs, Placeholder::Mr]);
    }

    #[test]
    fn validation_rejects_bad_templates() {
        let t = "[system]\ns\n[user]\n{SRS} {RK}\n[format]\nf";
        assert!(matches!(
            PromptTemplate::parse(AgentRole::Analyst, "fr", t, "t"),
            Err(TemplateError::ForbiddenPlaceholder { placeholder: Placeholder::Rk, .. })
        ));
        assert!(PromptTemplate::parse(AgentRole::Modeler, "x", t, "t").is_ok());
        let unknown = "[system]\ns\n[user]\n{FOO}\n[format]\nf";
        assert!(matches!(
            PromptTemplate::parse(AgentRole::Modeler, "x", unknown, "t"),
            Err(TemplateError::UnknownPlaceholder { .. })
        ));
        let no_format = "[system]\ns\n[user]\nu";
        assert!(matches!(
            PromptTemplate::parse(AgentRole::Modeler, "x", no_format, "t"),
            Err(TemplateError::MissingSection { section: "format", .. })
        ));
    }

    #[test]
    fn rendering_fills_values_and_leaves_braces_alone() {
        let t = PromptTemplate::parse(
            AgentRole::Modeler,
            "x",
            "[system]\nsys\n[user]\nA {FR} B\npackage X {\n}\n[format]\nend {MR}",
            "t",
        )
        .unwrap();
        let values = BTreeMap::from([(Placeholder::Fr, "fr\n".to_string()), (Placeholder::Mr, "none".to_string())]);
        let r = t.render(&values).unwrap();
        assert_eq!(r.user_text, "A fr B\npackage X {\n}\n\nend none\n");
        assert!(matches!(t.render(&BTreeMap::new()), Err(TemplateError::MissingValue { .. })));
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("analyst")).unwrap();
        std::fs::write(dir.path().join("analyst/dc.txt"), "[system]\nS\n[user]\nU {SRS}\n[format]\nF").unwrap();
        let lib = PromptLibrary::load(Some(dir.path())).unwrap();
        assert_eq!(lib.get(AgentRole::Analyst, "dc").system_text, "S");
        assert_eq!(lib.get(AgentRole::Analyst, "fr"), PromptLibrary::builtin().get(AgentRole::Analyst, "fr"));
    }
}
