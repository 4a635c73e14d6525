//! Sequential agent pipeline with the mismatch-repair loop.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use archflow_puml::ViewKind;
use serde::{Deserialize, Serialize};

use crate::agents::{
    analyst_decompose, designer_generate_documentation, evaluator_assess, modeler_generate_views, AgentContext,
    AgentError, AgentOutcome, KeyCounter, KnowledgeAccess, OwnerRules, DEFAULT_MAX_PARSE_RETRIES,
};
use crate::artifact::{
    AgentRole, Artifact, ArtifactKind, DenominatorPolicy, EvaluationBundle, MismatchEntry, MismatchRate,
};
use crate::bundle::{to_json, write_bundle, BundleError};
use crate::gateway::{connect, ChatBackend, ModelSpec};
use crate::knowledge::{embedder_for, Embedder, EmbedderSpec, KnowledgeStore};
use crate::pool::{ArtifactPool, PoolError};
use crate::prompts::PromptLibrary;

fn default_k() -> usize {
    3
}
fn default_cap() -> u32 {
    2
}
fn default_true() -> bool {
    true
}
fn default_retries() -> u32 {
    DEFAULT_MAX_PARSE_RETRIES
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub embedder: EmbedderSpec,
    #[serde(default = "default_true")]
    pub knowledge_enabled: bool,
    #[serde(default)]
    pub knowledge_store: Option<PathBuf>,
    #[serde(default = "default_k")]
    pub retrieval_k: usize,
    #[serde(default = "default_cap")]
    pub max_repair_iterations: u32,
    #[serde(default)]
    pub repair_threshold: f64,
    #[serde(default)]
    pub denominator_policy: DenominatorPolicy,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_retries")]
    pub max_parse_retries: u32,
    #[serde(default)]
    pub prompts_dir: Option<PathBuf>,
    #[serde(default)]
    pub owner_rules: OwnerRules,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn new(model: ModelSpec) -> Self {
        RunConfig {
            model,
            embedder: EmbedderSpec::default(),
            knowledge_enabled: false,
            knowledge_store: None,
            retrieval_k: default_k(),
            max_repair_iterations: default_cap(),
            repair_threshold: 0.0,
            denominator_policy: DenominatorPolicy::default(),
            output_dir: default_output_dir(),
            max_parse_retries: default_retries(),
            prompts_dir: None,
            owner_rules: OwnerRules::default(),
        }
    }

    /// Reads a JSON config; relative paths inside it resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.model.script_path.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.knowledge_store.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.prompts_dir.as_mut() {
            resolve(p);
        }
        resolve(&mut cfg.output_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.embedder.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.retrieval_k == 0 {
            return bad("retrieval_k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.repair_threshold) {
            return bad(format!("repair_threshold {} is outside [0, 1]", self.repair_threshold));
        }
        if self.knowledge_enabled && self.knowledge_store.is_none() {
            return bad("knowledge_enabled requires knowledge_store".into());
        }
        self.owner_rules.validate().map_err(ConfigError::Invalid)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    ThresholdMet,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub mismatches: u64,
    pub total_requirements: u64,
    pub mismatch_rate: String,
    /// Agents re-run before this evaluation.
    pub repaired: Vec<AgentRole>,
}

impl IterationRecord {
    fn new(index: u32, rate: MismatchRate, repaired: Vec<AgentRole>) -> Self {
        IterationRecord {
            index,
            mismatches: rate.mismatches,
            total_requirements: rate.total,
            mismatch_rate: rate.render(),
            repaired,
        }
    }

    pub fn rate(&self) -> MismatchRate {
        MismatchRate { mismatches: self.mismatches, total: self.total_requirements }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model_name: String,
    pub knowledge_enabled: bool,
    pub retrieval_k: usize,
    pub srs_digest: String,
    pub iterations: Vec<IterationRecord>,
    pub terminated_by: Termination,
    pub final_bundle: EvaluationBundle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stage {
    pub agent: AgentRole,
    pub iteration: u32,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (iteration {})", self.agent, self.iteration)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run aborted at {stage}: {source}")]
    RunAborted { stage: Stage, source: AgentError },
    #[error("run aborted at {stage}: {source}")]
    Pool { stage: Stage, source: PoolError },
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

/// Partitions entries by suspected owner, each group ordered by entry id.
pub fn route_mismatches(entries: &[MismatchEntry]) -> BTreeMap<AgentRole, Vec<MismatchEntry>> {
    let mut groups: BTreeMap<AgentRole, Vec<MismatchEntry>> = BTreeMap::new();
    for e in entries {
        groups.entry(e.suspected_owner).or_default().push(e.clone());
    }
    for g in groups.values_mut() {
        g.sort_by(|a, b| a.id.cmp(&b.id));
    }
    groups
}

/// Agents to re-run for a set of owners, upstream first.
pub fn regeneration_plan(owners: &[AgentRole]) -> Vec<AgentRole> {
    let chain = [AgentRole::Analyst, AgentRole::Modeler, AgentRole::Designer];
    match chain.iter().position(|a| owners.contains(a)) {
        Some(first) => chain[first..].to_vec(),
        None => Vec::new(),
    }
}

/// Inputs that stay fixed for one run.
pub struct Pipeline<'a> {
    pub config: &'a RunConfig,
    pub backend: &'a dyn ChatBackend,
    pub prompts: &'a PromptLibrary,
    pub knowledge: Option<(&'a KnowledgeStore, &'a dyn Embedder)>,
    pub progress: &'a (dyn Fn(&str) + Sync),
}

struct RunState<'p> {
    pool: ArtifactPool,
    iteration: u32,
    progress: &'p (dyn Fn(&str) + Sync),
}

impl RunState<'_> {
    fn absorb<T>(&mut self, agent: AgentRole, outcome: &AgentOutcome<T>) {
        for t in &outcome.exchanges {
            self.pool.record_exchange(t.agent, t.task.clone(), t.exchange.clone());
        }
        for w in &outcome.warnings {
            (self.progress)(&format!("  {agent} note: {w}"));
        }
    }

    fn stage(&self, agent: AgentRole) -> Stage {
        Stage { agent, iteration: self.iteration }
    }

    fn append(&mut self, artifact: Artifact, agent: AgentRole) -> Result<(), OrchestratorError> {
        let stage = self.stage(agent);
        self.pool.append(artifact, agent).map(|_| ()).map_err(|source| OrchestratorError::Pool { stage, source })
    }
}

impl Pipeline<'_> {
    fn context<'s>(&'s self, keys: &'s KeyCounter) -> AgentContext<'s> {
        AgentContext {
            backend: self.backend,
            prompts: self.prompts,
            keys,
            knowledge: if self.config.knowledge_enabled {
                self.knowledge.map(|(store, embedder)| KnowledgeAccess { store, embedder, k: self.config.retrieval_k })
            } else {
                None
            },
            max_parse_retries: self.config.max_parse_retries,
        }
    }

    fn run_agent(
        &self,
        state: &mut RunState<'_>,
        ctx: &AgentContext<'_>,
        srs: &str,
        agent: AgentRole,
        repair: &[MismatchEntry],
    ) -> Result<(), OrchestratorError> {
        let abort = |state: &RunState<'_>| {
            let stage = state.stage(agent);
            move |source| OrchestratorError::RunAborted { stage, source }
        };
        (state.progress)(&format!("[{}] {agent}", state.iteration));
        match agent {
            AgentRole::Analyst => {
                let o = analyst_decompose(ctx, srs, repair).map_err(abort(state))?;
                state.absorb(agent, &o);
                let d = &o.artifact;
                (state.progress)(&format!(
                    "  {} FR in {} groups, {} NFR, {} ASR, {} DC",
                    d.functional.len(),
                    d.functional_groups().len(),
                    d.non_functional.len(),
                    d.asrs.len(),
                    d.design_constraints.len()
                ));
                state.append(Artifact::Decomposition(o.artifact), agent)?;
            }
            AgentRole::Modeler => {
                let d = state.pool.decomposition().expect("analyst ran first").clone();
                let revision = state.pool.next_revision(ArtifactKind::View(ViewKind::Logical));
                let o = modeler_generate_views(ctx, &d, revision, repair).map_err(abort(state))?;
                state.absorb(agent, &o);
                for view in ViewKind::ALL {
                    state.append(Artifact::View(o.artifact.view_artifact(view)), agent)?;
                }
                (state.progress)(&format!("  {} diagrams, revision {revision}", o.artifact.diagrams().count()));
            }
            AgentRole::Designer => {
                let d = state.pool.decomposition().expect("analyst ran first").clone();
                let views = state.pool.views().expect("modeler ran first");
                let o = designer_generate_documentation(ctx, &d, &views, repair).map_err(abort(state))?;
                state.absorb(agent, &o);
                (state.progress)(&format!("  7 sections, {} scaffold files", o.artifact.prototype_skeleton.files.len()));
                state.append(Artifact::Documentation(o.artifact), agent)?;
            }
            AgentRole::Evaluator => {
                let d = state.pool.decomposition().expect("analyst ran first").clone();
                let views = state.pool.views().expect("modeler ran first");
                let doc = state.pool.documentation().expect("designer ran first").clone();
                let o = evaluator_assess(ctx, srs, &d, &views, &doc, &self.config.owner_rules, self.config.denominator_policy)
                    .map_err(abort(state))?;
                state.absorb(agent, &o);
                let a = o.artifact;
                (state.progress)(&format!("  mismatch rate {}", a.mismatches.mismatch_rate));
                state.append(Artifact::AtamReport(a.atam), agent)?;
                state.append(Artifact::MismatchReport(a.mismatches), agent)?;
            }
        }
        Ok(())
    }

    pub fn run(&self, srs: &str) -> Result<(ArtifactPool, RunReport), OrchestratorError> {
        let keys = KeyCounter::default();
        let ctx = self.context(&keys);
        let mut state = RunState { pool: ArtifactPool::new(), iteration: 0, progress: self.progress };
        for agent in [AgentRole::Analyst, AgentRole::Modeler, AgentRole::Designer, AgentRole::Evaluator] {
            self.run_agent(&mut state, &ctx, srs, agent, &[])?;
        }
        let current_rate = |pool: &ArtifactPool| pool.mismatch_report().expect("evaluated").mismatch_rate;
        let mut iterations = vec![IterationRecord::new(0, current_rate(&state.pool), Vec::new())];
        let terminated_by = loop {
            let rate = current_rate(&state.pool);
            if !rate.exceeds(self.config.repair_threshold) {
                break Termination::ThresholdMet;
            }
            if state.iteration >= self.config.max_repair_iterations {
                break Termination::IterationCap;
            }
            let groups = route_mismatches(&state.pool.mismatch_report().expect("evaluated").mismatches);
            let owners: Vec<AgentRole> = groups.keys().copied().collect();
            let plan = regeneration_plan(&owners);
            state.iteration += 1;
            (state.progress)(&format!(
                "[{}] repairing {}",
                state.iteration,
                owners.iter().map(|a| a.name()).collect::<Vec<_>>().join(", ")
            ));
            for agent in &plan {
                let entries = groups.get(agent).cloned().unwrap_or_default();
                self.run_agent(&mut state, &ctx, srs, *agent, &entries)?;
            }
            self.run_agent(&mut state, &ctx, srs, AgentRole::Evaluator, &[])?;
            let new_rate = current_rate(&state.pool);
            iterations.push(IterationRecord::new(state.iteration, new_rate, owners));
            if !new_rate.lt(rate) && new_rate.exceeds(self.config.repair_threshold) {
                break Termination::Converged;
            }
        };
        let report = RunReport {
            model_name: self.backend.model_name().to_string(),
            knowledge_enabled: self.config.knowledge_enabled,
            retrieval_k: self.config.retrieval_k,
            srs_digest: state.pool.decomposition().expect("analysed").srs_digest.clone(),
            iterations,
            terminated_by,
            final_bundle: state.pool.evaluation().expect("evaluated"),
        };
        Ok((state.pool, report))
    }
}

pub type LoadedKnowledge = (KnowledgeStore, Box<dyn Embedder>);

/// Loads the knowledge store named by `config`, checking it against the
/// configured embedder.
pub fn load_knowledge(config: &RunConfig) -> Result<Option<LoadedKnowledge>, ConfigError> {
    if !config.knowledge_enabled {
        return Ok(None);
    }
    let path = config.knowledge_store.as_deref().ok_or_else(|| ConfigError::Invalid("no knowledge_store".into()))?;
    let store = KnowledgeStore::load(path).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let built = &store.header.embedder;
    if built.backend != config.embedder.backend || built.dimension != config.embedder.dimension {
        return Err(ConfigError::Invalid(format!(
            "{} was built with a {:?} embedder of dimension {}, config names {:?} with dimension {}",
            path.display(),
            built.backend,
            built.dimension,
            config.embedder.backend,
            config.embedder.dimension
        )));
    }
    if store.is_empty() {
        return Err(ConfigError::Invalid(format!("{} holds no segments", path.display())));
    }
    let embedder = embedder_for(&config.embedder).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(Some((store, embedder)))
}

#[derive(Debug)]
pub struct RunOutput {
    pub pool: ArtifactPool,
    pub report: RunReport,
    pub manifest_digest: String,
}

/// Full run from config: connects the backend, loads knowledge and
/// prompts, runs the pipeline and writes the bundle to `out_dir`.
pub fn run_pipeline(
    srs: &str,
    config: &RunConfig,
    out_dir: &Path,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<RunOutput, OrchestratorError> {
    config.validate()?;
    let backend = connect(&config.model).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let prompts = PromptLibrary::load(config.prompts_dir.as_deref()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let knowledge = load_knowledge(config)?;
    let pipeline = Pipeline {
        config,
        backend: backend.as_ref(),
        prompts: &prompts,
        knowledge: knowledge.as_ref().map(|(s, e)| (s, e.as_ref())),
        progress,
    };
    let (pool, report) = pipeline.run(srs)?;
    let manifest_digest = write_bundle(&pool, out_dir, BTreeMap::from([("run_report.json".to_string(), to_json(&report))]))?;
    Ok(RunOutput { pool, report, manifest_digest })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, owner: AgentRole) -> MismatchEntry {
        MismatchEntry {
            id: id.into(),
            description: String::new(),
            impact: String::new(),
            recommendation: String::new(),
            suspected_owner: owner,
            related_requirement_ids: vec![],
        }
    }

    #[test]
    fn routing() {
        assert!(route_mismatches(&[]).is_empty());
        let g = route_mismatches(&[
            entry("M-003", AgentRole::Modeler),
            entry("M-002", AgentRole::Designer),
            entry("M-001", AgentRole::Modeler),
        ]);
        assert_eq!(g.len(), 2);
        assert_eq!(g[&AgentRole::Modeler].iter().map(|e| e.id.as_str()).collect::<Vec<_>>(), vec!["M-001", "M-003"]);
        assert_eq!(g[&AgentRole::Designer].len(), 1);
    }

    #[test]
    fn plans_follow_the_dependency_chain() {
        use AgentRole::*;
        assert_eq!(regeneration_plan(&[Designer]), vec![Designer]);
        assert_eq!(regeneration_plan(&[Designer, Modeler]), vec![Modeler, Designer]);
        assert_eq!(regeneration_plan(&[Analyst]), vec![Analyst, Modeler, Designer]);
        assert!(regeneration_plan(&[]).is_empty());
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg: RunConfig = serde_json::from_str(r#"{"model": {"backend": "scripted", "model_name": "m", "script_path": "s.json"}, "knowledge_enabled": false}"#).unwrap();
        assert_eq!(cfg.retrieval_k, 3);
        assert_eq!(cfg.max_repair_iterations, 2);
        assert_eq!(cfg.repair_threshold, 0.0);
        assert_eq!(cfg.max_parse_retries, 2);
        cfg.validate().unwrap();
        let mut bad = cfg.clone();
        bad.retrieval_k = 0;
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.knowledge_enabled = true;
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"model": {"backend": "scripted", "model_name": "m"}, "api_key": "x"}"#).is_err());
    }
}
