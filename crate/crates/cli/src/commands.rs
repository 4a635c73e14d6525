use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use archflow_core::artifact::{sha256_hex, ArtifactKind, DenominatorPolicy, MismatchRate};
use archflow_core::bundle::{read_manifest, Manifest};
use archflow_core::knowledge::{embedder_for, ingest as ingest_corpus, ChunkingConfig, EmbedderSpec, ThemeRule};
use archflow_core::orchestrator::{run_pipeline, OrchestratorError, RunConfig};
use archflow_puml::{fold_name, parse, DiagramKind};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Exit {
    Ok = 0,
    Failure = 1,
    Aborted = 2,
    Invalid = 3,
    Discrepancy = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: Exit,
    pub message: String,
}

type CliResult = Result<Exit, CliError>;

fn fail(message: impl Into<String>) -> CliError {
    CliError { code: Exit::Failure, message: message.into() }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| fail(format!("{}: {e}", path.display())))
}

pub fn run(srs_path: &Path, config_path: &Path, no_knowledge: bool, out: Option<&Path>) -> CliResult {
    let srs = read_text(srs_path)?;
    let mut config = RunConfig::load(config_path).map_err(|e| fail(e.to_string()))?;
    if no_knowledge {
        config.knowledge_enabled = false;
    }
    let out_dir = match out {
        Some(p) => p.to_path_buf(),
        None => config.output_dir.join(format!("run-{}", chrono::Local::now().format("%Y%m%d-%H%M%S"))),
    };
    let progress = |line: &str| eprintln!("{line}");
    let output = run_pipeline(&srs, &config, &out_dir, &progress).map_err(|e| match e {
        OrchestratorError::RunAborted { .. } | OrchestratorError::Pool { .. } => {
            CliError { code: Exit::Aborted, message: e.to_string() }
        }
        other => fail(other.to_string()),
    })?;
    let r = &output.report;
    println!("bundle: {}", out_dir.display());
    println!("manifest_digest: {}", output.manifest_digest);
    println!("knowledge_enabled: {}", r.knowledge_enabled);
    println!("iterations: {}", r.iterations.len());
    println!("terminated_by: {:?}", r.terminated_by);
    println!("mismatch_rate: {}", r.final_bundle.mismatch_rate);
    Ok(Exit::Ok)
}

pub fn ingest(
    sources: &[PathBuf],
    store_path: &Path,
    chunk: usize,
    overlap: usize,
    themes: Option<&Path>,
    config: Option<&Path>,
) -> CliResult {
    let texts = sources
        .iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string());
            read_text(p).map(|t| (name, t))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rules: Vec<ThemeRule> = match themes {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| fail(format!("{}: {e}", p.display())))?,
        None => Vec::new(),
    };
    let spec = match config {
        Some(p) => RunConfig::load(p).map_err(|e| fail(e.to_string()))?.embedder,
        None => EmbedderSpec::default(),
    };
    let embedder = embedder_for(&spec).map_err(|e| fail(e.to_string()))?;
    let store = ingest_corpus(&texts, &ChunkingConfig::new(chunk, overlap), &rules, embedder.as_ref())
        .map_err(|e| fail(e.to_string()))?;
    store.save(store_path).map_err(|e| fail(e.to_string()))?;
    let mut histogram: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &store.segments {
        *histogram.entry(&s.theme_tag).or_default() += 1;
    }
    println!("store: {}", store_path.display());
    println!("segments: {}", store.len());
    for (tag, n) in histogram {
        println!("  {tag}: {n}");
    }
    println!("digest: {}", sha256_hex(store.to_json().as_bytes()));
    Ok(Exit::Ok)
}

fn puml_files(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| fail(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for e in entries {
            if e.is_dir() || e.extension().is_some_and(|x| x == "puml") {
                puml_files(&e, out)?;
            }
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

pub fn validate(paths: &[PathBuf], kind: Option<&str>) -> CliResult {
    let forced: Option<DiagramKind> = kind.map(|k| k.parse().map_err(|e| fail(format!("--kind: {e}")))).transpose()?;
    let mut files = Vec::new();
    for p in paths {
        puml_files(p, &mut files)?;
    }
    let mut invalid = 0;
    for file in &files {
        let source = read_text(file)?;
        let shown = file.display();
        let inferred = forced.or_else(|| file.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse().ok()));
        let Some(k) = inferred else {
            invalid += 1;
            println!("{shown}: invalid");
            println!("  cannot infer the diagram kind from the file name; pass --kind");
            continue;
        };
        match parse(&source, k) {
            Ok(g) => {
                println!("{shown}: valid {} ({} entities, {} relations)", k.slug(), g.entities.len(), g.relations.len());
                for w in &g.warnings {
                    eprintln!("{shown}: warning: {w}");
                }
            }
            Err(errors) => {
                invalid += 1;
                println!("{shown}: invalid {}", k.slug());
                for e in errors {
                    println!("  {e}");
                }
            }
        }
    }
    println!("{} file(s), {} invalid", files.len(), invalid);
    Ok(if invalid == 0 { Exit::Ok } else { Exit::Invalid })
}

fn read_json(dir: &Path, rel: &str) -> Result<Value, CliError> {
    let path = dir.join(rel);
    serde_json::from_str(&read_text(&path)?).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn array_len(v: &Value, what: &str) -> Result<u64, CliError> {
    v.as_array().map(|a| a.len() as u64).ok_or_else(|| fail(format!("{what} is not a list")))
}

fn stored_rate(v: &Value, what: &str) -> Result<MismatchRate, CliError> {
    serde_json::from_value(v.clone()).map_err(|e| fail(format!("{what}: {e}")))
}

pub fn metrics(run_dir: &Path) -> CliResult {
    let report = read_json(run_dir, "evaluation/mismatch.json")?;
    let policy: DenominatorPolicy = serde_json::from_value(report["denominator_policy"].clone())
        .map_err(|e| fail(format!("mismatch.json denominator_policy: {e}")))?;
    let mut counts = BTreeMap::new();
    for f in ["fr", "nfr", "asr", "dc"] {
        counts.insert(f, array_len(&read_json(run_dir, &format!("requirements/{f}.json"))?, f)?);
    }
    let total = match policy {
        DenominatorPolicy::FunctionalAndNonFunctional => counts["fr"] + counts["nfr"],
        DenominatorPolicy::AllRequirements => counts.values().sum(),
    };
    let mismatches = array_len(&report["mismatches"], "mismatch.json mismatches")?;
    let rate = MismatchRate::new(mismatches, total).ok_or_else(|| fail("bundle has no countable requirements"))?;
    println!("{rate}");

    let mut discrepancies = Vec::new();
    if stored_rate(&report["mismatch_rate"], "mismatch.json mismatch_rate")? != rate {
        discrepancies.push("mismatch.json mismatch_rate".to_string());
    }
    let stored = read_json(run_dir, "evaluation/metrics.json")?;
    if stored["mismatches"].as_u64() != Some(mismatches) {
        discrepancies.push(format!("metrics.json mismatches = {}", stored["mismatches"]));
    }
    if stored["total_requirements"].as_u64() != Some(total) {
        discrepancies.push(format!("metrics.json total_requirements = {}", stored["total_requirements"]));
    }
    if stored["mismatch_rate"].as_str() != Some(rate.render().as_str()) {
        discrepancies.push(format!("metrics.json mismatch_rate = {}", stored["mismatch_rate"]));
    }
    if discrepancies.is_empty() {
        return Ok(Exit::Ok);
    }
    for d in discrepancies {
        eprintln!("warning: stored value disagrees with the recomputed rate: {d}");
    }
    Ok(Exit::Discrepancy)
}

fn load_bundle(dir: &Path) -> Result<Manifest, CliError> {
    read_manifest(dir).map_err(|e| fail(format!("{}: {e}", dir.display())))
}

fn entity_sets(m: &Manifest) -> BTreeMap<DiagramKind, BTreeSet<String>> {
    let Some(views) = m.pool.views() else { return BTreeMap::new() };
    views
        .graphs()
        .into_iter()
        .map(|(k, g)| (k, g.entities.iter().map(|e| fold_name(e.display_name())).collect()))
        .collect()
}

fn list(set: &BTreeSet<&String>) -> String {
    set.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
}

pub fn compare(a_dir: &Path, b_dir: &Path) -> CliResult {
    let a = load_bundle(a_dir)?;
    let b = load_bundle(b_dir)?;
    if a.srs_digest != b.srs_digest {
        eprintln!("warning: the runs were produced from different SRS inputs");
    }
    let mut differences = 0;
    for kind in ArtifactKind::ALL {
        let ra = a.pool.current(kind).map(|e| e.revision);
        let rb = b.pool.current(kind).map(|e| e.revision);
        if ra != rb {
            differences += 1;
            let show = |r: Option<u32>| r.map_or("absent".to_string(), |r| format!("rev {r}"));
            println!("artifact {kind}: {} vs {}", show(ra), show(rb));
        }
    }
    let (ea, eb) = (entity_sets(&a), entity_sets(&b));
    let empty = BTreeSet::new();
    for kind in DiagramKind::ALL {
        let sa = ea.get(&kind).unwrap_or(&empty);
        let sb = eb.get(&kind).unwrap_or(&empty);
        let only_a: BTreeSet<_> = sa.difference(sb).collect();
        let only_b: BTreeSet<_> = sb.difference(sa).collect();
        if !only_a.is_empty() || !only_b.is_empty() {
            differences += 1;
            println!("{}: only in A [{}]; only in B [{}]", kind.slug(), list(&only_a), list(&only_b));
        }
    }
    let rate = |m: &Manifest| m.pool.mismatch_report().map_or("none".to_string(), |r| r.mismatch_rate.to_string());
    println!("mismatch_rate: A {} | B {}", rate(&a), rate(&b));
    println!("differences: {differences}");
    Ok(Exit::Ok)
}
