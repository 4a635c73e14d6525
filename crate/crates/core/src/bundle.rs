//! On-disk run bundle: a deterministic directory tree plus a manifest that
//! carries the full pool log and a digest of every other file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifact::{sha256_hex, Artifact, ArtifactKind, DenominatorPolicy, RequirementCategory};
use crate::pool::ArtifactPool;

pub const MANIFEST: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;
const OWNED_DIRS: [&str; 4] = ["requirements", "views", "documentation", "evaluation"];

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("pool is empty")]
    EmptyPool,
    #[error("{0} exists, is not empty, and holds no run bundle")]
    NotABundle(PathBuf),
    #[error("{path} does not match its manifest digest")]
    DigestMismatch { path: String },
}

fn io(path: &Path, e: std::io::Error) -> BundleError {
    BundleError::Io { path: path.to_path_buf(), message: e.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub seq: u64,
    pub kind: ArtifactKind,
    pub producer: crate::artifact::AgentRole,
    pub revision: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub srs_digest: Option<String>,
    pub denominator_policy: Option<DenominatorPolicy>,
    pub log: Vec<ManifestEntry>,
    /// Current revision per artifact kind.
    pub current: BTreeMap<String, u32>,
    /// SHA-256 of every other file in the bundle, by relative path.
    pub files: BTreeMap<String, String>,
    pub pool: ArtifactPool,
}

impl Manifest {
    pub fn digest_bytes(bytes: &[u8]) -> String {
        sha256_hex(bytes)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("bundle values serialize");
    s.push('\n');
    s.into_bytes()
}

fn requirement_file(category: RequirementCategory) -> &'static str {
    match category {
        RequirementCategory::Functional => "requirements/fr.json",
        RequirementCategory::NonFunctional => "requirements/nfr.json",
        RequirementCategory::ArchitecturallySignificant => "requirements/asr.json",
        RequirementCategory::DesignConstraint => "requirements/dc.json",
    }
}

/// Files for the current artifacts of `pool`, excluding the manifest.
pub fn render_files(pool: &ArtifactPool) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for kind in ArtifactKind::ALL {
        let Some(entry) = pool.current(kind) else { continue };
        match &entry.artifact {
            Artifact::Decomposition(d) => {
                files.insert(requirement_file(RequirementCategory::Functional).into(), to_json(&d.functional));
                files.insert(requirement_file(RequirementCategory::NonFunctional).into(), to_json(&d.non_functional));
                files.insert(requirement_file(RequirementCategory::ArchitecturallySignificant).into(), to_json(&d.asrs));
                files.insert(requirement_file(RequirementCategory::DesignConstraint).into(), to_json(&d.design_constraints));
            }
            Artifact::View(v) => {
                for d in &v.diagrams {
                    let mut src = d.source.trim_end().to_string();
                    src.push('\n');
                    files.insert(format!("views/{}/{}.puml", v.view.slug(), d.kind.slug()), src.into_bytes());
                }
            }
            Artifact::Documentation(doc) => {
                files.insert("documentation/architecture.md".into(), doc.to_markdown().into_bytes());
                for f in &doc.prototype_skeleton.files {
                    files.insert(format!("documentation/skeleton/{}", f.path), f.content.clone().into_bytes());
                }
            }
            Artifact::AtamReport(a) => {
                let mut text = a.text.trim_end().to_string();
                text.push('\n');
                files.insert("evaluation/atam.md".into(), text.into_bytes());
            }
            Artifact::MismatchReport(m) => {
                files.insert(
                    "evaluation/mismatch.json".into(),
                    to_json(&json!({
                        "mismatches": m.mismatches,
                        "mismatch_rate": m.mismatch_rate,
                        "denominator_policy": m.denominator_policy,
                        "traceability": m.traceability,
                    })),
                );
                files.insert(
                    "evaluation/metrics.json".into(),
                    to_json(&json!({
                        "mismatches": m.mismatch_rate.mismatches,
                        "total_requirements": m.mismatch_rate.total,
                        "mismatch_rate": m.mismatch_rate.render(),
                    })),
                );
                files.insert("evaluation/consistency.json".into(), to_json(&m.consistency));
            }
        }
    }
    files
}

pub fn build_manifest(pool: &ArtifactPool, files: &BTreeMap<String, Vec<u8>>) -> Manifest {
    Manifest {
        format_version: FORMAT_VERSION,
        srs_digest: pool.decomposition().map(|d| d.srs_digest.clone()),
        denominator_policy: pool.mismatch_report().map(|m| m.denominator_policy),
        log: pool
            .entries()
            .iter()
            .map(|e| ManifestEntry { seq: e.seq, kind: e.kind, producer: e.producer, revision: e.revision })
            .collect(),
        current: ArtifactKind::ALL
            .iter()
            .filter_map(|k| pool.current(*k).map(|e| (k.to_string(), e.revision)))
            .collect(),
        files: files.iter().map(|(p, b)| (p.clone(), sha256_hex(b))).collect(),
        pool: pool.clone(),
    }
}

fn clear_previous(dir: &Path) -> Result<(), BundleError> {
    if !dir.exists() {
        return Ok(());
    }
    let mut listing = std::fs::read_dir(dir).map_err(|e| io(dir, e))?.peekable();
    if listing.peek().is_none() {
        return Ok(());
    }
    if !dir.join(MANIFEST).is_file() {
        return Err(BundleError::NotABundle(dir.to_path_buf()));
    }
    for sub in OWNED_DIRS {
        let p = dir.join(sub);
        if p.exists() {
            std::fs::remove_dir_all(&p).map_err(|e| io(&p, e))?;
        }
    }
    for entry in std::fs::read_dir(dir).map_err(|e| io(dir, e))? {
        let p = entry.map_err(|e| io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "json") && p.is_file() {
            std::fs::remove_file(&p).map_err(|e| io(&p, e))?;
        }
    }
    Ok(())
}

/// Writes the pool's bundle plus `extra` files into `dir`, replacing any
/// earlier bundle there. Returns the manifest digest.
pub fn write_bundle(pool: &ArtifactPool, dir: &Path, extra: BTreeMap<String, Vec<u8>>) -> Result<String, BundleError> {
    if pool.entries().is_empty() {
        return Err(BundleError::EmptyPool);
    }
    let mut files = render_files(pool);
    files.extend(extra);
    let manifest = to_json(&build_manifest(pool, &files));
    clear_previous(dir)?;
    for (rel, bytes) in &files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| io(&path, e))?;
    }
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let manifest_path = dir.join(MANIFEST);
    std::fs::write(&manifest_path, &manifest).map_err(|e| io(&manifest_path, e))?;
    Ok(sha256_hex(&manifest))
}

pub fn serialize_run(pool: &ArtifactPool, dir: &Path) -> Result<String, BundleError> {
    write_bundle(pool, dir, BTreeMap::new())
}

/// Reads and checks a bundle's manifest: file digests must match and the
/// stored mismatch rate must be re-derivable from the pool.
pub fn read_manifest(dir: &Path) -> Result<Manifest, BundleError> {
    let path = dir.join(MANIFEST);
    let bytes = std::fs::read(&path).map_err(|e| io(&path, e))?;
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| BundleError::Malformed { path: path.clone(), message: e.to_string() })?;
    for (rel, digest) in &manifest.files {
        let p = dir.join(rel);
        let content = std::fs::read(&p).map_err(|e| io(&p, e))?;
        if &sha256_hex(&content) != digest {
            return Err(BundleError::DigestMismatch { path: rel.clone() });
        }
    }
    if let (Some(report), Some(decomposition)) = (manifest.pool.mismatch_report(), manifest.pool.decomposition()) {
        report
            .validate_against(decomposition)
            .map_err(|e| BundleError::Malformed { path: path.clone(), message: e.0 })?;
    }
    Ok(manifest)
}

pub fn deserialize_run(dir: &Path) -> Result<ArtifactPool, BundleError> {
    Ok(read_manifest(dir)?.pool)
}

pub fn manifest_digest(dir: &Path) -> Result<String, BundleError> {
    let path = dir.join(MANIFEST);
    std::fs::read(&path).map(|b| sha256_hex(&b)).map_err(|e| io(&path, e))
}
