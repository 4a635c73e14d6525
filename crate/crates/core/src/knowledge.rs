//! Reference-knowledge store: chunking, embedding, and exact cosine retrieval.

use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::artifact::sha256_hex;
use crate::gateway::{post_json, GatewayError, RetryPolicy};

pub const NO_KNOWLEDGE_SENTINEL: &str = "No reference knowledge available.";
pub const DEFAULT_THEME: &str = "general";
const STORE_FORMAT: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("embedding failed: {0}")]
    EmbeddingFailure(String),
    #[error("corpus contains no text")]
    EmptyCorpus,
    #[error("invalid chunking config: {0}")]
    InvalidChunking(String),
    #[error("invalid theme rule `{pattern}`: {message}")]
    InvalidThemeRule { pattern: String, message: String },
    #[error("invalid store: {0}")]
    InvalidStore(String),
    #[error("store is empty")]
    EmptyStore,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl From<GatewayError> for KnowledgeError {
    fn from(e: GatewayError) -> Self {
        KnowledgeError::EmbeddingFailure(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderBackend {
    HttpEmbedding,
    HashMock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub backend: EmbedderBackend,
    pub dimension: usize,
    #[serde(default)]
    pub model_name: Option<String>,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub auth_env_var: Option<String>,
    #[serde(default = "default_embed_timeout")]
    pub request_timeout_secs: f64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_embed_timeout() -> f64 {
    60.0
}

impl EmbedderSpec {
    pub fn hash_mock(dimension: usize) -> Self {
        EmbedderSpec {
            backend: EmbedderBackend::HashMock,
            dimension,
            model_name: None,
            endpoint_url: None,
            auth_env_var: None,
            request_timeout_secs: default_embed_timeout(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<(), KnowledgeError> {
        let bad = |m: &str| Err(KnowledgeError::InvalidStore(m.to_string()));
        if self.dimension == 0 {
            return bad("embedding dimension must be positive");
        }
        if self.backend == EmbedderBackend::HttpEmbedding {
            if self.endpoint_url.as_deref().is_none_or(str::is_empty) {
                return bad("http embedder requires endpoint_url");
            }
            if self.auth_env_var.as_deref().is_none_or(str::is_empty) {
                return bad("http embedder requires auth_env_var");
            }
            if self.model_name.as_deref().is_none_or(str::is_empty) {
                return bad("http embedder requires model_name");
            }
        }
        Ok(())
    }
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::hash_mock(256)
    }
}

pub trait Embedder: Send + Sync {
    fn spec(&self) -> &EmbedderSpec;
    /// Unit-normalized embeddings, one per input.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, KnowledgeError>;
}

pub fn embedder_for(spec: &EmbedderSpec) -> Result<Box<dyn Embedder>, KnowledgeError> {
    spec.validate()?;
    Ok(match spec.backend {
        EmbedderBackend::HashMock => Box::new(HashEmbedder { spec: spec.clone() }),
        EmbedderBackend::HttpEmbedding => Box::new(HttpEmbedder::new(spec.clone())?),
    })
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic bag-of-tokens pseudo-embedding.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    spec: EmbedderSpec,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        HashEmbedder { spec: EmbedderSpec::hash_mock(dimension) }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let d = self.spec.dimension;
        let mut v = vec![0.0; d];
        for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = fnv1a(token.to_lowercase().as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % d as u64) as usize] += sign;
        }
        if v.iter().all(|x| *x == 0.0) {
            v[(fnv1a(text.as_bytes()) % d as u64) as usize] = 1.0;
        }
        normalize(&mut v);
        v
    }
}

impl Embedder for HashEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, KnowledgeError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// OpenAI-compatible `/embeddings` client.
pub struct HttpEmbedder {
    spec: EmbedderSpec,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(spec: EmbedderSpec) -> Result<Self, KnowledgeError> {
        spec.validate()?;
        let client = crate::gateway::http_client(spec.request_timeout_secs)?;
        Ok(HttpEmbedder { spec, client })
    }
}

impl Embedder for HttpEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, KnowledgeError> {
        let token = crate::gateway::credential(self.spec.auth_env_var.as_deref().unwrap_or_default())?;
        let url = crate::gateway::join_url(self.spec.endpoint_url.as_deref().unwrap_or_default(), "embeddings");
        let body = json!({"model": self.spec.model_name, "input": texts});
        let (value, _) = post_json(&self.client, &url, &token, &body, &self.spec.retry)?;
        let data = value
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| KnowledgeError::EmbeddingFailure("response lacks `data`".into()))?;
        if data.len() != texts.len() {
            return Err(KnowledgeError::EmbeddingFailure(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                data.len()
            )));
        }
        let mut ordered: Vec<(usize, Vec<f64>)> = Vec::with_capacity(data.len());
        for (i, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map_or(i, |x| x as usize);
            let mut v: Vec<f64> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| KnowledgeError::EmbeddingFailure("item lacks `embedding`".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| KnowledgeError::EmbeddingFailure("non-numeric component".into())))
                .collect::<Result<_, _>>()?;
            if v.len() != self.spec.dimension {
                return Err(KnowledgeError::EmbeddingFailure(format!(
                    "expected dimension {}, got {}",
                    self.spec.dimension,
                    v.len()
                )));
            }
            if !normalize(&mut v) {
                return Err(KnowledgeError::EmbeddingFailure("zero-norm embedding".into()));
            }
            ordered.push((index, v));
        }
        ordered.sort_by_key(|(i, _)| *i);
        Ok(ordered.into_iter().map(|(_, v)| v).collect())
    }
}

/// Scales `v` to unit length; false if it is the zero vector.
pub fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    pub target_chars: usize,
    pub overlap_chars: usize,
    pub min_chars: usize,
    pub max_chars: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig::new(1200, 200)
    }
}

impl ChunkingConfig {
    pub fn new(target_chars: usize, overlap_chars: usize) -> Self {
        ChunkingConfig { target_chars, overlap_chars, min_chars: 1, max_chars: target_chars * 2 }
    }

    pub fn validate(&self) -> Result<(), KnowledgeError> {
        let bad = |m: String| Err(KnowledgeError::InvalidChunking(m));
        if self.target_chars <= self.overlap_chars {
            return bad(format!("target_chars ({}) must exceed overlap_chars ({})", self.target_chars, self.overlap_chars));
        }
        if self.min_chars == 0 || self.min_chars > self.target_chars / 2 {
            return bad(format!("min_chars must be in [1, {}]", self.target_chars / 2));
        }
        let longest = self.target_chars + self.target_chars / 2 + self.min_chars;
        if self.max_chars < longest {
            return bad(format!("max_chars must be at least {longest}"));
        }
        Ok(())
    }
}

/// Character ranges `[start, end)` of the chunks of `text`.
///
/// Cuts prefer the paragraph break closest to `target_chars`, then a
/// whitespace boundary, then a hard cut. A tail shorter than `min_chars`
/// is folded into the preceding chunk.
pub fn chunk_ranges(text: &str, cfg: &ChunkingConfig) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let len = chars.len();
    let t = cfg.target_chars;
    let mut ranges = Vec::new();
    let mut start = 0;
    while start < len {
        if len - start <= t {
            ranges.push((start, len));
            break;
        }
        let lo = start + t / 2;
        let hi = (start + t + t / 2).min(len);
        let ideal = start + t;
        let paragraph = (lo..hi)
            .filter(|&i| i >= 2 && chars[i - 1] == '\n' && chars[i - 2] == '\n')
            .min_by_key(|&i| (i.abs_diff(ideal), i));
        let whitespace = || (lo.max(1)..=ideal).rev().find(|&i| chars[i - 1].is_whitespace());
        let mut cut = paragraph.or_else(whitespace).unwrap_or(ideal);
        if len - cut < cfg.min_chars {
            cut = len;
        }
        ranges.push((start, cut));
        if cut == len {
            break;
        }
        start = cut.saturating_sub(cfg.overlap_chars).max(start + 1);
    }
    ranges
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeRule {
    pub pattern: String,
    pub tag: String,
}

impl ThemeRule {
    pub fn new(pattern: impl Into<String>, tag: impl Into<String>) -> Self {
        ThemeRule { pattern: pattern.into(), tag: tag.into() }
    }
}

fn compile_rules(rules: &[ThemeRule]) -> Result<Vec<(Regex, &str)>, KnowledgeError> {
    rules
        .iter()
        .map(|r| {
            RegexBuilder::new(&r.pattern)
                .case_insensitive(true)
                .build()
                .map(|re| (re, r.tag.as_str()))
                .map_err(|e| KnowledgeError::InvalidThemeRule { pattern: r.pattern.clone(), message: e.to_string() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSegment {
    pub segment_id: String,
    pub source_name: String,
    pub theme_tag: String,
    pub text: String,
    /// Character offsets of the segment within its source.
    pub start_char: usize,
    pub end_char: usize,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub format_version: u32,
    pub embedder: EmbedderSpec,
    pub dimension: usize,
    pub corpus_digest: String,
    pub chunking: ChunkingConfig,
    pub theme_rules: Vec<ThemeRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeStore {
    pub header: StoreHeader,
    pub segments: Vec<KnowledgeSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<'a> {
    pub segment: &'a KnowledgeSegment,
    pub score: f64,
}

/// Digest over source names and texts, independent of chunking.
pub fn corpus_digest(texts: &[(String, String)]) -> String {
    let mut buf = Vec::new();
    for (name, text) in texts {
        buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(text.len() as u64).to_le_bytes());
        buf.extend_from_slice(text.as_bytes());
    }
    sha256_hex(&buf)
}

const EMBED_BATCH: usize = 64;

pub fn ingest(
    texts: &[(String, String)],
    chunking: &ChunkingConfig,
    theme_rules: &[ThemeRule],
    embedder: &dyn Embedder,
) -> Result<KnowledgeStore, KnowledgeError> {
    chunking.validate()?;
    let rules = compile_rules(theme_rules)?;
    let mut segments = Vec::new();
    for (source, text) in texts {
        let chars: Vec<char> = text.chars().collect();
        for (start, end) in chunk_ranges(text, chunking) {
            let body: String = chars[start..end].iter().collect();
            if body.trim().is_empty() {
                continue;
            }
            let theme_tag = rules
                .iter()
                .find(|(re, _)| re.is_match(&body))
                .map_or(DEFAULT_THEME, |(_, tag)| tag)
                .to_string();
            segments.push(KnowledgeSegment {
                segment_id: String::new(),
                source_name: source.clone(),
                theme_tag,
                text: body,
                start_char: start,
                end_char: end,
                embedding: Vec::new(),
            });
        }
    }
    if segments.is_empty() {
        return Err(KnowledgeError::EmptyCorpus);
    }
    let width = segments.len().to_string().len().max(4);
    for (i, seg) in segments.iter_mut().enumerate() {
        seg.segment_id = format!("seg-{:0width$}", i + 1);
    }
    for batch in segments.chunks_mut(EMBED_BATCH) {
        let inputs: Vec<&str> = batch.iter().map(|s| s.text.as_str()).collect();
        let vectors = embedder.embed(&inputs)?;
        if vectors.len() != batch.len() {
            return Err(KnowledgeError::EmbeddingFailure("embedder returned the wrong number of vectors".into()));
        }
        for (seg, v) in batch.iter_mut().zip(vectors) {
            seg.embedding = v;
        }
    }
    let spec = embedder.spec().clone();
    let store = KnowledgeStore {
        header: StoreHeader {
            format_version: STORE_FORMAT,
            dimension: spec.dimension,
            embedder: spec,
            corpus_digest: corpus_digest(texts),
            chunking: *chunking,
            theme_rules: theme_rules.to_vec(),
        },
        segments,
    };
    store.validate()?;
    Ok(store)
}

impl KnowledgeStore {
    pub fn validate(&self) -> Result<(), KnowledgeError> {
        let bad = |m: String| Err(KnowledgeError::InvalidStore(m));
        if self.header.format_version != STORE_FORMAT {
            return bad(format!("unsupported store format {}", self.header.format_version));
        }
        if self.header.embedder.dimension != self.header.dimension {
            return bad("header dimension disagrees with its embedder spec".into());
        }
        let c = &self.header.chunking;
        for s in &self.segments {
            if s.embedding.len() != self.header.dimension {
                return bad(format!("{} has dimension {}, store has {}", s.segment_id, s.embedding.len(), self.header.dimension));
            }
            let norm = s.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return bad(format!("{} embedding is not unit length", s.segment_id));
            }
            let n = s.text.chars().count();
            if n == 0 || n > c.max_chars {
                return bad(format!("{} length {n} is outside the configured bounds", s.segment_id));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Top-`k` segments by cosine similarity to `query`.
    pub fn retrieve_vector(&self, query: &[f64], k: usize) -> Result<Vec<Hit<'_>>, KnowledgeError> {
        if k == 0 {
            return Err(KnowledgeError::ZeroK);
        }
        if self.segments.is_empty() {
            return Err(KnowledgeError::EmptyStore);
        }
        if query.len() != self.header.dimension {
            return Err(KnowledgeError::EmbeddingFailure(format!(
                "query dimension {} does not match store dimension {}",
                query.len(),
                self.header.dimension
            )));
        }
        let mut hits: Vec<Hit<'_>> = self
            .segments
            .iter()
            .map(|segment| Hit { segment, score: cosine(query, &segment.embedding) })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.segment.segment_id.cmp(&b.segment.segment_id)));
        hits.truncate(k);
        Ok(hits)
    }

    pub fn retrieve(&self, embedder: &dyn Embedder, query: &str, k: usize) -> Result<Vec<Hit<'_>>, KnowledgeError> {
        if embedder.spec().dimension != self.header.dimension {
            return Err(KnowledgeError::InvalidStore("query embedder dimension differs from the store".into()));
        }
        let q = embedder
            .embed(&[query])?
            .pop()
            .ok_or_else(|| KnowledgeError::EmbeddingFailure("no query embedding returned".into()))?;
        self.retrieve_vector(&q, k)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("store serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), KnowledgeError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| KnowledgeError::Io { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        let io = |m: String| KnowledgeError::Io { path: path.display().to_string(), message: m };
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        let store: KnowledgeStore = serde_json::from_str(&text).map_err(|e| io(e.to_string()))?;
        store.validate()?;
        Ok(store)
    }
}

/// Prompt fragment listing retrieved segments in rank order.
pub fn format_context(hits: &[Hit<'_>]) -> String {
    if hits.is_empty() {
        return format!("{NO_KNOWLEDGE_SENTINEL}\n");
    }
    let blocks: Vec<String> = hits
        .iter()
        .enumerate()
        .map(|(i, h)| {
            format!(
                "[RK-{} | {} | {}]\n{}\n",
                i + 1,
                h.segment.theme_tag,
                h.segment.source_name,
                h.segment.text.trim()
            )
        })
        .collect();
    blocks.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(name: &str, text: &str) -> Vec<(String, String)> {
        vec![(name.to_string(), text.to_string())]
    }

    #[test]
    fn short_text_is_one_segment() {
        let store = ingest(&corpus("a", "0123456789"), &ChunkingConfig::new(1000, 0), &[], &HashEmbedder::new(16)).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.segments[0].text, "0123456789");
        assert_eq!(store.segments[0].theme_tag, DEFAULT_THEME);
    }

    #[test]
    fn theme_rules_apply_first_match() {
        let rules = [ThemeRule::new("layered", "layered-architecture"), ThemeRule::new("layer", "other")];
        let store = ingest(&corpus("a", "A Layered style."), &ChunkingConfig::new(100, 0), &rules, &HashEmbedder::new(16)).unwrap();
        assert_eq!(store.segments[0].theme_tag, "layered-architecture");
        let bad = [ThemeRule::new("(", "x")];
        assert!(matches!(
            ingest(&corpus("a", "x"), &ChunkingConfig::new(100, 0), &bad, &HashEmbedder::new(16)),
            Err(KnowledgeError::InvalidThemeRule { .. })
        ));
    }

    #[test]
    fn empty_corpus_and_bad_config() {
        let e = HashEmbedder::new(8);
        assert!(matches!(ingest(&corpus("a", "  \n"), &ChunkingConfig::default(), &[], &e), Err(KnowledgeError::EmptyCorpus)));
        assert!(matches!(ingest(&[], &ChunkingConfig::default(), &[], &e), Err(KnowledgeError::EmptyCorpus)));
        assert!(ChunkingConfig::new(100, 100).validate().is_err());
        assert!(ChunkingConfig::new(100, 99).validate().is_ok());
    }

    #[test]
    fn paragraph_break_nearest_target_wins() {
        let text = format!("{}\n\n{}\n\n{}", "a".repeat(60), "b".repeat(35), "c".repeat(80));
        let r = chunk_ranges(&text, &ChunkingConfig::new(100, 0));
        assert_eq!(r[0], (0, 99));
    }

    #[test]
    fn hash_embeddings_are_unit_and_deterministic() {
        let e = HashEmbedder::new(32);
        for t in ["layered architecture", "", "!!!", "ünïcode wörds"] {
            let v = e.embed_one(t);
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12, "{t}");
            assert_eq!(v, e.embed_one(t));
        }
        assert_eq!(e.embed_one("Layered"), e.embed_one("layered"));
    }

    #[test]
    fn identical_and_orthogonal_queries() {
        let mut v = vec![0.0; 4];
        v[0] = 1.0;
        let store = KnowledgeStore {
            header: StoreHeader {
                format_version: STORE_FORMAT,
                embedder: EmbedderSpec::hash_mock(4),
                dimension: 4,
                corpus_digest: String::new(),
                chunking: ChunkingConfig::default(),
                theme_rules: vec![],
            },
            segments: vec![KnowledgeSegment {
                segment_id: "seg-0001".into(),
                source_name: "s".into(),
                theme_tag: "t".into(),
                text: "x".into(),
                start_char: 0,
                end_char: 1,
                embedding: v.clone(),
            }],
        };
        assert_eq!(store.retrieve_vector(&v, 3).unwrap()[0].score, 1.0);
        assert_eq!(store.retrieve_vector(&[0.0, 1.0, 0.0, 0.0], 1).unwrap()[0].score, 0.0);
        assert!(matches!(store.retrieve_vector(&v, 0), Err(KnowledgeError::ZeroK)));
        assert!(store.retrieve_vector(&[1.0], 1).is_err());
    }

    #[test]
    fn context_formatting() {
        assert_eq!(format_context(&[]), format!("{NO_KNOWLEDGE_SENTINEL}\n"));
        let seg = |id: &str, tag: &str| KnowledgeSegment {
            segment_id: id.into(),
            source_name: "sap-3e".into(),
            theme_tag: tag.into(),
            text: format!("body {id}\n"),
            start_char: 0,
            end_char: 1,
            embedding: vec![1.0],
        };
        let (a, b) = (seg("seg-1", "layers"), seg("seg-2", "general"));
        let hits = [Hit { segment: &a, score: 0.9 }, Hit { segment: &b, score: 0.5 }];
        let text = format_context(&hits);
        assert_eq!(text, "[RK-1 | layers | sap-3e]\nbody seg-1\n\n[RK-2 | general | sap-3e]\nbody seg-2\n");
        assert_eq!(text, format_context(&hits));
    }
}
