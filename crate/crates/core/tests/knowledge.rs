use archflow_core::knowledge::{
    chunk_ranges, corpus_digest, format_context, ingest, ChunkingConfig, HashEmbedder, KnowledgeSegment, KnowledgeStore,
    ThemeRule, NO_KNOWLEDGE_SENTINEL,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn random_store(seed: u64, n: usize, d: usize) -> KnowledgeStore {
    let text = "seed corpus";
    let mut store =
        ingest(&[("seed.txt".into(), text.into())], &ChunkingConfig::new(100, 0), &[], &HashEmbedder::new(d)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    store.segments = (0..n)
        .map(|i| KnowledgeSegment {
            segment_id: format!("seg-{:04}", i + 1),
            source_name: "random".into(),
            theme_tag: "general".into(),
            text: format!("segment {i}"),
            start_char: 0,
            end_char: 1,
            embedding: random_unit(&mut rng, d),
        })
        .collect();
    store.validate().unwrap();
    store
}

/// Exhaustive scan, computing cosine from scratch.
fn oracle_top(store: &KnowledgeStore, q: &[f64], k: usize) -> Vec<(String, f64)> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut all: Vec<(String, f64)> = store
        .segments
        .iter()
        .map(|s| {
            let dot: f64 = s.embedding.iter().zip(q).map(|(a, b)| a * b).sum();
            (s.segment_id.clone(), dot / (norm(&s.embedding) * norm(q)))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

#[test]
fn fifty_random_vectors_match_the_oracle() {
    let store = random_store(7, 50, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let q = random_unit(&mut rng, 64);
        let got: Vec<_> = store.retrieve_vector(&q, 3).unwrap().iter().map(|h| (h.segment.segment_id.clone(), h.score)).collect();
        let want = oracle_top(&store, &q, 3);
        assert_eq!(got.len(), 3);
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.0, w.0);
            assert!((g.1 - w.1).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn retrieval_equals_exhaustive_scan(seed in any::<u64>(), n in 10usize..=200, k in 1usize..=5) {
        let store = random_store(seed, n, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let q = random_unit(&mut rng, 64);
        let got = store.retrieve_vector(&q, k).unwrap();
        let want = oracle_top(&store, &q, k);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert_eq!(&g.segment.segment_id, &w.0);
            prop_assert!((g.score - w.1).abs() < 1e-9);
        }
        prop_assert!(got.windows(2).all(|p| p[0].score >= p[1].score));
    }

    #[test]
    fn chunks_cover_every_character(text in "[a-z \n]{0,3000}", target in 20usize..400, overlap_pct in 0usize..50) {
        let overlap = target * overlap_pct / 100;
        let cfg = ChunkingConfig::new(target, overlap);
        let ranges = chunk_ranges(&text, &cfg);
        let n = text.chars().count();
        let mut covered = vec![0u32; n];
        for &(s, e) in &ranges {
            prop_assert!(s < e && e <= n);
            prop_assert!(e - s <= cfg.max_chars);
            for c in &mut covered[s..e] {
                *c += 1;
            }
        }
        prop_assert!(covered.iter().all(|c| *c >= 1));
        if overlap == 0 {
            prop_assert!(covered.iter().all(|c| *c == 1));
        }
        prop_assert!(ranges.windows(2).all(|w| w[0].0 < w[1].0));
    }
}

#[test]
fn two_and_a_half_targets_give_three_disjoint_segments() {
    let target = 400;
    let text = "x".repeat(target * 5 / 2);
    let ranges = chunk_ranges(&text, &ChunkingConfig::new(target, 0));
    assert_eq!(ranges.len(), 3);
    let mut covered = vec![0; text.len()];
    for (s, e) in ranges {
        for c in &mut covered[s..e] {
            *c += 1;
        }
    }
    assert!(covered.iter().all(|c| *c == 1));
}

#[test]
fn ingest_tags_and_is_idempotent() {
    let texts = vec![
        ("a.md".to_string(), "A layered architecture splits modules.\n\nOther text here.".to_string()),
        ("b.md".to_string(), "Caching improves performance.".to_string()),
    ];
    let rules = vec![ThemeRule::new("layered", "layered-architecture")];
    let e = HashEmbedder::new(32);
    let store = ingest(&texts, &ChunkingConfig::new(1000, 100), &rules, &e).unwrap();
    assert_eq!(store.segments.iter().map(|s| s.source_name.as_str()).collect::<Vec<_>>(), vec!["a.md", "b.md"]);
    assert_eq!(store.segments[0].theme_tag, "layered-architecture");
    assert_eq!(store.segments[1].theme_tag, "general");
    assert_eq!(store.header.corpus_digest, corpus_digest(&texts));
    let again = ingest(&texts, &ChunkingConfig::new(1000, 100), &rules, &e).unwrap();
    assert_eq!(store.to_json(), again.to_json());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.json");
    store.save(&path).unwrap();
    assert_eq!(KnowledgeStore::load(&path).unwrap(), store);
}

#[test]
fn context_blocks_follow_rank_order() {
    let store = random_store(3, 12, 64);
    assert_eq!(format_context(&[]), format!("{NO_KNOWLEDGE_SENTINEL}\n"));
    let q = store.segments[4].embedding.clone();
    let hits = store.retrieve_vector(&q, 3).unwrap();
    assert_eq!(hits[0].segment.segment_id, "seg-0005");
    assert!((hits[0].score - 1.0).abs() < 1e-12);
    let text = format_context(&hits);
    let heads: Vec<_> = text.lines().filter(|l| l.starts_with("[RK-")).collect();
    assert_eq!(heads.len(), 3);
    assert!(heads[0].starts_with("[RK-1 |") && heads[2].starts_with("[RK-3 |"));
    assert_eq!(text, format_context(&hits));
}
