use std::collections::BTreeMap;
use std::path::Path;

use archflow_core::artifact::{AgentRole, Artifact, ArtifactKind, MismatchRate};
use archflow_core::gateway::{read_script, ModelSpec, ScriptedBackend};
use archflow_core::orchestrator::{Pipeline, RunConfig, Termination};
use archflow_core::pool::ArtifactPool;
use archflow_core::prompts::PromptLibrary;
use proptest::prelude::*;

/// Three-decimal rendering by long division, rounding half up.
fn long_division(m: u64, t: u64) -> String {
    let mut digits = vec![m / t];
    let mut r = m % t;
    for _ in 0..3 {
        r *= 10;
        digits.push(r / t);
        r %= t;
    }
    if 2 * r >= t {
        let mut i = digits.len() - 1;
        loop {
            digits[i] += 1;
            if digits[i] < 10 || i == 0 {
                break;
            }
            digits[i] = 0;
            i -= 1;
        }
    }
    format!("{}.{}{}{}", digits[0], digits[1], digits[2], digits[3])
}

proptest! {
    #[test]
    fn rate_rendering_matches_long_division(t in 1u64..5000, frac in 0.0f64..=1.0) {
        let m = ((t as f64) * frac).floor() as u64;
        let rate = MismatchRate::new(m, t).unwrap();
        prop_assert_eq!(rate.render(), long_division(m, t));
        prop_assert!((rate.render().parse::<f64>().unwrap() - rate.as_f64()).abs() <= 0.0005 + 1e-12);
        prop_assert_eq!(rate.to_string(), format!("{m} / {t} = {}", long_division(m, t)));
    }

    #[test]
    fn rate_order_is_exact(a in 0u64..100, b in 1u64..100, c in 0u64..100, d in 1u64..100) {
        let x = MismatchRate::new(a, b).unwrap();
        let y = MismatchRate::new(c, d).unwrap();
        prop_assert_eq!(x.lt(y), (a as u128) * (d as u128) < (c as u128) * (b as u128));
    }
}

#[test]
fn zero_denominator_has_no_rate() {
    assert!(MismatchRate::new(0, 0).is_none());
    assert_eq!(MismatchRate::new(0, 32).unwrap().render(), "0.000");
    assert_eq!(MismatchRate::new(6, 32).unwrap().render(), "0.188");
    assert_eq!(MismatchRate::new(10, 32).unwrap().render(), "0.313");
}

fn fixtures() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn golden_pool() -> ArtifactPool {
    let cfg = RunConfig::load(&fixtures().join("configs/golden-knowledge.json")).unwrap();
    let backend = ScriptedBackend::load(&cfg.model).unwrap();
    let prompts = PromptLibrary::builtin();
    let srs = std::fs::read_to_string(fixtures().join("srs/sfs.md")).unwrap();
    let mut cfg = cfg;
    cfg.knowledge_enabled = false;
    let pipeline = Pipeline { config: &cfg, backend: &backend, prompts: &prompts, knowledge: None, progress: &|_| {} };
    pipeline.run(&srs).unwrap().0
}

fn producer(kind: ArtifactKind) -> AgentRole {
    match kind {
        ArtifactKind::Decomposition => AgentRole::Analyst,
        ArtifactKind::View(_) => AgentRole::Modeler,
        ArtifactKind::Documentation => AgentRole::Designer,
        ArtifactKind::AtamReport | ArtifactKind::MismatchReport => AgentRole::Evaluator,
    }
}

#[test]
fn replayed_run_holds_nine_current_artifacts() {
    let pool = golden_pool();
    assert_eq!(pool.entries().len(), 9);
    let mut replay = ArtifactPool::new();
    for e in pool.entries() {
        replay.append(e.artifact.clone(), e.producer).unwrap();
    }
    for kind in ArtifactKind::ALL {
        assert_eq!(replay.current(kind).unwrap().artifact, pool.current(kind).unwrap().artifact);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pool_appends_are_monotone(picks in proptest::collection::vec((0usize..9, any::<bool>()), 1..40)) {
        let source = golden_pool();
        let artifacts: Vec<Artifact> = ArtifactKind::ALL.iter().map(|k| source.current(*k).unwrap().artifact.clone()).collect();
        let mut pool = ArtifactPool::new();
        let mut counts: BTreeMap<ArtifactKind, u32> = BTreeMap::new();
        for (i, wrong_producer) in picks {
            let kind = ArtifactKind::ALL[i];
            let who = if wrong_producer && kind != ArtifactKind::Decomposition { AgentRole::Analyst } else { producer(kind) };
            let before = pool.clone();
            match pool.append(artifacts[i].clone(), who) {
                Ok(seq) => {
                    prop_assert_eq!(seq, before.entries().len() as u64 + 1);
                    let n = counts.entry(kind).or_default();
                    *n += 1;
                    prop_assert_eq!(pool.current(kind).unwrap().revision, *n);
                }
                Err(_) => prop_assert_eq!(&pool, &before),
            }
        }
        for (kind, n) in &counts {
            let revs: Vec<u32> = pool.history(*kind).map(|e| e.revision).collect();
            prop_assert_eq!(revs, (1..=*n).collect::<Vec<_>>());
        }
        let json = serde_json::to_string(&pool).unwrap();
        let back: ArtifactPool = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, pool);
    }
}

const BLOCKS: [(&str, AgentRole); 3] = [
    ("FR-003 is misclassified in the decomposition.", AgentRole::Analyst),
    ("The documentation omits the caching tactic.", AgentRole::Designer),
    ("The component diagram has no cache.", AgentRole::Modeler),
];

fn mismatch_reply(owners: &[usize]) -> String {
    if owners.is_empty() {
        return "No mismatches found.\n".into();
    }
    owners
        .iter()
        .enumerate()
        .map(|(i, o)| format!("[mismatch {}]\nDescription: {}\nImpact: x\nRecommendation: fix it\nRelated requirements: FR-00{}\n", i + 1, BLOCKS[*o].0, i % 9 + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

fn expected_plan(owners: &[AgentRole]) -> Vec<AgentRole> {
    if owners.contains(&AgentRole::Analyst) {
        vec![AgentRole::Analyst, AgentRole::Modeler, AgentRole::Designer]
    } else if owners.contains(&AgentRole::Modeler) {
        vec![AgentRole::Modeler, AgentRole::Designer]
    } else if owners.contains(&AgentRole::Designer) {
        vec![AgentRole::Designer]
    } else {
        vec![]
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn repair_loop_accounting(
        cap in 0u32..=3,
        threshold in prop_oneof![Just(0.0), Just(0.05), Just(0.1), Just(0.2)],
        replies in proptest::collection::vec(proptest::collection::vec(0usize..3, 0..8), 4),
    ) {
        let base = read_script(&fixtures().join("scripts/golden-knowledge.json")).unwrap();
        let mut script = BTreeMap::new();
        for (key, text) in &base {
            let stem = key.strip_suffix("@rev1").unwrap();
            for rev in 1..=4 {
                let text = if stem == "evaluator/mismatch" { mismatch_reply(&replies[rev - 1]) } else { text.clone() };
                script.insert(format!("{stem}@rev{rev}"), text);
            }
        }
        let backend = ScriptedBackend::from_map(script);
        let mut cfg = RunConfig::new(ModelSpec::scripted("unused.json"));
        cfg.max_repair_iterations = cap;
        cfg.repair_threshold = threshold;
        let prompts = PromptLibrary::builtin();
        let srs = std::fs::read_to_string(fixtures().join("srs/sfs.md")).unwrap();
        let pipeline = Pipeline { config: &cfg, backend: &backend, prompts: &prompts, knowledge: None, progress: &|_| {} };
        let (pool, report) = pipeline.run(&srs).unwrap();

        let its = &report.iterations;
        prop_assert!(!its.is_empty() && its.len() as u32 <= cap + 1);
        for (i, it) in its.iter().enumerate() {
            prop_assert_eq!(it.index as usize, i);
            prop_assert_eq!(it.mismatches as usize, replies[i].len());
            prop_assert_eq!(it.total_requirements, 32);
        }
        let last = its.last().unwrap().rate();
        match report.terminated_by {
            Termination::ThresholdMet => prop_assert!(!last.exceeds(threshold)),
            Termination::IterationCap => {
                prop_assert_eq!(its.len() as u32, cap + 1);
                prop_assert!(last.exceeds(threshold));
            }
            Termination::Converged => {
                prop_assert!(its.len() >= 2);
                prop_assert!(!last.lt(its[its.len() - 2].rate()));
            }
        }

        let mut expected: BTreeMap<ArtifactKind, u32> = ArtifactKind::ALL.iter().map(|k| (*k, 1)).collect();
        for (i, it) in its.iter().enumerate().skip(1) {
            let owners: Vec<AgentRole> = replies[i - 1].iter().map(|o| BLOCKS[*o].1).collect();
            let mut sorted = owners.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(&it.repaired, &sorted);
            let mut plan = expected_plan(&owners);
            plan.push(AgentRole::Evaluator);
            for kind in ArtifactKind::ALL {
                if plan.contains(&producer(kind)) {
                    *expected.get_mut(&kind).unwrap() += 1;
                }
            }
        }
        for kind in ArtifactKind::ALL {
            let revs: Vec<u32> = pool.history(kind).map(|e| e.revision).collect();
            prop_assert_eq!(revs, (1..=expected[&kind]).collect::<Vec<_>>());
        }
    }
}
