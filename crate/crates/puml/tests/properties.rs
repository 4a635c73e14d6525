use std::collections::{BTreeMap, BTreeSet};

use archflow_puml::{check_consistency, fold_name, parse, parse_bytes, DiagramKind, EntityGraph, EntityKind};
use proptest::prelude::*;

fn any_kind() -> impl Strategy<Value = DiagramKind> {
    (0..DiagramKind::ALL.len()).prop_map(|i| DiagramKind::ALL[i])
}

/// Lines assembled from PlantUML-ish fragments reach deeper parser states
/// than uniform bytes.
fn plantumlish() -> impl Strategy<Value = String> {
    let fragment = prop::sample::select(vec![
        "class A", "class A {", "}", "{", "A --> B", "A <|-- B", "[C] ..> D : x", "alt x", "else", "end",
        "if (x) then", "endif", "fork", "fork again", "end fork", ":act;", ":multi", "note left", "end note",
        "/'", "'/", "state S {", "[*] --> S", "actor U", "(Case)", "Rel(a, b)", "Container(a, \"A\")",
        "participant P", "P -> Q : m", "while (x)", "endwhile", "repeat", "repeat while (y)", "|Lane|",
        "node N {", "artifact X", "\"q\" -> \"r\"", "->", "--", "é", "\"", "(", ")", "[", "]", ":",
    ]);
    prop::collection::vec(fragment, 0..30).prop_map(|lines| {
        let mut s = String::from("@startuml\n");
        for l in lines {
            s.push_str(l);
            s.push('\n');
        }
        s.push_str("@enduml\n");
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..400), kind in any_kind()) {
        let _ = parse_bytes(&bytes, kind);
        let mut wrapped = b"@startuml\n".to_vec();
        wrapped.extend_from_slice(&bytes);
        wrapped.extend_from_slice(b"\n@enduml");
        let _ = parse_bytes(&wrapped, kind);
    }

    #[test]
    fn structured_noise_is_total_and_consistent(src in plantumlish(), kind in any_kind()) {
        match parse(&src, kind) {
            Ok(g) => {
                prop_assert!(g.endpoints_resolve());
                prop_assert_eq!(g.diagram_kind, kind);
                prop_assert_eq!(parse(&src, kind), Ok(g));
            }
            Err(errs) => {
                prop_assert!(!errs.is_empty());
                prop_assert!(errs.iter().all(|e| e.code.is_fatal()));
            }
        }
    }
}

fn graph(kind: DiagramKind, body: &str) -> EntityGraph {
    parse(&format!("@startuml\n{body}\n@enduml"), kind).expect("valid")
}

/// Set-difference formulation of the three cross-view rules, written
/// without the library's helpers.
fn oracle(graphs: &BTreeMap<DiagramKind, EntityGraph>) -> BTreeSet<(String, String)> {
    let names = |kinds: &[DiagramKind]| -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for k in kinds {
            if let Some(g) = graphs.get(k) {
                for e in &g.entities {
                    out.insert(fold_name(&e.name));
                    if let Some(l) = &e.label {
                        out.insert(fold_name(l));
                    }
                }
            }
        }
        out
    };
    let mut found = BTreeSet::new();
    let mut diff = |rule: &str, subject: DiagramKind, kind: EntityKind, reference: &[DiagramKind]| {
        let known = names(reference);
        if let Some(g) = graphs.get(&subject) {
            for e in g.entities.iter().filter(|e| e.kind == kind) {
                let hit = known.contains(&fold_name(&e.name))
                    || e.label.as_ref().is_some_and(|l| known.contains(&fold_name(l)));
                if !hit {
                    found.insert((rule.to_string(), e.label.clone().unwrap_or_else(|| e.name.clone())));
                }
            }
        }
    };
    diff("ParticipantWithoutStructure", DiagramKind::SequenceDiagram, EntityKind::Participant, &[DiagramKind::ClassDiagram, DiagramKind::ComponentDiagram]);
    diff("DeployedComponentUnknown", DiagramKind::DeploymentDiagram, EntityKind::Component, &[DiagramKind::ComponentDiagram]);
    diff(
        "ActorWithoutBehavior",
        DiagramKind::UseCaseDiagram,
        EntityKind::Actor,
        &[DiagramKind::ActivityDiagram, DiagramKind::SequenceDiagram, DiagramKind::CollaborationDiagram, DiagramKind::StateDiagram],
    );
    found
}

fn library(graphs: &BTreeMap<DiagramKind, EntityGraph>) -> BTreeSet<(String, String)> {
    check_consistency(graphs)
        .into_iter()
        .map(|f| (format!("{:?}", f.rule), f.entity))
        .collect()
}

const POOL: [&str; 8] = ["Game UI", "ScoreEngine", "score_engine", "Storyline", "Admin", "Student", "QuestionBank", "Web App"];

proptest! {
    #[test]
    fn findings_match_set_difference_oracle(
        classes in prop::collection::btree_set(0..POOL.len(), 0..5),
        components in prop::collection::btree_set(0..POOL.len(), 0..5),
        participants in prop::collection::btree_set(0..POOL.len(), 0..5),
        deployed in prop::collection::btree_set(0..POOL.len(), 0..5),
        actors in prop::collection::btree_set(0..POOL.len(), 0..5),
        lanes in prop::collection::btree_set(0..POOL.len(), 0..5),
    ) {
        let decl = |kw: &str, set: &BTreeSet<usize>| {
            set.iter().map(|i| format!("{kw} \"{}\" as E{i}", POOL[*i])).collect::<Vec<_>>().join("\n")
        };
        let mut graphs = BTreeMap::new();
        graphs.insert(DiagramKind::ClassDiagram, graph(DiagramKind::ClassDiagram, &decl("class", &classes)));
        graphs.insert(DiagramKind::ComponentDiagram, graph(DiagramKind::ComponentDiagram, &decl("component", &components)));
        graphs.insert(DiagramKind::SequenceDiagram, graph(DiagramKind::SequenceDiagram, &decl("participant", &participants)));
        graphs.insert(DiagramKind::DeploymentDiagram, graph(DiagramKind::DeploymentDiagram, &format!("node Host {{\n{}\n}}", decl("artifact", &deployed))));
        graphs.insert(DiagramKind::UseCaseDiagram, graph(DiagramKind::UseCaseDiagram, &decl("actor", &actors)));
        let lane_lines = lanes.iter().map(|i| format!("|{}|\n:step {i};", POOL[*i])).collect::<Vec<_>>().join("\n");
        graphs.insert(DiagramKind::ActivityDiagram, graph(DiagramKind::ActivityDiagram, &lane_lines));

        let before = library(&graphs);
        prop_assert_eq!(&before, &oracle(&graphs));

        // Declaring an orphan participant as a class removes exactly its finding.
        if let Some((_, name)) = before.iter().find(|(r, _)| r == "ParticipantWithoutStructure").cloned() {
            let mut body = decl("class", &classes);
            body.push_str(&format!("\nclass \"{name}\" as Added"));
            graphs.insert(DiagramKind::ClassDiagram, graph(DiagramKind::ClassDiagram, &body));
            let after = library(&graphs);
            let removed: BTreeSet<_> = before.difference(&after).cloned().collect();
            let expected: BTreeSet<_> = before
                .iter()
                .filter(|(r, n)| r == "ParticipantWithoutStructure" && fold_name(n) == fold_name(&name))
                .cloned()
                .collect();
            prop_assert_eq!(removed, expected);
            prop_assert!(after.is_subset(&before));
        }
    }
}
