//! Line-oriented parser for the PlantUML constructs the agents are asked to
//! emit. It is deliberately a subset: styling and layout directives are
//! skipped, unrecognized lines become [`ErrorCode::UnknownConstructForKind`]
//! warnings, and only broken structure (markers, blocks, relations,
//! duplicate declarations) fails a diagram.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;

use crate::graph::{Entity, EntityGraph, EntityKind, ErrorCode, Relation, RelationKind, ValidationError};
use crate::kind::DiagramKind;

const ENDPOINT: &str = r#""[^"]+"|\[\*\]|\[[^\]]+\]|\([^)]*\)|:[^:]+:|[\p{L}\p{N}_$]+(?:\.[\p{L}\p{N}_$]+)*"#;
const ARROW: &str = r"(?:<\|?|<<|\*|o|x|\}|\+|#|\^|\(0|0\)|\)|/|\\)?[-.=]+(?:\[[^\]]*\][-.=]*)?(?:(?:up|down|left|right|u|d|l|r)[-.=]+)?(?:\|>|>>|>|\*|o|x|\{|\+|#|\^|\(|\)|//|\\\\|/|\\)?";

static RELATION_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r#"^(?P<l>{ENDPOINT})\s*(?:"[^"]*"\s*)?(?P<arrow>{ARROW})\s*(?:"[^"]*"\s*)?(?P<r>{ENDPOINT})\s*(?:\+\+|--|\*\*|!!)?\s*(?::\s*(?P<label>.*))?$"#
    ))
    .expect("relation regex")
});

static GATE_IN_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"^\[\s*(?P<arrow>{ARROW})\s*(?P<r>{ENDPOINT})\s*(?:\+\+|--)?\s*(?::.*)?$"))
        .expect("gate regex")
});

static GATE_OUT_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"^(?P<l>{ENDPOINT})\s*(?P<arrow>{ARROW})\s*\]\s*(?::.*)?$")).expect("gate regex")
});

static DECL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^(?P<kw>abstract\s+class|static\s+class|abstract|class|interface|enum|annotation|struct|entity|exception|metaclass|protocol|record|object|map|state|package|namespace|folder|frame|cloud|database|node|component|artifact|actor|usecase|participant|boundary|control|collections|queue|rectangle|card|agent|storage|device|person|portin|portout|port|file|stack|hexagon)\b\s*(?P<rest>.*)$",
    )
    .expect("declaration regex")
});

static NAME_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^(?:"(?P<q>[^"]*)"|\[(?P<b>[^\]]*)\]|\((?P<p>[^)]*)\)|:(?P<c>[^:]+):|(?P<w>[^\s{}<>"\[\]()#:;,]+))"#)
        .expect("name regex")
});

static ALIAS_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)(?:^|\s)as\s+(?:"(?P<q>[^"]*)"|(?P<w>[^\s{}<>#"]+))"#).expect("alias regex"));

static SHORT_COMPONENT_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^\[(?P<n>[^\]]+)\](?:\s+as\s+(?P<a>[^\s{}<>#]+))?\s*(?:<<[^>]*>>)?\s*(?:#\S+)?\s*(?P<brace>\{)?\s*$"#)
        .expect("component shorthand regex")
});

static SHORT_INTERFACE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^\(\)\s*(?:"(?P<q>[^"]+)"|(?P<w>[^\s"]+))(?:\s+as\s+(?P<a>\S+))?\s*$"#).expect("interface regex")
});

static SHORT_USECASE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^\((?P<n>[^)]+)\)(?:\s+as\s+(?P<a>[^\s{}<>#]+))?\s*(?:<<[^>]*>>)?\s*(?:#\S+)?\s*$"#)
        .expect("usecase regex")
});

static SHORT_ACTOR_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^:(?P<n>[^:]+):(?:\s+as\s+(?P<a>[^\s{}<>#]+))?\s*(?:<<[^>]*>>)?\s*(?:#\S+)?\s*$"#)
        .expect("actor regex")
});

static MACRO_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<m>[A-Za-z_][A-Za-z0-9_]*)\s*\((?P<args>.*)\)\s*(?P<brace>\{)?\s*$").expect("macro regex")
});

static DESCRIPTION_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"^(?P<n>{ENDPOINT})\s*:\s*(?P<d>.*)$")).expect("description regex"));

static ARROWISH_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"-+>|<-+|<\|[-.]|[-.]\|>|--|\.\.").expect("arrow detection regex"));

static SWIMLANE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\|(?:#[^|]*\|)?(?P<n>[^|]+)\|\s*$").expect("swimlane regex"));

static CONDITION_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*\((?P<c>.*?)\)").expect("condition regex"));

static NOTE_ALIAS_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)\bas\s+(?P<a>[\p{L}\p{N}_]+)\s*$"#).expect("note alias regex"));

/// Parse a diagram source as the given kind.
///
/// Returns the entity graph (carrying any non-fatal warnings) when the
/// source is structurally valid, otherwise every fatal error found.
pub fn parse(source: &str, kind: DiagramKind) -> Result<EntityGraph, Vec<ValidationError>> {
    let lines: Vec<&str> = source.lines().collect();
    let first = lines.iter().position(|l| !l.trim().is_empty());
    let last = lines.iter().rposition(|l| !l.trim().is_empty());

    let mut marker_errors = Vec::new();
    let starts = first.is_some_and(|i| lines[i].trim_start().to_ascii_lowercase().starts_with("@startuml"));
    let ends = last.is_some_and(|i| lines[i].trim().eq_ignore_ascii_case("@enduml"));
    if !starts {
        marker_errors.push(ValidationError::new(0, ErrorCode::MissingStartMarker, "source does not begin with @startuml"));
    }
    if !ends || first == last {
        marker_errors.push(ValidationError::new(0, ErrorCode::MissingEndMarker, "source does not end with @enduml"));
    }
    if !marker_errors.is_empty() {
        return Err(marker_errors);
    }
    let (first, last) = (first.unwrap_or(0), last.unwrap_or(0));

    let mut parser = Parser::new(kind);
    for (idx, line) in lines.iter().enumerate().take(last).skip(first + 1) {
        parser.line(line, idx + 1);
    }
    parser.finish()
}

/// Lossy-decoding entry point for untrusted bytes.
pub fn parse_bytes(bytes: &[u8], kind: DiagramKind) -> Result<EntityGraph, Vec<ValidationError>> {
    parse(&String::from_utf8_lossy(bytes), kind)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Quoted,
    Bracket,
    Paren,
    Colon,
    PseudoState,
    Word,
}

fn split_endpoint(token: &str) -> (String, Shape) {
    let t = token.trim();
    if t == "[*]" {
        return ("[*]".to_string(), Shape::PseudoState);
    }
    let strip = |open: char, close: char| {
        t.strip_prefix(open)
            .and_then(|s| s.strip_suffix(close))
            .map(|s| s.trim().to_string())
    };
    if let Some(s) = strip('"', '"') {
        (s, Shape::Quoted)
    } else if let Some(s) = strip('[', ']') {
        (s, Shape::Bracket)
    } else if t == "(*)" {
        ("(*)".to_string(), Shape::PseudoState)
    } else if let Some(s) = strip('(', ')') {
        (s, Shape::Paren)
    } else if let Some(s) = strip(':', ':') {
        (s, Shape::Colon)
    } else {
        (t.to_string(), Shape::Word)
    }
}

fn default_entity_kind(kind: DiagramKind, shape: Shape) -> EntityKind {
    use DiagramKind::*;
    match (kind, shape) {
        (_, Shape::Colon) => EntityKind::Actor,
        (StateDiagram, _) => EntityKind::State,
        (ActivityDiagram, _) => EntityKind::Activity,
        (_, Shape::PseudoState) => EntityKind::State,
        (ContainerDiagram, _) => EntityKind::Container,
        (UseCaseDiagram, Shape::Paren) => EntityKind::Usecase,
        (_, Shape::Bracket | Shape::Paren) => EntityKind::Component,
        (ClassDiagram, _) => EntityKind::Class,
        (ObjectDiagram, _) => EntityKind::Object,
        (PackageDiagram, _) => EntityKind::Package,
        (ComponentDiagram, _) => EntityKind::Component,
        (SequenceDiagram, _) => EntityKind::Participant,
        (CollaborationDiagram, _) => EntityKind::Object,
        (DeploymentDiagram, _) => EntityKind::Node,
        (UseCaseDiagram, _) => EntityKind::Actor,
    }
}

/// Entity kind for a declaration keyword, or `None` when the keyword is not
/// part of the subset accepted for `kind`.
fn declared_kind(kind: DiagramKind, kw: &str) -> Option<EntityKind> {
    use DiagramKind::*;
    use EntityKind as E;
    let classlike = matches!(
        kw,
        "class"
            | "abstract"
            | "abstract class"
            | "static class"
            | "interface"
            | "enum"
            | "annotation"
            | "struct"
            | "entity"
            | "exception"
            | "metaclass"
            | "protocol"
            | "record"
    );
    let grouping = matches!(kw, "package" | "namespace" | "folder" | "frame" | "rectangle" | "cloud");
    match kind {
        ClassDiagram => {
            if classlike {
                Some(E::Class)
            } else if grouping || matches!(kw, "node" | "database") {
                Some(E::Package)
            } else {
                None
            }
        }
        ObjectDiagram => match kw {
            "object" | "map" => Some(E::Object),
            _ if grouping => Some(E::Package),
            _ => None,
        },
        StateDiagram => (kw == "state").then_some(E::State),
        PackageDiagram => {
            if grouping || matches!(kw, "node" | "database" | "card") {
                Some(E::Package)
            } else if classlike && kw != "interface" {
                Some(E::Class)
            } else if matches!(kw, "component" | "interface" | "artifact") {
                Some(E::Component)
            } else {
                None
            }
        }
        ComponentDiagram => match kw {
            "component" | "interface" | "port" | "portin" | "portout" | "artifact" | "database" | "queue"
            | "file" | "storage" | "card" | "agent" | "stack" | "hexagon" | "collections" => Some(E::Component),
            "package" | "node" | "folder" | "frame" | "cloud" | "rectangle" | "namespace" => Some(E::Package),
            "actor" | "person" => Some(E::Actor),
            _ => None,
        },
        DeploymentDiagram => match kw {
            "node" | "device" | "cloud" | "frame" | "storage" | "stack" | "rectangle" | "folder" | "database"
            | "queue" | "package" | "hexagon" | "collections" => Some(E::Node),
            "artifact" | "component" | "file" | "card" | "agent" | "interface" | "port" => Some(E::Component),
            "actor" | "person" => Some(E::Actor),
            _ => None,
        },
        ContainerDiagram => match kw {
            "rectangle" | "node" | "database" | "queue" | "component" | "collections" | "storage" | "card"
            | "agent" | "file" | "hexagon" | "stack" | "artifact" => Some(E::Container),
            "actor" | "person" => Some(E::Actor),
            "package" | "frame" | "folder" | "cloud" | "namespace" => Some(E::Package),
            _ => None,
        },
        SequenceDiagram => match kw {
            "participant" | "boundary" | "control" | "entity" | "database" | "collections" | "queue" => {
                Some(E::Participant)
            }
            "actor" => Some(E::Actor),
            _ => None,
        },
        CollaborationDiagram => match kw {
            "object" | "participant" | "rectangle" | "agent" | "component" | "entity" | "boundary" | "control"
            | "database" | "node" | "card" | "collections" | "queue" => Some(E::Object),
            "actor" | "person" => Some(E::Actor),
            _ => None,
        },
        UseCaseDiagram => match kw {
            "actor" | "person" => Some(E::Actor),
            "usecase" => Some(E::Usecase),
            _ if grouping || matches!(kw, "node") => Some(E::Package),
            _ => None,
        },
        ActivityDiagram => None,
    }
}

/// Keywords whose `{ ... }` holds members rather than nested declarations.
fn has_member_body(kw: &str) -> bool {
    matches!(
        kw,
        "class"
            | "abstract"
            | "abstract class"
            | "static class"
            | "interface"
            | "enum"
            | "annotation"
            | "struct"
            | "entity"
            | "exception"
            | "metaclass"
            | "protocol"
            | "record"
            | "object"
            | "map"
    )
}

#[derive(Debug)]
enum FlowFrame {
    If { decision: String, tails: Vec<String>, has_else: bool },
    Switch { decision: String, tails: Vec<String>, seen_case: bool },
    While { decision: String },
    Repeat,
    Fork { start: Vec<String>, tails: Vec<String> },
}

#[derive(Debug)]
enum Block {
    /// `{ ... }` containing further declarations.
    Container { owner: Option<(String, EntityKind)> },
    /// `alt`/`loop`/`box` style groups closed by an `end` keyword.
    Group { keyword: String },
    Flow(FlowFrame),
}

#[derive(Debug)]
enum Mode {
    Normal,
    /// Skip lines until one starts with any of the closers.
    Until { closers: &'static [&'static str], opened: usize },
    /// Skip a member body, tracking brace depth.
    Body { depth: i64, opened: usize },
    Comment { opened: usize },
    Action { text: String, opened: usize },
}

struct Parser {
    kind: DiagramKind,
    graph: EntityGraph,
    errors: Vec<ValidationError>,
    explicit: HashSet<String>,
    notes: HashSet<String>,
    blocks: Vec<(Block, usize)>,
    mode: Mode,
    flow_prev: Vec<String>,
}

impl Parser {
    fn new(kind: DiagramKind) -> Self {
        Self {
            kind,
            graph: EntityGraph::new(kind),
            errors: Vec::new(),
            explicit: HashSet::new(),
            notes: HashSet::new(),
            blocks: Vec::new(),
            mode: Mode::Normal,
            flow_prev: Vec::new(),
        }
    }

    fn finish(mut self) -> Result<EntityGraph, Vec<ValidationError>> {
        match std::mem::replace(&mut self.mode, Mode::Normal) {
            Mode::Normal => {}
            Mode::Until { opened, .. } | Mode::Body { opened, .. } | Mode::Comment { opened } | Mode::Action { opened, .. } => {
                self.fatal(opened, ErrorCode::UnbalancedBlock, "block is never closed");
            }
        }
        for (block, line) in std::mem::take(&mut self.blocks) {
            let what = match block {
                Block::Container { .. } => "`{` is never closed".to_string(),
                Block::Group { keyword } => format!("`{keyword}` is never closed"),
                Block::Flow(_) => "control-flow block is never closed".to_string(),
            };
            self.fatal(line, ErrorCode::UnbalancedBlock, what);
        }
        if self.errors.is_empty() {
            Ok(self.graph)
        } else {
            self.errors.sort_by_key(|e| e.line);
            Err(self.errors)
        }
    }

    fn fatal(&mut self, line: usize, code: ErrorCode, message: impl Into<String>) {
        self.errors.push(ValidationError::new(line, code, message));
    }

    fn warn(&mut self, line: usize, message: impl Into<String>) {
        self.graph
            .warnings
            .push(ValidationError::new(line, ErrorCode::UnknownConstructForKind, message));
    }

    fn line(&mut self, raw: &str, lineno: usize) {
        let trimmed = raw.trim();
        let lower = trimmed.to_lowercase();
        match &mut self.mode {
            Mode::Normal => {}
            Mode::Until { closers, .. } => {
                if closers.iter().any(|c| lower.starts_with(c)) {
                    self.mode = Mode::Normal;
                }
                return;
            }
            Mode::Body { depth, .. } => {
                *depth += brace_delta(trimmed);
                if *depth <= 0 {
                    self.mode = Mode::Normal;
                }
                return;
            }
            Mode::Comment { .. } => {
                if trimmed.contains("'/") {
                    self.mode = Mode::Normal;
                }
                return;
            }
            Mode::Action { text, opened } => {
                if let Some(body) = strip_action_terminator(trimmed) {
                    text.push(' ');
                    text.push_str(body);
                    let name = text.trim().to_string();
                    let opened = *opened;
                    self.mode = Mode::Normal;
                    self.flow_action(name, opened);
                } else {
                    text.push(' ');
                    text.push_str(trimmed);
                }
                return;
            }
        }

        if trimmed.is_empty() || trimmed.starts_with('\'') {
            return;
        }
        if let Some(rest) = trimmed.strip_prefix("/'") {
            if !rest.contains("'/") {
                self.mode = Mode::Comment { opened: lineno };
            }
            return;
        }
        if self.skip_directive(trimmed, &lower, lineno) {
            return;
        }
        if trimmed.starts_with('}') {
            match self.blocks.pop() {
                Some((Block::Container { .. }, _)) => {}
                Some(other) => {
                    self.blocks.push(other);
                    self.fatal(lineno, ErrorCode::UnbalancedBlock, "`}` closes a block that was not opened with `{`");
                }
                None => self.fatal(lineno, ErrorCode::UnbalancedBlock, "`}` without matching `{`"),
            }
            return;
        }

        let handled = match self.kind {
            DiagramKind::ActivityDiagram => self.activity_line(trimmed, &lower, lineno),
            DiagramKind::SequenceDiagram => self.sequence_line(trimmed, &lower, lineno),
            _ => false,
        };
        if handled {
            return;
        }

        if self.relation_line(trimmed, lineno)
            || self.macro_line(trimmed, lineno)
            || self.shorthand_line(trimmed, lineno)
            || self.declaration_line(trimmed, lineno)
            || self.description_line(trimmed, lineno)
        {
            return;
        }

        if ARROWISH_RE.is_match(&strip_quoted(trimmed)) {
            self.fatal(lineno, ErrorCode::MalformedRelation, format!("cannot read relation `{trimmed}`"));
        } else {
            self.warn(lineno, format!("construct not recognized for {}: `{trimmed}`", self.kind));
        }
    }

    /// Styling, layout and annotation directives that carry no entities.
    fn skip_directive(&mut self, trimmed: &str, lower: &str, lineno: usize) -> bool {
        const SINGLE: &[&str] = &[
            "hide ", "hide\t", "show ", "remove ", "restore ", "left to right direction", "top to bottom direction",
            "!", "scale ", "caption ", "allowmixing", "allow_mixing", "set ", "mainframe ", "newpage", "autonumber",
            "autoactivate", "skin ", "page ", "sprite ", "@startuml", "@enduml", "center header", "right header",
            "left header", "center footer", "right footer", "left footer", "hide_", "show_", "layout_", "lay_",
        ];
        if SINGLE.iter().any(|p| lower.starts_with(p)) || lower == "hide" || lower == "show" {
            return true;
        }
        if lower.starts_with("skinparam") {
            if trimmed.ends_with('{') {
                self.mode = Mode::Body { depth: 1, opened: lineno };
            }
            return true;
        }
        if lower.starts_with("<style>") {
            if !lower.contains("</style>") {
                self.mode = Mode::Until { closers: &["</style>"], opened: lineno };
            }
            return true;
        }
        for (opener, closers) in [
            ("title", &["end title", "endtitle"] as &'static [&'static str]),
            ("header", &["end header", "endheader"]),
            ("footer", &["end footer", "endfooter"]),
            ("legend", &["end legend", "endlegend"]),
        ] {
            if lower == opener || (opener == "legend" && lower.starts_with("legend ")) {
                self.mode = Mode::Until { closers, opened: lineno };
                return true;
            }
            if lower.starts_with(opener) && lower[opener.len()..].starts_with([' ', '\t', ':']) {
                return true;
            }
        }
        if let Some(rest) = ["floating note", "note", "hnote", "rnote"]
            .into_iter()
            .find_map(|p| lower.strip_prefix(p).filter(|r| r.is_empty() || r.starts_with([' ', '\t', ':', '"', '#'])))
        {
            if let Some(c) = NOTE_ALIAS_RE.captures(trimmed) {
                self.notes.insert(c["a"].to_string());
            }
            let single_line = contains_unquoted(rest, ':') || rest.trim_start().starts_with('"');
            if !single_line {
                self.mode = Mode::Until {
                    closers: &["end note", "endnote", "end hnote", "endhnote", "end rnote", "endrnote"],
                    opened: lineno,
                };
            }
            return true;
        }
        if lower.starts_with("ref over") {
            if !contains_unquoted(trimmed, ':') {
                self.mode = Mode::Until { closers: &["end ref", "endref"], opened: lineno };
            }
            return true;
        }
        if self.kind.is_sequence_like()
            && (lower.starts_with("==") || lower.starts_with("...") || lower.starts_with("||") || lower.starts_with("delay"))
        {
            return true;
        }
        if self.kind == DiagramKind::StateDiagram && (lower == "--" || lower == "||") {
            return true;
        }
        if lower == "together {" || lower == "together{" {
            self.blocks.push((Block::Container { owner: None }, lineno));
            return true;
        }
        false
    }

    fn sequence_line(&mut self, trimmed: &str, lower: &str, lineno: usize) -> bool {
        let first_word = lower.split_whitespace().next().unwrap_or("");
        match first_word {
            "alt" | "opt" | "loop" | "par" | "par2" | "break" | "critical" | "group" => {
                self.blocks.push((Block::Group { keyword: first_word.to_string() }, lineno));
                return true;
            }
            "box" => {
                self.blocks.push((Block::Group { keyword: "box".to_string() }, lineno));
                return true;
            }
            "else" => {
                if !matches!(self.blocks.last(), Some((Block::Group { keyword }, _)) if keyword != "box") {
                    self.fatal(lineno, ErrorCode::UnbalancedBlock, "`else` outside of a group");
                }
                return true;
            }
            "end" => {
                let closes_box = lower.starts_with("end box") || lower == "endbox";
                match self.blocks.pop() {
                    Some((Block::Group { keyword }, _)) if (keyword == "box") == closes_box => {}
                    other => {
                        if let Some(b) = other {
                            self.blocks.push(b);
                        }
                        self.fatal(lineno, ErrorCode::UnbalancedBlock, "`end` without matching group");
                    }
                }
                return true;
            }
            "endbox" => {
                match self.blocks.pop() {
                    Some((Block::Group { keyword }, _)) if keyword == "box" => {}
                    other => {
                        if let Some(b) = other {
                            self.blocks.push(b);
                        }
                        self.fatal(lineno, ErrorCode::UnbalancedBlock, "`end box` without matching `box`");
                    }
                }
                return true;
            }
            "return" => return true,
            "activate" | "deactivate" | "destroy" => {
                if let Some(name) = trimmed.split_whitespace().nth(1) {
                    let name = name.trim_start_matches('"').trim_end_matches('"');
                    if !name.starts_with('#') {
                        self.resolve(name, Shape::Word);
                    }
                }
                return true;
            }
            "create" => {
                let rest = strip_prefix_ci(trimmed, "create").unwrap_or("").trim();
                if !self.declaration_line(rest, lineno) {
                    let name = rest.trim_matches('"');
                    if !name.is_empty() {
                        self.declare(name.to_string(), None, EntityKind::Participant, lineno);
                    }
                }
                return true;
            }
            _ => {}
        }
        if let Some(c) = GATE_IN_RE.captures(trimmed) {
            let (name, shape) = split_endpoint(&c["r"]);
            self.resolve(&name, shape);
            return true;
        }
        if let Some(c) = GATE_OUT_RE.captures(trimmed) {
            let (name, shape) = split_endpoint(&c["l"]);
            self.resolve(&name, shape);
            return true;
        }
        false
    }

    fn activity_line(&mut self, trimmed: &str, lower: &str, lineno: usize) -> bool {
        if matches!(lower, "start" | "stop" | "end" | "kill" | "detach") {
            self.flow_prev.clear();
            return true;
        }
        if let Some(body) = trimmed.strip_prefix(':') {
            match strip_action_terminator(body) {
                Some(text) => self.flow_action(text.trim().to_string(), lineno),
                None => self.mode = Mode::Action { text: body.to_string(), opened: lineno },
            }
            return true;
        }
        if let Some(rest) = lower.strip_prefix("backward") {
            if rest.trim_start().starts_with(':') && !trimmed.ends_with(';') {
                self.mode = Mode::Until { closers: &[], opened: lineno };
            }
            return true;
        }
        if lower.starts_with("->") || lower.starts_with("-[") || lower == "-" {
            return true;
        }
        if let Some(c) = SWIMLANE_RE.captures(trimmed) {
            let lane = c["n"].trim().to_string();
            if !lane.is_empty() && self.graph.entity(&lane).is_none() {
                self.graph.entities.push(Entity { name: lane, label: None, kind: EntityKind::Actor, implicit: false });
            }
            return true;
        }
        if let Some(rest) = lower.strip_prefix("partition").or_else(|| lower.strip_prefix("group")) {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                if trimmed.ends_with('{') {
                    self.blocks.push((Block::Container { owner: None }, lineno));
                } else {
                    self.blocks.push((Block::Group { keyword: "group".to_string() }, lineno));
                }
                return true;
            }
        }
        if lower == "end group" || lower == "endgroup" || lower == "end partition" {
            match self.blocks.pop() {
                Some((Block::Group { keyword }, _)) if keyword == "group" => {}
                other => {
                    if let Some(b) = other {
                        self.blocks.push(b);
                    }
                    self.fatal(lineno, ErrorCode::UnbalancedBlock, "`end group` without matching group");
                }
            }
            return true;
        }

        let condition = |s: &str| {
            CONDITION_RE
                .captures(s)
                .map(|c| c["c"].trim().to_string())
                .filter(|c| !c.is_empty())
        };

        if let Some(rest) = strip_prefix_ci(trimmed, "if").filter(|r| r.trim_start().starts_with('(')) {
            let decision = self.flow_decision(condition(rest), lineno);
            self.blocks.push((Block::Flow(FlowFrame::If { decision, tails: Vec::new(), has_else: false }), lineno));
            return true;
        }
        if lower.starts_with("elseif") || lower.starts_with("else if") || lower == "else" || lower.starts_with("else ") || lower.starts_with("else(") {
            let is_else = !(lower.starts_with("elseif") || lower.starts_with("else if"));
            let prev = std::mem::take(&mut self.flow_prev);
            match self.blocks.last_mut() {
                Some((Block::Flow(FlowFrame::If { decision, tails, has_else }), _)) => {
                    tails.extend(prev);
                    if is_else {
                        *has_else = true;
                    }
                    self.flow_prev = vec![decision.clone()];
                }
                _ => self.fatal(lineno, ErrorCode::UnbalancedBlock, "`else` outside of `if`"),
            }
            return true;
        }
        if lower == "endif" || lower == "end if" {
            match self.blocks.pop() {
                Some((Block::Flow(FlowFrame::If { decision, mut tails, has_else }), _)) => {
                    tails.append(&mut self.flow_prev);
                    if !has_else {
                        tails.push(decision);
                    }
                    self.flow_prev = dedup(tails);
                }
                other => self.unbalanced_flow(other, lineno, "endif"),
            }
            return true;
        }
        if let Some(rest) = strip_prefix_ci(trimmed, "switch").filter(|r| r.trim_start().starts_with('(')) {
            let decision = self.flow_decision(condition(rest), lineno);
            self.blocks.push((Block::Flow(FlowFrame::Switch { decision, tails: Vec::new(), seen_case: false }), lineno));
            return true;
        }
        if lower.starts_with("case") && lower[4..].trim_start().starts_with('(') {
            let prev = std::mem::take(&mut self.flow_prev);
            match self.blocks.last_mut() {
                Some((Block::Flow(FlowFrame::Switch { decision, tails, seen_case }), _)) => {
                    if *seen_case {
                        tails.extend(prev);
                    }
                    *seen_case = true;
                    self.flow_prev = vec![decision.clone()];
                }
                _ => self.fatal(lineno, ErrorCode::UnbalancedBlock, "`case` outside of `switch`"),
            }
            return true;
        }
        if lower == "endswitch" || lower == "end switch" {
            match self.blocks.pop() {
                Some((Block::Flow(FlowFrame::Switch { mut tails, .. }), _)) => {
                    tails.append(&mut self.flow_prev);
                    self.flow_prev = dedup(tails);
                }
                other => self.unbalanced_flow(other, lineno, "endswitch"),
            }
            return true;
        }
        if let Some(rest) = strip_prefix_ci(trimmed, "while").filter(|r| r.trim_start().starts_with('(')) {
            let decision = self.flow_decision(condition(rest), lineno);
            self.blocks.push((Block::Flow(FlowFrame::While { decision }), lineno));
            return true;
        }
        if lower.starts_with("endwhile") || lower.starts_with("end while") {
            match self.blocks.pop() {
                Some((Block::Flow(FlowFrame::While { decision }), _)) => {
                    let prev = std::mem::take(&mut self.flow_prev);
                    for p in prev {
                        self.link(p, decision.clone(), RelationKind::Transition, None);
                    }
                    self.flow_prev = vec![decision];
                }
                other => self.unbalanced_flow(other, lineno, "endwhile"),
            }
            return true;
        }
        if lower.starts_with("repeat while") || lower.starts_with("repeatwhile") {
            match self.blocks.pop() {
                Some((Block::Flow(FlowFrame::Repeat), _)) => {
                    let rest = strip_prefix_ci(trimmed, "repeatwhile")
                        .or_else(|| strip_prefix_ci(trimmed, "repeat while"))
                        .unwrap_or("");
                    let cond = condition(rest);
                    self.flow_decision(cond, lineno);
                }
                other => self.unbalanced_flow(other, lineno, "repeat while"),
            }
            return true;
        }
        if lower == "repeat" || lower.starts_with("repeat ") || lower.starts_with("repeat:") {
            self.blocks.push((Block::Flow(FlowFrame::Repeat), lineno));
            if let Some(idx) = trimmed.find(':') {
                if let Some(text) = strip_action_terminator(&trimmed[idx + 1..]) {
                    self.flow_action(text.trim().to_string(), lineno);
                }
            }
            return true;
        }
        if lower == "fork" || lower == "split" {
            let start = self.flow_prev.clone();
            self.blocks.push((Block::Flow(FlowFrame::Fork { start, tails: Vec::new() }), lineno));
            return true;
        }
        if lower == "fork again" || lower == "split again" {
            let prev = std::mem::take(&mut self.flow_prev);
            match self.blocks.last_mut() {
                Some((Block::Flow(FlowFrame::Fork { start, tails }), _)) => {
                    tails.extend(prev);
                    self.flow_prev = start.clone();
                }
                _ => self.fatal(lineno, ErrorCode::UnbalancedBlock, "`fork again` outside of `fork`"),
            }
            return true;
        }
        if lower.starts_with("end fork") || lower.starts_with("endfork") || lower.starts_with("end split") || lower.starts_with("end merge") {
            match self.blocks.pop() {
                Some((Block::Flow(FlowFrame::Fork { mut tails, .. }), _)) => {
                    tails.append(&mut self.flow_prev);
                    self.flow_prev = dedup(tails);
                }
                other => self.unbalanced_flow(other, lineno, "end fork"),
            }
            return true;
        }
        false
    }

    fn unbalanced_flow(&mut self, popped: Option<(Block, usize)>, lineno: usize, keyword: &str) {
        if let Some(b) = popped {
            self.blocks.push(b);
        }
        self.fatal(lineno, ErrorCode::UnbalancedBlock, format!("`{keyword}` without matching opener"));
    }

    fn flow_action(&mut self, name: String, _line: usize) {
        if name.is_empty() {
            return;
        }
        if self.graph.entity(&name).is_none() {
            self.graph.entities.push(Entity { name: name.clone(), label: None, kind: EntityKind::Activity, implicit: false });
        }
        for p in std::mem::take(&mut self.flow_prev) {
            self.link(p, name.clone(), RelationKind::Transition, None);
        }
        self.flow_prev = vec![name];
    }

    /// Records a decision node and makes it the current flow position.
    fn flow_decision(&mut self, condition: Option<String>, line: usize) -> String {
        let name = match condition {
            Some(c) => format!("{}?", c.trim_end_matches('?')),
            None => format!("decision@{line}"),
        };
        self.flow_action(name.clone(), line);
        name
    }

    fn link(&mut self, from: String, to: String, kind: RelationKind, label: Option<String>) {
        self.graph.relations.push(Relation { from, to, kind, label });
    }

    fn relation_line(&mut self, trimmed: &str, lineno: usize) -> bool {
        let Some(c) = RELATION_RE.captures(trimmed) else {
            return false;
        };
        let (left, lshape) = split_endpoint(&c["l"]);
        let (right, rshape) = split_endpoint(&c["r"]);
        if left.is_empty() || right.is_empty() {
            self.fatal(lineno, ErrorCode::MalformedRelation, format!("relation with empty endpoint: `{trimmed}`"));
            return true;
        }
        let arrow = &c["arrow"];
        let label = c.name("label").map(|m| m.as_str().trim().to_string()).filter(|s| !s.is_empty());
        if self.notes.contains(&left) || self.notes.contains(&right) {
            return true;
        }
        let (kind, reversed) = classify_arrow(arrow, label.as_deref(), self.kind);
        let from = self.resolve(&left, lshape);
        let to = self.resolve(&right, rshape);
        let (from, to) = if reversed { (to, from) } else { (from, to) };
        self.link(from, to, kind, label);
        true
    }

    /// C4-PlantUML element and relation macros for container diagrams.
    fn macro_line(&mut self, trimmed: &str, lineno: usize) -> bool {
        if !matches!(self.kind, DiagramKind::ContainerDiagram | DiagramKind::DeploymentDiagram) {
            return false;
        }
        let Some(c) = MACRO_RE.captures(trimmed) else {
            return false;
        };
        let name = c["m"].to_string();
        let args = split_args(&c["args"]);
        let opens = c.name("brace").is_some();
        let lname = name.to_ascii_lowercase();
        if lname.starts_with("lay_") || lname.starts_with("layout") || lname.starts_with("show") || lname.starts_with("hide")
            || lname.starts_with("add") || lname.starts_with("update") || lname.starts_with("set")
        {
            return true;
        }
        if lname.starts_with("rel") || lname.starts_with("birel") {
            if args.len() < 2 || args[0].is_empty() || args[1].is_empty() {
                self.fatal(lineno, ErrorCode::MalformedRelation, format!("relation macro needs two endpoints: `{trimmed}`"));
                return true;
            }
            let from = self.resolve(&args[0], Shape::Word);
            let to = self.resolve(&args[1], Shape::Word);
            let label = args.get(2).cloned().filter(|s| !s.is_empty());
            self.link(from, to, RelationKind::Association, label);
            return true;
        }
        let kind = if lname.starts_with("person") {
            EntityKind::Actor
        } else if lname.contains("boundary") {
            EntityKind::Package
        } else if lname.starts_with("deployment_node") || lname.starts_with("node") {
            EntityKind::Node
        } else if lname.starts_with("container") || lname.starts_with("system") || lname.starts_with("component") {
            if self.kind == DiagramKind::DeploymentDiagram {
                EntityKind::Component
            } else {
                EntityKind::Container
            }
        } else {
            return false;
        };
        let Some(alias) = args.first().filter(|a| !a.is_empty()).cloned() else {
            self.fatal(lineno, ErrorCode::MalformedRelation, format!("element macro without identifier: `{trimmed}`"));
            return true;
        };
        let label = args.get(1).cloned().filter(|l| !l.is_empty() && *l != alias);
        self.declare(alias.clone(), label, kind, lineno);
        if opens {
            self.blocks.push((Block::Container { owner: Some((alias, kind)) }, lineno));
        }
        true
    }

    fn shorthand_line(&mut self, trimmed: &str, lineno: usize) -> bool {
        use DiagramKind::*;
        match self.kind {
            ComponentDiagram | DeploymentDiagram | PackageDiagram | ContainerDiagram => {
                if let Some(c) = SHORT_COMPONENT_RE.captures(trimmed) {
                    let text = c["n"].trim().to_string();
                    let kind = if self.kind == ContainerDiagram { EntityKind::Container } else { EntityKind::Component };
                    let (name, label) = name_and_label(text, c.name("a").map(|m| m.as_str().trim_matches('"').to_string()));
                    self.declare(name.clone(), label, kind, lineno);
                    if c.name("brace").is_some() {
                        self.blocks.push((Block::Container { owner: Some((name, kind)) }, lineno));
                    }
                    return true;
                }
                if self.kind == ComponentDiagram {
                    if let Some(c) = SHORT_INTERFACE_RE.captures(trimmed) {
                        let text = c.name("q").or(c.name("w")).map(|m| m.as_str().to_string()).unwrap_or_default();
                        let (name, label) = name_and_label(text, c.name("a").map(|m| m.as_str().to_string()));
                        self.declare(name, label, EntityKind::Component, lineno);
                        return true;
                    }
                }
                false
            }
            UseCaseDiagram => {
                if let Some(c) = SHORT_USECASE_RE.captures(trimmed) {
                    let (name, label) = name_and_label(c["n"].trim().to_string(), c.name("a").map(|m| m.as_str().to_string()));
                    self.declare(name, label, EntityKind::Usecase, lineno);
                    return true;
                }
                if let Some(c) = SHORT_ACTOR_RE.captures(trimmed) {
                    let (name, label) = name_and_label(c["n"].trim().to_string(), c.name("a").map(|m| m.as_str().to_string()));
                    self.declare(name, label, EntityKind::Actor, lineno);
                    return true;
                }
                false
            }
            _ => false,
        }
    }

    fn declaration_line(&mut self, trimmed: &str, lineno: usize) -> bool {
        let Some(c) = DECL_RE.captures(trimmed) else {
            return false;
        };
        let kw = c["kw"].split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        let rest = c["rest"].trim();
        let opens = rest.ends_with('{') && brace_delta(rest) > 0;
        let Some(m) = NAME_RE.captures(rest) else {
            if opens {
                self.open_anonymous(&kw, lineno);
            }
            self.warn(lineno, format!("`{kw}` declaration without a name"));
            return true;
        };
        let text = ["q", "b", "p", "c", "w"]
            .iter()
            .find_map(|g| m.name(g))
            .map(|g| g.as_str().trim().to_string())
            .unwrap_or_default();
        let after = &rest[m.get(0).map_or(0, |g| g.end())..];
        let alias = ALIAS_RE
            .captures(after)
            .and_then(|a| a.name("q").or(a.name("w")).map(|g| g.as_str().to_string()));

        let Some(kind) = declared_kind(self.kind, &kw) else {
            self.warn(lineno, format!("`{kw}` is not part of the {} subset", self.kind));
            if opens {
                self.open_anonymous(&kw, lineno);
            }
            return true;
        };
        if text.is_empty() {
            self.warn(lineno, format!("`{kw}` declaration without a name"));
            return true;
        }
        let quoted_first = m.name("q").is_some() || m.name("b").is_some() || m.name("p").is_some() || m.name("c").is_some();
        let alias_quoted = ALIAS_RE.captures(after).is_some_and(|a| a.name("q").is_some());
        let (name, label) = match alias {
            Some(a) if alias_quoted && !quoted_first => (text, Some(a)),
            Some(a) => (a, Some(text)),
            None => (text, None),
        };
        let label = label.filter(|l| *l != name);
        self.declare(name.clone(), label, kind, lineno);
        if opens {
            if has_member_body(&kw) {
                self.mode = Mode::Body { depth: brace_delta(rest), opened: lineno };
            } else {
                self.blocks.push((Block::Container { owner: Some((name, kind)) }, lineno));
            }
        }
        true
    }

    fn open_anonymous(&mut self, kw: &str, lineno: usize) {
        if has_member_body(kw) {
            self.mode = Mode::Body { depth: 1, opened: lineno };
        } else {
            self.blocks.push((Block::Container { owner: None }, lineno));
        }
    }

    /// `Name : text` lines (state descriptions, class members).
    fn description_line(&mut self, trimmed: &str, _lineno: usize) -> bool {
        if !matches!(self.kind, DiagramKind::StateDiagram | DiagramKind::ClassDiagram | DiagramKind::ObjectDiagram) {
            return false;
        }
        let Some(c) = DESCRIPTION_RE.captures(trimmed) else {
            return false;
        };
        let (name, shape) = split_endpoint(&c["n"]);
        if name.is_empty() {
            return false;
        }
        if self.lookup(&name).is_none() {
            let kind = default_entity_kind(self.kind, shape);
            self.graph.entities.push(Entity { name, label: None, kind, implicit: false });
        }
        true
    }

    fn lookup(&self, text: &str) -> Option<String> {
        self.graph
            .entities
            .iter()
            .find(|e| e.name == text)
            .or_else(|| self.graph.entities.iter().find(|e| e.label.as_deref() == Some(text)))
            .map(|e| e.name.clone())
    }

    /// Entity name for a relation endpoint, creating an implicit entity on
    /// first use.
    fn resolve(&mut self, text: &str, shape: Shape) -> String {
        if let Some(name) = self.lookup(text) {
            return name;
        }
        let kind = default_entity_kind(self.kind, shape);
        self.graph.entities.push(Entity { name: text.to_string(), label: None, kind, implicit: true });
        text.to_string()
    }

    fn declare(&mut self, name: String, label: Option<String>, kind: EntityKind, lineno: usize) {
        if self.explicit.contains(&name) {
            self.fatal(lineno, ErrorCode::DuplicateEntity, format!("`{name}` is declared more than once"));
            return;
        }
        // A relation may have referred to this entity by its label before
        // the aliased declaration appeared.
        if let Some(label) = &label {
            if let Some(pos) = self.graph.entities.iter().position(|e| e.implicit && &e.name == label) {
                let old = self.graph.entities.remove(pos).name;
                for r in &mut self.graph.relations {
                    if r.from == old {
                        r.from = name.clone();
                    }
                    if r.to == old {
                        r.to = name.clone();
                    }
                }
            }
        }
        match self.graph.entities.iter_mut().find(|e| e.name == name) {
            Some(existing) => {
                existing.kind = kind;
                existing.implicit = false;
                if label.is_some() {
                    existing.label = label;
                }
            }
            None => self.graph.entities.push(Entity { name: name.clone(), label, kind, implicit: false }),
        }
        self.explicit.insert(name.clone());

        if self.kind == DiagramKind::DeploymentDiagram && kind == EntityKind::Component {
            let host = self.blocks.iter().rev().find_map(|(b, _)| match b {
                Block::Container { owner: Some((owner, EntityKind::Node)) } => Some(owner.clone()),
                _ => None,
            });
            if let Some(host) = host {
                self.link(host, name, RelationKind::Deploys, None);
            }
        }
    }
}

impl DiagramKind {
    fn is_sequence_like(self) -> bool {
        matches!(self, DiagramKind::SequenceDiagram | DiagramKind::CollaborationDiagram)
    }
}

/// Relation kind for an arrow token, and whether the endpoints must be
/// swapped so that `from` is the source (child, whole, sender).
fn classify_arrow(arrow: &str, label: Option<&str>, kind: DiagramKind) -> (RelationKind, bool) {
    use DiagramKind::*;
    let points_left = arrow.starts_with('<') && !arrow.ends_with('>');
    match kind {
        SequenceDiagram => return (RelationKind::Message, points_left),
        CollaborationDiagram => {
            let directed = arrow.contains('>') || arrow.contains('<');
            let kind = if directed { RelationKind::Message } else { RelationKind::Association };
            return (kind, points_left);
        }
        StateDiagram | ActivityDiagram => return (RelationKind::Transition, points_left),
        _ => {}
    }
    if kind == UseCaseDiagram {
        if let Some(l) = label.map(str::to_lowercase) {
            if l.contains("<<include>>") || l.contains("include") && l.contains("<<") {
                return (RelationKind::Include, points_left);
            }
            if l.contains("<<extend") || l.contains("extends>>") {
                return (RelationKind::Extend, points_left);
            }
        }
    }
    if arrow.starts_with("<|") || arrow.starts_with('^') {
        return (RelationKind::Inheritance, true);
    }
    if arrow.ends_with("|>") || arrow.ends_with('^') {
        return (RelationKind::Inheritance, false);
    }
    if matches!(kind, ClassDiagram | ObjectDiagram | PackageDiagram | ComponentDiagram) {
        if arrow.starts_with('*') {
            return (RelationKind::Composition, false);
        }
        if arrow.ends_with('*') {
            return (RelationKind::Composition, true);
        }
        if arrow.starts_with('o') {
            return (RelationKind::Aggregation, false);
        }
        if arrow.ends_with('o') {
            return (RelationKind::Aggregation, true);
        }
    }
    if arrow.contains('.') || arrow.contains('(') || arrow.contains(')') {
        return (RelationKind::Dependency, points_left);
    }
    (RelationKind::Association, points_left)
}

fn name_and_label(text: String, alias: Option<String>) -> (String, Option<String>) {
    match alias {
        Some(a) if a != text => (a, Some(text)),
        _ => (text, None),
    }
}

fn split_args(args: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    for ch in args.chars() {
        match ch {
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => out.push(std::mem::take(&mut cur).trim().to_string()),
            _ => cur.push(ch),
        }
    }
    out.push(cur.trim().to_string());
    out
}

fn brace_delta(s: &str) -> i64 {
    let mut in_quotes = false;
    let mut delta = 0;
    for ch in s.chars() {
        match ch {
            '"' => in_quotes = !in_quotes,
            '{' if !in_quotes => delta += 1,
            '}' if !in_quotes => delta -= 1,
            _ => {}
        }
    }
    delta
}

fn strip_quoted(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_quotes = false;
    for ch in s.chars() {
        if ch == '"' {
            in_quotes = !in_quotes;
        } else if !in_quotes {
            out.push(ch);
        }
    }
    out
}

fn contains_unquoted(s: &str, needle: char) -> bool {
    strip_quoted(s).contains(needle)
}

/// Action text without its closing terminator, if the line ends one.
fn strip_action_terminator(s: &str) -> Option<&str> {
    let t = s.trim_end();
    [';', '|', '<', '>', '/', ']', '}']
        .into_iter()
        .find_map(|c| t.strip_suffix(c))
}

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    s.get(..prefix.len())
        .filter(|head| head.eq_ignore_ascii_case(prefix))
        .map(|_| &s[prefix.len()..])
}

fn dedup(items: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    items.into_iter().filter(|i| seen.insert(i.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EntityKind as E;

    fn ok(src: &str, kind: DiagramKind) -> EntityGraph {
        parse(src, kind).unwrap_or_else(|e| panic!("unexpected errors: {e:?}"))
    }

    fn codes(src: &str, kind: DiagramKind) -> Vec<ErrorCode> {
        parse(src, kind).expect_err("expected failure").into_iter().map(|e| e.code).collect()
    }

    #[test]
    fn single_class() {
        let g = ok("@startuml\nclass A\n@enduml", DiagramKind::ClassDiagram);
        assert_eq!(g.entities.len(), 1);
        assert_eq!(g.entities[0].name, "A");
        assert_eq!(g.entities[0].kind, E::Class);
        assert!(g.relations.is_empty());
    }

    #[test]
    fn missing_markers() {
        let errs = parse("@startuml\nclass A\n", DiagramKind::ClassDiagram).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].code, ErrorCode::MissingEndMarker);
        assert_eq!(errs[0].line, 0);
        assert_eq!(codes("class A\n@enduml", DiagramKind::ClassDiagram), vec![ErrorCode::MissingStartMarker]);
        assert_eq!(
            codes("", DiagramKind::ClassDiagram),
            vec![ErrorCode::MissingStartMarker, ErrorCode::MissingEndMarker]
        );
        assert_eq!(codes("@startuml", DiagramKind::ClassDiagram), vec![ErrorCode::MissingEndMarker]);
    }

    #[test]
    fn twelve_line_sequence_fixture() {
        let src = "@startuml
actor Student
participant \"Game UI\" as UI
participant ScoreEngine
Student -> UI : choose answer
activate UI
UI -> ScoreEngine : submit(answer)
ScoreEngine --> UI : score
deactivate UI
UI -> Student : show feedback
note right of UI: feedback is immediate
@enduml";
        assert_eq!(src.lines().count(), 12);
        let g = ok(src, DiagramKind::SequenceDiagram);
        assert_eq!(g.entities.len(), 3);
        assert_eq!(g.relations_of(RelationKind::Message).count(), 4);
        assert_eq!(g.entity("UI").unwrap().label.as_deref(), Some("Game UI"));
        assert_eq!(g.entity("Student").unwrap().kind, E::Actor);
        assert!(g.warnings.is_empty(), "{:?}", g.warnings);
        let back = &g.relations[2];
        assert_eq!((back.from.as_str(), back.to.as_str()), ("ScoreEngine", "UI"));
    }

    #[test]
    fn class_relations_and_bodies() {
        let src = r#"@startuml
skinparam classAttributeIconSize 0
package "Domain" {
  abstract class Question {
    - text : String
    + {abstract} check(answer : Fraction) : bool
  }
  class FractionQuestion
  enum Difficulty { EASY, HARD }
  interface Scorable
}
Question <|-- FractionQuestion
FractionQuestion ..|> Scorable
Game "1" *-- "many" Question : contains
Game o-- Player
Game --> Difficulty
Player ..> Scorable : uses
@enduml"#;
        let g = ok(src, DiagramKind::ClassDiagram);
        let names: Vec<_> = g.entities.iter().map(|e| e.name.as_str()).collect();
        assert!(names.contains(&"Domain") && names.contains(&"Question") && names.contains(&"Game"));
        let rel = |k| g.relations_of(k).collect::<Vec<_>>();
        let inh = rel(RelationKind::Inheritance);
        assert_eq!(inh.len(), 2);
        assert_eq!((inh[0].from.as_str(), inh[0].to.as_str()), ("FractionQuestion", "Question"));
        assert_eq!((inh[1].from.as_str(), inh[1].to.as_str()), ("FractionQuestion", "Scorable"));
        assert_eq!(rel(RelationKind::Composition)[0].from, "Game");
        assert_eq!(rel(RelationKind::Aggregation).len(), 1);
        assert_eq!(rel(RelationKind::Association).len(), 1);
        assert_eq!(rel(RelationKind::Dependency).len(), 1);
        assert!(g.entity("Game").unwrap().implicit);
        assert!(!g.entity("Question").unwrap().implicit);
        assert!(g.endpoints_resolve());
    }

    #[test]
    fn unbalanced_braces() {
        assert_eq!(
            codes("@startuml\npackage P {\nclass A\n@enduml", DiagramKind::ClassDiagram),
            vec![ErrorCode::UnbalancedBlock]
        );
        assert_eq!(codes("@startuml\nclass A\n}\n@enduml", DiagramKind::ClassDiagram), vec![ErrorCode::UnbalancedBlock]);
        assert_eq!(
            codes("@startuml\nclass A {\n+x : int\n@enduml", DiagramKind::ClassDiagram),
            vec![ErrorCode::UnbalancedBlock]
        );
    }

    #[test]
    fn duplicates_and_malformed_relations() {
        assert_eq!(
            codes("@startuml\nclass A\nclass A\n@enduml", DiagramKind::ClassDiagram),
            vec![ErrorCode::DuplicateEntity]
        );
        assert_eq!(codes("@startuml\nA -->\n@enduml", DiagramKind::ClassDiagram), vec![ErrorCode::MalformedRelation]);
        // forward references are not duplicates
        let g = ok("@startuml\nA --> B\nclass A\nclass B\n@enduml", DiagramKind::ClassDiagram);
        assert!(g.entities.iter().all(|e| !e.implicit));
    }

    #[test]
    fn unknown_constructs_are_warnings() {
        let g = ok("@startuml\nclass A\nthis is not plantuml\n@enduml", DiagramKind::ClassDiagram);
        assert_eq!(g.warnings.len(), 1);
        assert_eq!(g.warnings[0].code, ErrorCode::UnknownConstructForKind);
        assert_eq!(g.warnings[0].line, 3);
        let g = ok("@startuml\nparticipant A\nclass B\n@enduml", DiagramKind::SequenceDiagram);
        assert_eq!(g.entities.len(), 1);
        assert_eq!(g.warnings.len(), 1);
    }

    #[test]
    fn styling_and_notes_are_skipped() {
        let src = "@startuml
title Scoring
skinparam component {
  BackgroundColor LightBlue
}
!theme plain
' a comment
/' block
comment '/
note as N1
  free text
  with -> arrows
end note
N1 .. A
hide empty members
class A
legend right
  stuff
endlegend
@enduml";
        let g = ok(src, DiagramKind::ClassDiagram);
        assert_eq!(g.entities.len(), 1, "{:?}", g.entities);
        assert!(g.relations.is_empty());
        assert!(g.warnings.is_empty(), "{:?}", g.warnings);
    }

    #[test]
    fn sequence_groups() {
        let src = "@startuml
participant A
participant B
alt ok
  A -> B : go
else failure
  A -> B : retry
end
loop 3 times
  B -> A : ping
end
box \"Cluster\"
participant C
end box
[-> A : start
A ->] : done
@enduml";
        let g = ok(src, DiagramKind::SequenceDiagram);
        assert_eq!(g.entities.len(), 3);
        assert_eq!(g.relations.len(), 3);
        assert_eq!(codes("@startuml\nalt x\nA -> B\n@enduml", DiagramKind::SequenceDiagram), vec![ErrorCode::UnbalancedBlock]);
        assert_eq!(codes("@startuml\nA -> B\nend\n@enduml", DiagramKind::SequenceDiagram), vec![ErrorCode::UnbalancedBlock]);
    }

    #[test]
    fn component_shorthands_and_interfaces() {
        let src = "@startuml
package \"Core\" {
  [Scoring Engine] as SE
  component \"Storyline Engine\" as STE
  interface IScoring
}
() \"IStoryline\" as IST
[User Interface] --> IScoring
SE - IScoring
STE -- IST
[User Interface] ..> IST : uses
@enduml";
        let g = ok(src, DiagramKind::ComponentDiagram);
        assert_eq!(g.entity("SE").unwrap().label.as_deref(), Some("Scoring Engine"));
        assert_eq!(g.entity("User Interface").unwrap().kind, E::Component);
        assert!(g.entity("User Interface").unwrap().implicit);
        assert_eq!(g.relations.len(), 4);
        assert_eq!(g.relations_of(RelationKind::Dependency).count(), 1);
    }

    #[test]
    fn state_machine() {
        let src = "@startuml
[*] --> Idle
state Playing {
  [*] --> Asking
  Asking --> Checking : answer
  Checking --> Asking : next
}
Idle --> Playing : start
Playing --> Finished : last question
Finished : shows final score
Finished --> [*]
@enduml";
        let g = ok(src, DiagramKind::StateDiagram);
        assert_eq!(g.relations_of(RelationKind::Transition).count(), 7);
        for n in ["Idle", "Playing", "Asking", "Checking", "Finished", "[*]"] {
            assert!(g.entity(n).is_some(), "{n}");
        }
        assert!(!g.entity("Playing").unwrap().implicit);
    }

    #[test]
    fn activity_flow() {
        let src = "@startuml
|Student|
start
:Open game;
:Answer
question;
if (correct?) then (yes)
  :Add points;
elseif (close?) then (almost)
  :Give hint;
else (no)
  :Show explanation;
endif
|System|
while (more questions?)
  :Next question;
endwhile
fork
  :Save score;
fork again
  :Update story;
end fork
stop
@enduml";
        let g = ok(src, DiagramKind::ActivityDiagram);
        let actors: Vec<_> = g.entities_of(E::Actor).map(|e| e.name.as_str()).collect();
        assert_eq!(actors, vec!["Student", "System"]);
        assert!(g.entity("Answer question").is_some());
        assert!(g.entity("correct?").is_some());
        // the three branch tails all flow into the while decision
        let into_while: Vec<_> = g
            .relations
            .iter()
            .filter(|r| r.to == "more questions?")
            .map(|r| r.from.as_str())
            .collect();
        assert_eq!(into_while.len(), 4, "{into_while:?}");
        assert!(g.endpoints_resolve());
        assert_eq!(codes("@startuml\nif (x) then\n:a;\n@enduml", DiagramKind::ActivityDiagram), vec![ErrorCode::UnbalancedBlock]);
        assert_eq!(codes("@startuml\n:a;\nendif\n@enduml", DiagramKind::ActivityDiagram), vec![ErrorCode::UnbalancedBlock]);
    }

    #[test]
    fn use_cases() {
        let src = "@startuml
left to right direction
actor Student
:Teacher: as T
rectangle SFS {
  usecase \"Play Game\" as UC1
  (Answer Question) as UC2
  (View Score)
}
Student --> UC1
UC1 ..> UC2 : <<include>>
(View Score) .> UC1 : <<extend>>
T --> (Edit Questions)
@enduml";
        let g = ok(src, DiagramKind::UseCaseDiagram);
        assert_eq!(g.entities_of(E::Actor).count(), 2);
        assert_eq!(g.entities_of(E::Usecase).count(), 4);
        assert_eq!(g.relations_of(RelationKind::Include).count(), 1);
        assert_eq!(g.relations_of(RelationKind::Extend).count(), 1);
    }

    #[test]
    fn deployment_nesting_records_deploys() {
        let src = "@startuml
node \"Web Server\" as WS {
  artifact \"sfs.war\" as WAR
  [Scoring Engine]
}
database \"Score DB\" as DB
WS --> DB : JDBC
@enduml";
        let g = ok(src, DiagramKind::DeploymentDiagram);
        let deploys: Vec<_> = g.relations_of(RelationKind::Deploys).map(|r| (r.from.as_str(), r.to.as_str())).collect();
        assert_eq!(deploys, vec![("WS", "WAR"), ("WS", "Scoring Engine")]);
        assert_eq!(g.entity("DB").unwrap().kind, E::Node);
    }

    #[test]
    fn c4_containers() {
        let src = "@startuml
!include <C4/C4_Container>
LAYOUT_WITH_LEGEND()
Person(student, \"Student\", \"Sixth grader\")
System_Boundary(sfs, \"Space Fraction System\") {
  Container(web, \"Web Front End\", \"HTML5\", \"Serves the game\")
  ContainerDb(db, \"Score Store\", \"SQLite\")
}
Rel(student, web, \"Plays\", \"HTTPS\")
Rel(web, db, \"Reads/writes\")
@enduml";
        let g = ok(src, DiagramKind::ContainerDiagram);
        assert_eq!(g.entity("student").unwrap().kind, E::Actor);
        assert_eq!(g.entities_of(E::Container).count(), 2);
        assert_eq!(g.relations.len(), 2);
        assert!(g.warnings.is_empty(), "{:?}", g.warnings);
    }

    #[test]
    fn objects_and_collaboration() {
        let src = "@startuml
object \"game1 : Game\" as game1
object player1 {
  name = \"Ann\"
}
map scores {
  round1 => 10
}
game1 --> player1
game1 o-- scores
@enduml";
        let g = ok(src, DiagramKind::ObjectDiagram);
        assert_eq!(g.entities_of(E::Object).count(), 3);
        assert_eq!(g.relations.len(), 2);

        let collab = "@startuml
actor Student
object UI
object Engine
Student -> UI : 1: answer
UI -> Engine : 2: check
UI -- Engine
@enduml";
        let g = ok(collab, DiagramKind::CollaborationDiagram);
        assert_eq!(g.relations_of(RelationKind::Message).count(), 2);
        assert_eq!(g.relations_of(RelationKind::Association).count(), 1);
    }

    #[test]
    fn label_reference_before_alias_is_merged() {
        let src = "@startuml\n\"Score Engine\" --> DB\ncomponent \"Score Engine\" as SE\n@enduml";
        let g = ok(src, DiagramKind::ComponentDiagram);
        assert!(g.entity("Score Engine").is_none());
        assert_eq!(g.relations[0].from, "SE");
    }

    #[test]
    fn non_ascii_input_does_not_panic() {
        for src in ["@startuml\n:é;\n@enduml", "@startuml\n/'é\n@enduml", "@startuml\nif (ü\n@enduml", "@startuml\ncase(\n@enduml"] {
            let _ = parse(src, DiagramKind::ActivityDiagram);
        }
    }
}
