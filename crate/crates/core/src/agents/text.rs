//! Line-level helpers shared by the reply parsers.

/// Heading text with markdown decoration, numbering and a trailing colon removed.
pub(crate) fn heading_text(line: &str) -> String {
    let mut s = line.trim();
    loop {
        let before = s;
        s = s.trim_start_matches(|c: char| c == '#' || c == '*' || c == '_' || c == '>' || c.is_whitespace());
        let digits = s.len() - s.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits > 0 {
            let rest = &s[digits..];
            if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
                s = r;
            }
        }
        if s == before {
            break;
        }
    }
    s.trim_end_matches(|c: char| c == ':' || c == '*' || c == '_' || c == '#' || c.is_whitespace())
        .to_string()
}

/// Whether the line is decorated like a heading.
pub(crate) fn looks_like_heading(line: &str) -> bool {
    let t = line.trim();
    t.starts_with('#') || (t.starts_with("**") && t.ends_with("**")) || (t.ends_with(':') && t.len() <= 80)
}

/// Language tag if the line opens or closes a code fence.
pub(crate) fn fence(line: &str) -> Option<&str> {
    let t = line.trim();
    t.strip_prefix("```").or_else(|| t.strip_prefix("~~~")).map(str::trim)
}

/// Splits a comma or semicolon separated list, dropping placeholders for nothing.
pub(crate) fn split_list(s: &str) -> Vec<String> {
    s.split([',', ';'])
        .map(|p| p.trim().trim_matches(|c: char| c == '.' || c == '*' || c == '`').trim().to_string())
        .filter(|p| !p.is_empty() && !is_nothing(p))
        .collect()
}

pub(crate) fn is_nothing(s: &str) -> bool {
    matches!(
        s.trim().trim_end_matches('.').to_ascii_lowercase().as_str(),
        "none" | "none yet" | "n/a" | "na" | "-" | "nil" | "tbd" | "not applicable"
    )
}

/// Removes one layer of surrounding quotes.
pub(crate) fn unquote(s: &str) -> &str {
    let t = s.trim();
    for (a, b) in [('"', '"'), ('“', '”'), ('\'', '\'')] {
        if let Some(inner) = t.strip_prefix(a).and_then(|r| r.strip_suffix(b)) {
            return inner.trim();
        }
    }
    t
}

/// Character span of `needle` in `haystack`, if present.
pub(crate) fn char_span(haystack: &str, needle: &str) -> Option<(usize, usize)> {
    if needle.is_empty() {
        return None;
    }
    let byte = haystack.find(needle)?;
    let start = haystack[..byte].chars().count();
    Some((start, start + needle.chars().count()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headings() {
        assert_eq!(heading_text("### 2. Component Diagram:"), "Component Diagram");
        assert_eq!(heading_text("**Design Decisions**"), "Design Decisions");
        assert_eq!(heading_text("1) Goals"), "Goals");
        assert_eq!(heading_text("2024 plans"), "2024 plans");
        assert!(looks_like_heading("## Risks"));
        assert!(!looks_like_heading("plain sentence"));
    }

    #[test]
    fn lists_and_spans() {
        assert_eq!(split_list("Performance, Security; usability."), vec!["Performance", "Security", "usability"]);
        assert!(split_list("none").is_empty());
        assert_eq!(unquote("\"play\""), "play");
        assert_eq!(char_span("héllo world", "world"), Some((6, 11)));
        assert_eq!(fence("```plantuml"), Some("plantuml"));
    }
}
