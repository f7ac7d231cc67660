//! `@tag@` template scanning and substitution.
//!
//! A tag is an identifier of ASCII letters and underscores surrounded by `@`
//! on both sides. Replacement is single-pass and literal: replacement text is
//! never re-scanned, so rendering always terminates and tags cannot be
//! smuggled in through bindings.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateDocument {
    pub text: String,
}

impl TemplateDocument {
    pub fn new(text: impl Into<String>) -> Self {
        TemplateDocument { text: text.into() }
    }
}

/// Tag-name to replacement-text table (expression strings or the constants
/// `TRUE`/`FALSE`).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DefaultsTable {
    map: BTreeMap<String, String>,
}

impl DefaultsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tag: impl Into<String>, text: impl Into<String>) {
        self.map.insert(tag.into(), text.into());
    }

    pub fn get(&self, tag: &str) -> Option<&str> {
        self.map.get(tag).map(|s| s.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for DefaultsTable {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        DefaultsTable {
            map: iter
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unbalanced tag delimiter: `@` at offset {pos} is never closed")]
    UnbalancedTagDelimiter { pos: usize },
    #[error("invalid tag identifier `{text}` at offset {pos}")]
    InvalidTagIdentifier { text: String, pos: usize },
    #[error("unresolved tags: {}", .0.join(", "))]
    UnresolvedTags(Vec<String>),
}

fn is_tag_char(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

/// Every tag occurrence in document order as `(name, byte offset of the
/// leading @)`.
pub fn scan_tags(t: &TemplateDocument) -> Result<Vec<(String, usize)>, TemplateError> {
    let bytes = t.text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'@' {
            i += 1;
            continue;
        }
        let start = i;
        let mut j = i + 1;
        while j < bytes.len() && bytes[j] != b'@' {
            j += 1;
        }
        if j >= bytes.len() {
            return Err(TemplateError::UnbalancedTagDelimiter { pos: start });
        }
        let name = &t.text[start + 1..j];
        if name.is_empty() || !name.bytes().all(is_tag_char) {
            return Err(TemplateError::InvalidTagIdentifier {
                text: name.to_string(),
                pos: start,
            });
        }
        out.push((name.to_string(), start));
        i = j + 1;
    }
    Ok(out)
}

/// Replaces every tag with `generated[tag]`, falling back to `defaults[tag]`
/// (generated wins). All unreplaceable tags are reported together.
pub fn render_template(
    t: &TemplateDocument,
    generated: &BTreeMap<String, String>,
    defaults: &DefaultsTable,
) -> Result<String, TemplateError> {
    let tags = scan_tags(t)?;
    let mut missing: Vec<String> = Vec::new();
    let mut out = String::with_capacity(t.text.len());
    let mut cursor = 0;
    for (name, pos) in &tags {
        out.push_str(&t.text[cursor..*pos]);
        cursor = pos + name.len() + 2;
        match generated
            .get(name)
            .map(|s| s.as_str())
            .or(defaults.get(name))
        {
            Some(replacement) => out.push_str(replacement),
            None => {
                if !missing.contains(name) {
                    missing.push(name.clone());
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(TemplateError::UnresolvedTags(missing));
    }
    out.push_str(&t.text[cursor..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(s: &str) -> TemplateDocument {
        TemplateDocument::new(s)
    }

    #[test]
    fn scan_single_tag() {
        let tags = scan_tags(&doc("TRANS @moved@;")).unwrap();
        assert_eq!(tags, vec![("moved".to_string(), 6)]);
    }

    #[test]
    fn scan_no_tags() {
        assert_eq!(scan_tags(&doc("no tags here")).unwrap(), vec![]);
    }

    #[test]
    fn scan_repeated_tag() {
        let tags = scan_tags(&doc("a@x@b@x@c")).unwrap();
        assert_eq!(tags, vec![("x".to_string(), 1), ("x".to_string(), 5)]);
    }

    #[test]
    fn scan_odd_delimiter_count() {
        assert!(matches!(
            scan_tags(&doc("a@x@b@")),
            Err(TemplateError::UnbalancedTagDelimiter { pos: 5 })
        ));
    }

    #[test]
    fn scan_invalid_identifier() {
        assert!(matches!(
            scan_tags(&doc("@bad tag@")),
            Err(TemplateError::InvalidTagIdentifier { .. })
        ));
        assert!(matches!(
            scan_tags(&doc("@tag2@")),
            Err(TemplateError::InvalidTagIdentifier { .. })
        ));
    }

    #[test]
    fn render_both_sources() {
        let generated: BTreeMap<String, String> =
            [("a".to_string(), "1".to_string())].into_iter().collect();
        let defaults: DefaultsTable = [("b", "FALSE")].into_iter().collect();
        let out = render_template(&doc("@a@+@b@"), &generated, &defaults).unwrap();
        assert_eq!(out, "1+FALSE");
    }

    #[test]
    fn render_generated_wins_over_default() {
        let generated: BTreeMap<String, String> =
            [("a".to_string(), "gen".to_string())].into_iter().collect();
        let defaults: DefaultsTable = [("a", "def")].into_iter().collect();
        assert_eq!(
            render_template(&doc("@a@"), &generated, &defaults).unwrap(),
            "gen"
        );
    }

    #[test]
    fn render_is_not_recursive() {
        let generated: BTreeMap<String, String> =
            [("a".to_string(), "@b@".to_string())].into_iter().collect();
        let defaults: DefaultsTable = [("b", "x")].into_iter().collect();
        assert_eq!(
            render_template(&doc("@a@"), &generated, &defaults).unwrap(),
            "@b@"
        );
    }

    #[test]
    fn render_unresolved_tag() {
        let err = render_template(
            &doc("x @missing@ y"),
            &BTreeMap::new(),
            &DefaultsTable::new(),
        )
        .unwrap_err();
        assert_eq!(
            err,
            TemplateError::UnresolvedTags(vec!["missing".to_string()])
        );
    }

    prop_compose! {
        fn arb_template()(
            segments in proptest::collection::vec("[a-z ;\n(){}=]{0,12}", 1..6),
            tags in proptest::collection::vec("[a-z_]{1,6}", 0..5),
        ) -> (String, Vec<String>) {
            let mut text = String::new();
            for (i, seg) in segments.iter().enumerate() {
                text.push_str(seg);
                if i < tags.len() {
                    text.push('@');
                    text.push_str(&tags[i]);
                    text.push('@');
                }
            }
            (text, tags)
        }
    }

    proptest! {
        #[test]
        fn render_length_equation((text, tags) in arb_template(), reps in "[a-z0-9]{0,8}") {
            let t = doc(&text);
            let generated: BTreeMap<String, String> = tags
                .iter()
                .map(|name| (name.clone(), reps.clone()))
                .collect();
            let out = render_template(&t, &generated, &DefaultsTable::new()).unwrap();
            let occurrences = scan_tags(&t).unwrap();
            let removed: usize = occurrences.iter().map(|(n, _)| n.len() + 2).sum();
            let added: usize = occurrences.len() * reps.len();
            prop_assert_eq!(out.len(), text.len() - removed + added);
            // fully rendered output with tag-free replacements rescans empty
            prop_assert_eq!(scan_tags(&doc(&out)).unwrap(), vec![]);
        }
    }
}
