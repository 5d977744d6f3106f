//! Splitting model responses into ladder levels and reading the level-1 test case.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FeedbackLevel, LiteralError, ParameterSignature, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("response is missing {}", list_levels(.missing))]
pub struct LadderParseError {
    pub missing: Vec<FeedbackLevel>,
}

fn list_levels(levels: &[FeedbackLevel]) -> String {
    levels
        .iter()
        .map(|l| format!("Level {}", l.index()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Recognises a level heading at the start of `line`, returning the level
/// and whatever text follows the heading on the same line.
///
/// Accepted shapes include `Level 0: x`, `*Level 2:* x`, `**Level 3** - x`,
/// `### level 4`, and `Level 0 (Yes/No): x`.
fn heading(line: &str) -> Option<(FeedbackLevel, &str)> {
    let is_marker = |c: char| matches!(c, '*' | '_' | '#');
    let rest = line.trim_start_matches(|c: char| c.is_whitespace() || is_marker(c));
    let word = rest.get(..5)?;
    if !word.eq_ignore_ascii_case("level") {
        return None;
    }
    let rest = rest[5..].trim_start();
    let digit = rest.chars().next()?;
    let level = FeedbackLevel::from_index(digit.to_digit(10)? as u8)?;
    let mut rest = &rest[1..];
    if rest.starts_with(|c: char| c.is_ascii_alphanumeric()) {
        // "Level 10", "Level 0x": not a heading.
        return None;
    }
    rest = rest.trim_start();
    if rest.starts_with('(') {
        rest = &rest[rest.find(')')? + 1..];
    }
    rest = rest.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '_'));
    if let Some(stripped) = rest
        .strip_prefix(':')
        .or_else(|| rest.strip_prefix('-'))
        .or_else(|| rest.strip_prefix('.'))
        .or_else(|| rest.strip_prefix('\u{2013}'))
        .or_else(|| rest.strip_prefix('\u{2014}'))
    {
        rest = stripped;
    }
    rest = rest.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '_'));
    Some((level, rest))
}

/// Splits a response on line-anchored `Level k` headings. Text before the
/// first heading is ignored; a repeated heading continues its level.
pub fn parse_ladder(response: &str) -> Result<BTreeMap<FeedbackLevel, String>, LadderParseError> {
    let mut sections: BTreeMap<FeedbackLevel, String> = BTreeMap::new();
    let mut current: Option<FeedbackLevel> = None;
    for line in response.lines() {
        if let Some((level, rest)) = heading(line) {
            current = Some(level);
            let body = sections.entry(level).or_default();
            if !body.is_empty() {
                body.push('\n');
            }
            body.push_str(rest);
            continue;
        }
        if let Some(level) = current {
            let body = sections.get_mut(&level).expect("section opened");
            body.push('\n');
            body.push_str(line);
        }
    }
    let mut levels = BTreeMap::new();
    let mut missing = Vec::new();
    for level in FeedbackLevel::ALL {
        match sections.remove(&level).map(|s| s.trim().to_string()) {
            Some(text) if !text.is_empty() => {
                levels.insert(level, text);
            }
            _ => missing.push(level),
        }
    }
    if missing.is_empty() {
        Ok(levels)
    } else {
        Err(LadderParseError { missing })
    }
}

/// A failing test case as claimed in level-1 feedback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClaimedTestCase {
    pub bindings: BTreeMap<String, Value>,
    pub expected_text: String,
    pub claimed_output_text: String,
}

impl ClaimedTestCase {
    /// Bound values in signature order.
    pub fn arguments(&self, signature: &ParameterSignature) -> Vec<Value> {
        signature
            .params
            .iter()
            .map(|p| self.bindings[&p.name].clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimLabel {
    Input,
    Expected,
    Claimed,
}

impl fmt::Display for ClaimLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClaimLabel::Input => "Input",
            ClaimLabel::Expected => "Expected Output",
            ClaimLabel::Claimed => "Your Output",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClaimParseError {
    #[error("no `{0}` line in level 1")]
    MissingLabel(ClaimLabel),
    #[error("input names unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("input does not bind parameter `{0}`")]
    UnboundParameter(String),
    #[error("input binds parameter `{0}` twice")]
    DuplicateBinding(String),
    #[error("cannot read input binding `{0}`")]
    MalformedBinding(String),
    #[error("bad literal for `{name}`: {source}")]
    Literal {
        name: String,
        #[source]
        source: LiteralError,
    },
}

fn strip_emphasis(s: &str) -> &str {
    s.trim().trim_matches(|c: char| matches!(c, '*' | '_' | '`')).trim()
}

fn classify(label: &str) -> Option<ClaimLabel> {
    let label = strip_emphasis(label.trim_start_matches(|c: char| c == '-' || c.is_whitespace())).to_ascii_lowercase();
    if label.starts_with("input") {
        return Some(ClaimLabel::Input);
    }
    if label.starts_with("expected") {
        return Some(ClaimLabel::Expected);
    }
    let claimed_prefix = ["your", "code", "actual", "program", "student"]
        .iter()
        .any(|p| label.starts_with(p));
    let mentions_output = ["output", "result", "return"].iter().any(|w| label.contains(w));
    if claimed_prefix && (mentions_output || label == "actual") {
        return Some(ClaimLabel::Claimed);
    }
    None
}

/// Cleans a claimed output: strips emphasis, backticks, and a trailing
/// sentence period.
fn clean_output(raw: &str) -> String {
    let text = strip_emphasis(raw);
    if let Some(without) = text.strip_suffix('.') {
        if Value::parse_any(without.trim()).is_ok() {
            return without.trim().to_string();
        }
    }
    text.to_string()
}

/// Splits on commas that are not nested inside brackets, parentheses, or quotes.
pub fn split_top_level(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut in_string = false;
    let mut escaped = false;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '[' | '(' | '{' => depth += 1,
            ']' | ')' | '}' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&text[start..]);
    parts
}

fn labelled_values(text: &str) -> BTreeMap<&'static str, String> {
    let mut found = BTreeMap::new();
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        let Some((label, value)) = line.split_once(':') else {
            continue;
        };
        let Some(kind) = classify(label) else { continue };
        let key = match kind {
            ClaimLabel::Input => "input",
            ClaimLabel::Expected => "expected",
            ClaimLabel::Claimed => "claimed",
        };
        if found.contains_key(key) {
            continue;
        }
        let mut value = strip_emphasis(value).to_string();
        if value.is_empty() {
            // Value on the following non-blank line.
            if let Some(next) = lines[i + 1..].iter().find(|l| !l.trim().is_empty()) {
                if next.split_once(':').and_then(|(l, _)| classify(l)).is_none() {
                    value = strip_emphasis(next).to_string();
                }
            }
        }
        found.insert(key, value);
    }
    found
}

fn parse_bindings(input: &str, signature: &ParameterSignature) -> Result<BTreeMap<String, Value>, ClaimParseError> {
    let input = input.trim().trim_end_matches(';').trim();
    let mut bindings = BTreeMap::new();

    // Call syntax: `name(arg, arg)`.
    if let Some(open) = input.find('(') {
        let callee = &input[..open];
        if input.ends_with(')') && !callee.is_empty() && callee.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            let args = split_top_level(&input[open + 1..input.len() - 1]);
            if args.len() != signature.arity() {
                return Err(ClaimParseError::MalformedBinding(input.to_string()));
            }
            for (param, arg) in signature.params.iter().zip(args) {
                let value =
                    Value::parse_as(arg.trim(), param.value_type).map_err(|source| ClaimParseError::Literal {
                        name: param.name.clone(),
                        source,
                    })?;
                bindings.insert(param.name.clone(), value);
            }
            return Ok(bindings);
        }
    }

    let pieces = split_top_level(input);
    if pieces.len() == 1 && !input.contains('=') && signature.arity() == 1 {
        let param = &signature.params[0];
        let value = Value::parse_as(input, param.value_type).map_err(|source| ClaimParseError::Literal {
            name: param.name.clone(),
            source,
        })?;
        bindings.insert(param.name.clone(), value);
        return Ok(bindings);
    }

    for piece in pieces {
        let (name, literal) = piece
            .split_once('=')
            .ok_or_else(|| ClaimParseError::MalformedBinding(piece.trim().to_string()))?;
        let name = strip_emphasis(name);
        let param = signature
            .params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| ClaimParseError::UnknownParameter(name.to_string()))?;
        let value =
            Value::parse_as(strip_emphasis(literal), param.value_type).map_err(|source| ClaimParseError::Literal {
                name: name.to_string(),
                source,
            })?;
        if bindings.insert(name.to_string(), value).is_some() {
            return Err(ClaimParseError::DuplicateBinding(name.to_string()));
        }
    }
    for param in &signature.params {
        if !bindings.contains_key(&param.name) {
            return Err(ClaimParseError::UnboundParameter(param.name.clone()));
        }
    }
    Ok(bindings)
}

/// Reads the `Input` / `Expected Output` / `Your Output` lines of a level-1 text.
pub fn parse_claimed_test_case(
    level1: &str,
    signature: &ParameterSignature,
) -> Result<ClaimedTestCase, ClaimParseError> {
    let found = labelled_values(level1);
    let input = found
        .get("input")
        .ok_or(ClaimParseError::MissingLabel(ClaimLabel::Input))?;
    let expected = found
        .get("expected")
        .ok_or(ClaimParseError::MissingLabel(ClaimLabel::Expected))?;
    let claimed = found
        .get("claimed")
        .ok_or(ClaimParseError::MissingLabel(ClaimLabel::Claimed))?;
    Ok(ClaimedTestCase {
        bindings: parse_bindings(input, signature)?,
        expected_text: clean_output(expected),
        claimed_output_text: clean_output(claimed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Parameter, ValueType};
    use proptest::prelude::*;

    fn sig(params: &[(&str, ValueType)]) -> ParameterSignature {
        ParameterSignature::new(
            params
                .iter()
                .map(|(n, t)| Parameter {
                    name: n.to_string(),
                    value_type: *t,
                })
                .collect(),
            ValueType::Integer,
        )
        .unwrap()
    }

    #[test]
    fn heading_shapes() {
        let cases = [
            ("Level 0: Incorrect", Some((FeedbackLevel::L0, "Incorrect"))),
            ("*Level 2:* text", Some((FeedbackLevel::L2, "text"))),
            ("**Level 3** - text", Some((FeedbackLevel::L3, "text"))),
            ("### level 4", Some((FeedbackLevel::L4, ""))),
            ("_LEVEL 1_:", Some((FeedbackLevel::L1, ""))),
            ("Level 0 (Yes/No): Incorrect", Some((FeedbackLevel::L0, "Incorrect"))),
            ("  Level 1 \u{2014} x", Some((FeedbackLevel::L1, "x"))),
            ("Level 5: nope", None),
            ("Level 10: nope", None),
            ("The Level 2 hint", None),
            ("Levels 2", None),
        ];
        for (line, want) in cases {
            assert_eq!(heading(line), want, "{line:?}");
        }
    }

    #[test]
    fn emphasis_headings_parse_like_plain_ones() {
        let plain = "Level 0: a\nLevel 1: b\nLevel 2: c\nLevel 3: d\nLevel 4: e";
        let styled = "*Level 0:* a\n**Level 1:** b\n*Level 2:* c\n_Level 3:_ d\n## Level 4: e";
        assert_eq!(parse_ladder(plain).unwrap(), parse_ladder(styled).unwrap());
    }

    #[test]
    fn missing_levels_are_named() {
        let err = parse_ladder("Level 0: a\nLevel 1: b\nLevel 2: c\nLevel 3: d").unwrap_err();
        assert_eq!(err.missing, vec![FeedbackLevel::L4]);
        assert!(err.to_string().contains("Level 4"));
        let err = parse_ladder("no headings here at all").unwrap_err();
        assert_eq!(err.missing.len(), 5);
        // A heading with an empty body counts as missing.
        let err = parse_ladder("Level 0: a\nLevel 1: b\nLevel 2:\nLevel 3: d\nLevel 4: e").unwrap_err();
        assert_eq!(err.missing, vec![FeedbackLevel::L2]);
    }

    #[test]
    fn multi_line_bodies_and_preamble() {
        let text = "Sure! Here you go.\n\nLevel 0: Incorrect\nLevel 1:\nInput: a = 1\n\nExpected Output: 2\nLevel 2: x\nLevel 3: y\nLevel 4: z\n```java\nint q;\n```\n";
        let levels = parse_ladder(text).unwrap();
        assert_eq!(levels[&FeedbackLevel::L0], "Incorrect");
        assert_eq!(levels[&FeedbackLevel::L1], "Input: a = 1\n\nExpected Output: 2");
        assert_eq!(levels[&FeedbackLevel::L4], "z\n```java\nint q;\n```");
    }

    #[test]
    fn top_level_split_respects_nesting() {
        assert_eq!(
            split_top_level("nums = [1, 2], val = 1"),
            vec!["nums = [1, 2]", " val = 1"]
        );
        assert_eq!(split_top_level(r#"s = "a, b", n = 2"#), vec![r#"s = "a, b""#, " n = 2"]);
        assert_eq!(split_top_level("f([1, 2], 3)"), vec!["f([1, 2], 3)"]);
    }

    #[test]
    fn claimed_case_from_table_styles() {
        let s = sig(&[("a", ValueType::Integer), ("b", ValueType::Integer)]);
        let l1 = "The program fails in the following case.\nInput: a = 5, b = 6\nExpected Output: 20\nYour Output: 11";
        let c = parse_claimed_test_case(l1, &s).unwrap();
        assert_eq!(c.bindings["a"], Value::Integer(5));
        assert_eq!(c.bindings["b"], Value::Integer(6));
        assert_eq!(c.expected_text, "20");
        assert_eq!(c.claimed_output_text, "11");
        assert_eq!(c.arguments(&s), vec![Value::Integer(5), Value::Integer(6)]);
    }

    #[test]
    fn claimed_case_label_variants() {
        let s = sig(&[("nums", ValueType::IntegerArray), ("val", ValueType::Integer)]);
        let l1 =
            "Test case:\n\n**Input:** `nums = [1, 2, 1, 3], val = 1`\n\nExpected output: true\n\nActual Output: false.";
        let c = parse_claimed_test_case(l1, &s).unwrap();
        assert_eq!(c.bindings["nums"], Value::IntegerArray(vec![1, 2, 1, 3]));
        assert_eq!(c.expected_text, "true");
        assert_eq!(c.claimed_output_text, "false");

        let l1 = "Input:\nisEverywhere([1, 2], 2)\nExpected:\ntrue\nCode Output:\nfalse";
        let c = parse_claimed_test_case(l1, &s).unwrap();
        assert_eq!(c.bindings["val"], Value::Integer(2));
        assert_eq!(c.expected_text, "true");
        assert_eq!(c.claimed_output_text, "false");
    }

    #[test]
    fn claimed_case_errors() {
        let s = sig(&[("a", ValueType::Integer), ("b", ValueType::Integer)]);
        let err = parse_claimed_test_case("Input: x = 5\nExpected Output: 1\nYour Output: 2", &s).unwrap_err();
        assert_eq!(err, ClaimParseError::UnknownParameter("x".into()));
        let err = parse_claimed_test_case("Input: a = 5\nExpected Output: 1\nYour Output: 2", &s).unwrap_err();
        assert_eq!(err, ClaimParseError::UnboundParameter("b".into()));
        let err = parse_claimed_test_case("Expected Output: 1\nYour Output: 2", &s).unwrap_err();
        assert_eq!(err, ClaimParseError::MissingLabel(ClaimLabel::Input));
        let err = parse_claimed_test_case("Input: a = 1, b = 2\nYour Output: 2", &s).unwrap_err();
        assert_eq!(err, ClaimParseError::MissingLabel(ClaimLabel::Expected));
        let err = parse_claimed_test_case("Input: a = x, b = 2\nExpected Output: 1\nYour Output: 2", &s).unwrap_err();
        assert!(matches!(err, ClaimParseError::Literal { .. }));
    }

    #[test]
    fn single_parameter_bare_literal() {
        let s = sig(&[("str", ValueType::Text)]);
        let c = parse_claimed_test_case("Input: \"axxb\"\nExpected Output: true\nYour Output: false", &s).unwrap();
        assert_eq!(c.bindings["str"], Value::Text("axxb".into()));
    }

    fn body() -> impl Strategy<Value = String> {
        // Bodies must not themselves start a line with a heading.
        proptest::collection::vec("[a-z0-9 ,.;(){}=+]{1,30}", 1..4).prop_map(|lines| lines.join("\n"))
    }

    proptest! {
        #[test]
        fn rendered_sections_parse_back(bodies in proptest::collection::vec(body(), 5)) {
            prop_assume!(bodies.iter().all(|b| !b.trim().is_empty()));
            let mut text = String::new();
            for (k, b) in bodies.iter().enumerate() {
                text.push_str(&format!("Level {k}:\n{b}\n"));
            }
            let levels = parse_ladder(&text).unwrap();
            for (k, b) in bodies.iter().enumerate() {
                let level = FeedbackLevel::from_index(k as u8).unwrap();
                prop_assert_eq!(levels[&level].as_str(), b.trim());
            }
        }

        #[test]
        fn array_bindings_never_split(items in proptest::collection::vec(-50i64..50, 0..6), v in -9i64..9) {
            let s = sig(&[("nums", ValueType::IntegerArray), ("val", ValueType::Integer)]);
            let array = Value::IntegerArray(items.clone());
            let l1 = format!("Input: nums = {array}, val = {v}\nExpected Output: true\nYour Output: false");
            let c = parse_claimed_test_case(&l1, &s).unwrap();
            prop_assert_eq!(c.bindings.len(), 2);
            prop_assert_eq!(&c.bindings["nums"], &array);
            prop_assert_eq!(&c.bindings["val"], &Value::Integer(v));
        }
    }
}
