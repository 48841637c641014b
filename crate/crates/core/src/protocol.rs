//! Response wire format: `<think>` / `<answer>` tags around a transformation list.
//!
//! The canonical answer body is a JSON array of
//! `{"index": <int>, "attribute": <str>, "value": <str>}` objects. A tolerant
//! line grammar is accepted as a fallback, one `index, attribute, value`
//! triple per line or per `;`-separated chunk.

use crate::scene::{Attribute, AttributeVocab, SceneError, Transformation, TransformationSequence};
use serde::{Deserialize, Serialize};
use std::fmt;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

/// A diagnostic produced while parsing a response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseNote {
    /// Tag layout deviates from one think block followed by one answer block.
    BadStructure {
        reason: String,
    },
    /// No complete `<answer>...</answer>` block.
    MissingAnswer,
    UnknownAttribute {
        item: usize,
        attribute: String,
    },
    UnknownValue {
        item: usize,
        attribute: Attribute,
        value: String,
    },
    BadIndex {
        item: usize,
        index: String,
    },
    MalformedItem {
        item: usize,
        text: String,
    },
}

impl fmt::Display for ParseNote {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseNote::BadStructure { reason } => write!(f, "bad structure: {reason}"),
            ParseNote::MissingAnswer => f.write_str("no complete answer block"),
            ParseNote::UnknownAttribute { item, attribute } => {
                write!(f, "item {item}: unknown attribute `{attribute}`")
            }
            ParseNote::UnknownValue {
                item,
                attribute,
                value,
            } => write!(f, "item {item}: `{value}` is not a {attribute} value"),
            ParseNote::BadIndex { item, index } => write!(f, "item {item}: bad index `{index}`"),
            ParseNote::MalformedItem { item, text } => {
                write!(f, "item {item}: malformed `{text}`")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub think_text: Option<String>,
    pub answer_items: TransformationSequence,
    pub format_ok: bool,
    pub parse_notes: Vec<ParseNote>,
}

impl ParsedResponse {
    /// A well-formed response carrying `items`, as if it had been parsed.
    pub fn well_formed(items: TransformationSequence) -> Self {
        ParsedResponse {
            think_text: Some(String::new()),
            answer_items: items,
            format_ok: true,
            parse_notes: Vec::new(),
        }
    }
}

/// Parses a raw model response. Never fails; problems land in `parse_notes`.
pub fn parse_response(raw: &str, vocab: &AttributeVocab) -> ParsedResponse {
    let mut notes = Vec::new();
    let format_ok = match check_structure(raw) {
        Ok(()) => true,
        Err(reason) => {
            notes.push(ParseNote::BadStructure { reason });
            false
        }
    };

    let think_text = block(raw, THINK_OPEN, THINK_CLOSE).map(str::to_string);
    let answer_items = match block(raw, ANSWER_OPEN, ANSWER_CLOSE) {
        Some(body) => parse_answer_body(body, vocab, &mut notes),
        None => {
            notes.push(ParseNote::MissingAnswer);
            Vec::new()
        }
    };

    ParsedResponse {
        think_text,
        answer_items,
        format_ok,
        parse_notes: notes,
    }
}

/// 1 for a well-formed response, 0 otherwise.
pub fn format_reward(parsed: &ParsedResponse) -> f64 {
    if parsed.format_ok {
        1.0
    } else {
        0.0
    }
}

/// Canonical JSON array form of `seq`.
pub fn serialize_answer(
    seq: &[Transformation],
    vocab: &AttributeVocab,
) -> Result<String, SceneError> {
    for t in seq {
        if !vocab.contains(t.attribute, &t.value) {
            return Err(SceneError::UnknownValue {
                attribute: t.attribute,
                value: t.value.clone(),
            });
        }
    }
    Ok(serde_json::to_string(seq).expect("transformations always serialize"))
}

pub fn wrap_in_tags(think: &str, answer: &str) -> String {
    format!("{THINK_OPEN}{think}{THINK_CLOSE}{ANSWER_OPEN}{answer}{ANSWER_CLOSE}")
}

/// Full well-formed response text for `seq`.
pub fn render_response(
    think: &str,
    seq: &[Transformation],
    vocab: &AttributeVocab,
) -> Result<String, SceneError> {
    Ok(wrap_in_tags(think, &serialize_answer(seq, vocab)?))
}

/// Exactly one think block then exactly one answer block, with only
/// whitespace around and between them.
fn check_structure(raw: &str) -> Result<(), String> {
    for tag in [THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE] {
        let n = raw.matches(tag).count();
        if n != 1 {
            return Err(format!("expected one `{tag}`, found {n}"));
        }
    }
    let pos = |tag| raw.find(tag).unwrap();
    let (to, tc, ao, ac) = (
        pos(THINK_OPEN),
        pos(THINK_CLOSE),
        pos(ANSWER_OPEN),
        pos(ANSWER_CLOSE),
    );
    if !(to < tc && tc < ao && ao < ac) {
        return Err("tags out of order".into());
    }
    let outside = [
        &raw[..to],
        &raw[tc + THINK_CLOSE.len()..ao],
        &raw[ac + ANSWER_CLOSE.len()..],
    ];
    if outside.iter().any(|s| !s.trim().is_empty()) {
        return Err("text outside the tag blocks".into());
    }
    Ok(())
}

/// Contents of the first `open ... close` block, if closed.
fn block<'a>(raw: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = raw.find(open)? + open.len();
    let end = raw[start..].find(close)?;
    Some(&raw[start..start + end])
}

fn parse_answer_body(
    body: &str,
    vocab: &AttributeVocab,
    notes: &mut Vec<ParseNote>,
) -> TransformationSequence {
    let trimmed = body.trim();
    if trimmed.is_empty() {
        return Vec::new();
    }
    if let Ok(serde_json::Value::Array(items)) = serde_json::from_str::<serde_json::Value>(trimmed)
    {
        return items
            .iter()
            .enumerate()
            .filter_map(|(i, item)| json_item(i, item, vocab, notes))
            .collect();
    }
    trimmed
        .split(['\n', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .enumerate()
        .filter_map(|(i, chunk)| line_item(i, chunk, vocab, notes))
        .collect()
}

fn json_item(
    item: usize,
    value: &serde_json::Value,
    vocab: &AttributeVocab,
    notes: &mut Vec<ParseNote>,
) -> Option<Transformation> {
    let malformed = |notes: &mut Vec<ParseNote>| {
        notes.push(ParseNote::MalformedItem {
            item,
            text: value.to_string(),
        });
        None
    };
    let Some(obj) = value.as_object() else {
        return malformed(notes);
    };
    let (Some(index), Some(attribute), Some(val)) =
        (obj.get("index"), obj.get("attribute"), obj.get("value"))
    else {
        return malformed(notes);
    };
    let index = match index {
        serde_json::Value::Number(n) => n.as_u64().map(|x| x as usize),
        serde_json::Value::String(s) => s.trim().parse().ok(),
        _ => None,
    };
    let Some(index) = index else {
        notes.push(ParseNote::BadIndex {
            item,
            index: obj["index"].to_string(),
        });
        return None;
    };
    let (Some(attribute), Some(val)) = (attribute.as_str(), val.as_str()) else {
        return malformed(notes);
    };
    resolve(item, index, attribute, val, vocab, notes)
}

fn line_item(
    item: usize,
    chunk: &str,
    vocab: &AttributeVocab,
    notes: &mut Vec<ParseNote>,
) -> Option<Transformation> {
    let inner = chunk
        .trim_matches(|c: char| c == '(' || c == ')' || c == '[' || c == ']' || c == ',')
        .trim();
    let parts: Vec<&str> = inner
        .split(',')
        .map(|p| p.trim().trim_matches(|c| c == '"' || c == '\'').trim())
        .collect();
    if parts.len() != 3 {
        notes.push(ParseNote::MalformedItem {
            item,
            text: chunk.to_string(),
        });
        return None;
    }
    let Ok(index) = parts[0].parse::<usize>() else {
        notes.push(ParseNote::BadIndex {
            item,
            index: parts[0].to_string(),
        });
        return None;
    };
    resolve(item, index, parts[1], parts[2], vocab, notes)
}

fn resolve(
    item: usize,
    index: usize,
    attribute: &str,
    value: &str,
    vocab: &AttributeVocab,
    notes: &mut Vec<ParseNote>,
) -> Option<Transformation> {
    let Ok(attr) = attribute.parse::<Attribute>() else {
        notes.push(ParseNote::UnknownAttribute {
            item,
            attribute: attribute.to_string(),
        });
        return None;
    };
    let value = value.trim();
    let values = vocab.values(attr);
    let canonical = values
        .iter()
        .find(|v| v.as_str() == value)
        .or_else(|| values.iter().find(|v| v.eq_ignore_ascii_case(value)));
    match canonical {
        Some(v) => Some(Transformation::new(index, attr, v.clone())),
        None => {
            notes.push(ParseNote::UnknownValue {
                item,
                attribute: attr,
                value: value.to_string(),
            });
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> AttributeVocab {
        AttributeVocab::default()
    }

    #[test]
    fn canonical_response_parses() {
        let raw = r#"<think>obj 0 changed</think><answer>[{"index":0,"attribute":"color","value":"red"}]</answer>"#;
        let p = parse_response(raw, &vocab());
        assert!(p.format_ok);
        assert_eq!(p.think_text.as_deref(), Some("obj 0 changed"));
        assert_eq!(
            p.answer_items,
            vec![Transformation::new(0, Attribute::Color, "red")]
        );
        assert!(p.parse_notes.is_empty());
        assert_eq!(format_reward(&p), 1.0);
    }

    #[test]
    fn missing_answer_close_is_a_violation() {
        let raw = r#"<think>hmm</think><answer>[{"index":0,"attribute":"color","value":"red"}]"#;
        let p = parse_response(raw, &vocab());
        assert!(!p.format_ok);
        assert!(p.answer_items.is_empty());
        assert!(p.parse_notes.contains(&ParseNote::MissingAnswer));
        assert_eq!(format_reward(&p), 0.0);
    }

    #[test]
    fn unknown_attribute_is_diagnosed() {
        let raw = r#"<think>x</think><answer>[{"index":1,"attribute":"size","value":"large"},{"index":2,"attribute":"weight","value":"heavy"}]</answer>"#;
        let p = parse_response(raw, &vocab());
        assert!(p.format_ok);
        assert_eq!(
            p.answer_items,
            vec![Transformation::new(1, Attribute::Size, "large")]
        );
        assert_eq!(
            p.parse_notes,
            vec![ParseNote::UnknownAttribute {
                item: 1,
                attribute: "weight".into()
            }]
        );
    }

    #[test]
    fn empty_string_scores_zero() {
        let p = parse_response("", &vocab());
        assert!(!p.format_ok);
        assert!(p.answer_items.is_empty());
        assert_eq!(format_reward(&p), 0.0);
    }

    #[test]
    fn lone_answer_block_still_yields_items() {
        let p = parse_response(
            r#"<answer>[{"index":4,"attribute":"material","value":"metal"}]</answer>"#,
            &vocab(),
        );
        assert!(!p.format_ok);
        assert_eq!(p.answer_items.len(), 1);
    }

    #[test]
    fn structure_rules() {
        let v = vocab();
        let ok = |s: &str| parse_response(s, &v).format_ok;
        assert!(ok("<think>a</think>\n<answer>[]</answer>\n"));
        assert!(!ok("<answer>[]</answer><think>a</think>"));
        assert!(!ok("<think>a</think><think>b</think><answer>[]</answer>"));
        assert!(!ok(
            "<think>a</think><answer>[]</answer><answer>[]</answer>"
        ));
        assert!(!ok("preamble <think>a</think><answer>[]</answer>"));
        assert!(!ok("<THINK>a</THINK><answer>[]</answer>"));
    }

    #[test]
    fn line_fallback_grammar() {
        let raw = "<think>t</think><answer>\n(0, color, red)\n1, shape, Sphere; 2, size, gigantic\nnonsense\nx, color, red\n</answer>";
        let p = parse_response(raw, &vocab());
        assert!(p.format_ok);
        assert_eq!(
            p.answer_items,
            vec![
                Transformation::new(0, Attribute::Color, "red"),
                Transformation::new(1, Attribute::Shape, "sphere"),
            ]
        );
        assert_eq!(p.parse_notes.len(), 3);
        assert!(matches!(p.parse_notes[0], ParseNote::UnknownValue { .. }));
        assert!(matches!(p.parse_notes[1], ParseNote::MalformedItem { .. }));
        assert!(matches!(p.parse_notes[2], ParseNote::BadIndex { .. }));
    }

    #[test]
    fn json_negative_index_is_bad_index() {
        let raw = r#"<think></think><answer>[{"index":-1,"attribute":"color","value":"red"}, 7]</answer>"#;
        let p = parse_response(raw, &vocab());
        assert!(p.answer_items.is_empty());
        assert!(matches!(p.parse_notes[0], ParseNote::BadIndex { .. }));
        assert!(matches!(p.parse_notes[1], ParseNote::MalformedItem { .. }));
    }

    #[test]
    fn serialize_forms() {
        let v = vocab();
        assert_eq!(serialize_answer(&[], &v).unwrap(), "[]");
        assert_eq!(
            serialize_answer(&[Transformation::new(0, Attribute::Color, "red")], &v).unwrap(),
            r#"[{"index":0,"attribute":"color","value":"red"}]"#
        );
        assert!(serialize_answer(&[Transformation::new(0, Attribute::Color, "teal")], &v).is_err());
    }

    fn arb_seq() -> impl Strategy<Value = TransformationSequence> {
        let v = AttributeVocab::default();
        proptest::collection::vec((0usize..12, 0..4usize, 0..8usize), 0..10).prop_map(move |xs| {
            xs.into_iter()
                .map(|(i, a, k)| {
                    let attr = Attribute::ALL[a];
                    let values = v.values(attr);
                    Transformation::new(i, attr, values[k % values.len()].clone())
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn round_trip(seq in arb_seq(), think in "[a-z .]{0,20}") {
            let v = AttributeVocab::default();
            let raw = render_response(&think, &seq, &v).unwrap();
            let p = parse_response(&raw, &v);
            prop_assert!(p.format_ok);
            prop_assert_eq!(p.answer_items, seq);
        }

        #[test]
        fn parse_is_total(raw in "(<think>|</think>|<answer>|</answer>|\\[|\\]|\\{|\\}|[a-z0-9,;\" \n:])*") {
            let v = AttributeVocab::default();
            let p = parse_response(&raw, &v);
            if p.format_ok {
                prop_assert_eq!(format_reward(&p), 1.0);
            }
        }

        #[test]
        fn format_reward_ignores_answer_content(a in arb_seq(), b in arb_seq()) {
            let v = AttributeVocab::default();
            let pa = parse_response(&render_response("x", &a, &v).unwrap(), &v);
            let pb = parse_response(&render_response("x", &b, &v).unwrap(), &v);
            prop_assert_eq!(format_reward(&pa), format_reward(&pb));
        }
    }
}
