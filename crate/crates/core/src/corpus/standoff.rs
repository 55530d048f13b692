//! Tab-separated standoff annotation format.
//!
//! ```text
//! T1	Drug 11 21	lisinopril
//! E1	Disposition:T1
//! A1	Action E1 Start
//! ```
//!
//! Offsets are character offsets into the LF-normalized note text.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{
    char_slice, flatten_surface, normalize_newlines, AnnotatedDocument, CharSpan,
    ContextAttributes, CorpusError, Dimension, EventLabel, Label, MedicationMention,
};

const ENTITY_TYPE: &str = "Drug";

struct TextBound {
    span: CharSpan,
    surface: String,
    line: usize,
}

struct Event {
    label: EventLabel,
    target: String,
    line: usize,
}

fn parse_err(line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses a standoff annotation string against its note text.
pub fn parse_standoff(
    doc_id: &str,
    text: &str,
    ann: &str,
) -> Result<AnnotatedDocument, CorpusError> {
    let text = normalize_newlines(text);
    let text_len = text.chars().count();

    let mut bounds: BTreeMap<String, TextBound> = BTreeMap::new();
    let mut events: BTreeMap<String, Event> = BTreeMap::new();
    let mut attributes: Vec<(usize, Dimension, String, String)> = Vec::new();

    for (i, raw) in normalize_newlines(ann).lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        let id = fields[0];
        match id.chars().next() {
            Some('T') => {
                if fields.len() != 3 {
                    return Err(parse_err(line, "text-bound line needs 3 tab-separated fields"));
                }
                let parts: Vec<&str> = fields[1].split(' ').collect();
                if parts.len() != 3 {
                    return Err(parse_err(line, "expected `Drug <start> <end>`"));
                }
                if parts[0] != ENTITY_TYPE {
                    return Err(parse_err(line, format!("unknown entity type {:?}", parts[0])));
                }
                let start: usize = parts[1]
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad start offset {:?}", parts[1])))?;
                let end: usize = parts[2]
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad end offset {:?}", parts[2])))?;
                if start >= end || end > text_len {
                    return Err(CorpusError::Range {
                        span: CharSpan { start, end },
                        len: text_len,
                    });
                }
                let bound = TextBound {
                    span: CharSpan::new(start, end),
                    surface: fields[2].to_string(),
                    line,
                };
                if bounds.insert(id.to_string(), bound).is_some() {
                    return Err(parse_err(line, format!("duplicate id {id}")));
                }
            }
            Some('E') => {
                if fields.len() != 2 {
                    return Err(parse_err(line, "event line needs 2 tab-separated fields"));
                }
                let (label, target) = fields[1]
                    .split_once(':')
                    .ok_or_else(|| parse_err(line, "expected `<EventLabel>:T<n>`"))?;
                let label = EventLabel::parse(label)
                    .ok_or_else(|| parse_err(line, format!("unknown event label {label:?}")))?;
                let ev = Event {
                    label,
                    target: target.to_string(),
                    line,
                };
                if events.insert(id.to_string(), ev).is_some() {
                    return Err(parse_err(line, format!("duplicate id {id}")));
                }
            }
            Some('A') => {
                if fields.len() != 2 {
                    return Err(parse_err(line, "attribute line needs 2 tab-separated fields"));
                }
                let parts: Vec<&str> = fields[1].split(' ').collect();
                if parts.len() != 3 {
                    return Err(parse_err(line, "expected `<Dimension> E<n> <Value>`"));
                }
                let dim = Dimension::parse(parts[0])
                    .ok_or_else(|| parse_err(line, format!("unknown dimension {:?}", parts[0])))?;
                attributes.push((line, dim, parts[1].to_string(), parts[2].to_string()));
            }
            _ => return Err(parse_err(line, format!("unrecognized record id {id:?}"))),
        }
    }

    // event id -> (text-bound id, label, context)
    let mut by_bound: BTreeMap<String, (EventLabel, Option<ContextAttributes>)> = BTreeMap::new();
    let mut event_target: BTreeMap<&str, &str> = BTreeMap::new();
    for (eid, ev) in &events {
        if !bounds.contains_key(&ev.target) {
            return Err(CorpusError::Schema(format!(
                "line {}: event {eid} refers to unknown mention {}",
                ev.line, ev.target
            )));
        }
        let context = (ev.label == EventLabel::Disposition).then(ContextAttributes::default);
        if by_bound.insert(ev.target.clone(), (ev.label, context)).is_some() {
            return Err(CorpusError::Schema(format!(
                "line {}: mention {} has more than one event",
                ev.line, ev.target
            )));
        }
        event_target.insert(eid, &ev.target);
    }

    let mut assigned: BTreeMap<(String, Dimension), usize> = BTreeMap::new();
    for (line, dim, eid, value) in &attributes {
        let target = event_target.get(eid.as_str()).ok_or_else(|| {
            CorpusError::Schema(format!("line {line}: attribute refers to unknown event {eid}"))
        })?;
        let (label, context) = by_bound.get_mut(*target).expect("event targets resolved above");
        let context = context.as_mut().ok_or_else(|| {
            CorpusError::Schema(format!(
                "line {line}: {} attribute on {label} event {eid}",
                dim.name()
            ))
        })?;
        if let Some(prev) = assigned.insert((eid.clone(), *dim), *line) {
            return Err(CorpusError::Schema(format!(
                "line {line}: {} of {eid} already set on line {prev}",
                dim.name()
            )));
        }
        if !context.set_named(*dim, value) {
            return Err(parse_err(
                *line,
                format!("{value:?} is not a {} value", dim.name()),
            ));
        }
    }

    let mut mentions = Vec::with_capacity(bounds.len());
    for (tid, bound) in bounds {
        let expected = char_slice(&text, bound.span).unwrap_or_default();
        if flatten_surface(expected) != flatten_surface(&bound.surface) {
            return Err(CorpusError::Integrity {
                span: bound.span,
                expected: expected.to_string(),
                found: bound.surface,
            });
        }
        let (event, context) = by_bound.remove(&tid).ok_or_else(|| {
            CorpusError::Schema(format!("line {}: mention {tid} has no event", bound.line))
        })?;
        mentions.push(MedicationMention {
            span: bound.span,
            surface: expected.to_string(),
            event,
            context,
        });
    }
    AnnotatedDocument::new(doc_id, text, mentions)
}

/// Serializes a document's mentions; the inverse of [`parse_standoff`].
///
/// Only context values that differ from the unannotated default are written.
pub fn write_standoff(doc: &AnnotatedDocument) -> String {
    let mut out = String::new();
    let mut attr_id = 0;
    let mut mentions: Vec<&MedicationMention> = doc.mentions.iter().collect();
    mentions.sort_by_key(|m| m.span);
    for (i, m) in mentions.iter().enumerate() {
        let n = i + 1;
        let _ = writeln!(
            out,
            "T{n}\t{ENTITY_TYPE} {} {}\t{}",
            m.span.start,
            m.span.end,
            flatten_surface(&m.surface)
        );
        let _ = writeln!(out, "E{n}\t{}:T{n}", m.event);
        if let Some(ctx) = &m.context {
            for dim in Dimension::ALL {
                if !ctx.is_default(dim) {
                    attr_id += 1;
                    let _ = writeln!(
                        out,
                        "A{attr_id}\t{} E{n} {}",
                        dim.name(),
                        ctx.value_name(dim)
                    );
                }
            }
        }
    }
    out
}
