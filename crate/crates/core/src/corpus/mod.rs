//! Documents, medication annotations, standoff I/O and corpus statistics.

mod io;
mod labels;
mod standoff;
mod stats;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_corpus, load_split, save_corpus};
pub use labels::{
    Action, Actor, Certainty, ContextAttributes, Dimension, EventLabel, Label, Negation,
    Temporality,
};
pub use standoff::{parse_standoff, write_standoff};
pub use stats::{corpus_stats, CorpusStats, SplitStats};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("span {span} out of bounds for text of {len} characters")]
    Range { span: CharSpan, len: usize },
    #[error("surface {found:?} does not match text {expected:?} at {span}")]
    Integrity {
        span: CharSpan,
        expected: String,
        found: String,
    },
    #[error("schema: {0}")]
    Schema(String),
    #[error("mentions at {0} and {1} overlap")]
    Conflict(CharSpan, CharSpan),
    #[error("{0} has no matching .ann file")]
    MissingPair(String),
    #[error("document id {0:?} appears more than once")]
    Duplicate(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Half-open character range `[start, end)` into a document's text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start < end, "empty or inverted span {start}..{end}");
        CharSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &CharSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl fmt::Display for CharSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.start, self.end)
    }
}

/// Converts CRLF and lone CR line endings to LF.
pub fn normalize_newlines(text: &str) -> String {
    if !text.contains('\r') {
        return text.to_string();
    }
    text.replace("\r\n", "\n").replace('\r', "\n")
}

/// Slice of `text` covering the character span, or `None` if out of bounds.
pub fn char_slice(text: &str, span: CharSpan) -> Option<&str> {
    if span.start >= span.end {
        return None;
    }
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let start = indices.nth(span.start)?;
    let end = indices.nth(span.end - span.start - 1)?;
    Some(&text[start..end])
}

/// Surface form as written to a standoff file: line breaks and tabs become spaces.
pub(crate) fn flatten_surface(s: &str) -> String {
    s.chars()
        .map(|c| if c == '\n' || c == '\t' { ' ' } else { c })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicationMention {
    pub span: CharSpan,
    pub surface: String,
    pub event: EventLabel,
    /// Present exactly when `event` is Disposition.
    pub context: Option<ContextAttributes>,
}

impl MedicationMention {
    /// Builds a mention, slicing its surface out of `text`.
    pub fn from_text(
        text: &str,
        span: CharSpan,
        event: EventLabel,
        context: Option<ContextAttributes>,
    ) -> Result<Self, CorpusError> {
        let surface = char_slice(text, span).ok_or(CorpusError::Range {
            span,
            len: text.chars().count(),
        })?;
        Ok(MedicationMention {
            span,
            surface: surface.to_string(),
            event,
            context,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub doc_id: String,
    pub text: String,
    /// Sorted by span start; spans never overlap.
    pub mentions: Vec<MedicationMention>,
}

impl AnnotatedDocument {
    /// Validates and sorts mentions. Text is expected to be LF-normalized.
    pub fn new(
        doc_id: impl Into<String>,
        text: impl Into<String>,
        mut mentions: Vec<MedicationMention>,
    ) -> Result<Self, CorpusError> {
        let text = text.into();
        mentions.sort_by_key(|m| m.span);
        let len = text.chars().count();
        for m in &mentions {
            if m.span.start >= m.span.end || m.span.end > len {
                return Err(CorpusError::Range { span: m.span, len });
            }
            let expected = char_slice(&text, m.span).unwrap_or_default();
            if flatten_surface(expected) != flatten_surface(&m.surface) {
                return Err(CorpusError::Integrity {
                    span: m.span,
                    expected: expected.to_string(),
                    found: m.surface.clone(),
                });
            }
            let disposition = m.event == EventLabel::Disposition;
            if disposition != m.context.is_some() {
                return Err(CorpusError::Schema(format!(
                    "mention at {} has event {} but context {}",
                    m.span,
                    m.event,
                    if m.context.is_some() { "present" } else { "absent" }
                )));
            }
        }
        for pair in mentions.windows(2) {
            if pair[0].span.overlaps(&pair[1].span) {
                return Err(CorpusError::Conflict(pair[0].span, pair[1].span));
            }
        }
        Ok(AnnotatedDocument {
            doc_id: doc_id.into(),
            text,
            mentions,
        })
    }

    pub fn spans(&self) -> Vec<CharSpan> {
        self.mentions.iter().map(|m| m.span).collect()
    }
}

/// Which partition a document belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|sp| sp.dir_name() == s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub train: Vec<AnnotatedDocument>,
    pub dev: Vec<AnnotatedDocument>,
    pub test: Vec<AnnotatedDocument>,
}

impl Corpus {
    pub fn new(
        train: Vec<AnnotatedDocument>,
        dev: Vec<AnnotatedDocument>,
        test: Vec<AnnotatedDocument>,
    ) -> Result<Self, CorpusError> {
        let mut seen = std::collections::HashSet::new();
        for d in train.iter().chain(&dev).chain(&test) {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(CorpusError::Duplicate(d.doc_id.clone()));
            }
        }
        Ok(Corpus { train, dev, test })
    }

    pub fn split(&self, split: Split) -> &[AnnotatedDocument] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_slice_handles_multibyte() {
        let t = "café au lait";
        assert_eq!(char_slice(t, CharSpan::new(0, 4)), Some("café"));
        assert_eq!(char_slice(t, CharSpan::new(5, 7)), Some("au"));
        assert_eq!(char_slice(t, CharSpan::new(8, 12)), Some("lait"));
        assert_eq!(char_slice(t, CharSpan::new(8, 13)), None);
    }

    #[test]
    fn overlapping_mentions_conflict() {
        let text = "insulin glargine";
        let a = MedicationMention::from_text(text, CharSpan::new(0, 7), EventLabel::NoDisposition, None)
            .unwrap();
        let b = MedicationMention::from_text(text, CharSpan::new(0, 16), EventLabel::NoDisposition, None)
            .unwrap();
        let err = AnnotatedDocument::new("d", text, vec![a, b]).unwrap_err();
        assert!(matches!(err, CorpusError::Conflict(..)));
    }

    #[test]
    fn context_presence_tracks_event() {
        let text = "aspirin";
        let m = MedicationMention::from_text(text, CharSpan::new(0, 7), EventLabel::Disposition, None)
            .unwrap();
        assert!(matches!(
            AnnotatedDocument::new("d", text, vec![m]),
            Err(CorpusError::Schema(_))
        ));
    }

    #[test]
    fn duplicate_ids_across_splits() {
        let d = AnnotatedDocument::new("x", "", vec![]).unwrap();
        let err = Corpus::new(vec![d.clone()], vec![], vec![d]).unwrap_err();
        assert!(matches!(err, CorpusError::Duplicate(id) if id == "x"));
    }

    #[test]
    fn crlf_normalized() {
        assert_eq!(normalize_newlines("a\r\nb\rc"), "a\nb\nc");
    }
}
