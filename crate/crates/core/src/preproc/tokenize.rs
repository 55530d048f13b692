use serde::{Deserialize, Serialize};

use crate::corpus::CharSpan;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub span: CharSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    /// From the first token's start to the last token's end.
    pub span: CharSpan,
    pub tokens: Vec<Token>,
}

impl Sentence {
    fn from_tokens(tokens: Vec<Token>) -> Self {
        let span = CharSpan::new(tokens[0].span.start, tokens[tokens.len() - 1].span.end);
        Sentence { span, tokens }
    }

    /// Indices of tokens overlapping `span` by at least one character.
    pub fn overlapping_tokens(&self, span: CharSpan) -> std::ops::Range<usize> {
        let first = self.tokens.partition_point(|t| t.span.end <= span.start);
        let last = self.tokens.partition_point(|t| t.span.start < span.end);
        first..last.max(first)
    }
}

/// Splits text into maximal alphanumeric runs and single punctuation characters.
/// Whitespace separates tokens and is never part of one.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current: Option<(usize, String)> = None;
    let flush = |current: &mut Option<(usize, String)>, end: usize, out: &mut Vec<Token>| {
        if let Some((start, s)) = current.take() {
            out.push(Token {
                text: s,
                span: CharSpan::new(start, end),
            });
        }
    };
    let mut pos = 0;
    for c in text.chars() {
        if c.is_alphanumeric() {
            match &mut current {
                Some((_, s)) => s.push(c),
                None => current = Some((pos, c.to_string())),
            }
        } else {
            flush(&mut current, pos, &mut tokens);
            if !c.is_whitespace() {
                tokens.push(Token {
                    text: c.to_string(),
                    span: CharSpan::new(pos, pos + 1),
                });
            }
        }
        pos += 1;
    }
    flush(&mut current, pos, &mut tokens);
    tokens
}

fn is_terminator(t: &Token) -> bool {
    matches!(t.text.as_str(), "." | "!" | "?")
}

/// Groups tokens into sentences. A sentence ends after `.`, `!` or `?`, or
/// where the whitespace between two tokens contains a blank line.
pub fn split_sentences(text: &str, tokens: &[Token]) -> Vec<Sentence> {
    // Character offsets of every newline, for blank-line checks between tokens.
    let newlines: Vec<usize> = text
        .chars()
        .enumerate()
        .filter_map(|(i, c)| (c == '\n').then_some(i))
        .collect();
    let newlines_between = |a: usize, b: usize| {
        newlines.partition_point(|&p| p < b) - newlines.partition_point(|&p| p < a)
    };

    let mut sentences = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        current.push(tok.clone());
        let boundary = match tokens.get(i + 1) {
            None => true,
            Some(next) => is_terminator(tok) || newlines_between(tok.span.end, next.span.start) >= 2,
        };
        if boundary {
            sentences.push(Sentence::from_tokens(std::mem::take(&mut current)));
        }
    }
    sentences
}

/// Tokenizes and sentence-splits in one pass.
pub fn sentences(text: &str) -> Vec<Sentence> {
    split_sentences(text, &tokenize(text))
}
