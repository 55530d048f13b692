//! Randomized inputs for property checks: tagging cases over a single sentence
//! and paired gold/predicted documents for scoring.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{AnnotatedDocument, CharSpan, ContextAttributes, Dimension, EventLabel, Label, MedicationMention};
use crate::preproc::{sentences, Sentence};

const SYLLABLES: &[&str] = &["ka", "lo", "mi", "nor", "pra", "ze", "tol", "vin", "dex", "ol", "um", "ra"];
const PUNCT: &[char] = &[',', ';', ':', '(', ')', '/', '-', '%'];

fn word<R: Rng>(rng: &mut R) -> String {
    match rng.gen_range(0..10) {
        0 => rng.gen_range(0..1000).to_string(),
        1 => PUNCT.choose(rng).expect("non-empty").to_string(),
        _ => (0..rng.gen_range(1..=4))
            .map(|_| *SYLLABLES.choose(rng).expect("non-empty"))
            .collect(),
    }
}

/// One sentence plus a non-overlapping, token-aligned mention set.
#[derive(Debug, Clone)]
pub struct TaggingCase {
    pub text: String,
    pub sentence: Sentence,
    pub mentions: Vec<CharSpan>,
}

/// A sentence of 1..=`max_words` tokens without terminal punctuation, with
/// mentions covering random runs of whole tokens.
pub fn tagging_case<R: Rng>(rng: &mut R, max_words: usize) -> TaggingCase {
    let n = rng.gen_range(1..=max_words.max(1));
    let mut text = String::new();
    for i in 0..n {
        if i > 0 {
            text.push_str(if rng.gen_bool(0.1) { "\n" } else { " " });
        }
        text.push_str(&word(rng));
    }
    let sentence = sentences(&text).into_iter().next().expect("non-empty text has a sentence");
    let tokens = &sentence.tokens;
    let mut mentions = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if rng.gen_bool(0.3) {
            let len = rng.gen_range(1..=3).min(tokens.len() - i);
            mentions.push(CharSpan::new(tokens[i].span.start, tokens[i + len - 1].span.end));
            // adjacent mentions are allowed
            i += len;
        } else {
            i += 1;
        }
    }
    TaggingCase { text, sentence, mentions }
}

fn random_context<R: Rng>(rng: &mut R) -> ContextAttributes {
    let mut c = ContextAttributes::default();
    for d in Dimension::ALL {
        c.set(d, rng.gen_range(0..d.class_count()));
    }
    c
}

fn random_mention<R: Rng>(rng: &mut R, text: &str, span: CharSpan) -> MedicationMention {
    let event = EventLabel::ALL[rng.gen_range(0..EventLabel::ALL.len())];
    let context = (event == EventLabel::Disposition).then(|| random_context(rng));
    MedicationMention::from_text(text, span, event, context).expect("span lies in the text")
}

/// Sorted disjoint spans inside `0..len`.
fn random_spans<R: Rng>(rng: &mut R, len: usize, max: usize) -> Vec<CharSpan> {
    let mut spans = Vec::new();
    let mut pos = 0;
    while spans.len() < max && pos < len {
        pos += rng.gen_range(0..6);
        let w = rng.gen_range(1..=5);
        if pos + w > len {
            break;
        }
        spans.push(CharSpan::new(pos, pos + w));
        pos += w;
    }
    spans
}

/// A prediction near `gold`: exact copies, shifted or resized copies, drops
/// and spurious spans, kept disjoint and inside the text.
fn perturbed_spans<R: Rng>(rng: &mut R, gold: &[CharSpan], len: usize, max: usize) -> Vec<CharSpan> {
    let mut cand: Vec<CharSpan> = Vec::new();
    for g in gold {
        match rng.gen_range(0..5) {
            0 => {}
            1 => {
                let s = (g.start as i64 + rng.gen_range(-2..=2)).clamp(0, len as i64 - 1) as usize;
                let e = (g.end as i64 + rng.gen_range(-2..=2)).clamp(s as i64 + 1, len as i64) as usize;
                cand.push(CharSpan::new(s, e));
            }
            _ => cand.push(*g),
        }
    }
    for _ in 0..rng.gen_range(0..3) {
        let s = rng.gen_range(0..len);
        let e = (s + rng.gen_range(1..=5)).min(len);
        cand.push(CharSpan::new(s, e));
    }
    cand.shuffle(rng);
    let mut kept: Vec<CharSpan> = Vec::new();
    for c in cand {
        if kept.len() < max && kept.iter().all(|k| !k.overlaps(&c)) {
            kept.push(c);
        }
    }
    kept.sort();
    kept
}

/// Gold and predicted versions of the same documents. Predicted mentions
/// reuse the gold labels with probability `agree`, otherwise draw new ones.
pub fn scoring_instance<R: Rng>(
    rng: &mut R,
    n_docs: usize,
    max_spans: usize,
    agree: f64,
) -> (Vec<AnnotatedDocument>, Vec<AnnotatedDocument>) {
    let mut gold_docs = Vec::with_capacity(n_docs);
    let mut pred_docs = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let len = rng.gen_range(10..80);
        let text: String = (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
        let doc_id = format!("doc{d:03}");
        let k = rng.gen_range(0..=max_spans);
        let gold_spans = random_spans(rng, len, k);
        let gold: Vec<MedicationMention> = gold_spans.iter().map(|&s| random_mention(rng, &text, s)).collect();
        let pred: Vec<MedicationMention> = perturbed_spans(rng, &gold_spans, len, max_spans)
            .into_iter()
            .map(|s| match gold.iter().find(|g| g.span == s) {
                Some(g) if rng.gen_bool(agree) => g.clone(),
                _ => random_mention(rng, &text, s),
            })
            .collect();
        gold_docs.push(AnnotatedDocument::new(doc_id.clone(), text.clone(), gold).expect("valid gold"));
        pred_docs.push(AnnotatedDocument::new(doc_id, text, pred).expect("valid prediction"));
    }
    (gold_docs, pred_docs)
}
