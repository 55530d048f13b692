//! Span matching and challenge-style scoring for extraction, event and
//! context classification, plus an exhaustive oracle for cross-checking.

pub mod oracle;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatedDocument, CharSpan, ContextAttributes, Dimension, EventLabel, Label};

pub use report::{AccuracyScore, ClassScores, MetricRecord, MetricsReport};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("overlapping {side} spans {0} and {1}", side = .2)]
    Overlap(CharSpan, CharSpan, &'static str),
    #[error("prediction for unknown document {0:?}")]
    UnknownDocument(String),
    #[error("{found} spans in document {doc_id:?} exceed the oracle limit of {limit}")]
    Size { doc_id: String, found: usize, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Identical start and end offsets.
    Strict,
    /// At least one character of overlap.
    Lenient,
}

impl MatchMode {
    pub fn name(self) -> &'static str {
        match self {
            MatchMode::Strict => "strict",
            MatchMode::Lenient => "lenient",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "strict" => Some(MatchMode::Strict),
            "lenient" => Some(MatchMode::Lenient),
            _ => None,
        }
    }

    pub fn accepts(self, gold: CharSpan, pred: CharSpan) -> bool {
        match self {
            MatchMode::Strict => gold == pred,
            MatchMode::Lenient => gold.overlaps(&pred),
        }
    }
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One-to-one pairing between gold and predicted spans, by index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchResult {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_gold: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

pub(crate) fn check_disjoint(spans: &[CharSpan], side: &'static str) -> Result<(), EvalError> {
    let mut sorted = spans.to_vec();
    sorted.sort();
    for w in sorted.windows(2) {
        if w[0].overlaps(&w[1]) {
            return Err(EvalError::Overlap(w[0], w[1], side));
        }
    }
    Ok(())
}

/// Pairs gold with predicted spans. Gold spans are visited in order and each
/// takes the leftmost still-free prediction it accepts.
pub fn match_spans(gold: &[CharSpan], pred: &[CharSpan], mode: MatchMode) -> Result<MatchResult, EvalError> {
    check_disjoint(gold, "gold")?;
    check_disjoint(pred, "predicted")?;
    let mut pred_order: Vec<usize> = (0..pred.len()).collect();
    pred_order.sort_by_key(|&j| pred[j]);
    let mut taken = vec![false; pred.len()];
    let mut result = MatchResult::default();
    for (i, &g) in gold.iter().enumerate() {
        let hit = pred_order.iter().copied().find(|&j| !taken[j] && mode.accepts(g, pred[j]));
        match hit {
            Some(j) => {
                taken[j] = true;
                result.pairs.push((i, j));
            }
            None => result.unmatched_gold.push(i),
        }
    }
    result.unmatched_pred = (0..pred.len()).filter(|&j| !taken[j]).collect();
    Ok(result)
}

/// True/false positive and false negative counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn scores(&self) -> Prf {
        Prf::from_counts(*self)
    }
}

/// Precision, recall and F1. A zero denominator yields 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Prf {
    pub fn from_counts(c: Counts) -> Self {
        Self::from_pr(ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_))
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

/// A mention's identity across gold and predicted annotations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MentionKey {
    pub doc_id: String,
    pub span: CharSpan,
}

pub type SpanPredictions = BTreeMap<String, Vec<CharSpan>>;
pub type EventPredictions = BTreeMap<String, Vec<(CharSpan, EventLabel)>>;
pub type ContextPredictions = BTreeMap<MentionKey, ContextAttributes>;

pub fn span_predictions(docs: &[AnnotatedDocument]) -> SpanPredictions {
    docs.iter().map(|d| (d.doc_id.clone(), d.spans())).collect()
}

pub fn event_predictions(docs: &[AnnotatedDocument]) -> EventPredictions {
    docs.iter()
        .map(|d| (d.doc_id.clone(), d.mentions.iter().map(|m| (m.span, m.event)).collect()))
        .collect()
}

pub fn context_predictions(docs: &[AnnotatedDocument]) -> ContextPredictions {
    docs.iter()
        .flat_map(|d| {
            d.mentions.iter().filter_map(move |m| {
                m.context.map(|c| {
                    (
                        MentionKey {
                            doc_id: d.doc_id.clone(),
                            span: m.span,
                        },
                        c,
                    )
                })
            })
        })
        .collect()
}

fn check_known<'a, I>(gold: &[AnnotatedDocument], ids: I) -> Result<(), EvalError>
where
    I: IntoIterator<Item = &'a String>,
{
    let known: BTreeSet<&str> = gold.iter().map(|d| d.doc_id.as_str()).collect();
    match ids.into_iter().find(|id| !known.contains(id.as_str())) {
        Some(id) => Err(EvalError::UnknownDocument(id.clone())),
        None => Ok(()),
    }
}

/// Mention extraction scores. Micro pools counts over all documents; macro
/// averages per-document scores over documents that have at least one gold
/// or predicted mention. Documents without predictions count as empty.
pub fn ner_metrics(
    gold: &[AnnotatedDocument],
    pred: &SpanPredictions,
    mode: MatchMode,
) -> Result<MetricsReport, EvalError> {
    check_known(gold, pred.keys())?;
    let empty = Vec::new();
    let mut micro = Counts::default();
    let mut per_doc = Vec::new();
    for doc in gold {
        let g = doc.spans();
        let p = pred.get(&doc.doc_id).unwrap_or(&empty);
        let m = match_spans(&g, p, mode)?;
        let c = Counts {
            tp: m.pairs.len(),
            fp: m.unmatched_pred.len(),
            fn_: m.unmatched_gold.len(),
        };
        micro.add(c);
        if !g.is_empty() || !p.is_empty() {
            per_doc.push(c.scores());
        }
    }
    let n = per_doc.len() as f64;
    let macro_avg = if per_doc.is_empty() {
        Prf::default()
    } else {
        Prf {
            precision: per_doc.iter().map(|s| s.precision).sum::<f64>() / n,
            recall: per_doc.iter().map(|s| s.recall).sum::<f64>() / n,
            f1: per_doc.iter().map(|s| s.f1).sum::<f64>() / n,
        }
    };
    let mut report = MetricsReport::new("ner", mode);
    report.micro = Some(ClassScores::new("micro", micro));
    report.macro_avg = Some(macro_avg);
    Ok(report)
}

/// Per-class event scores. A prediction is a true positive for class c when
/// its span matches a gold mention and both carry c; a matched pair with
/// different events is a false positive for the predicted class and a false
/// negative for the gold class.
pub fn event_metrics(
    gold: &[AnnotatedDocument],
    pred: &EventPredictions,
    mode: MatchMode,
) -> Result<MetricsReport, EvalError> {
    check_known(gold, pred.keys())?;
    let empty = Vec::new();
    let mut per_class = [Counts::default(); 3];
    for doc in gold {
        let p = pred.get(&doc.doc_id).unwrap_or(&empty);
        let p_spans: Vec<CharSpan> = p.iter().map(|(s, _)| *s).collect();
        let m = match_spans(&doc.spans(), &p_spans, mode)?;
        for &(gi, pi) in &m.pairs {
            let (g, e) = (doc.mentions[gi].event.index(), p[pi].1.index());
            if g == e {
                per_class[g].tp += 1;
            } else {
                per_class[e].fp += 1;
                per_class[g].fn_ += 1;
            }
        }
        for &gi in &m.unmatched_gold {
            per_class[doc.mentions[gi].event.index()].fn_ += 1;
        }
        for &pi in &m.unmatched_pred {
            per_class[p[pi].1.index()].fp += 1;
        }
    }
    let mut micro = Counts::default();
    for c in per_class {
        micro.add(c);
    }
    let mut report = MetricsReport::new("event", mode);
    report.per_class = EventLabel::ALL
        .iter()
        .zip(per_class)
        .map(|(l, c)| ClassScores::new(l.name(), c))
        .collect();
    report.micro = Some(ClassScores::new("micro", micro));
    Ok(report)
}

/// Per-dimension and overall accuracy over gold Disposition mentions. A
/// mention without a prediction is wrong in every dimension.
pub fn context_metrics(gold: &[AnnotatedDocument], pred: &ContextPredictions) -> Result<MetricsReport, EvalError> {
    check_known(gold, pred.keys().map(|k| &k.doc_id))?;
    let mut correct = [0usize; 5];
    let mut total = 0usize;
    for doc in gold {
        for m in &doc.mentions {
            let Some(g) = &m.context else { continue };
            total += 1;
            let key = MentionKey {
                doc_id: doc.doc_id.clone(),
                span: m.span,
            };
            if let Some(p) = pred.get(&key) {
                for (k, dim) in Dimension::ALL.iter().enumerate() {
                    if g.get(*dim) == p.get(*dim) {
                        correct[k] += 1;
                    }
                }
            }
        }
    }
    let mut report = MetricsReport::new("context", MatchMode::Strict);
    report.dimensions = Dimension::ALL
        .iter()
        .zip(correct)
        .map(|(d, c)| AccuracyScore::new(d.name(), c, total))
        .collect();
    report.overall_accuracy = Some(AccuracyScore::new("overall", correct.iter().sum(), 5 * total));
    Ok(report)
}

/// Accuracy from per-dimension accuracies that share one denominator:
/// correct counts are recovered, pooled, and divided by the pooled total.
pub fn pooled_accuracy(accuracies: &[f64], denominator: usize) -> f64 {
    if accuracies.is_empty() || denominator == 0 {
        return 0.0;
    }
    let correct: usize = accuracies
        .iter()
        .map(|a| (a * denominator as f64).round() as usize)
        .sum();
    correct as f64 / (accuracies.len() * denominator) as f64
}

/// Fraction of gold mentions recovered end to end: a strict span match with
/// the same event and, for Disposition, all five context values.
pub fn combined_accuracy(gold: &[AnnotatedDocument], pred: &[AnnotatedDocument]) -> Result<f64, EvalError> {
    let (correct, total) = combined_counts(gold, pred)?;
    Ok(ratio(correct, total))
}

pub(crate) fn combined_counts(gold: &[AnnotatedDocument], pred: &[AnnotatedDocument]) -> Result<(usize, usize), EvalError> {
    check_known(gold, pred.iter().map(|d| &d.doc_id))?;
    let by_id: BTreeMap<&str, &AnnotatedDocument> = pred.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let mut correct = 0;
    let mut total = 0;
    for doc in gold {
        total += doc.mentions.len();
        let Some(p) = by_id.get(doc.doc_id.as_str()) else { continue };
        let spans: BTreeMap<CharSpan, _> = p.mentions.iter().map(|m| (m.span, m)).collect();
        for g in &doc.mentions {
            if let Some(m) = spans.get(&g.span) {
                if m.event == g.event && m.context == g.context {
                    correct += 1;
                }
            }
        }
    }
    Ok((correct, total))
}

/// Report form of [`combined_accuracy`].
pub fn end_to_end_metrics(gold: &[AnnotatedDocument], pred: &[AnnotatedDocument]) -> Result<MetricsReport, EvalError> {
    let (correct, total) = combined_counts(gold, pred)?;
    let mut report = MetricsReport::new("end2end", MatchMode::Strict);
    report.combined_accuracy = Some(AccuracyScore::new("combined", correct, total));
    Ok(report)
}
