//! Extraction, event classification and context classification chained into
//! one pass over a document.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::ClassifierBundle;
use crate::corpus::{AnnotatedDocument, Corpus, EventLabel, Label, MedicationMention};
use crate::ner::{predict_sentence, NerModelBundle};
use crate::preproc::{build_vocab, sentences, Vocabulary};
use crate::scalar::Scalar;
use crate::ModelError;

/// Vocabulary over the training texts of a corpus.
pub fn corpus_vocab(c: &Corpus, size: usize) -> Result<Vocabulary, ModelError> {
    let texts: Vec<&str> = c.train.iter().map(|d| d.text.as_str()).collect();
    Ok(build_vocab(&texts, size)?)
}

#[derive(Debug, Clone)]
pub struct PipelineBundle<S: Scalar> {
    ner: NerModelBundle<S>,
    classifiers: ClassifierBundle<S>,
}

impl<S: Scalar> PipelineBundle<S> {
    pub fn new(ner: NerModelBundle<S>, classifiers: ClassifierBundle<S>) -> Result<Self, ModelError> {
        if ner.vocab != classifiers.vocab {
            return Err(ModelError::Data(
                "extraction and classification models use different vocabularies".into(),
            ));
        }
        Ok(PipelineBundle { ner, classifiers })
    }

    pub fn ner(&self) -> &NerModelBundle<S> {
        &self.ner
    }

    pub fn classifiers(&self) -> &ClassifierBundle<S> {
        &self.classifiers
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.ner.vocab
    }
}

/// Annotates `text`: every extracted span gets an event label, and Disposition
/// spans additionally get context values.
pub fn run_pipeline<S: Scalar>(p: &PipelineBundle<S>, doc_id: &str, text: &str) -> Result<AnnotatedDocument, ModelError> {
    let mut mentions = Vec::new();
    for sent in sentences(text) {
        for span in predict_sentence(&p.ner.model, &p.ner.vocab, &sent, doc_id)? {
            let event = p.classifiers.classify_event(&sent, span)?;
            let context = match event {
                EventLabel::Disposition => Some(p.classifiers.classify_context(&sent, span)?),
                _ => None,
            };
            mentions.push(MedicationMention::from_text(text, span, event, context)?);
        }
    }
    Ok(AnnotatedDocument::new(doc_id, text, mentions)?)
}

/// Runs the pipeline over documents in parallel, keeping their order.
pub fn run_pipeline_all<S: Scalar>(p: &PipelineBundle<S>, docs: &[AnnotatedDocument]) -> Result<Vec<AnnotatedDocument>, ModelError> {
    docs.par_iter().map(|d| run_pipeline(p, &d.doc_id, &d.text)).collect()
}

/// Gold-span mode: keeps the gold spans and replaces their labels with the
/// classifiers' predictions.
pub fn classify_gold_spans<S: Scalar>(b: &ClassifierBundle<S>, docs: &[AnnotatedDocument]) -> Result<Vec<AnnotatedDocument>, ModelError> {
    docs.par_iter()
        .map(|d| {
            let sents = sentences(&d.text);
            let mut mentions = Vec::with_capacity(d.mentions.len());
            for m in &d.mentions {
                let sent = crate::context::sentence_of(&sents, m.span)
                    .ok_or_else(|| ModelError::Data(format!("{}: mention {} outside any sentence", d.doc_id, m.span)))?;
                let event = b.classify_event(sent, m.span)?;
                let context = match event {
                    EventLabel::Disposition => Some(b.classify_context(sent, m.span)?),
                    _ => None,
                };
                mentions.push(MedicationMention { event, context, ..m.clone() });
            }
            Ok(AnnotatedDocument::new(d.doc_id.clone(), d.text.clone(), mentions)?)
        })
        .collect()
}

/// One line of the prediction output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub event: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub action: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub negation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub temporality: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub certainty: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub actor: Option<String>,
}

pub fn prediction_records(doc: &AnnotatedDocument) -> Vec<PredictionRecord> {
    doc.mentions
        .iter()
        .map(|m| {
            let ctx = m.context;
            PredictionRecord {
                doc_id: doc.doc_id.clone(),
                start: m.span.start,
                end: m.span.end,
                surface: m.surface.clone(),
                event: m.event.name().to_string(),
                action: ctx.map(|c| c.action.name().to_string()),
                negation: ctx.map(|c| c.negation.name().to_string()),
                temporality: ctx.map(|c| c.temporality.name().to_string()),
                certainty: ctx.map(|c| c.certainty.name().to_string()),
                actor: ctx.map(|c| c.actor.name().to_string()),
            }
        })
        .collect()
}

/// JSON lines for a set of annotated documents, in document then span order.
pub fn to_jsonl(docs: &[AnnotatedDocument]) -> String {
    docs.iter()
        .flat_map(prediction_records)
        .map(|r| serde_json::to_string(&r).expect("records serialize") + "\n")
        .collect()
}
