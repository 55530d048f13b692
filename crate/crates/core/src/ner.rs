//! Medication mention extraction as BIO tagging over subword pieces.

use rayon::prelude::*;

use crate::corpus::{AnnotatedDocument, CharSpan, Corpus};
use crate::encoder::{argmax, fit, EncoderConfig, EncoderModel, EpochRecord, Mode, TrainConfig};
use crate::eval::{ner_metrics, MatchMode, SpanPredictions};
use crate::preproc::{
    align_to_subtokens, decode_bio, encode_sentence, sentences, spans_to_bio, BioTag, LabeledSequence,
    PreprocError, Sentence, Vocabulary,
};
use crate::scalar::Scalar;
use crate::ModelError;

/// A trained tagger with everything needed to run it.
#[derive(Debug, Clone, PartialEq)]
pub struct NerModelBundle<S: Scalar> {
    pub model: EncoderModel<S>,
    pub vocab: Vocabulary,
    pub train_config: TrainConfig,
    /// Dev micro-F1 per epoch.
    pub history: Vec<EpochRecord>,
}

/// One tagged sequence per sentence, all-O sentences included.
pub fn build_ner_examples(
    docs: &[AnnotatedDocument],
    v: &Vocabulary,
    max_len: usize,
) -> Result<Vec<LabeledSequence>, PreprocError> {
    let mut out = Vec::new();
    for doc in docs {
        let spans = doc.spans();
        for sent in sentences(&doc.text) {
            for m in &spans {
                if m.overlaps(&sent.span) && !sent.span.contains(m) {
                    log::warn!("{}: mention {m} crosses a sentence boundary and will be split", doc.doc_id);
                }
            }
            let tags = spans_to_bio(&sent, &spans)?;
            out.push(align_to_subtokens(&sent, &tags, v, max_len, &doc.doc_id)?);
        }
    }
    Ok(out)
}

/// Mention spans in one sentence.
pub fn predict_sentence<S: Scalar>(
    model: &EncoderModel<S>,
    v: &Vocabulary,
    sent: &Sentence,
    doc_id: &str,
) -> Result<Vec<CharSpan>, ModelError> {
    let seq = encode_sentence(sent, v, model.config().max_len, doc_id)?;
    let hidden = model.forward(&seq)?;
    let logits = model.token_logits(&hidden);
    let tags: Vec<BioTag> = logits
        .rows()
        .into_iter()
        .map(|row| BioTag::ALL[argmax(&row.to_vec())])
        .collect();
    Ok(decode_bio(&seq, &tags, sent))
}

fn predict_with<S: Scalar>(model: &EncoderModel<S>, v: &Vocabulary, doc_id: &str, text: &str) -> Result<Vec<CharSpan>, ModelError> {
    let mut spans = Vec::new();
    for sent in sentences(text) {
        spans.extend(predict_sentence(model, v, &sent, doc_id)?);
    }
    Ok(spans)
}

fn predict_docs<S: Scalar>(model: &EncoderModel<S>, v: &Vocabulary, docs: &[AnnotatedDocument]) -> Result<SpanPredictions, ModelError> {
    docs.par_iter()
        .map(|d| Ok((d.doc_id.clone(), predict_with(model, v, &d.doc_id, &d.text)?)))
        .collect()
}

impl<S: Scalar> NerModelBundle<S> {
    /// Sorted, non-overlapping mention spans for a document.
    pub fn predict(&self, text: &str) -> Result<Vec<CharSpan>, ModelError> {
        predict_with(&self.model, &self.vocab, "", text)
    }

    pub fn predict_documents(&self, docs: &[AnnotatedDocument]) -> Result<SpanPredictions, ModelError> {
        predict_docs(&self.model, &self.vocab, docs)
    }
}

pub fn predict_ner<S: Scalar>(b: &NerModelBundle<S>, text: &str) -> Result<Vec<CharSpan>, ModelError> {
    b.predict(text)
}

/// Trains the tagger on the train split, keeping the parameters with the best
/// strict micro-F1 on the dev split. The encoder's vocabulary size is taken
/// from `v`.
pub fn train_ner<S: Scalar>(
    c: &Corpus,
    v: &Vocabulary,
    cfg: &EncoderConfig,
    tc: &TrainConfig,
) -> Result<NerModelBundle<S>, ModelError> {
    if c.train.is_empty() || c.dev.is_empty() {
        return Err(ModelError::Data("mention extraction needs non-empty train and dev splits".into()));
    }
    let cfg = EncoderConfig {
        vocab_size: v.len(),
        ..cfg.clone()
    };
    let examples = build_ner_examples(&c.train, v, cfg.max_len)?;
    log::info!("mention extraction: {} training sequences", examples.len());
    let model = EncoderModel::<S>::init(cfg, 0)?;
    let outcome = fit(model, &examples, Mode::Token, tc, |m| -> Result<f64, ModelError> {
        let pred = predict_docs(m, v, &c.dev)?;
        let report = ner_metrics(&c.dev, &pred, MatchMode::Strict)?;
        Ok(report.micro.map_or(0.0, |s| s.scores.f1))
    })?;
    Ok(NerModelBundle {
        model: outcome.model,
        vocab: v.clone(),
        train_config: tc.clone(),
        history: outcome.history,
    })
}
