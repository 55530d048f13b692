//! Event classification and the five context-dimension classifiers, all over
//! mention-marked sentence inputs.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::corpus::{
    AnnotatedDocument, CharSpan, ContextAttributes, Corpus, Dimension, EventLabel, Label, MedicationMention,
};
use crate::encoder::{argmax, fit, EncoderConfig, EncoderModel, EpochRecord, Mode, TrainConfig};
use crate::preproc::{
    sentences, subword_encode, LabeledSequence, Origin, PreprocError, Sentence, Target, Vocabulary, CLS, E_MARK,
    PAD, SEP, S_MARK,
};
use crate::scalar::Scalar;
use crate::ModelError;

/// One of the six independently trained classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassificationTask {
    Event,
    Action,
    Negation,
    Temporality,
    Certainty,
    Actor,
}

impl ClassificationTask {
    pub const ALL: [ClassificationTask; 6] = [
        ClassificationTask::Event,
        ClassificationTask::Action,
        ClassificationTask::Negation,
        ClassificationTask::Temporality,
        ClassificationTask::Certainty,
        ClassificationTask::Actor,
    ];

    pub fn dimension(self) -> Option<Dimension> {
        match self {
            ClassificationTask::Event => None,
            ClassificationTask::Action => Some(Dimension::Action),
            ClassificationTask::Negation => Some(Dimension::Negation),
            ClassificationTask::Temporality => Some(Dimension::Temporality),
            ClassificationTask::Certainty => Some(Dimension::Certainty),
            ClassificationTask::Actor => Some(Dimension::Actor),
        }
    }

    pub fn for_dimension(d: Dimension) -> Self {
        Self::ALL[1 + Dimension::ALL.iter().position(|&x| x == d).expect("known dimension")]
    }

    /// Lower-case name used on the command line and in artifact paths.
    pub fn name(self) -> &'static str {
        match self {
            ClassificationTask::Event => "event",
            ClassificationTask::Action => "action",
            ClassificationTask::Negation => "negation",
            ClassificationTask::Temporality => "temporality",
            ClassificationTask::Certainty => "certainty",
            ClassificationTask::Actor => "actor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }

    pub fn class_names(self) -> Vec<&'static str> {
        match self.dimension() {
            None => EventLabel::ALL.iter().map(|l| l.name()).collect(),
            Some(d) => d.class_names(),
        }
    }

    pub fn class_count(self) -> usize {
        self.class_names().len()
    }

    /// Gold class of a mention for this task; `None` when the task does not
    /// apply (dimension tasks cover Disposition mentions only).
    pub fn gold_class(self, m: &MedicationMention) -> Option<usize> {
        match self.dimension() {
            None => Some(m.event.index()),
            Some(d) => m.context.map(|c| c.get(d)),
        }
    }
}

impl fmt::Display for ClassificationTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Number of words kept on each side of the mention so that their pieces fit
/// `budget`. The word farther from the mention is dropped first; on equal
/// distance the right one goes.
fn window(left: &[usize], right: &[usize], budget: usize) -> (usize, usize) {
    let (mut nl, mut nr) = (left.len(), right.len());
    let mut used: usize = left.iter().sum::<usize>() + right.iter().sum::<usize>();
    while used > budget {
        // distance of the outermost kept word on each side
        let dl = nl;
        let dr = nr;
        if dr >= dl && nr > 0 {
            nr -= 1;
            used -= right[nr];
        } else {
            nl -= 1;
            used -= left[left.len() - nl - 1];
        }
    }
    (nl, nr)
}

/// `[CLS] left [S] mention [E] right [SEP]` padded to `max_len`. When the
/// sentence is too long, words are trimmed symmetrically around the mention;
/// the mention itself and the four special pieces are always kept.
pub fn build_classification_example(
    sent: &Sentence,
    mention: CharSpan,
    v: &Vocabulary,
    max_len: usize,
    doc_id: &str,
) -> Result<LabeledSequence, PreprocError> {
    let toks = sent.overlapping_tokens(mention);
    if toks.is_empty() || !sent.span.contains(&mention) {
        return Err(PreprocError::Range {
            span: mention,
            sentence: sent.span,
        });
    }
    let pieces: Vec<Vec<u32>> = sent.tokens.iter().map(|t| subword_encode(&t.text, v)).collect();
    let mention_len: usize = pieces[toks.clone()].iter().map(Vec::len).sum();
    if max_len < 4 || mention_len > max_len - 4 {
        return Err(PreprocError::Length {
            needed: mention_len + 4,
            max_len,
        });
    }
    let left: Vec<usize> = pieces[..toks.start].iter().map(Vec::len).collect();
    let right: Vec<usize> = pieces[toks.end..].iter().map(Vec::len).collect();
    let (nl, nr) = window(&left, &right, max_len - 4 - mention_len);

    let mut ids = vec![CLS];
    let mut word_index = vec![None];
    let push_word = |w: usize, ids: &mut Vec<u32>, word_index: &mut Vec<Option<usize>>| {
        for &id in &pieces[w] {
            ids.push(id);
            word_index.push(Some(w));
        }
    };
    for w in toks.start - nl..toks.start {
        push_word(w, &mut ids, &mut word_index);
    }
    let s_pos = ids.len();
    ids.push(S_MARK);
    word_index.push(None);
    for w in toks.clone() {
        push_word(w, &mut ids, &mut word_index);
    }
    let e_pos = ids.len();
    ids.push(E_MARK);
    word_index.push(None);
    for w in toks.end..toks.end + nr {
        push_word(w, &mut ids, &mut word_index);
    }
    ids.push(SEP);
    word_index.push(None);

    let real = ids.len();
    let mut attention_mask = vec![1u8; real];
    ids.resize(max_len, PAD);
    word_index.resize(max_len, None);
    attention_mask.resize(max_len, 0);
    Ok(LabeledSequence {
        subtoken_ids: ids,
        attention_mask,
        word_index,
        target: Target::Unlabeled,
        markers: Some((s_pos, e_pos)),
        origin: Origin {
            doc_id: doc_id.to_string(),
            sentence: sent.span,
        },
    })
}

/// The sentence containing a span's start offset.
pub fn sentence_of(sents: &[Sentence], span: CharSpan) -> Option<&Sentence> {
    sents
        .iter()
        .find(|s| s.span.start <= span.start && span.start < s.span.end)
}

/// Labeled examples for one task; mentions that fall outside a single
/// sentence are skipped with a warning.
pub fn build_task_examples(
    docs: &[AnnotatedDocument],
    task: ClassificationTask,
    v: &Vocabulary,
    max_len: usize,
) -> Result<Vec<LabeledSequence>, PreprocError> {
    let mut out = Vec::new();
    for doc in docs {
        let sents = sentences(&doc.text);
        for m in &doc.mentions {
            let Some(label) = task.gold_class(m) else { continue };
            let Some(sent) = sentence_of(&sents, m.span).filter(|s| s.span.contains(&m.span)) else {
                log::warn!("{}: mention {} is not inside one sentence; skipped", doc.doc_id, m.span);
                continue;
            };
            let mut ex = build_classification_example(sent, m.span, v, max_len, &doc.doc_id)?;
            ex.target = Target::Label(label);
            out.push(ex);
        }
    }
    Ok(out)
}

/// A trained classifier for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskModel<S: Scalar> {
    pub task: ClassificationTask,
    pub model: EncoderModel<S>,
    pub train_config: TrainConfig,
    /// Dev accuracy per epoch; empty for a constant classifier.
    pub history: Vec<EpochRecord>,
}

impl<S: Scalar> TaskModel<S> {
    /// Class index for a built example; ties go to the lowest index.
    pub fn predict_example(&self, ex: &LabeledSequence) -> Result<usize, ModelError> {
        let (s, e) = ex
            .markers
            .ok_or_else(|| ModelError::Data("classification input without markers".into()))?;
        let hidden = self.model.forward(ex)?;
        let logits = self.model.sequence_logits(&hidden, s, e)?;
        Ok(argmax(&logits.to_vec()))
    }

    pub fn accuracy(&self, examples: &[LabeledSequence]) -> Result<f64, ModelError> {
        accuracy(&self.model, examples)
    }
}

fn accuracy<S: Scalar>(model: &EncoderModel<S>, examples: &[LabeledSequence]) -> Result<f64, ModelError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let hits: Result<Vec<bool>, ModelError> = examples
        .par_iter()
        .map(|ex| {
            let (s, e) = ex.markers.expect("built with markers");
            let hidden = model.forward(ex)?;
            let logits = model.sequence_logits(&hidden, s, e)?;
            Ok(Some(argmax(&logits.to_vec())) == ex.label())
        })
        .collect();
    Ok(hits?.iter().filter(|&&h| h).count() as f64 / examples.len() as f64)
}

/// Model whose sequence head always prefers `class`.
fn constant_model<S: Scalar>(cfg: EncoderConfig, n_classes: usize, class: usize) -> Result<EncoderModel<S>, ModelError> {
    let mut m = EncoderModel::<S>::init(cfg, n_classes)?;
    let w = m.layout().tensor("sequence_head.weight").expect("sequence head").range();
    let b = m.layout().tensor("sequence_head.bias").expect("sequence head").range();
    let params = m.params_mut();
    params[w].fill(S::zero());
    params[b.clone()].fill(S::zero());
    params[b.start + class] = S::one();
    Ok(m)
}

/// Trains one task. Event uses every gold mention, dimension tasks only
/// Disposition mentions. Parameters with the best dev accuracy are kept; when
/// the dev split has no examples for the task, training accuracy is used. With
/// fewer than two observed classes a constant classifier is returned.
pub fn train_task<S: Scalar>(
    c: &Corpus,
    task: ClassificationTask,
    v: &Vocabulary,
    cfg: &EncoderConfig,
    tc: &TrainConfig,
) -> Result<TaskModel<S>, ModelError> {
    let cfg = EncoderConfig {
        vocab_size: v.len(),
        ..cfg.clone()
    };
    let n_classes = task.class_count();
    let train = build_task_examples(&c.train, task, v, cfg.max_len)?;
    let dev = build_task_examples(&c.dev, task, v, cfg.max_len)?;
    let mut seen = vec![0usize; n_classes];
    for ex in &train {
        seen[ex.label().expect("labeled")] += 1;
    }
    let observed: Vec<usize> = (0..n_classes).filter(|&k| seen[k] > 0).collect();
    if observed.len() < 2 {
        let class = observed.first().copied().unwrap_or(0);
        log::warn!(
            "{task}: {} training examples cover fewer than two classes; always predicting {}",
            train.len(),
            task.class_names()[class]
        );
        return Ok(TaskModel {
            task,
            model: constant_model(cfg, n_classes, class)?,
            train_config: tc.clone(),
            history: Vec::new(),
        });
    }
    log::info!("{task}: {} training and {} dev examples", train.len(), dev.len());
    let model = EncoderModel::<S>::init(cfg, n_classes)?;
    let score_on = if dev.is_empty() {
        log::warn!("{task}: no dev examples; selecting on training accuracy");
        &train
    } else {
        &dev
    };
    let outcome = fit(model, &train, Mode::Sequence, tc, |m| accuracy(m, score_on))?;
    Ok(TaskModel {
        task,
        model: outcome.model,
        train_config: tc.clone(),
        history: outcome.history,
    })
}

/// Optional rule applied to assembled context values; none is set by default.
pub type ConsistencyRule = fn(&mut ContextAttributes);

/// The six task classifiers over one shared vocabulary.
#[derive(Debug, Clone)]
pub struct ClassifierBundle<S: Scalar> {
    pub vocab: Vocabulary,
    pub tasks: BTreeMap<ClassificationTask, TaskModel<S>>,
    pub consistency: Option<ConsistencyRule>,
}

impl<S: Scalar> ClassifierBundle<S> {
    pub fn new(vocab: Vocabulary) -> Self {
        ClassifierBundle {
            vocab,
            tasks: BTreeMap::new(),
            consistency: None,
        }
    }

    pub fn task(&self, t: ClassificationTask) -> Result<&TaskModel<S>, ModelError> {
        self.tasks
            .get(&t)
            .ok_or_else(|| ModelError::Data(format!("no {t} classifier in bundle")))
    }

    fn max_len(&self) -> Result<usize, ModelError> {
        Ok(self.task(ClassificationTask::Event)?.model.config().max_len)
    }

    pub fn example(&self, sent: &Sentence, mention: CharSpan, doc_id: &str) -> Result<LabeledSequence, ModelError> {
        Ok(build_classification_example(sent, mention, &self.vocab, self.max_len()?, doc_id)?)
    }

    pub fn classify_event(&self, sent: &Sentence, mention: CharSpan) -> Result<EventLabel, ModelError> {
        let ex = self.example(sent, mention, "")?;
        let k = self.task(ClassificationTask::Event)?.predict_example(&ex)?;
        Ok(EventLabel::ALL[k])
    }

    /// Runs the five dimension classifiers independently and assembles their
    /// answers.
    pub fn classify_context(&self, sent: &Sentence, mention: CharSpan) -> Result<ContextAttributes, ModelError> {
        let mut out = ContextAttributes::default();
        for d in Dimension::ALL {
            let tm = self.task(ClassificationTask::for_dimension(d))?;
            let ex = build_classification_example(sent, mention, &self.vocab, tm.model.config().max_len, "")?;
            out.set(d, tm.predict_example(&ex)?);
        }
        if let Some(rule) = self.consistency {
            rule(&mut out);
        }
        Ok(out)
    }
}

pub fn classify_event<S: Scalar>(b: &ClassifierBundle<S>, sent: &Sentence, mention: CharSpan) -> Result<EventLabel, ModelError> {
    b.classify_event(sent, mention)
}

pub fn classify_context<S: Scalar>(
    b: &ClassifierBundle<S>,
    sent: &Sentence,
    mention: CharSpan,
) -> Result<ContextAttributes, ModelError> {
    b.classify_context(sent, mention)
}

/// Trains the requested tasks; they are independent and run in parallel.
pub fn train_classifiers<S: Scalar>(
    c: &Corpus,
    tasks: &[ClassificationTask],
    v: &Vocabulary,
    cfg: &EncoderConfig,
    tc: &TrainConfig,
) -> Result<ClassifierBundle<S>, ModelError> {
    if c.train.is_empty() || c.dev.is_empty() {
        return Err(ModelError::Data("classification needs non-empty train and dev splits".into()));
    }
    let trained: Result<Vec<TaskModel<S>>, ModelError> =
        tasks.par_iter().map(|&t| train_task(c, t, v, cfg, tc)).collect();
    let mut bundle = ClassifierBundle::new(v.clone());
    for tm in trained? {
        bundle.tasks.insert(tm.task, tm);
    }
    Ok(bundle)
}
