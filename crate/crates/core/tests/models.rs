use medctx::context::{build_classification_example, build_task_examples, train_task, ClassificationTask, ClassifierBundle, TaskModel};
use medctx::corpus::{Actor, Certainty, Corpus, EventLabel, Negation, Temporality, Action, CharSpan};
use medctx::encoder::{fit, EncoderConfig, EncoderError, EncoderModel, Mode, TrainConfig};
use medctx::ner::{build_ner_examples, predict_ner, train_ner};
use medctx::pipeline::{classify_gold_spans, corpus_vocab, run_pipeline, PipelineBundle};
use medctx::preproc::{sentences, Vocabulary, E_MARK, S_MARK, SPECIAL_PIECES};
use medctx::scalar::Precision;
use medctx::synth::{gen_corpus, DistributionTargets, GeneratorSpec};

fn tiny_config() -> EncoderConfig {
    EncoderConfig {
        layers: 1,
        hidden_dim: 16,
        heads: 2,
        ffn_dim: 32,
        max_len: 64,
        vocab_size: 0,
        dropout_rate: 0.0,
        seed: 3,
        precision: Precision::Single,
    }
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        batch_size: 8,
        max_epochs: 2,
        patience: 2,
        ..Default::default()
    }
}

fn small_corpus() -> Corpus {
    gen_corpus(&GeneratorSpec {
        n_docs: [6, 2, 2],
        ..Default::default()
    })
    .unwrap()
    .0
}

/// Vocabulary holding the special pieces and every lowercase letter.
fn letter_vocab() -> Vocabulary {
    let mut pieces: Vec<String> = SPECIAL_PIECES.iter().map(|s| s.to_string()).collect();
    pieces.extend(('a'..='z').map(String::from));
    Vocabulary::from_pieces(pieces).unwrap()
}

#[test]
fn one_tagging_example_per_sentence() {
    let c = small_corpus();
    let v = corpus_vocab(&c, 400).unwrap();
    let ex = build_ner_examples(&c.train, &v, 64).unwrap();
    let n: usize = c.train.iter().map(|d| sentences(&d.text).len()).sum();
    assert_eq!(ex.len(), n);
}

#[test]
fn long_sentence_keeps_a_window_around_the_mention() {
    let v = letter_vocab();
    let words: Vec<String> = (0..300).map(|i| ((b'a' + (i % 26) as u8) as char).to_string()).collect();
    let text = words.join(" ");
    let sent = &sentences(&text)[0];
    let t = &sent.tokens[290];
    let ex = build_classification_example(sent, t.span, &v, 256, "d").unwrap();
    assert_eq!(ex.len(), 256);
    assert_eq!(ex.effective_len(), 256);
    let (s, e) = ex.markers.unwrap();
    assert_eq!(ex.subtoken_ids[s], S_MARK);
    assert_eq!(ex.subtoken_ids[e], E_MARK);
    assert_eq!(e - s, 2);
    assert_eq!(ex.word_index[s + 1], Some(290));
    // budget 251: all 9 right-hand words stay, 242 on the left
    assert_eq!(s - 1, 242);
    assert_eq!(ex.word_index[1], Some(48));
    assert_eq!(ex.word_index[254], Some(299));
    assert_eq!(ex.subtoken_ids.iter().filter(|&&id| id == S_MARK).count(), 1);
}

#[test]
fn whole_sentence_mention() {
    let v = letter_vocab();
    let sent = &sentences("a b c")[0];
    let ex = build_classification_example(sent, sent.span, &v, 16, "d").unwrap();
    assert_eq!(ex.markers, Some((1, 5)));
    assert_eq!(ex.subtoken_ids[6], medctx::preproc::SEP);
    let outside = build_classification_example(sent, CharSpan::new(4, 9), &v, 16, "d");
    assert!(outside.is_err());
}

fn zero_head_bundle(v: &Vocabulary) -> ClassifierBundle<f32> {
    let cfg = EncoderConfig {
        vocab_size: v.len(),
        ..tiny_config()
    };
    let mut b = ClassifierBundle::new(v.clone());
    for task in ClassificationTask::ALL {
        let mut model = EncoderModel::<f32>::init(cfg.clone(), task.class_count()).unwrap();
        for name in ["sequence_head.weight", "sequence_head.bias"] {
            let r = model.layout().tensor(name).unwrap().range();
            model.params_mut()[r].fill(0.0);
        }
        b.tasks.insert(
            task,
            TaskModel {
                task,
                model,
                train_config: TrainConfig::default(),
                history: Vec::new(),
            },
        );
    }
    b
}

#[test]
fn zero_heads_pick_first_classes() {
    let v = letter_vocab();
    let b = zero_head_bundle(&v);
    let sent = &sentences("x started y today")[0];
    let m = sent.tokens[2].span;
    assert_eq!(b.classify_event(sent, m).unwrap(), EventLabel::Disposition);
    let ctx = b.classify_context(sent, m).unwrap();
    assert_eq!(ctx.action, Action::Start);
    assert_eq!(ctx.negation, Negation::Negated);
    assert_eq!(ctx.temporality, Temporality::Past);
    assert_eq!(ctx.certainty, Certainty::Certain);
    assert_eq!(ctx.actor, Actor::Physician);
}

#[test]
fn single_class_task_becomes_constant() {
    let targets = DistributionTargets {
        actor: vec![0.0, 1.0, 0.0],
        ..Default::default()
    };
    let (c, _) = gen_corpus(&GeneratorSpec {
        n_docs: [4, 2, 2],
        targets,
        ..Default::default()
    })
    .unwrap();
    let v = corpus_vocab(&c, 300).unwrap();
    let tm = train_task::<f32>(&c, ClassificationTask::Actor, &v, &tiny_config(), &quick_train()).unwrap();
    assert!(tm.history.is_empty());
    let dev = build_task_examples(&c.dev, ClassificationTask::Actor, &v, 64).unwrap();
    assert!(!dev.is_empty());
    for ex in &dev {
        assert_eq!(tm.predict_example(ex).unwrap(), Actor::Patient as usize);
    }
}

#[test]
fn patience_stops_after_a_flat_epoch() {
    let c = small_corpus();
    let v = corpus_vocab(&c, 300).unwrap();
    let cfg = EncoderConfig {
        vocab_size: v.len(),
        ..tiny_config()
    };
    let ex = build_ner_examples(&c.train[..1], &v, 64).unwrap();
    let tc = TrainConfig {
        max_epochs: 10,
        patience: 1,
        ..quick_train()
    };
    let model = EncoderModel::<f32>::init(cfg, 0).unwrap();
    let mut epochs = 0;
    let out = fit(model, &ex, Mode::Token, &tc, |_| -> Result<f64, EncoderError> {
        epochs += 1;
        Ok(if epochs == 1 { 0.5 } else { 0.1 })
    })
    .unwrap();
    assert_eq!(out.history.len(), 2);
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn pipeline_structure_and_determinism() {
    let c = small_corpus();
    let v = corpus_vocab(&c, 400).unwrap();
    let cfg = tiny_config();
    let tc = quick_train();
    let ner = train_ner::<f32>(&c, &v, &cfg, &tc).unwrap();
    let again = train_ner::<f32>(&c, &v, &cfg, &tc).unwrap();
    assert_eq!(ner.model.params(), again.model.params());

    let classifiers =
        medctx::context::train_classifiers::<f32>(&c, &ClassificationTask::ALL, &v, &cfg, &tc).unwrap();
    let p = PipelineBundle::new(ner, classifiers).unwrap();
    for doc in &c.test {
        let out = run_pipeline(&p, &doc.doc_id, &doc.text).unwrap();
        let spans: Vec<CharSpan> = out.spans();
        assert_eq!(spans, predict_ner(p.ner(), &doc.text).unwrap());
        for m in &out.mentions {
            assert_eq!(m.context.is_some(), m.event == EventLabel::Disposition);
        }
    }
    let gold_mode = classify_gold_spans(p.classifiers(), &c.test).unwrap();
    for (g, p) in c.test.iter().zip(&gold_mode) {
        assert_eq!(g.spans(), p.spans());
    }
    assert!(run_pipeline(&p, "empty", "").unwrap().mentions.is_empty());
}

#[test]
fn mismatched_vocabularies_are_rejected() {
    let c = small_corpus();
    let v = corpus_vocab(&c, 300).unwrap();
    let ner = train_ner::<f32>(&c, &v, &tiny_config(), &TrainConfig { max_epochs: 1, ..quick_train() }).unwrap();
    assert!(PipelineBundle::new(ner, zero_head_bundle(&letter_vocab())).is_err());
}

#[test]
fn memorizes_a_single_note() {
    let (mut c, _) = gen_corpus(&GeneratorSpec {
        n_docs: [1, 0, 0],
        mentions_per_doc: (3, 3),
        ..Default::default()
    })
    .unwrap();
    c.dev = c.train.clone();
    let v = corpus_vocab(&c, 200).unwrap();
    let tc = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 4,
        max_epochs: 60,
        patience: 60,
        ..Default::default()
    };
    let cfg = EncoderConfig {
        hidden_dim: 32,
        ffn_dim: 64,
        ..tiny_config()
    };
    let ner = train_ner::<f32>(&c, &v, &cfg, &tc).unwrap();
    let doc = &c.train[0];
    let pred = ner.predict(&doc.text).unwrap();
    assert!(pred.contains(&doc.mentions[0].span), "{pred:?} vs {:?}", doc.spans());

    let event = train_task::<f32>(&c, ClassificationTask::Event, &v, &cfg, &tc).unwrap();
    let ex = build_task_examples(&c.train, ClassificationTask::Event, &v, 64).unwrap();
    for e in &ex {
        assert_eq!(Some(event.predict_example(e).unwrap()), e.label());
    }
}
