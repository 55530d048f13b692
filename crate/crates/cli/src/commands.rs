use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use medctx::context::{build_task_examples, train_classifiers, ClassificationTask};
use medctx::corpus::{char_slice, corpus_stats, load_corpus, normalize_newlines, save_corpus, AnnotatedDocument, Corpus};
use medctx::encoder::{grad_check, EncoderConfig, EncoderModel, Mode};
use medctx::eval::{
    context_metrics, context_predictions, end_to_end_metrics, event_metrics, event_predictions, ner_metrics,
    MetricsReport, SpanPredictions,
};
use medctx::ner::{build_ner_examples, train_ner};
use medctx::pipeline::{classify_gold_spans, corpus_vocab, run_pipeline, run_pipeline_all, to_jsonl};
use medctx::scalar::{Precision, Scalar};
use medctx::synth::{gen_corpus, GeneratorSpec};
use serde::Serialize;

use crate::artifact::{self, load_classifiers, load_model, load_ner, save_classifiers, save_ner};
use crate::config::RunConfig;
use crate::{CliError, Command};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub(crate) fn defaults_for(cmd: &Command) -> RunConfig {
    let mut rc = RunConfig::default();
    if let Command::Gradcheck { .. } = cmd {
        rc.encoder = EncoderConfig {
            layers: 2,
            hidden_dim: 16,
            heads: 2,
            ffn_dim: 32,
            max_len: 32,
            vocab_size: 0,
            dropout_rate: 0.0,
            seed: 5,
            precision: Precision::Double,
        };
        rc.vocab_size = 80;
    }
    rc
}

pub(crate) fn apply_command_flags(cmd: &Command, rc: &mut RunConfig) -> Result<(), CliError> {
    let mut set = |k: &str, v: &Option<String>| -> Result<(), CliError> {
        if let Some(v) = v {
            rc.set(k, v)?;
        }
        Ok(())
    };
    match cmd {
        Command::Train { task } => set("task", &Some(task.clone()))?,
        Command::Predict { input, split } | Command::Pipeline { input, split } => {
            set("in", &input.as_ref().map(|p| p.to_string_lossy().into_owned()))?;
            set("split", split)?;
        }
        Command::Evaluate {
            task,
            mode,
            gold_spans,
            split,
        } => {
            set("task", &Some(task.clone()))?;
            set("mode", mode)?;
            set("gold_spans", gold_spans)?;
            set("split", split)?;
        }
        Command::Gradcheck { samples } => set("samples", &samples.map(|n| n.to_string()))?,
        Command::Synth | Command::Stats => {}
    }
    Ok(())
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str, cmd: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Usage(format!("{cmd} requires --{flag}")))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes data to `--out`, or to standard output without it.
fn emit(out: &Option<PathBuf>, data: &str) -> Result<(), CliError> {
    match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(io_err(parent))?;
            }
            fs::write(p, data).map_err(io_err(p))
        }
        None => std::io::stdout()
            .write_all(data.as_bytes())
            .map_err(io_err(Path::new("<stdout>"))),
    }
}

fn load_data(rc: &RunConfig, cmd: &str) -> Result<Corpus, CliError> {
    let root = require(&rc.data, "data", cmd)?;
    Ok(load_corpus(root)?)
}

/// The note named by `--in`, or the configured split of `--data`.
fn inputs(rc: &RunConfig, cmd: &str) -> Result<Vec<AnnotatedDocument>, CliError> {
    if let Some(path) = &rc.input {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let doc_id = path.file_stem().map_or("note".into(), |s| s.to_string_lossy().into_owned());
        return Ok(vec![AnnotatedDocument::new(doc_id, normalize_newlines(&text), Vec::new())?]);
    }
    if rc.data.is_none() {
        return Err(CliError::Usage(format!("{cmd} requires --in or --data")));
    }
    Ok(load_data(rc, cmd)?.split(rc.split).to_vec())
}

pub(crate) fn run(cmd: &Command, rc: &RunConfig) -> Result<(), CliError> {
    match cmd {
        Command::Synth => synth(rc),
        Command::Stats => {
            let c = load_data(rc, "stats")?;
            emit(&rc.out, &corpus_stats(&c).to_string())
        }
        Command::Train { .. } => match rc.encoder.precision {
            Precision::Single => train::<f32>(rc),
            Precision::Double => train::<f64>(rc),
        },
        Command::Predict { .. } | Command::Pipeline { .. } | Command::Evaluate { .. } => {
            let name = match cmd {
                Command::Predict { .. } => "predict",
                Command::Pipeline { .. } => "pipeline",
                _ => "evaluate",
            };
            let model = require(&rc.model, "model", name)?;
            match artifact::model_precision(model)? {
                Precision::Single => run_model::<f32>(cmd, rc, model),
                Precision::Double => run_model::<f64>(cmd, rc, model),
            }
        }
        Command::Gradcheck { .. } => gradcheck(rc),
    }
}

fn synth(rc: &RunConfig) -> Result<(), CliError> {
    let out = require(&rc.out, "out", "synth")?;
    let (c, ledger) = gen_corpus(&rc.synth)?;
    save_corpus(&c, out)?;
    let lines: String = ledger
        .entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("ledger entries serialize") + "\n")
        .collect();
    let path = out.join("ledger.jsonl");
    fs::write(&path, lines).map_err(io_err(&path))?;
    log::info!(
        "wrote {} train, {} dev, {} test notes with {} mentions to {}",
        c.train.len(),
        c.dev.len(),
        c.test.len(),
        ledger.entries.len(),
        out.display()
    );
    Ok(())
}

fn tasks_for(name: &str) -> (bool, Vec<ClassificationTask>) {
    match name {
        "ner" => (true, Vec::new()),
        "all" => (true, ClassificationTask::ALL.to_vec()),
        other => (false, ClassificationTask::parse(other).into_iter().collect()),
    }
}

fn train<S: Scalar>(rc: &RunConfig) -> Result<(), CliError> {
    let data = require(&rc.data, "data", "train")?;
    let model_dir = require(&rc.model, "model", "train")?;
    let task = rc.task.as_deref().ok_or_else(|| CliError::Usage("train requires --task".into()))?;
    let (ner, tasks) = tasks_for(task);
    if !ner && tasks.is_empty() {
        return Err(CliError::Usage(format!("unknown task {task:?}")));
    }
    let c = load_corpus(data)?;
    let v = corpus_vocab(&c, rc.vocab_size)?;
    log::info!("vocabulary: {} pieces", v.len());
    if ner {
        let b = train_ner::<S>(&c, &v, &rc.encoder, &rc.train)?;
        save_ner(&b, model_dir)?;
    }
    if !tasks.is_empty() {
        let b = train_classifiers::<S>(&c, &tasks, &v, &rc.encoder, &rc.train)?;
        save_classifiers(&b, model_dir)?;
    }
    log::info!("saved {task} model to {}", model_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct SpanRecord<'a> {
    doc_id: &'a str,
    start: usize,
    end: usize,
    surface: &'a str,
}

fn span_lines(docs: &[AnnotatedDocument], pred: &SpanPredictions) -> String {
    let mut out = String::new();
    for d in docs {
        for &s in pred.get(&d.doc_id).map(Vec::as_slice).unwrap_or_default() {
            let surface = char_slice(&d.text, s).unwrap_or_default();
            let r = SpanRecord {
                doc_id: &d.doc_id,
                start: s.start,
                end: s.end,
                surface,
            };
            out.push_str(&serde_json::to_string(&r).expect("records serialize"));
            out.push('\n');
        }
    }
    out
}

fn run_model<S: Scalar>(cmd: &Command, rc: &RunConfig, model_dir: &Path) -> Result<(), CliError> {
    match cmd {
        Command::Predict { .. } => {
            let docs = inputs(rc, "predict")?;
            let b = load_ner::<S>(model_dir)?;
            let pred = b.predict_documents(&docs)?;
            emit(&rc.out, &span_lines(&docs, &pred))
        }
        Command::Pipeline { .. } => {
            let docs = inputs(rc, "pipeline")?;
            let p = load_model::<S>(model_dir)?;
            let out = if docs.len() == 1 {
                vec![run_pipeline(&p, &docs[0].doc_id, &docs[0].text)?]
            } else {
                run_pipeline_all(&p, &docs)?
            };
            emit(&rc.out, &to_jsonl(&out))
        }
        _ => evaluate::<S>(rc, model_dir),
    }
}

fn evaluate<S: Scalar>(rc: &RunConfig, model_dir: &Path) -> Result<(), CliError> {
    let c = load_data(rc, "evaluate")?;
    let gold = c.split(rc.split);
    let task = rc.task.as_deref().unwrap_or("ner");
    let labeled = |gold_spans: bool| -> Result<Vec<AnnotatedDocument>, CliError> {
        if gold_spans {
            Ok(classify_gold_spans(&load_classifiers::<S>(model_dir)?, gold)?)
        } else {
            Ok(run_pipeline_all(&load_model::<S>(model_dir)?, gold)?)
        }
    };
    let report: MetricsReport = match task {
        "ner" => {
            let b = load_ner::<S>(model_dir)?;
            ner_metrics(gold, &b.predict_documents(gold)?, rc.mode)?
        }
        "event" => event_metrics(gold, &event_predictions(&labeled(rc.gold_spans)?), rc.mode)?,
        "context" => context_metrics(gold, &context_predictions(&labeled(rc.gold_spans)?))?,
        "end2end" => end_to_end_metrics(gold, &labeled(rc.gold_spans)?)?,
        other => return Err(CliError::Usage(format!("unknown evaluation task {other:?}"))),
    };
    eprintln!("{} split, {} notes", rc.split.dir_name(), gold.len());
    eprint!("{report}");
    if rc.out.is_some() {
        emit(&rc.out, &report.to_jsonl())?;
    }
    Ok(())
}

fn gradcheck(rc: &RunConfig) -> Result<(), CliError> {
    if rc.encoder.precision != Precision::Double {
        return Err(CliError::Usage("gradcheck needs precision=64".into()));
    }
    let (c, _) = gen_corpus(&GeneratorSpec {
        seed: rc.synth.seed,
        n_docs: [2, 0, 0],
        mentions_per_doc: (3, 4),
        ..Default::default()
    })?;
    let v = corpus_vocab(&c, rc.vocab_size)?;
    let cfg = EncoderConfig {
        vocab_size: v.len(),
        ..rc.encoder.clone()
    };
    let mut tagged = build_ner_examples(&c.train, &v, cfg.max_len).map_err(medctx::ModelError::from)?;
    tagged.truncate(4);
    let mut classified = build_task_examples(&c.train, ClassificationTask::Event, &v, cfg.max_len)
        .map_err(medctx::ModelError::from)?;
    classified.truncate(4);

    let mut failed = Vec::new();
    for (mode, batch, n_classes) in [(Mode::Token, &tagged, 0), (Mode::Sequence, &classified, 3)] {
        let model = EncoderModel::<f64>::init(cfg.clone(), n_classes).map_err(medctx::ModelError::from)?;
        let report = grad_check(&model, batch, mode, rc.samples, rc.encoder.seed).map_err(medctx::ModelError::from)?;
        eprintln!(
            "{mode:?} mode: {} parameters checked, max relative error {:.3e}",
            report.checked, report.max_relative_error
        );
        if let Some(w) = &report.worst {
            eprintln!("  worst: {w:?}");
        }
        if !report.passes(GRADCHECK_TOLERANCE) {
            failed.push(format!("{mode:?}"));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "gradient check above {GRADCHECK_TOLERANCE:e} in {} mode",
            failed.join(" and ")
        )))
    }
}
