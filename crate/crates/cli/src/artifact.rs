//! On-disk model artifacts.
//!
//! One directory per trained encoder: `manifest.txt` (key=value lines),
//! `vocab.txt` (one piece per line, in id order) and `params.bin` (little-endian
//! parameter values in layout order). The manifest checksum is a SHA-256 over
//! the vocabulary bytes followed by the parameter bytes.
//!
//! A model directory holds `ner/` and one directory per classification task.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use medctx::context::{ClassificationTask, ClassifierBundle, TaskModel};
use medctx::encoder::{EncoderConfig, EncoderModel, EpochRecord, TrainConfig};
use medctx::ner::NerModelBundle;
use medctx::pipeline::PipelineBundle;
use medctx::preproc::Vocabulary;
use medctx::scalar::{Precision, Scalar};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{encoder_entries, parse_lines, set_encoder_key, set_train_key, train_entries};

pub const FORMAT_VERSION: u32 = 1;

pub const NER_DIR: &str = "ner";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt artifact {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("artifact {path} has format version {found}; this build reads version {FORMAT_VERSION}")]
    Version { path: String, found: String },
    #[error("artifact {path} stores {found}-bit parameters, expected {expected}-bit")]
    Precision { path: String, found: Precision, expected: Precision },
    #[error("artifact {path} holds a {found} model, expected {expected}")]
    Kind { path: String, found: String, expected: String },
    #[error("no trained {0} model in {1}")]
    Missing(String, String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn corrupt(path: &Path, reason: impl Into<String>) -> ArtifactError {
    ArtifactError::Corrupt {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// One serialized encoder with the metadata needed to rebuild it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact<S: Scalar> {
    /// `ner` or a classification task name.
    pub kind: String,
    pub vocab: Vocabulary,
    pub model: EncoderModel<S>,
    pub train_config: TrainConfig,
    pub history: Vec<EpochRecord>,
}

fn checksum(vocab: &[u8], params: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(vocab);
    h.update(params);
    hex::encode(h.finalize())
}

impl<S: Scalar> ModelArtifact<S> {
    pub fn save(&self, dir: &Path) -> Result<(), ArtifactError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        let vocab: String = self.vocab.pieces().iter().map(|p| format!("{p}\n")).collect();
        let mut params = Vec::with_capacity(self.model.parameter_count() * S::PRECISION.bits() as usize / 8);
        for &x in self.model.params() {
            x.write_le(&mut params);
        }
        let cfg = self.model.config();
        let mut m = String::new();
        let mut line = |k: &str, v: &str| {
            m.push_str(k);
            m.push('=');
            m.push_str(v);
            m.push('\n');
        };
        line("format_version", &FORMAT_VERSION.to_string());
        line("kind", &self.kind);
        line("n_classes", &self.model.n_classes().to_string());
        line("vocab_pieces", &self.vocab.len().to_string());
        for (k, v) in encoder_entries(cfg).into_iter().chain(train_entries(&self.train_config)) {
            line(k, &v);
        }
        line("parameters", &self.model.parameter_count().to_string());
        line("checksum", &checksum(vocab.as_bytes(), &params));
        for t in &self.model.layout().tensors {
            let shape: Vec<String> = t.shape.iter().map(usize::to_string).collect();
            line("tensor", &format!("{} {}", t.name, shape.join("x")));
        }
        for r in &self.history {
            line("epoch", &format!("{} {} {}", r.epoch, r.train_loss, r.dev_score));
        }
        for (name, bytes) in [("vocab.txt", vocab.as_bytes()), ("params.bin", &params[..]), ("manifest.txt", m.as_bytes())] {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(io(&p))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ArtifactError> {
        let manifest = read_manifest(dir)?;
        let mpath = dir.join("manifest.txt");
        let get = |k: &str| -> Result<&str, ArtifactError> {
            manifest
                .single
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| corrupt(&mpath, format!("missing {k}")))
        };
        let num = |k: &str| -> Result<usize, ArtifactError> {
            get(k)?.parse().map_err(|_| corrupt(&mpath, format!("bad {k}")))
        };
        let precision = manifest.precision(&mpath)?;
        if precision != S::PRECISION {
            return Err(ArtifactError::Precision {
                path: dir.display().to_string(),
                found: precision,
                expected: S::PRECISION,
            });
        }

        let vpath = dir.join("vocab.txt");
        let vocab_bytes = fs::read(&vpath).map_err(io(&vpath))?;
        let ppath = dir.join("params.bin");
        let param_bytes = fs::read(&ppath).map_err(io(&ppath))?;
        if checksum(&vocab_bytes, &param_bytes) != get("checksum")? {
            return Err(corrupt(dir, "checksum mismatch"));
        }
        let vocab_text = String::from_utf8(vocab_bytes).map_err(|_| corrupt(&vpath, "not UTF-8"))?;
        let pieces: Vec<String> = vocab_text.lines().map(str::to_string).collect();
        if pieces.len() != num("vocab_pieces")? {
            return Err(corrupt(&vpath, "piece count differs from manifest"));
        }
        let vocab = Vocabulary::from_pieces(pieces).map_err(|e| corrupt(&vpath, e.to_string()))?;

        let mut cfg = EncoderConfig {
            vocab_size: vocab.len(),
            ..Default::default()
        };
        let mut tc = TrainConfig::default();
        for (k, v) in &manifest.single {
            let known = set_encoder_key(&mut cfg, k, v).map_err(|e| corrupt(&mpath, e.to_string()))?
                || set_train_key(&mut tc, k, v).map_err(|e| corrupt(&mpath, e.to_string()))?;
            let meta = matches!(
                k.as_str(),
                "format_version" | "kind" | "n_classes" | "vocab_pieces" | "parameters" | "checksum"
            );
            if !known && !meta {
                return Err(corrupt(&mpath, format!("unknown key {k:?}")));
            }
        }

        let width = S::PRECISION.bits() as usize / 8;
        let total = num("parameters")?;
        if param_bytes.len() != total * width {
            return Err(corrupt(&ppath, format!("{} bytes for {total} parameters", param_bytes.len())));
        }
        let params: Vec<S> = param_bytes.chunks_exact(width).map(S::read_le).collect();
        let model = EncoderModel::from_parts(cfg, num("n_classes")?, params).map_err(|e| corrupt(&mpath, e.to_string()))?;
        let index: Vec<String> = model
            .layout()
            .tensors
            .iter()
            .map(|t| {
                let shape: Vec<String> = t.shape.iter().map(usize::to_string).collect();
                format!("{} {}", t.name, shape.join("x"))
            })
            .collect();
        if index != manifest.tensors {
            return Err(corrupt(&mpath, "tensor index does not match the configured layout"));
        }
        let history = manifest
            .epochs
            .iter()
            .map(|e| {
                let f: Vec<&str> = e.split_whitespace().collect();
                match f.as_slice() {
                    [a, b, c] => Some(EpochRecord {
                        epoch: a.parse().ok()?,
                        train_loss: b.parse().ok()?,
                        dev_score: c.parse().ok()?,
                    }),
                    _ => None,
                }
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| corrupt(&mpath, "bad epoch line"))?;
        Ok(ModelArtifact {
            kind: get("kind")?.to_string(),
            vocab,
            model,
            train_config: tc,
            history,
        })
    }
}

struct Manifest {
    single: BTreeMap<String, String>,
    tensors: Vec<String>,
    epochs: Vec<String>,
}

impl Manifest {
    fn precision(&self, path: &Path) -> Result<Precision, ArtifactError> {
        self.single
            .get("precision")
            .and_then(|p| p.parse().ok())
            .and_then(Precision::from_bits)
            .ok_or_else(|| corrupt(path, "missing or bad precision"))
    }
}

fn read_manifest(dir: &Path) -> Result<Manifest, ArtifactError> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    let lines = parse_lines(&path.display().to_string(), &text).map_err(|e| corrupt(&path, e.to_string()))?;
    // the version gate comes before anything else is interpreted
    match lines.first() {
        Some((_, "format_version", v)) if *v == FORMAT_VERSION.to_string() => {}
        Some((_, "format_version", v)) => {
            return Err(ArtifactError::Version {
                path: dir.display().to_string(),
                found: v.to_string(),
            })
        }
        _ => return Err(corrupt(&path, "format_version must come first")),
    }
    let mut m = Manifest {
        single: BTreeMap::new(),
        tensors: Vec::new(),
        epochs: Vec::new(),
    };
    for (line, k, v) in lines {
        match k {
            "tensor" => m.tensors.push(v.to_string()),
            "epoch" => m.epochs.push(v.to_string()),
            _ => {
                if m.single.insert(k.to_string(), v.to_string()).is_some() {
                    return Err(corrupt(&path, format!("line {line}: repeated key {k}")));
                }
            }
        }
    }
    Ok(m)
}

/// Parameter precision recorded in an artifact directory.
pub fn artifact_precision(dir: &Path) -> Result<Precision, ArtifactError> {
    read_manifest(dir)?.precision(&dir.join("manifest.txt"))
}

/// Precision of the first artifact found under a model directory.
pub fn model_precision(model_dir: &Path) -> Result<Precision, ArtifactError> {
    let names = std::iter::once(NER_DIR).chain(ClassificationTask::ALL.iter().map(|t| t.name()));
    for name in names {
        let dir = model_dir.join(name);
        if dir.join("manifest.txt").exists() {
            return artifact_precision(&dir);
        }
    }
    Err(ArtifactError::Missing("any".into(), model_dir.display().to_string()))
}

fn expect_kind<S: Scalar>(dir: &Path, a: &ModelArtifact<S>, expected: &str) -> Result<(), ArtifactError> {
    if a.kind == expected {
        Ok(())
    } else {
        Err(ArtifactError::Kind {
            path: dir.display().to_string(),
            found: a.kind.clone(),
            expected: expected.into(),
        })
    }
}

pub fn task_dir(model_dir: &Path, task: ClassificationTask) -> PathBuf {
    model_dir.join(task.name())
}

pub fn save_ner<S: Scalar>(b: &NerModelBundle<S>, model_dir: &Path) -> Result<(), ArtifactError> {
    ModelArtifact {
        kind: NER_DIR.into(),
        vocab: b.vocab.clone(),
        model: b.model.clone(),
        train_config: b.train_config.clone(),
        history: b.history.clone(),
    }
    .save(&model_dir.join(NER_DIR))
}

pub fn load_ner<S: Scalar>(model_dir: &Path) -> Result<NerModelBundle<S>, ArtifactError> {
    let dir = model_dir.join(NER_DIR);
    if !dir.join("manifest.txt").exists() {
        return Err(ArtifactError::Missing(NER_DIR.into(), model_dir.display().to_string()));
    }
    let a = ModelArtifact::<S>::load(&dir)?;
    expect_kind(&dir, &a, NER_DIR)?;
    Ok(NerModelBundle {
        model: a.model,
        vocab: a.vocab,
        train_config: a.train_config,
        history: a.history,
    })
}

pub fn save_task<S: Scalar>(tm: &TaskModel<S>, vocab: &Vocabulary, model_dir: &Path) -> Result<(), ArtifactError> {
    ModelArtifact {
        kind: tm.task.name().into(),
        vocab: vocab.clone(),
        model: tm.model.clone(),
        train_config: tm.train_config.clone(),
        history: tm.history.clone(),
    }
    .save(&task_dir(model_dir, tm.task))
}

pub fn save_classifiers<S: Scalar>(b: &ClassifierBundle<S>, model_dir: &Path) -> Result<(), ArtifactError> {
    for tm in b.tasks.values() {
        save_task(tm, &b.vocab, model_dir)?;
    }
    Ok(())
}

/// Loads the six task classifiers; they must share one vocabulary.
pub fn load_classifiers<S: Scalar>(model_dir: &Path) -> Result<ClassifierBundle<S>, ArtifactError> {
    let mut vocab: Option<Vocabulary> = None;
    let mut tasks = BTreeMap::new();
    for task in ClassificationTask::ALL {
        let dir = task_dir(model_dir, task);
        if !dir.join("manifest.txt").exists() {
            return Err(ArtifactError::Missing(task.name().into(), model_dir.display().to_string()));
        }
        let a = ModelArtifact::<S>::load(&dir)?;
        expect_kind(&dir, &a, task.name())?;
        match &vocab {
            Some(v) if *v != a.vocab => return Err(corrupt(&dir, "vocabulary differs from the other tasks")),
            Some(_) => {}
            None => vocab = Some(a.vocab.clone()),
        }
        tasks.insert(
            task,
            TaskModel {
                task,
                model: a.model,
                train_config: a.train_config,
                history: a.history,
            },
        );
    }
    let mut b = ClassifierBundle::new(vocab.expect("six tasks loaded"));
    b.tasks = tasks;
    Ok(b)
}

pub fn save_model<S: Scalar>(p: &PipelineBundle<S>, model_dir: &Path) -> Result<(), ArtifactError> {
    save_ner(p.ner(), model_dir)?;
    save_classifiers(p.classifiers(), model_dir)
}

pub fn load_model<S: Scalar>(model_dir: &Path) -> Result<PipelineBundle<S>, ArtifactError> {
    let ner = load_ner(model_dir)?;
    let classifiers = load_classifiers(model_dir)?;
    PipelineBundle::new(ner, classifiers).map_err(|e| corrupt(model_dir, e.to_string()))
}
