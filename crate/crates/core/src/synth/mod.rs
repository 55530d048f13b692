//! Deterministic generator of labeled clinical-style notes.
//!
//! Every mention sentence carries cue phrases that name its labels, so in the
//! separable setting each label can be read off its sentence. Label counts
//! follow per-task distribution targets through exact quotas.

pub mod fixtures;
mod phrases;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    AnnotatedDocument, CharSpan, ContextAttributes, Corpus, CorpusError, Dimension, EventLabel, Label,
    MedicationMention, Split,
};

pub use phrases::DRUGS;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Difficulty {
    /// Every label is determined by a cue phrase in its sentence.
    Separable,
    /// With probability `rate`, one cue of a mention sentence is replaced by a
    /// cue of a different class while the recorded label stays.
    Noisy { rate: f64 },
}

/// Class proportions per task, in class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTargets {
    pub event: Vec<f64>,
    pub action: Vec<f64>,
    pub negation: Vec<f64>,
    pub temporality: Vec<f64>,
    pub certainty: Vec<f64>,
    pub actor: Vec<f64>,
}

fn normalized(counts: &[u32]) -> Vec<f64> {
    let total: u32 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

impl Default for DistributionTargets {
    /// Proportions of the reference training set.
    fn default() -> Self {
        DistributionTargets {
            event: normalized(&[1412, 5260, 557]),
            action: normalized(&[568, 340, 129, 54, 285, 1, 35]),
            negation: normalized(&[32, 1380]),
            temporality: normalized(&[744, 494, 145, 29]),
            certainty: normalized(&[1176, 134, 100, 2]),
            actor: normalized(&[1278, 106, 28]),
        }
    }
}

impl DistributionTargets {
    pub fn dimension(&self, d: Dimension) -> &[f64] {
        match d {
            Dimension::Action => &self.action,
            Dimension::Negation => &self.negation,
            Dimension::Temporality => &self.temporality,
            Dimension::Certainty => &self.certainty,
            Dimension::Actor => &self.actor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    /// Documents in train, dev and test.
    pub n_docs: [usize; 3],
    /// Inclusive range of mentions per document.
    pub mentions_per_doc: (usize, usize),
    /// Number of drug names drawn from the built-in lexicon.
    pub lexicon_size: usize,
    pub targets: DistributionTargets,
    pub difficulty: Difficulty,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            seed: 7,
            n_docs: [200, 40, 40],
            mentions_per_doc: (8, 16),
            lexicon_size: 60,
            targets: DistributionTargets::default(),
            difficulty: Difficulty::Separable,
        }
    }
}

fn cue_words() -> Vec<&'static str> {
    let mut tables: Vec<&[&str]> = vec![phrases::NO_DISPOSITION, phrases::NO_DISPOSITION_PAIR, phrases::UNDETERMINED];
    for t in [
        phrases::ACTION,
        phrases::NEGATION,
        phrases::TEMPORALITY,
        phrases::CERTAINTY,
        phrases::ACTOR,
    ] {
        tables.extend(t.iter().copied());
    }
    tables
        .into_iter()
        .flatten()
        .flat_map(|p| p.split_whitespace())
        .collect()
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::Spec(m));
        let t = &self.targets;
        let tasks: [(&str, &[f64], usize); 6] = [
            ("event", &t.event, EventLabel::ALL.len()),
            ("action", &t.action, Dimension::Action.class_count()),
            ("negation", &t.negation, Dimension::Negation.class_count()),
            ("temporality", &t.temporality, Dimension::Temporality.class_count()),
            ("certainty", &t.certainty, Dimension::Certainty.class_count()),
            ("actor", &t.actor, Dimension::Actor.class_count()),
        ];
        for (name, p, k) in tasks {
            if p.len() != k {
                return fail(format!("{name} targets need {k} entries, got {}", p.len()));
            }
            if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return fail(format!("{name} targets must be probabilities summing to 1"));
            }
        }
        let (lo, hi) = self.mentions_per_doc;
        if lo > hi {
            return fail(format!("mentions_per_doc range {lo}..={hi} is empty"));
        }
        if self.lexicon_size == 0 || self.lexicon_size > DRUGS.len() {
            return fail(format!("lexicon_size must be in 1..={}", DRUGS.len()));
        }
        if let Difficulty::Noisy { rate } = self.difficulty {
            if !(0.0..=1.0).contains(&rate) {
                return fail(format!("noise rate {rate} is outside [0, 1]"));
            }
        }
        let cues = cue_words();
        for drug in &DRUGS[..self.lexicon_size] {
            if let Some(w) = drug.split_whitespace().find(|w| cues.contains(w)) {
                return fail(format!("drug word {w:?} is also a cue word"));
            }
        }
        Ok(())
    }
}

/// One emitted mention, recorded as it was written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub split: Split,
    pub doc_id: String,
    pub span: CharSpan,
    pub surface: String,
    pub event: EventLabel,
    pub context: Option<ContextAttributes>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub entries: Vec<LedgerEntry>,
}

impl Ledger {
    pub fn event_counts(&self, split: Split) -> [usize; 3] {
        let mut out = [0; 3];
        for e in self.entries.iter().filter(|e| e.split == split) {
            out[e.event.index()] += 1;
        }
        out
    }

    pub fn context_counts(&self, split: Split, dim: Dimension) -> Vec<usize> {
        let mut out = vec![0; dim.class_count()];
        for e in self.entries.iter().filter(|e| e.split == split) {
            if let Some(c) = e.context {
                out[c.get(dim)] += 1;
            }
        }
        out
    }
}

/// Splits `n` items into per-class counts by largest remainder; remainders
/// that tie go to the lower class index.
pub fn quotas(p: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = p.iter().map(|x| x * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let short = n - counts.iter().sum::<usize>();
    for &k in order.iter().take(short) {
        counts[k] += 1;
    }
    counts
}

fn shuffled_labels(p: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = quotas(p, n)
        .into_iter()
        .enumerate()
        .flat_map(|(k, c)| std::iter::repeat_n(k, c))
        .collect();
    labels.shuffle(rng);
    labels
}

struct Writer {
    text: String,
    chars: usize,
    mentions: Vec<MedicationMention>,
}

impl Writer {
    fn push(&mut self, s: &str) {
        self.text.push_str(s);
        self.chars += s.chars().count();
    }

    fn mention(&mut self, drug: &str, event: EventLabel, context: Option<ContextAttributes>) {
        let start = self.chars;
        self.push(drug);
        self.mentions.push(MedicationMention {
            span: CharSpan::new(start, self.chars),
            surface: drug.to_string(),
            event,
            context,
        });
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.gen_range(0..xs.len())]
}

/// Cue for `class` from a per-class table, or from another class under noise.
fn cue<'a>(rng: &mut ChaCha8Rng, table: &[&[&'a str]], class: usize, swap: bool) -> &'a str {
    let k = if swap && table.len() > 1 {
        let other = rng.gen_range(0..table.len() - 1);
        if other >= class {
            other + 1
        } else {
            other
        }
    } else {
        class
    };
    pick(rng, table[k])
}

fn capitalized(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

struct Generator<'a> {
    spec: &'a GeneratorSpec,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn noise(&mut self) -> bool {
        match self.spec.difficulty {
            Difficulty::Separable => false,
            Difficulty::Noisy { rate } => self.rng.gen_bool(rate),
        }
    }

    fn drug(&mut self) -> &'static str {
        DRUGS[self.rng.gen_range(0..self.spec.lexicon_size)]
    }

    fn dose(&mut self, w: &mut Writer) {
        let d = pick(&mut self.rng, phrases::DOSES);
        if !d.is_empty() {
            w.push(" ");
            w.push(d);
        }
    }

    fn disposition(&mut self, w: &mut Writer, ctx: ContextAttributes) {
        // one noisy dimension at most
        let noisy = self.noise().then(|| self.rng.gen_range(0..5));
        let parts = [
            cue(&mut self.rng, phrases::CERTAINTY, ctx.certainty.index(), noisy == Some(3)),
            cue(&mut self.rng, phrases::ACTOR, ctx.actor.index(), noisy == Some(4)),
            cue(&mut self.rng, phrases::NEGATION, ctx.negation.index(), noisy == Some(1)),
            cue(&mut self.rng, phrases::ACTION, ctx.action.index(), noisy == Some(0)),
        ];
        w.push(&capitalized(&parts.join(" ")));
        w.push(" ");
        let drug = self.drug();
        w.mention(drug, EventLabel::Disposition, Some(ctx));
        self.dose(w);
        w.push(" ");
        w.push(cue(&mut self.rng, phrases::TEMPORALITY, ctx.temporality.index(), noisy == Some(2)));
        w.push(".");
    }

    fn plain(&mut self, w: &mut Writer, event: EventLabel) {
        let flip = self.noise();
        let table = match (event, flip) {
            (EventLabel::NoDisposition, false) | (EventLabel::Undetermined, true) => phrases::NO_DISPOSITION,
            _ => phrases::UNDETERMINED,
        };
        let subject = pick(&mut self.rng, &["The patient", "Patient", "She", "He"]);
        w.push(subject);
        w.push(" ");
        w.push(pick(&mut self.rng, table));
        w.push(" ");
        let drug = self.drug();
        w.mention(drug, event, None);
        self.dose(w);
        w.push(".");
    }

    fn pair(&mut self, w: &mut Writer) {
        w.push(&capitalized(pick(&mut self.rng, phrases::NO_DISPOSITION_PAIR)));
        w.push(" ");
        let a = self.drug();
        let b = loop {
            let b = self.drug();
            if b != a || self.spec.lexicon_size == 1 {
                break b;
            }
        };
        w.mention(a, EventLabel::NoDisposition, None);
        w.push(" and ");
        w.mention(b, EventLabel::NoDisposition, None);
        w.push(".");
    }

    fn document(&mut self, doc_id: String, labels: &[(EventLabel, Option<ContextAttributes>)]) -> Result<AnnotatedDocument, SynthError> {
        let mut w = Writer {
            text: String::new(),
            chars: 0,
            mentions: Vec::new(),
        };
        let mut i = 0;
        let mut in_section = 0usize;
        let mut first = true;
        while i < labels.len() {
            if in_section == 0 {
                if !first {
                    w.push("\n\n");
                }
                first = false;
                w.push(pick(&mut self.rng, phrases::HEADERS));
                w.push("\n\n");
                in_section = self.rng.gen_range(2..=5);
            } else {
                w.push(if self.rng.gen_bool(0.2) { "\n" } else { " " });
            }
            if self.rng.gen_bool(0.25) {
                w.push(pick(&mut self.rng, phrases::FILLER));
                w.push(" ");
            }
            let (event, ctx) = labels[i];
            let pair_next = event == EventLabel::NoDisposition
                && labels.get(i + 1).is_some_and(|l| l.0 == EventLabel::NoDisposition)
                && self.rng.gen_bool(0.2);
            if pair_next {
                self.pair(&mut w);
                i += 2;
            } else {
                match ctx {
                    Some(c) => self.disposition(&mut w, c),
                    None => self.plain(&mut w, event),
                }
                i += 1;
            }
            in_section -= 1;
        }
        w.push("\n");
        Ok(AnnotatedDocument::new(doc_id, w.text, w.mentions)?)
    }

    fn split(&mut self, split: Split, n_docs: usize, ledger: &mut Ledger) -> Result<Vec<AnnotatedDocument>, SynthError> {
        let (lo, hi) = self.spec.mentions_per_doc;
        let sizes: Vec<usize> = (0..n_docs).map(|_| self.rng.gen_range(lo..=hi)).collect();
        let total: usize = sizes.iter().sum();
        let t = &self.spec.targets;
        let events = shuffled_labels(&t.event, total, &mut self.rng);
        let n_disp = events.iter().filter(|&&e| e == EventLabel::Disposition.index()).count();
        let dims: Vec<Vec<usize>> = Dimension::ALL
            .iter()
            .map(|&d| shuffled_labels(t.dimension(d), n_disp, &mut self.rng))
            .collect();
        let mut k = 0;
        let labels: Vec<(EventLabel, Option<ContextAttributes>)> = events
            .iter()
            .map(|&e| {
                let event = EventLabel::ALL[e];
                let ctx = (event == EventLabel::Disposition).then(|| {
                    let mut c = ContextAttributes::default();
                    for (di, &d) in Dimension::ALL.iter().enumerate() {
                        c.set(d, dims[di][k]);
                    }
                    k += 1;
                    c
                });
                (event, ctx)
            })
            .collect();

        let mut docs = Vec::with_capacity(n_docs);
        let mut offset = 0;
        for (i, n) in sizes.into_iter().enumerate() {
            let doc_id = format!("{}_{:04}", split.dir_name(), i + 1);
            let doc = self.document(doc_id, &labels[offset..offset + n])?;
            offset += n;
            for m in &doc.mentions {
                ledger.entries.push(LedgerEntry {
                    split,
                    doc_id: doc.doc_id.clone(),
                    span: m.span,
                    surface: m.surface.clone(),
                    event: m.event,
                    context: m.context,
                });
            }
            docs.push(doc);
        }
        Ok(docs)
    }
}

/// Generates train, dev and test notes plus the log of every mention written.
pub fn gen_corpus(spec: &GeneratorSpec) -> Result<(Corpus, Ledger), SynthError> {
    spec.validate()?;
    let mut ledger = Ledger::default();
    let mut parts = Vec::with_capacity(3);
    for (i, split) in Split::ALL.into_iter().enumerate() {
        let mut g = Generator {
            spec,
            rng: ChaCha8Rng::seed_from_u64(spec.seed ^ (0x5EED_0000 + i as u64)),
        };
        parts.push(g.split(split, spec.n_docs[i], &mut ledger)?);
    }
    let test = parts.pop().expect("three splits");
    let dev = parts.pop().expect("three splits");
    let train = parts.pop().expect("three splits");
    Ok((Corpus::new(train, dev, test)?, ledger))
}
