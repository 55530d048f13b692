use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::{Counts, MatchMode, Prf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub counts: Counts,
    pub scores: Prf,
}

impl ClassScores {
    pub fn new(class: &str, counts: Counts) -> Self {
        ClassScores {
            class: class.to_string(),
            counts,
            scores: counts.scores(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyScore {
    pub name: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl AccuracyScore {
    pub fn new(name: &str, correct: usize, total: usize) -> Self {
        AccuracyScore {
            name: name.to_string(),
            correct,
            total,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        }
    }
}

/// Scores for one evaluation task. Sections that do not apply stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub mode: MatchMode,
    pub per_class: Vec<ClassScores>,
    pub micro: Option<ClassScores>,
    pub macro_avg: Option<Prf>,
    pub dimensions: Vec<AccuracyScore>,
    pub overall_accuracy: Option<AccuracyScore>,
    pub combined_accuracy: Option<AccuracyScore>,
}

/// One line of the machine-readable report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub task: String,
    pub name: String,
    pub class: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tp: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fp: Option<usize>,
    #[serde(rename = "fn", skip_serializing_if = "Option::is_none")]
    pub fn_: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total: Option<usize>,
}

impl MetricsReport {
    pub fn new(task: &str, mode: MatchMode) -> Self {
        MetricsReport {
            task: task.to_string(),
            mode,
            per_class: Vec::new(),
            micro: None,
            macro_avg: None,
            dimensions: Vec::new(),
            overall_accuracy: None,
            combined_accuracy: None,
        }
    }

    pub fn records(&self) -> Vec<MetricRecord> {
        let mut out = Vec::new();
        let base = |name: &str, class: &str, value: f64| MetricRecord {
            task: self.task.clone(),
            name: name.to_string(),
            class: class.to_string(),
            value,
            tp: None,
            fp: None,
            fn_: None,
            correct: None,
            total: None,
        };
        for cs in self.per_class.iter().chain(&self.micro) {
            for (name, v) in [
                ("precision", cs.scores.precision),
                ("recall", cs.scores.recall),
                ("f1", cs.scores.f1),
            ] {
                out.push(MetricRecord {
                    tp: Some(cs.counts.tp),
                    fp: Some(cs.counts.fp),
                    fn_: Some(cs.counts.fn_),
                    ..base(name, &cs.class, v)
                });
            }
        }
        if let Some(m) = &self.macro_avg {
            for (name, v) in [("precision", m.precision), ("recall", m.recall), ("f1", m.f1)] {
                out.push(base(name, "macro", v));
            }
        }
        for a in self.dimensions.iter().chain(&self.overall_accuracy).chain(&self.combined_accuracy) {
            out.push(MetricRecord {
                correct: Some(a.correct),
                total: Some(a.total),
                ..base("accuracy", &a.name, a.accuracy)
            });
        }
        out
    }

    /// Line-delimited JSON, one record per metric.
    pub fn to_jsonl(&self) -> String {
        self.records()
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        writeln!(s, "{} ({})", self.task, self.mode)?;
        if !self.per_class.is_empty() || self.micro.is_some() {
            writeln!(
                s,
                "{:<16}{:>10}{:>10}{:>10}{:>8}{:>8}{:>8}",
                "class", "precision", "recall", "f1", "tp", "fp", "fn"
            )?;
            for cs in self.per_class.iter().chain(&self.micro) {
                writeln!(
                    s,
                    "{:<16}{:>10.4}{:>10.4}{:>10.4}{:>8}{:>8}{:>8}",
                    cs.class, cs.scores.precision, cs.scores.recall, cs.scores.f1, cs.counts.tp, cs.counts.fp, cs.counts.fn_
                )?;
            }
            if let Some(m) = &self.macro_avg {
                writeln!(s, "{:<16}{:>10.4}{:>10.4}{:>10.4}", "macro", m.precision, m.recall, m.f1)?;
            }
        }
        let accs: Vec<_> = self
            .dimensions
            .iter()
            .chain(&self.overall_accuracy)
            .chain(&self.combined_accuracy)
            .collect();
        if !accs.is_empty() {
            writeln!(s, "{:<16}{:>10}{:>10}{:>10}", "dimension", "accuracy", "correct", "total")?;
            for a in accs {
                writeln!(s, "{:<16}{:>10.4}{:>10}{:>10}", a.name, a.accuracy, a.correct, a.total)?;
            }
        }
        f.write_str(&s)
    }
}
