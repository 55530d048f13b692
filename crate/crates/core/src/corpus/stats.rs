use std::fmt;

use serde::Serialize;

use super::{AnnotatedDocument, Corpus, Dimension, EventLabel, Label, Split};

/// Label counts for one split.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct SplitStats {
    pub documents: usize,
    pub mentions: usize,
    /// Indexed by [`EventLabel`] class order.
    pub events: [usize; 3],
    /// One count vector per dimension, in [`Dimension::ALL`] order.
    pub context: [Vec<usize>; 5],
}

impl SplitStats {
    pub fn from_documents(docs: &[AnnotatedDocument]) -> Self {
        let mut s = SplitStats {
            documents: docs.len(),
            context: Dimension::ALL.map(|d| vec![0; d.class_count()]),
            ..Default::default()
        };
        for m in docs.iter().flat_map(|d| &d.mentions) {
            s.mentions += 1;
            s.events[m.event.index()] += 1;
            if let Some(ctx) = &m.context {
                for (i, dim) in Dimension::ALL.into_iter().enumerate() {
                    s.context[i][ctx.get(dim)] += 1;
                }
            }
        }
        s
    }

    pub fn event_count(&self, label: EventLabel) -> usize {
        self.events[label.index()]
    }

    pub fn context_counts(&self, dim: Dimension) -> &[usize] {
        let i = Dimension::ALL.iter().position(|d| *d == dim).expect("known dimension");
        &self.context[i]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub train: SplitStats,
    pub dev: SplitStats,
    pub test: SplitStats,
}

impl CorpusStats {
    pub fn split(&self, split: Split) -> &SplitStats {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

pub fn corpus_stats(c: &Corpus) -> CorpusStats {
    CorpusStats {
        train: SplitStats::from_documents(&c.train),
        dev: SplitStats::from_documents(&c.dev),
        test: SplitStats::from_documents(&c.test),
    }
}

fn cell(count: usize, total: usize) -> String {
    if total == 0 {
        format!("{count}")
    } else {
        format!("{count} ({:.1}%)", 100.0 * count as f64 / total as f64)
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let splits = [&self.train, &self.dev, &self.test];
        writeln!(
            f,
            "{:<12} {:<14} {:>16} {:>16} {:>16}",
            "Task", "Category", "train", "dev", "test"
        )?;
        writeln!(
            f,
            "{:<12} {:<14} {:>16} {:>16} {:>16}",
            "Documents", "", splits[0].documents, splits[1].documents, splits[2].documents
        )?;
        writeln!(
            f,
            "{:<12} {:<14} {:>16} {:>16} {:>16}",
            "Medication", "", splits[0].mentions, splits[1].mentions, splits[2].mentions
        )?;
        for label in EventLabel::ALL {
            let row: Vec<String> = splits
                .iter()
                .map(|s| cell(s.event_count(*label), s.mentions))
                .collect();
            writeln!(
                f,
                "{:<12} {:<14} {:>16} {:>16} {:>16}",
                "Event", label.name(), row[0], row[1], row[2]
            )?;
        }
        for dim in Dimension::ALL {
            for (ci, class) in dim.class_names().into_iter().enumerate() {
                let row: Vec<String> = splits
                    .iter()
                    .map(|s| {
                        cell(
                            s.context_counts(dim)[ci],
                            s.event_count(EventLabel::Disposition),
                        )
                    })
                    .collect();
                writeln!(
                    f,
                    "{:<12} {:<14} {:>16} {:>16} {:>16}",
                    dim.name(), class, row[0], row[1], row[2]
                )?;
            }
        }
        Ok(())
    }
}
