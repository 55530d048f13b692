//! Exhaustive reference scorer in exact rational arithmetic.
//!
//! Matching is an optimal one-to-one assignment found by dynamic programming
//! over subsets of predictions, so instances are limited to a few spans per
//! document. Counts and ratios are computed directly from their definitions.

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};

use super::{
    check_disjoint, ContextPredictions, EvalError, EventPredictions, MatchMode, MentionKey, MetricsReport,
    SpanPredictions,
};
use crate::corpus::{AnnotatedDocument, CharSpan, Dimension, EventLabel, Label};

pub type Exact = Ratio<i128>;

/// Largest number of gold or predicted spans per document the oracle accepts.
pub const MAX_SPANS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactPrf {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: Exact,
    pub recall: Exact,
    pub f1: Exact,
}

fn frac(num: usize, den: usize) -> Exact {
    if den == 0 {
        Exact::zero()
    } else {
        Exact::new(num as i128, den as i128)
    }
}

fn harmonic(p: Exact, r: Exact) -> Exact {
    if (p + r).is_zero() {
        Exact::zero()
    } else {
        Exact::from_integer(2) * p * r / (p + r)
    }
}

impl ExactPrf {
    fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = frac(tp, tp + fp);
        let recall = frac(tp, tp + fn_);
        ExactPrf {
            tp,
            fp,
            fn_,
            f1: harmonic(precision, recall),
            precision,
            recall,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleReport {
    pub per_class: Vec<(String, ExactPrf)>,
    pub micro: Option<ExactPrf>,
    pub macro_avg: Option<(Exact, Exact, Exact)>,
    pub dimensions: Vec<(String, Exact)>,
    pub overall_accuracy: Option<Exact>,
}

fn check_size(doc_id: &str, n: usize) -> Result<(), EvalError> {
    if n > MAX_SPANS {
        Err(EvalError::Size {
            doc_id: doc_id.to_string(),
            found: n,
            limit: MAX_SPANS,
        })
    } else {
        Ok(())
    }
}

/// Assignment maximizing the number of pairs, then the summed `bonus`.
pub fn optimal_matching(
    gold: &[CharSpan],
    pred: &[CharSpan],
    mode: MatchMode,
    bonus: impl Fn(usize, usize) -> usize,
) -> Vec<(usize, usize)> {
    let (n, m) = (gold.len(), pred.len());
    let full = 1usize << m;
    // best[i][mask]: best (pairs, bonus) for gold[i..] with predictions in `mask` used
    let mut best = vec![vec![(0usize, 0usize); full]; n + 1];
    let mut choice = vec![vec![None; full]; n + 1];
    for i in (0..n).rev() {
        for mask in 0..full {
            let mut top = best[i + 1][mask];
            let mut pick = None;
            for j in 0..m {
                if mask & (1 << j) == 0 && mode.accepts(gold[i], pred[j]) {
                    let (p, b) = best[i + 1][mask | (1 << j)];
                    let cand = (p + 1, b + bonus(i, j));
                    if cand > top {
                        top = cand;
                        pick = Some(j);
                    }
                }
            }
            best[i][mask] = top;
            choice[i][mask] = pick;
        }
    }
    let mut pairs = Vec::new();
    let mut mask = 0;
    for (i, row) in choice.iter().enumerate().take(n) {
        if let Some(j) = row[mask] {
            pairs.push((i, j));
            mask |= 1 << j;
        }
    }
    pairs
}

fn known(gold: &[AnnotatedDocument], id: &str) -> Result<(), EvalError> {
    if gold.iter().any(|d| d.doc_id == id) {
        Ok(())
    } else {
        Err(EvalError::UnknownDocument(id.to_string()))
    }
}

pub fn oracle_ner(gold: &[AnnotatedDocument], pred: &SpanPredictions, mode: MatchMode) -> Result<OracleReport, EvalError> {
    for id in pred.keys() {
        known(gold, id)?;
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut docs = Vec::new();
    for d in gold {
        let g: Vec<CharSpan> = d.mentions.iter().map(|m| m.span).collect();
        let p = pred.get(&d.doc_id).cloned().unwrap_or_default();
        check_size(&d.doc_id, g.len().max(p.len()))?;
        check_disjoint(&g, "gold")?;
        check_disjoint(&p, "predicted")?;
        let hits = optimal_matching(&g, &p, mode, |_, _| 0).len();
        tp += hits;
        fp += p.len() - hits;
        fn_ += g.len() - hits;
        if !(g.is_empty() && p.is_empty()) {
            docs.push(ExactPrf::new(hits, p.len() - hits, g.len() - hits));
        }
    }
    let macro_avg = if docs.is_empty() {
        (Exact::zero(), Exact::zero(), Exact::zero())
    } else {
        let n = Exact::from_integer(docs.len() as i128);
        let sum = |f: fn(&ExactPrf) -> Exact| docs.iter().map(f).fold(Exact::zero(), |a, b| a + b) / n;
        (sum(|d| d.precision), sum(|d| d.recall), sum(|d| d.f1))
    };
    Ok(OracleReport {
        micro: Some(ExactPrf::new(tp, fp, fn_)),
        macro_avg: Some(macro_avg),
        ..Default::default()
    })
}

pub fn oracle_event(gold: &[AnnotatedDocument], pred: &EventPredictions, mode: MatchMode) -> Result<OracleReport, EvalError> {
    for id in pred.keys() {
        known(gold, id)?;
    }
    let k = EventLabel::ALL.len();
    // rows: gold class, columns: predicted class; last index is "unmatched"
    let mut table = vec![vec![0usize; k + 1]; k + 1];
    for d in gold {
        let g: Vec<(CharSpan, EventLabel)> = d.mentions.iter().map(|m| (m.span, m.event)).collect();
        let p = pred.get(&d.doc_id).cloned().unwrap_or_default();
        check_size(&d.doc_id, g.len().max(p.len()))?;
        let gs: Vec<CharSpan> = g.iter().map(|x| x.0).collect();
        let ps: Vec<CharSpan> = p.iter().map(|x| x.0).collect();
        check_disjoint(&gs, "gold")?;
        check_disjoint(&ps, "predicted")?;
        let pairs = optimal_matching(&gs, &ps, mode, |i, j| usize::from(g[i].1 == p[j].1));
        let mut g_used = vec![false; g.len()];
        let mut p_used = vec![false; p.len()];
        for (i, j) in pairs {
            g_used[i] = true;
            p_used[j] = true;
            table[g[i].1.index()][p[j].1.index()] += 1;
        }
        for (i, _) in g_used.iter().enumerate().filter(|(_, u)| !**u) {
            table[g[i].1.index()][k] += 1;
        }
        for (j, _) in p_used.iter().enumerate().filter(|(_, u)| !**u) {
            table[k][p[j].1.index()] += 1;
        }
    }
    let mut per_class = Vec::new();
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for c in 0..k {
        let tp = table[c][c];
        let predicted_c: usize = (0..=k).map(|r| table[r][c]).sum();
        let gold_c: usize = table[c].iter().sum();
        let (fp, fn_) = (predicted_c - tp, gold_c - tp);
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        per_class.push((EventLabel::ALL[c].name().to_string(), ExactPrf::new(tp, fp, fn_)));
    }
    Ok(OracleReport {
        per_class,
        micro: Some(ExactPrf::new(tp_all, fp_all, fn_all)),
        ..Default::default()
    })
}

pub fn oracle_context(gold: &[AnnotatedDocument], pred: &ContextPredictions) -> Result<OracleReport, EvalError> {
    for key in pred.keys() {
        known(gold, &key.doc_id)?;
    }
    let mut right: BTreeMap<Dimension, usize> = BTreeMap::new();
    let mut total = 0;
    for d in gold {
        for m in d.mentions.iter().filter(|m| m.event == EventLabel::Disposition) {
            let g = m.context.expect("Disposition mentions carry context");
            total += 1;
            let key = MentionKey {
                doc_id: d.doc_id.clone(),
                span: m.span,
            };
            for dim in Dimension::ALL {
                let ok = pred.get(&key).is_some_and(|p| p.value_name(dim) == g.value_name(dim));
                *right.entry(dim).or_default() += usize::from(ok);
            }
        }
    }
    let dimensions: Vec<(String, Exact)> = Dimension::ALL
        .iter()
        .map(|d| (d.name().to_string(), frac(right.get(d).copied().unwrap_or(0), total)))
        .collect();
    let overall = frac(right.values().sum(), 5 * total);
    Ok(OracleReport {
        dimensions,
        overall_accuracy: Some(overall),
        ..Default::default()
    })
}

fn close(name: &str, exact: Exact, approx: f64, tol: f64) -> Result<(), String> {
    let e = exact.to_f64().unwrap_or(f64::NAN);
    if (e - approx).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{name}: oracle {exact} ({e}) vs {approx}"))
    }
}

fn same_prf(label: &str, exact: &ExactPrf, counts: (usize, usize, usize), prf: &super::Prf, tol: f64) -> Result<(), String> {
    if (exact.tp, exact.fp, exact.fn_) != counts {
        return Err(format!(
            "{label} counts: oracle {:?} vs {:?}",
            (exact.tp, exact.fp, exact.fn_),
            counts
        ));
    }
    close(&format!("{label} precision"), exact.precision, prf.precision, tol)?;
    close(&format!("{label} recall"), exact.recall, prf.recall, tol)?;
    close(&format!("{label} f1"), exact.f1, prf.f1, tol)
}

impl OracleReport {
    /// Checks every section present in both reports; returns the first mismatch.
    pub fn compare(&self, r: &MetricsReport, tol: f64) -> Result<(), String> {
        if self.per_class.len() != r.per_class.len() {
            return Err("per-class sections differ in length".into());
        }
        for ((name, e), cs) in self.per_class.iter().zip(&r.per_class) {
            if *name != cs.class {
                return Err(format!("class order: {name} vs {}", cs.class));
            }
            same_prf(name, e, (cs.counts.tp, cs.counts.fp, cs.counts.fn_), &cs.scores, tol)?;
        }
        match (&self.micro, &r.micro) {
            (Some(e), Some(cs)) => same_prf("micro", e, (cs.counts.tp, cs.counts.fp, cs.counts.fn_), &cs.scores, tol)?,
            (None, None) => {}
            _ => return Err("micro section present on one side only".into()),
        }
        match (&self.macro_avg, &r.macro_avg) {
            (Some((p, rc, f)), Some(m)) => {
                close("macro precision", *p, m.precision, tol)?;
                close("macro recall", *rc, m.recall, tol)?;
                close("macro f1", *f, m.f1, tol)?;
            }
            (None, None) => {}
            _ => return Err("macro section present on one side only".into()),
        }
        if self.dimensions.len() != r.dimensions.len() {
            return Err("dimension sections differ in length".into());
        }
        for ((name, e), a) in self.dimensions.iter().zip(&r.dimensions) {
            close(name, *e, a.accuracy, tol)?;
        }
        match (&self.overall_accuracy, &r.overall_accuracy) {
            (Some(e), Some(a)) => close("overall", *e, a.accuracy, tol),
            (None, None) => Ok(()),
            _ => Err("overall accuracy present on one side only".into()),
        }
    }
}
