//! Micro-averaged precision, recall and F1 over document-level
//! `(doc_id, hpo_id, polarity)` sets, with exact and ancestor-generalized
//! matching.

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::Polarity;
use crate::ontology::{HpoId, Ontology};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub doc_id: String,
    pub hpo_id: HpoId,
    #[serde(default)]
    pub polarity: Polarity,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledSet(pub BTreeSet<Label>);

impl LabeledSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, doc_id: &str, hpo_id: HpoId, polarity: Polarity) {
        self.0.insert(Label {
            doc_id: doc_id.to_string(),
            hpo_id,
            polarity,
        });
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Every label collapsed to affirmed, for polarity-blind comparison.
    pub fn without_polarity(&self) -> Self {
        LabeledSet(
            self.0
                .iter()
                .map(|l| Label {
                    polarity: Polarity::Affirmed,
                    ..l.clone()
                })
                .collect(),
        )
    }

    /// Adds every in-scope ancestor of each label, keeping doc and polarity.
    pub fn closure(&self, ontology: &Ontology) -> Result<Self, EvalError> {
        let mut out = self.0.clone();
        for l in &self.0 {
            let ancestors = ontology
                .ancestors(&l.hpo_id)
                .map_err(|_| EvalError::UnknownHpo(l.hpo_id.clone()))?;
            for a in ancestors {
                out.insert(Label {
                    doc_id: l.doc_id.clone(),
                    hpo_id: a,
                    polarity: l.polarity,
                });
            }
        }
        Ok(LabeledSet(out))
    }
}

impl FromIterator<Label> for LabeledSet {
    fn from_iter<T: IntoIterator<Item = Label>>(iter: T) -> Self {
        LabeledSet(iter.into_iter().collect())
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown HPO id {0}")]
    UnknownHpo(HpoId),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Exact,
    Generalized,
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Exact => "exact",
            MatchMode::Generalized => "generalized",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Metrics {
    /// P = tp/(tp+fp) and R = tp/(tp+fn), each 0 on an empty denominator;
    /// F1 is 0 when P + R = 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

pub fn evaluate_exact(gold: &LabeledSet, pred: &LabeledSet) -> Metrics {
    let tp = gold.0.intersection(&pred.0).count();
    Metrics::from_counts(tp, pred.len() - tp, gold.len() - tp)
}

/// Exact scoring after closing both sets under in-scope ancestors.
pub fn evaluate_generalized(
    gold: &LabeledSet,
    pred: &LabeledSet,
    ontology: &Ontology,
) -> Result<Metrics, EvalError> {
    Ok(evaluate_exact(&gold.closure(ontology)?, &pred.closure(ontology)?))
}

/// Reads JSON lines with at least `doc_id` and `hpo_id`; `polarity`
/// defaults to affirmed and other fields are ignored. Annotation output
/// files are therefore valid prediction inputs.
pub fn read_labels(reader: impl BufRead) -> Result<LabeledSet, EvalError> {
    let mut set = LabeledSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let label: Label = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        set.0.insert(label);
    }
    Ok(set)
}

/// One metrics record as written to JSON.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub mode: MatchMode,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// Aligned plain-text table, four decimals.
pub fn format_table(reports: &[MetricsReport]) -> String {
    let mut out = format!(
        "{:<12} {:>9} {:>9} {:>9} {:>6} {:>6} {:>6}\n",
        "mode", "precision", "recall", "f1", "tp", "fp", "fn"
    );
    for r in reports {
        let m = &r.metrics;
        out.push_str(&format!(
            "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>6} {:>6} {:>6}\n",
            r.mode.to_string(),
            m.precision,
            m.recall,
            m.f1,
            m.tp,
            m.fp,
            m.fn_
        ));
    }
    out
}
