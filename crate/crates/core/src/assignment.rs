//! Reference-range rules: unit inference, phenotype assignment and the
//! end-to-end document annotator.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{reference_embeddings, EntityEmbeddings, Lexicon};
use crate::extraction::{extract_candidates, extract_numbers, Document, ExclusionDict};
use crate::knowledge::{EntityId, KnowledgeBase, ReferenceRange};
use crate::linking::{link, shallow_link, LinkResult, DEFAULT_THRESHOLD};
use crate::ontology::{HpoId, Ontology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[default]
    Affirmed,
    Negated,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Affirmed => "affirmed",
            Polarity::Negated => "negated",
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AssignError {
    #[error("no reference ranges to choose a unit from")]
    NoRanges,
    #[error("entity {entity} has no reference range in unit {unit:?}")]
    MissingRange { entity: EntityId, unit: String },
    #[error("entity {0} has no phenotype triple")]
    MissingTriple(EntityId),
    #[error("ratio undefined for value {value} against {unit} range")]
    UndefinedRatio { value: f64, unit: String },
}

const UNIT_ALIASES: &[(&str, &str)] = &[
    ("f", "fahrenheit"),
    ("°f", "fahrenheit"),
    ("degf", "fahrenheit"),
    ("fahrenheit", "fahrenheit"),
    ("c", "celsius"),
    ("°c", "celsius"),
    ("degc", "celsius"),
    ("celsius", "celsius"),
    ("%", "%"),
    ("pct", "%"),
    ("bpm", "bpm"),
];

/// Maps a written unit hint to a canonical unit label, if known.
pub fn canonical_unit(hint: &str) -> Option<&'static str> {
    let h = hint.trim().to_lowercase();
    UNIT_ALIASES.iter().find(|(a, _)| *a == h).map(|(_, u)| *u)
}

/// Distance of `value` from a normal range as a ratio ≥ 1.
///
/// `value/upper` above the range, `lower/value` below it, exactly 1 inside.
pub fn unit_ratio(value: f64, range: &ReferenceRange) -> Result<f64, AssignError> {
    let undefined = || AssignError::UndefinedRatio {
        value,
        unit: range.unit.clone(),
    };
    if range.contains(value) {
        Ok(1.0)
    } else if value > range.upper {
        if range.upper <= 0.0 {
            return Err(undefined());
        }
        Ok(value / range.upper)
    } else {
        if value <= 0.0 {
            return Err(undefined());
        }
        Ok(range.lower / value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitSource {
    /// The written unit named one of the entity's units.
    Hint,
    /// The entity has a single unit.
    Only,
    /// Chosen by smallest ratio.
    Ratio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitInference {
    pub unit: String,
    pub source: UnitSource,
    /// Per-unit ratios in declaration order, when computed.
    pub ratios: Vec<(String, f64)>,
}

/// Decides which of an entity's units a bare number is written in.
///
/// An explicit hint that names one of `ranges`' units wins. Otherwise the
/// unit with the smallest [`unit_ratio`] is chosen; ties go to the earlier
/// declared range.
pub fn infer_unit(
    value: f64,
    ranges: &[&ReferenceRange],
    hint: Option<&str>,
) -> Result<UnitInference, AssignError> {
    let Some(first) = ranges.first() else {
        return Err(AssignError::NoRanges);
    };
    if let Some(h) = hint {
        let wanted = canonical_unit(h).map(str::to_string).unwrap_or_else(|| h.to_string());
        if let Some(r) = ranges.iter().find(|r| r.unit.eq_ignore_ascii_case(&wanted)) {
            return Ok(UnitInference {
                unit: r.unit.clone(),
                source: UnitSource::Hint,
                ratios: Vec::new(),
            });
        }
    }
    if ranges.len() == 1 {
        return Ok(UnitInference {
            unit: first.unit.clone(),
            source: UnitSource::Only,
            ratios: Vec::new(),
        });
    }
    let ratios = ranges
        .iter()
        .map(|r| unit_ratio(value, r).map(|x| (r.unit.clone(), x)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut best = 0;
    for (i, (_, x)) in ratios.iter().enumerate() {
        if *x < ratios[best].1 {
            best = i;
        }
    }
    Ok(UnitInference {
        unit: ratios[best].0.clone(),
        source: UnitSource::Ratio,
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub hpo_id: HpoId,
    pub polarity: Polarity,
}

/// Below the range affirms the triple's low phenotype, above affirms the high
/// one, inside negates the parent. An affirmed phenotype is replaced by the
/// granular phenotype of a band (same unit) containing the value.
pub fn assign_hpo(
    entity_id: EntityId,
    value: f64,
    unit: &str,
    kb: &KnowledgeBase,
) -> Result<Assignment, AssignError> {
    let range = kb.range(entity_id, unit).ok_or_else(|| AssignError::MissingRange {
        entity: entity_id,
        unit: unit.to_string(),
    })?;
    let triple = kb.triple(entity_id).ok_or(AssignError::MissingTriple(entity_id))?;
    let primary = if value < range.lower {
        &triple.below_hpo
    } else if value > range.upper {
        &triple.above_hpo
    } else {
        return Ok(Assignment {
            hpo_id: triple.normal_hpo.clone(),
            polarity: Polarity::Negated,
        });
    };
    let hpo_id = kb
        .bands_for(primary, unit)
        .find(|b| b.contains(value))
        .map(|b| b.granular_hpo.clone())
        .unwrap_or_else(|| primary.clone());
    Ok(Assignment {
        hpo_id,
        polarity: Polarity::Affirmed,
    })
}

/// One output record. Field order is the JSON-lines wire order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub doc_id: String,
    /// 0-based sentence index within the document.
    pub sent: usize,
    /// Character offsets `[start, end)` in the sentence text, from the
    /// winning candidate through the number token.
    pub start: usize,
    pub end: usize,
    pub hpo_id: HpoId,
    pub hpo_name: String,
    pub polarity: Polarity,
    pub entity_id: EntityId,
    pub value: f64,
    pub unit: String,
    pub score: f64,
}

/// How numbers are linked to entities.
pub enum Linker {
    Embedding {
        lexicon: Lexicon,
        entities: EntityEmbeddings,
    },
    Shallow,
}

impl Linker {
    /// Embedding linker with reference vectors computed from `kb`.
    pub fn embedding(lexicon: Lexicon, kb: &KnowledgeBase) -> Self {
        let entities = reference_embeddings(&lexicon, kb);
        Linker::Embedding { lexicon, entities }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("knowledge base references {0} which is not in the ontology")]
    UnknownHpo(HpoId),
    #[error("{0}")]
    Assign(#[from] AssignError),
}

/// Per-document counters alongside the annotations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DocumentReport {
    pub annotations: Vec<Annotation>,
    pub numbers: usize,
    pub linked: usize,
    /// Linked numbers dropped because no unit ratio was defined.
    pub skipped: usize,
}

/// All resources needed to annotate documents. Shareable across threads.
pub struct Pipeline {
    kb: KnowledgeBase,
    ontology: Ontology,
    linker: Linker,
    exclusions: ExclusionDict,
    pub threshold: f64,
    pub suppress_negated: bool,
}

impl Pipeline {
    pub fn new(
        kb: KnowledgeBase,
        ontology: Ontology,
        linker: Linker,
        exclusions: ExclusionDict,
    ) -> Result<Self, PipelineError> {
        if let Some(missing) = kb.hpo_ids().into_iter().find(|id| !ontology.contains(id)) {
            return Err(PipelineError::UnknownHpo(missing));
        }
        Ok(Pipeline {
            kb,
            ontology,
            linker,
            exclusions,
            threshold: DEFAULT_THRESHOLD,
            suppress_negated: false,
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    fn link(&self, set: &crate::extraction::CandidateSet) -> Option<LinkResult> {
        match &self.linker {
            Linker::Embedding { lexicon, entities } => link(set, entities, lexicon, self.threshold),
            Linker::Shallow => shallow_link(set, &self.kb),
        }
    }

    /// extract → candidates → link → unit → phenotype, per number.
    pub fn annotate_document(&self, doc: &Document) -> Result<DocumentReport, PipelineError> {
        let mut report = DocumentReport::default();
        for (sent_idx, sentence) in doc.sentences.iter().enumerate() {
            for number in extract_numbers(sentence, &self.exclusions) {
                report.numbers += 1;
                let set = extract_candidates(sentence, &number);
                let Some(linked) = self.link(&set) else {
                    continue;
                };
                report.linked += 1;
                let ranges = self.kb.ranges_for(linked.entity_id);
                let unit = match infer_unit(number.value, &ranges, number.unit_hint.as_deref()) {
                    Ok(u) => u.unit,
                    Err(AssignError::UndefinedRatio { .. }) => {
                        report.skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                let assignment = assign_hpo(linked.entity_id, number.value, &unit, &self.kb)?;
                if self.suppress_negated && assignment.polarity == Polarity::Negated {
                    continue;
                }
                let number_tok = sentence.token(number.token_index).expect("mention token exists");
                report.annotations.push(Annotation {
                    doc_id: doc.doc_id.clone(),
                    sent: sent_idx,
                    start: linked.candidate.start.min(number_tok.start),
                    end: linked.candidate.end.max(number_tok.end),
                    hpo_name: self.ontology.name(&assignment.hpo_id).unwrap_or_default().to_string(),
                    hpo_id: assignment.hpo_id,
                    polarity: assignment.polarity,
                    entity_id: linked.entity_id,
                    value: number.value,
                    unit,
                    score: linked.score,
                });
            }
        }
        // numbers are visited in (sentence, token) order, so annotations are too
        Ok(report)
    }
}
