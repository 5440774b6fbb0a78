//! Number → numeric entity linking.
//!
//! [`link`] scores every (candidate, entity) pair by cosine similarity and
//! keeps the best pair when it reaches the threshold. [`shallow_link`] is the
//! keyword-matching baseline.

use std::cmp::Ordering;

use crate::embedding::{embed_phrase, EntityEmbeddings, Lexicon};
use crate::extraction::{Candidate, CandidateSet, NumberMention};
use crate::knowledge::{EntityId, KnowledgeBase};

pub const DEFAULT_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkResult {
    pub number: NumberMention,
    pub entity_id: EntityId,
    pub candidate: Candidate,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinkerMode {
    #[default]
    Embedding,
    Shallow,
}

/// Best (candidate, entity) pair with cosine ≥ `threshold`.
///
/// Ties on score go to the lower entity id, then to the candidate with the
/// lower token index.
pub fn link(
    set: &CandidateSet,
    entities: &EntityEmbeddings,
    lexicon: &Lexicon,
    threshold: f64,
) -> Option<LinkResult> {
    let mut best: Option<(f64, EntityId, &Candidate)> = None;
    for cand in &set.candidates {
        let v = embed_phrase(lexicon, &cand.phrase);
        for (&id, reference) in entities {
            let Some(score) = v.cosine(reference) else {
                continue;
            };
            let better = match best {
                None => true,
                Some((s, bid, bc)) => match score.total_cmp(&s) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => (id, cand.head_token_index) < (bid, bc.head_token_index),
                },
            };
            if better {
                best = Some((score, id, cand));
            }
        }
    }
    let (score, entity_id, cand) = best?;
    (score >= threshold).then(|| LinkResult {
        number: set.number.clone(),
        entity_id,
        candidate: cand.clone(),
        score,
    })
}

/// Links each candidate set independently, keeping input order.
pub fn link_all(
    sets: &[CandidateSet],
    entities: &EntityEmbeddings,
    lexicon: &Lexicon,
    threshold: f64,
) -> Vec<LinkResult> {
    sets.iter()
        .filter_map(|s| link(s, entities, lexicon, threshold))
        .collect()
}

/// Exact lowercase match of a candidate phrase against entity names,
/// abbreviations and listed synonyms. First matching candidate wins; the
/// score is always 1.
pub fn shallow_link(set: &CandidateSet, kb: &KnowledgeBase) -> Option<LinkResult> {
    set.candidates.iter().find_map(|cand| {
        let phrase = cand.phrase.to_lowercase();
        kb.entities
            .iter()
            .filter(|e| {
                e.name == phrase
                    || e.abbreviation == phrase
                    || kb.synonyms(e.id).contains(&phrase)
            })
            .map(|e| e.id)
            .min()
            .map(|entity_id| LinkResult {
                number: set.number.clone(),
                entity_id,
                candidate: cand.clone(),
                score: 1.0,
            })
    })
}
