//! Lexical candidates syntactically connected to a number.
//!
//! Selected tokens, restricted to NOUN, PROPN, ADJ and VERB:
//!
//! 1. the number's head,
//! 2. the number's dependents,
//! 3. when the number attaches to its head as `obl`, the head's other
//!    dependents labelled `nsubj`, `obj` or `conj` (subtypes included).
//!
//! Each selected token is widened with its `compound` dependents into a
//! multi-word phrase ("heart rate").

use std::collections::BTreeSet;

use super::conllu::{Sentence, Token};
use super::numbers::NumberMention;

const ELIGIBLE_UPOS: [&str; 4] = ["NOUN", "PROPN", "ADJ", "VERB"];
const OBL_SIBLING_RELS: [&str; 3] = ["nsubj", "obj", "conj"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    /// Lowercased, compound-merged surface phrase.
    pub phrase: String,
    pub head_token_index: usize,
    /// How the token connects to the number, e.g. `head`, `child`, `obl>nsubj`.
    pub relation_path: String,
    /// Character offsets `[start, end)` of the whole phrase in the sentence.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub number: NumberMention,
    pub candidates: Vec<Candidate>,
}

fn eligible(tok: &Token) -> bool {
    ELIGIBLE_UPOS.contains(&tok.upos.as_str())
}

fn compound_members(sentence: &Sentence, index: usize, acc: &mut BTreeSet<usize>) {
    if !acc.insert(index) {
        return;
    }
    for child in sentence.children(index) {
        if child.base_deprel() == "compound" {
            compound_members(sentence, child.index, acc);
        }
    }
}

fn build_candidate(sentence: &Sentence, tok: &Token, relation: &str) -> Candidate {
    let mut members = BTreeSet::new();
    compound_members(sentence, tok.index, &mut members);
    let parts: Vec<&Token> = members.iter().filter_map(|&i| sentence.token(i)).collect();
    let phrase = parts
        .iter()
        .map(|t| t.form.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ");
    Candidate {
        phrase,
        head_token_index: tok.index,
        relation_path: relation.to_string(),
        start: parts.iter().map(|t| t.start).min().unwrap_or(tok.start),
        end: parts.iter().map(|t| t.end).max().unwrap_or(tok.end),
    }
}

/// Collects the candidate set of one number mention.
pub fn extract_candidates(sentence: &Sentence, number: &NumberMention) -> CandidateSet {
    let mut picked: Vec<(&Token, String)> = Vec::new();
    if let Some(tok) = sentence.token(number.token_index) {
        if tok.head != 0 {
            if let Some(head) = sentence.token(tok.head) {
                picked.push((head, "head".into()));
                if tok.base_deprel() == "obl" {
                    for sib in sentence.children(head.index) {
                        let rel = sib.base_deprel();
                        if sib.index != tok.index && OBL_SIBLING_RELS.contains(&rel) {
                            picked.push((sib, format!("obl>{rel}")));
                        }
                    }
                }
            }
        }
        for child in sentence.children(tok.index) {
            picked.push((child, "child".into()));
        }
    }

    let mut seen = BTreeSet::new();
    let mut candidates: Vec<Candidate> = picked
        .into_iter()
        .filter(|(t, _)| t.index != number.token_index && eligible(t))
        .map(|(t, rel)| build_candidate(sentence, t, &rel))
        .filter(|c| !c.phrase.is_empty())
        .filter(|c| seen.insert((c.phrase.clone(), c.head_token_index)))
        .collect();
    candidates.sort_by_key(|c| c.head_token_index);
    CandidateSet {
        number: number.clone(),
        candidates,
    }
}
