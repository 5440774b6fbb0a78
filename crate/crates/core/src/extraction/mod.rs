//! Numbers and lexical candidates from dependency-parsed text.

pub mod candidates;
pub mod conllu;
pub mod numbers;

pub use candidates::{extract_candidates, Candidate, CandidateSet};
pub use conllu::{parse_conllu, ConlluError, Document, Sentence, Token};
pub use numbers::{extract_numbers, load_exclusions, parse_number_token, ExclusionDict, NumberMention};
