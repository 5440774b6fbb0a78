//! Unsupervised numerical reasoning over clinical text.
//!
//! Numbers found in dependency-parsed sentences are linked to numeric
//! entities (temperature, heart rate, ...) through the embedding similarity
//! of syntactically connected words, and then mapped to Human Phenotype
//! Ontology concepts by comparing the value against normal reference ranges.
//!
//! The pipeline, in module order:
//!
//! - [`knowledge`]: entities, reference ranges, phenotype triples, bands
//! - [`ontology`]: HPO `is_a` graph and ancestor closure
//! - [`extraction`]: CoNLL-U input, number mentions, lexical candidates
//! - [`embedding`]: token lexicon, cosine-regression training, file format
//! - [`linking`]: candidate → entity selection
//! - [`assignment`]: unit inference, phenotype rules, document annotation
//! - [`evaluation`]: exact and generalized micro P/R/F1

pub mod assignment;
pub mod embedding;
pub mod evaluation;
pub mod extraction;
pub mod knowledge;
pub mod linking;
pub mod ontology;

pub use assignment::{Annotation, Linker, Pipeline, Polarity};
pub use knowledge::{load_kb, KnowledgeBase};
pub use ontology::{parse_ontology, HpoId, Ontology};
