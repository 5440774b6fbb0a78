//! Token embeddings for entities, synonyms and candidates.

pub mod format;
pub mod lexicon;
pub mod train;

use std::collections::BTreeMap;

use crate::knowledge::{EntityId, KnowledgeBase, NumericEntity, SynonymTable};

pub use format::{decode_lexicon, encode_lexicon, load_lexicon, load_lexicon_with_dim, save_lexicon, FormatError};
pub use lexicon::{embed_phrase, oov_vector, EmbeddingVector, Lexicon, LexiconError};
pub use train::{
    sts_gradient, sts_loss, sts_loss_table, train_lexicon, PairGrid, TokenTable, TrainConfig, TrainError,
    Trained, TrainingLog, TrainingPair,
};

/// Reference vectors of the numeric entities, keyed by entity id.
pub type EntityEmbeddings = BTreeMap<EntityId, EmbeddingVector>;

/// Embeds every entity name once.
pub fn reference_embeddings(lexicon: &Lexicon, kb: &KnowledgeBase) -> EntityEmbeddings {
    reference_embeddings_for(lexicon, &kb.entities)
}

pub fn reference_embeddings_for(lexicon: &Lexicon, entities: &[NumericEntity]) -> EntityEmbeddings {
    entities
        .iter()
        .map(|e| (e.id, embed_phrase(lexicon, &e.name)))
        .collect()
}

/// The `k` entities closest to `phrase` by cosine, best first; ties go to
/// the lower entity id.
pub fn nearest_entities(
    lexicon: &Lexicon,
    references: &EntityEmbeddings,
    phrase: &str,
    k: usize,
) -> Vec<(EntityId, f64)> {
    let v = embed_phrase(lexicon, phrase);
    let mut scored: Vec<(EntityId, f64)> = references
        .iter()
        .map(|(&id, r)| (id, v.cosine(r).unwrap_or(f64::NEG_INFINITY)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// Share of listed synonyms whose nearest entity is one they belong to.
pub fn nearest_entity_accuracy(lexicon: &Lexicon, table: &SynonymTable) -> f64 {
    let entities: Vec<NumericEntity> = table.entries.iter().map(|(e, _)| e.clone()).collect();
    let refs = reference_embeddings_for(lexicon, &entities);
    let mut total = 0usize;
    let mut hits = 0usize;
    for (entity, syns) in &table.entries {
        for s in syns {
            total += 1;
            let owners: Vec<EntityId> = table
                .entries
                .iter()
                .filter(|(_, ss)| ss.contains(s))
                .map(|(e, _)| e.id)
                .collect();
            debug_assert!(owners.contains(&entity.id));
            if let Some(&(best, _)) = nearest_entities(lexicon, &refs, s, 1).first() {
                if owners.contains(&best) {
                    hits += 1;
                }
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}
