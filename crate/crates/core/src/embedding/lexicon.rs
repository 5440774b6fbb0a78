use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// A dense embedding with finite components.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(pub Vec<f32>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
    }

    /// Cosine similarity, `None` when either vector has zero norm.
    pub fn cosine(&self, other: &EmbeddingVector) -> Option<f64> {
        cosine(&self.0, &other.0)
    }
}

pub(crate) fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("vector for {key:?} has dim {got}, expected {expected}")]
    DimMismatch { key: String, got: usize, expected: usize },
    #[error("vector for {0:?} has a non-finite component")]
    NonFinite(String),
    #[error("empty lexicon key")]
    EmptyKey,
}

/// Surface token → vector table. Keys are lowercase.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    dim: usize,
    table: BTreeMap<String, EmbeddingVector>,
}

impl Lexicon {
    pub fn new(dim: usize) -> Result<Self, LexiconError> {
        if dim == 0 {
            return Err(LexiconError::ZeroDim);
        }
        Ok(Lexicon {
            dim,
            table: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, key: &str, vector: Vec<f32>) -> Result<(), LexiconError> {
        let key = key.trim().to_lowercase();
        if key.is_empty() {
            return Err(LexiconError::EmptyKey);
        }
        if vector.len() != self.dim {
            return Err(LexiconError::DimMismatch {
                key,
                got: vector.len(),
                expected: self.dim,
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(LexiconError::NonFinite(key));
        }
        self.table.insert(key, EmbeddingVector(vector));
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&EmbeddingVector> {
        self.table.get(key)
    }

    /// Entries in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.table.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Vector of a single token, falling back to [`oov_vector`].
    pub fn token_vector(&self, token: &str) -> EmbeddingVector {
        let key = token.to_lowercase();
        match self.table.get(&key) {
            Some(v) => v.clone(),
            None => oov_vector(&key, self.dim),
        }
    }
}

pub(crate) fn tokenize(phrase: &str) -> Vec<String> {
    phrase.split_whitespace().map(str::to_lowercase).collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic unit vector for a token missing from the lexicon, seeded by
/// an FNV-1a hash of its UTF-8 bytes.
pub fn oov_vector(token: &str, dim: usize) -> EmbeddingVector {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()));
    unit_gaussian(&mut rng, dim)
}

pub(crate) fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingVector {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return EmbeddingVector(v.iter().map(|x| (x / n) as f32).collect());
        }
    }
}

/// Mean of the token vectors of `phrase` (whitespace tokenized, lowercased).
/// An empty phrase maps to the zero vector.
pub fn embed_phrase(lexicon: &Lexicon, phrase: &str) -> EmbeddingVector {
    let tokens = tokenize(phrase);
    let mut acc = vec![0.0f64; lexicon.dim()];
    for t in &tokens {
        for (a, &x) in acc.iter_mut().zip(lexicon.token_vector(t).as_slice()) {
            *a += x as f64;
        }
    }
    let n = tokens.len().max(1) as f64;
    EmbeddingVector(acc.into_iter().map(|a| (a / n) as f32).collect())
}
