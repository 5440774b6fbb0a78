//! Cosine-regression training of a token embedding table.
//!
//! For entity phrases `e` and synonym phrases `s` the loss is
//!
//! ```text
//! L = 1/N · Σ (cos(h_e, h_s) − y(e, s))²
//! ```
//!
//! over the N sampled pairs, where `y = 1` iff `s` is a listed synonym of
//! `e` and phrase vectors are means of their token vectors. With the full
//! entity × synonym grid, `N = |E|·|S|`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::lexicon::{tokenize, unit_gaussian, Lexicon};
use crate::knowledge::{EntityId, SynonymTable};

/// Above this many grid cells, negatives are sampled instead.
pub const FULL_GRID_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub entity_id: EntityId,
    /// Phrase whose embedding stands for the entity (its name).
    pub entity_phrase: String,
    pub phrase: String,
    /// 1.0 for a listed synonym, 0.0 otherwise.
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Sampled negatives per positive when the full grid is too large.
    pub negative_ratio: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 32,
            epochs: 4,
            learning_rate: 0.5,
            batch_size: 16,
            seed: 7,
            negative_ratio: 4,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("no training pairs")]
    NoPairs,
    #[error("training needs at least 2 entities with at least one synonym each")]
    TooFewEntities,
    #[error("invalid training config: {0}")]
    Config(&'static str),
    #[error("zero-norm embedding for {0:?}, cosine undefined")]
    ZeroNorm(String),
    #[error("loss diverged at epoch {epoch} (got {loss}); try a smaller learning rate")]
    Diverged { epoch: usize, loss: f64 },
}

/// Mutable f64 token table used during training and gradient checks.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    params: Vec<f64>,
}

impl TokenTable {
    pub fn new(dim: usize) -> Self {
        TokenTable {
            dim,
            tokens: Vec::new(),
            index: HashMap::new(),
            params: Vec::new(),
        }
    }

    pub fn insert(&mut self, token: &str, vector: &[f64]) {
        assert_eq!(vector.len(), self.dim, "token table dim mismatch");
        match self.index.get(token) {
            Some(&i) => self.params[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector),
            None => {
                self.index.insert(token.to_string(), self.tokens.len());
                self.tokens.push(token.to_string());
                self.params.extend_from_slice(vector);
            }
        }
    }

    /// Table over every token of `pairs`, read from `lexicon` (with its
    /// out-of-vocabulary fallback).
    pub fn from_lexicon(lexicon: &Lexicon, pairs: &[TrainingPair]) -> Self {
        let mut table = TokenTable::new(lexicon.dim());
        for p in pairs {
            for t in tokenize(&p.entity_phrase).into_iter().chain(tokenize(&p.phrase)) {
                if !table.index.contains_key(&t) {
                    let v: Vec<f64> = lexicon.token_vector(&t).as_slice().iter().map(|&x| x as f64).collect();
                    table.insert(&t, &v);
                }
            }
        }
        table
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| &self.params[i * self.dim..(i + 1) * self.dim])
    }

    pub fn get_mut(&mut self, token: &str) -> Option<&mut [f64]> {
        let dim = self.dim;
        let i = *self.index.get(token)?;
        Some(&mut self.params[i * dim..(i + 1) * dim])
    }

    pub fn to_lexicon(&self) -> Lexicon {
        let mut lex = Lexicon::new(self.dim).expect("positive dim");
        for (i, t) in self.tokens.iter().enumerate() {
            let v = self.params[i * self.dim..(i + 1) * self.dim].iter().map(|&x| x as f32).collect();
            lex.insert(t, v).expect("finite training parameters");
        }
        lex
    }
}

struct EncodedPair {
    entity: Vec<usize>,
    phrase: Vec<usize>,
    label: f64,
    entity_text: String,
    phrase_text: String,
}

/// Pairs with phrases resolved to table rows.
struct Objective {
    pairs: Vec<EncodedPair>,
}

impl Objective {
    fn encode(pairs: &[TrainingPair], table: &TokenTable) -> Self {
        let rows = |phrase: &str| -> Vec<usize> {
            tokenize(phrase)
                .iter()
                .map(|t| *table.index.get(t).expect("token present in table"))
                .collect()
        };
        Objective {
            pairs: pairs
                .iter()
                .map(|p| EncodedPair {
                    entity: rows(&p.entity_phrase),
                    phrase: rows(&p.phrase),
                    label: p.label,
                    entity_text: p.entity_phrase.clone(),
                    phrase_text: p.phrase.clone(),
                })
                .collect(),
        }
    }

    fn mean(rows: &[usize], params: &[f64], dim: usize) -> Vec<f64> {
        let mut acc = vec![0.0; dim];
        for &r in rows {
            for (a, x) in acc.iter_mut().zip(&params[r * dim..(r + 1) * dim]) {
                *a += x;
            }
        }
        let n = rows.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Loss over `subset` (indices into pairs) and, when `grad` is given,
    /// its gradient accumulated into `grad` (same layout as `params`).
    fn evaluate(
        &self,
        subset: &[usize],
        params: &[f64],
        dim: usize,
        mut grad: Option<&mut [f64]>,
    ) -> Result<f64, TrainError> {
        if subset.is_empty() {
            return Err(TrainError::NoPairs);
        }
        let scale = 1.0 / subset.len() as f64;
        let mut loss = 0.0;
        for &k in subset {
            let p = &self.pairs[k];
            let u = Self::mean(&p.entity, params, dim);
            let v = Self::mean(&p.phrase, params, dim);
            let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nu == 0.0 {
                return Err(TrainError::ZeroNorm(p.entity_text.clone()));
            }
            if nv == 0.0 {
                return Err(TrainError::ZeroNorm(p.phrase_text.clone()));
            }
            let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            let cos = dot / (nu * nv);
            let err = cos - p.label;
            loss += scale * err * err;

            if let Some(g) = grad.as_deref_mut() {
                let dl_dcos = 2.0 * scale * err;
                let inv = 1.0 / (nu * nv);
                let du: Vec<f64> = (0..dim).map(|i| dl_dcos * (v[i] * inv - cos * u[i] / (nu * nu))).collect();
                let dv: Vec<f64> = (0..dim).map(|i| dl_dcos * (u[i] * inv - cos * v[i] / (nv * nv))).collect();
                let ne = p.entity.len() as f64;
                for &r in &p.entity {
                    for i in 0..dim {
                        g[r * dim + i] += du[i] / ne;
                    }
                }
                let ns = p.phrase.len() as f64;
                for &r in &p.phrase {
                    for i in 0..dim {
                        g[r * dim + i] += dv[i] / ns;
                    }
                }
            }
        }
        Ok(loss)
    }
}

/// Loss of `pairs` under `lexicon`.
pub fn sts_loss(pairs: &[TrainingPair], lexicon: &Lexicon) -> Result<f64, TrainError> {
    let table = TokenTable::from_lexicon(lexicon, pairs);
    sts_loss_table(pairs, &table)
}

/// Loss of `pairs` under an f64 token table. Every token must be present.
pub fn sts_loss_table(pairs: &[TrainingPair], table: &TokenTable) -> Result<f64, TrainError> {
    let obj = Objective::encode(pairs, table);
    let all: Vec<usize> = (0..pairs.len()).collect();
    obj.evaluate(&all, &table.params, table.dim, None)
}

/// Loss and analytic gradient with respect to every table entry. The
/// gradient is returned as a table with the same token set.
pub fn sts_gradient(pairs: &[TrainingPair], table: &TokenTable) -> Result<(f64, TokenTable), TrainError> {
    let obj = Objective::encode(pairs, table);
    let all: Vec<usize> = (0..pairs.len()).collect();
    let mut grad = table.clone();
    grad.params.iter_mut().for_each(|g| *g = 0.0);
    let loss = obj.evaluate(&all, &table.params, table.dim, Some(&mut grad.params))?;
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    /// Loss before training followed by the loss after each epoch.
    pub losses: Vec<f64>,
}

impl TrainingLog {
    pub fn initial(&self) -> f64 {
        self.losses[0]
    }

    pub fn last(&self) -> f64 {
        *self.losses.last().unwrap()
    }
}

/// The entity × phrase grid of a synonym table.
pub struct PairGrid {
    entities: Vec<(EntityId, String)>,
    phrases: Vec<String>,
    synonyms: BTreeMap<EntityId, BTreeSet<String>>,
}

impl PairGrid {
    pub fn new(table: &SynonymTable) -> Self {
        let entities = table
            .entries
            .iter()
            .map(|(e, _)| (e.id, e.name.clone()))
            .collect();
        let synonyms: BTreeMap<EntityId, BTreeSet<String>> = table
            .entries
            .iter()
            .map(|(e, syns)| (e.id, syns.iter().cloned().collect()))
            .collect();
        let phrases = synonyms
            .values()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        PairGrid {
            entities,
            phrases,
            synonyms,
        }
    }

    pub fn cells(&self) -> usize {
        self.entities.len() * self.phrases.len()
    }

    fn pair(&self, e: usize, s: usize) -> TrainingPair {
        let (id, name) = &self.entities[e];
        let phrase = &self.phrases[s];
        TrainingPair {
            entity_id: *id,
            entity_phrase: name.clone(),
            phrase: phrase.clone(),
            label: if self.synonyms[id].contains(phrase) { 1.0 } else { 0.0 },
        }
    }

    pub fn full(&self) -> Vec<TrainingPair> {
        (0..self.entities.len())
            .flat_map(|e| (0..self.phrases.len()).map(move |s| (e, s)))
            .map(|(e, s)| self.pair(e, s))
            .collect()
    }

    /// All positives plus `ratio` uniformly drawn negatives per positive.
    pub fn sampled(&self, ratio: usize, rng: &mut ChaCha8Rng) -> Vec<TrainingPair> {
        let mut out: Vec<TrainingPair> = Vec::new();
        for e in 0..self.entities.len() {
            for s in 0..self.phrases.len() {
                let p = self.pair(e, s);
                if p.label == 1.0 {
                    out.push(p);
                }
            }
        }
        let wanted = out.len() * ratio;
        let mut drawn = 0;
        // a grid where everything is a synonym has no negatives to draw
        let mut attempts = 0usize;
        while drawn < wanted && attempts < wanted * 100 {
            attempts += 1;
            let p = self.pair(
                rng.random_range(0..self.entities.len()),
                rng.random_range(0..self.phrases.len()),
            );
            if p.label == 0.0 {
                out.push(p);
                drawn += 1;
            }
        }
        out
    }

    pub fn epoch_pairs(&self, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<TrainingPair> {
        if self.cells() <= FULL_GRID_LIMIT {
            self.full()
        } else {
            self.sampled(config.negative_ratio, rng)
        }
    }
}

/// Result of [`train_lexicon`].
#[derive(Debug, Clone)]
pub struct Trained {
    pub lexicon: Lexicon,
    pub log: TrainingLog,
}

/// Fits a token table to the synonym grid by mini-batch gradient descent.
/// Deterministic for a given table and config.
pub fn train_lexicon(table: &SynonymTable, config: &TrainConfig) -> Result<Trained, TrainError> {
    if config.dim == 0 {
        return Err(TrainError::Config("dim must be positive"));
    }
    if config.batch_size == 0 {
        return Err(TrainError::Config("batch size must be positive"));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(TrainError::Config("learning rate must be positive"));
    }
    if config.negative_ratio == 0 {
        return Err(TrainError::Config("negative ratio must be positive"));
    }
    let usable = table.entries.iter().filter(|(_, syns)| !syns.is_empty()).count();
    if usable < 2 || usable != table.entries.len() {
        return Err(TrainError::TooFewEntities);
    }

    let grid = PairGrid::new(table);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let vocab: BTreeSet<String> = grid
        .entities
        .iter()
        .map(|(_, n)| n)
        .chain(&grid.phrases)
        .flat_map(|p| tokenize(p))
        .collect();
    let mut params = TokenTable::new(config.dim);
    for t in &vocab {
        let v = unit_gaussian(&mut rng, config.dim);
        let v: Vec<f64> = v.as_slice().iter().map(|&x| x as f64).collect();
        params.insert(t, &v);
    }

    let mut pairs = grid.epoch_pairs(config, &mut rng);
    let mut objective = Objective::encode(&pairs, &params);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let initial = objective.evaluate(&order, &params.params, config.dim, None)?;
    let mut losses = vec![initial];

    let mut grad = vec![0.0; params.params.len()];
    for epoch in 1..=config.epochs {
        if epoch > 1 && grid.cells() > FULL_GRID_LIMIT {
            pairs = grid.epoch_pairs(config, &mut rng);
            objective = Objective::encode(&pairs, &params);
            order = (0..pairs.len()).collect();
        }
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            objective.evaluate(batch, &params.params, config.dim, Some(&mut grad))?;
            for (p, g) in params.params.iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
        }
        let loss = objective
            .evaluate(&order, &params.params, config.dim, None)
            .map_err(|e| match e {
                TrainError::ZeroNorm(_) => TrainError::Diverged { epoch, loss: f64::NAN },
                other => other,
            })?;
        if !loss.is_finite() || params.params.iter().any(|p| !p.is_finite()) {
            return Err(TrainError::Diverged { epoch, loss });
        }
        losses.push(loss);
    }

    Ok(Trained {
        lexicon: params.to_lexicon(),
        log: TrainingLog { losses },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(e: &str, s: &str, y: f64) -> TrainingPair {
        TrainingPair {
            entity_id: 0,
            entity_phrase: e.into(),
            phrase: s.into(),
            label: y,
        }
    }

    fn lex(entries: &[(&str, [f32; 2])]) -> Lexicon {
        let mut l = Lexicon::new(2).unwrap();
        for (k, v) in entries {
            l.insert(k, v.to_vec()).unwrap();
        }
        l
    }

    #[test]
    fn identical_positive_is_zero() {
        let l = lex(&[("a", [1.0, 2.0]), ("b", [1.0, 2.0])]);
        assert!(sts_loss(&[pair("a", "b", 1.0)], &l).unwrap() < 1e-15);
    }

    #[test]
    fn orthogonal_negative_is_zero() {
        let l = lex(&[("a", [1.0, 0.0]), ("b", [0.0, 3.0])]);
        assert_eq!(sts_loss(&[pair("a", "b", 0.0)], &l).unwrap(), 0.0);
    }

    #[test]
    fn identical_negative_is_one() {
        let l = lex(&[("a", [0.6, 0.8]), ("b", [0.6, 0.8])]);
        assert!((sts_loss(&[pair("a", "b", 0.0)], &l).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_names_the_phrase() {
        let l = lex(&[("a", [1.0, 0.0]), ("z", [0.0, 0.0])]);
        assert_eq!(
            sts_loss(&[pair("a", "z", 1.0)], &l).unwrap_err(),
            TrainError::ZeroNorm("z".into())
        );
    }

    #[test]
    fn empty_pairs_rejected() {
        let l = lex(&[("a", [1.0, 0.0])]);
        assert_eq!(sts_loss(&[], &l).unwrap_err(), TrainError::NoPairs);
    }

    #[test]
    fn single_positive_converges() {
        let mut table = TokenTable::new(3);
        table.insert("a", &[1.0, 0.0, 0.0]);
        table.insert("b", &[0.0, 1.0, 0.2]);
        let pairs = [pair("a", "b", 1.0)];
        let mut loss = sts_loss_table(&pairs, &table).unwrap();
        for _ in 0..500 {
            let (_, g) = sts_gradient(&pairs, &table).unwrap();
            for t in ["a", "b"] {
                let gv = g.get(t).unwrap().to_vec();
                for (p, d) in table.get_mut(t).unwrap().iter_mut().zip(gv) {
                    *p -= 0.5 * d;
                }
            }
            loss = sts_loss_table(&pairs, &table).unwrap();
        }
        assert!(loss < 1e-6, "{loss}");
    }
}
