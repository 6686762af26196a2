//! Translational link prediction baseline: `score(h, r, t) = -||h + r - t||`,
//! trained with a margin ranking loss against corrupted triples.
//!
//! Embedding file layout (all integers little-endian `u32`):
//!
//! | offset | content                                     |
//! |--------|---------------------------------------------|
//! | 0      | magic `KGEB`                                |
//! | 4      | format version (1)                          |
//! | 8      | dimension `d`                               |
//! | 12     | entity count `n_e`                          |
//! | 16     | relation count `n_r`                        |
//! | 20     | `n_e * d` entity floats, then `n_r * d` relation floats (`f32` LE, row-major) |
//!
//! A JSON sidecar carries the entity and relation labels in id order.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId, Triple, Vocabulary};
use crate::lp::LpScorer;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"KGEB";
pub const EMBEDDING_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TranslationalParams {
    pub seed: u64,
    pub dimension: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub negatives: usize,
    /// Redraw corruptions that happen to be training triples.
    pub filter_negatives: bool,
}

impl Default for TranslationalParams {
    fn default() -> Self {
        Self {
            seed: 0,
            dimension: 32,
            margin: 1.0,
            learning_rate: 0.01,
            epochs: 100,
            negatives: 1,
            filter_negatives: false,
        }
    }
}

impl TranslationalParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.dimension == 0 {
            return bad("dimension must be positive");
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return bad("margin must be > 0");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be > 0");
        }
        if self.negatives == 0 {
            return bad("negatives per positive must be >= 1");
        }
        Ok(())
    }
}

/// Entity and relation vectors of one fixed dimension, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    entities: Vec<f32>,
    relations: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize, entities: Vec<f32>, relations: Vec<f32>) -> Result<Self> {
        if dimension == 0 || !entities.len().is_multiple_of(dimension) || !relations.len().is_multiple_of(dimension) {
            return Err(Error::invalid("embedding sizes do not match the dimension"));
        }
        if entities.iter().chain(&relations).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite embedding value"));
        }
        Ok(Self {
            dimension,
            entities,
            relations,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len() / self.dimension
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len() / self.dimension
    }

    pub fn entity(&self, id: EntityId) -> &[f32] {
        let d = self.dimension;
        &self.entities[id as usize * d..(id as usize + 1) * d]
    }

    pub fn relation(&self, id: RelationId) -> &[f32] {
        let d = self.dimension;
        &self.relations[id as usize * d..(id as usize + 1) * d]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * (self.entities.len() + self.relations.len()));
        out.extend_from_slice(EMBEDDING_MAGIC);
        for v in [
            EMBEDDING_VERSION,
            self.dimension as u32,
            self.num_entities() as u32,
            self.num_relations() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for x in self.entities.iter().chain(&self.relations) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != EMBEDDING_MAGIC {
            return Err(Error::invalid("not an embedding file (bad magic)"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
        if word(1) != EMBEDDING_VERSION as usize {
            return Err(Error::invalid(format!("unsupported embedding version {}", word(1))));
        }
        let (d, ne, nr) = (word(2), word(3), word(4));
        let n_floats = (ne + nr) * d;
        if bytes.len() != HEADER_LEN + 4 * n_floats {
            return Err(Error::invalid(format!(
                "embedding file has {} bytes, header implies {}",
                bytes.len(),
                HEADER_LEN + 4 * n_floats
            )));
        }
        let floats: Vec<f32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (e, r) = floats.split_at(ne * d);
        Self::new(d, e.to_vec(), r.to_vec())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    version: u32,
    dimension: usize,
    entities: Vocabulary,
    relations: Vocabulary,
}

/// Writes the binary table and its JSON label sidecar.
pub fn write_embeddings(
    bin_path: &Path,
    json_path: &Path,
    table: &EmbeddingTable,
    entities: &Vocabulary,
    relations: &Vocabulary,
) -> Result<()> {
    if entities.len() != table.num_entities() || relations.len() != table.num_relations() {
        return Err(Error::invalid("vocabulary sizes do not match the embedding table"));
    }
    std::fs::write(bin_path, table.to_bytes()).map_err(|e| Error::io(bin_path, e))?;
    let sidecar = Sidecar {
        format: String::from_utf8_lossy(EMBEDDING_MAGIC).into_owned(),
        version: EMBEDDING_VERSION,
        dimension: table.dimension(),
        entities: entities.clone(),
        relations: relations.clone(),
    };
    let mut json = serde_json::to_string_pretty(&sidecar)?;
    json.push('\n');
    std::fs::write(json_path, json).map_err(|e| Error::io(json_path, e))
}

pub fn read_embeddings(bin_path: &Path, json_path: &Path) -> Result<(EmbeddingTable, Vocabulary, Vocabulary)> {
    let bytes = std::fs::read(bin_path).map_err(|e| Error::io(bin_path, e))?;
    let table = EmbeddingTable::from_bytes(&bytes)?;
    let text = std::fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text)?;
    if sidecar.dimension != table.dimension()
        || sidecar.entities.len() != table.num_entities()
        || sidecar.relations.len() != table.num_relations()
    {
        return Err(Error::invalid("embedding sidecar does not match the binary table"));
    }
    Ok((table, sidecar.entities, sidecar.relations))
}

#[derive(Debug, Clone)]
pub struct TranslationalScorer {
    table: EmbeddingTable,
}

impl TranslationalScorer {
    pub fn new(table: EmbeddingTable) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    /// `-||q - e||` for every candidate `e`.
    fn distances(&self, q: &[f64], candidates: &[EntityId]) -> Vec<f64> {
        candidates
            .iter()
            .map(|&c| {
                let e = self.table.entity(c);
                let sq: f64 = q.iter().zip(e).map(|(a, &b)| (a - b as f64).powi(2)).sum();
                -sq.sqrt()
            })
            .collect()
    }
}

impl LpScorer for TranslationalScorer {
    fn score_tails(&self, head: EntityId, relation: RelationId, candidates: &[EntityId]) -> Vec<f64> {
        let q: Vec<f64> = self
            .table
            .entity(head)
            .iter()
            .zip(self.table.relation(relation))
            .map(|(&h, &r)| h as f64 + r as f64)
            .collect();
        self.distances(&q, candidates)
    }

    fn score_heads(&self, relation: RelationId, tail: EntityId, candidates: &[EntityId]) -> Vec<f64> {
        let q: Vec<f64> = self
            .table
            .entity(tail)
            .iter()
            .zip(self.table.relation(relation))
            .map(|(&t, &r)| t as f64 - r as f64)
            .collect();
        self.distances(&q, candidates)
    }
}

pub struct TrainedTranslational {
    pub scorer: TranslationalScorer,
    /// Mean hinge loss per epoch.
    pub epoch_losses: Vec<f64>,
}

fn normalize(v: &mut [f32]) {
    let norm = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v {
            *x = (*x as f64 / norm) as f32;
        }
    }
}

struct Model {
    d: usize,
    ent: Vec<f32>,
    rel: Vec<f32>,
}

impl Model {
    fn residual(&self, t: &Triple) -> Vec<f64> {
        let d = self.d;
        let (h, r, tl) = (t.head as usize * d, t.relation as usize * d, t.tail as usize * d);
        (0..d)
            .map(|i| self.ent[h + i] as f64 + self.rel[r + i] as f64 - self.ent[tl + i] as f64)
            .collect()
    }

    fn normalize_entity(&mut self, e: EntityId) {
        let d = self.d;
        normalize(&mut self.ent[e as usize * d..(e as usize + 1) * d]);
    }

    /// Moves `t` along `step * grad` where `grad` is d||h + r - t|| / d(h, r).
    fn step(&mut self, t: &Triple, residual: &[f64], norm: f64, step: f64) {
        if norm <= 1e-12 {
            return;
        }
        let d = self.d;
        let (h, r, tl) = (t.head as usize * d, t.relation as usize * d, t.tail as usize * d);
        for (i, &v) in residual.iter().enumerate() {
            let g = (step * v / norm) as f32;
            self.ent[h + i] -= g;
            self.rel[r + i] -= g;
            self.ent[tl + i] += g;
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Trains the baseline with plain SGD, one example at a time.
///
/// Fully determined by `params` (including the seed). Each epoch visits the
/// training triples in a seeded shuffled order; every positive is paired with
/// `negatives` corruptions that replace the head or the tail by a uniformly
/// drawn different entity.
pub fn train_translational(
    train: &[Triple],
    num_entities: usize,
    num_relations: usize,
    params: &TranslationalParams,
) -> Result<TrainedTranslational> {
    params.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("no training triples"));
    }
    for t in train {
        crate::kg::check_triple(t, num_entities, num_relations)?;
    }
    let d = params.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let bound = 6.0 / (d as f64).sqrt();
    let mut model = Model {
        d,
        ent: (0..num_entities * d)
            .map(|_| rng.random_range(-bound..bound) as f32)
            .collect(),
        rel: (0..num_relations * d)
            .map(|_| rng.random_range(-bound..bound) as f32)
            .collect(),
    };
    for r in model.rel.chunks_exact_mut(d) {
        normalize(r);
    }

    let known: HashSet<Triple> = if params.filter_negatives {
        train.iter().copied().collect()
    } else {
        HashSet::new()
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(params.epochs);
    let lr = params.learning_rate;

    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for &idx in &order {
            let pos = train[idx];
            for _ in 0..params.negatives {
                let neg = corrupt(&pos, num_entities, &known, &mut rng);
                for e in [pos.head, pos.tail, neg.head, neg.tail] {
                    model.normalize_entity(e);
                }
                let rp = model.residual(&pos);
                let rn = model.residual(&neg);
                let (dp, dn) = (norm(&rp), norm(&rn));
                let loss = (params.margin + dp - dn).max(0.0);
                total += loss;
                count += 1;
                if loss > 0.0 {
                    model.step(&pos, &rp, dp, lr);
                    model.step(&neg, &rn, dn, -lr);
                }
            }
        }
        epoch_losses.push(total / count as f64);
    }
    for e in 0..num_entities as EntityId {
        model.normalize_entity(e);
    }

    let table = EmbeddingTable::new(d, model.ent, model.rel)?;
    Ok(TrainedTranslational {
        scorer: TranslationalScorer::new(table),
        epoch_losses,
    })
}

fn corrupt(pos: &Triple, n: usize, known: &HashSet<Triple>, rng: &mut ChaCha8Rng) -> Triple {
    const ATTEMPTS: usize = 32;
    let replace_head = rng.random_bool(0.5);
    let mut candidate = *pos;
    for _ in 0..ATTEMPTS {
        let mut e = rng.random_range(0..n) as EntityId;
        if n > 1 {
            while e == if replace_head { pos.head } else { pos.tail } {
                e = rng.random_range(0..n) as EntityId;
            }
        }
        candidate = if replace_head {
            Triple::new(e, pos.relation, pos.tail)
        } else {
            Triple::new(pos.head, pos.relation, e)
        };
        if !known.contains(&candidate) {
            break;
        }
    }
    candidate
}
