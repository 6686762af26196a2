//! Small seeded datasets for tests, demos and sanity checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ea::AlignedPair;
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple, Vocabulary};

/// A graph with its triples split into train and test.
#[derive(Debug, Clone)]
pub struct SplitGraph {
    pub graph: KnowledgeGraph,
    pub train: Vec<Triple>,
    pub test: Vec<Triple>,
}

/// Ring graph: relation `r` links every entity `i` to `(i + shifts[r]) mod n`.
///
/// Every relation is a pure translation on the ring, so a translational
/// model can fit it well; `test_fraction` of the triples are held out with a
/// seeded shuffle.
pub fn ring_graph(n_entities: usize, shifts: &[usize], test_fraction: f64, seed: u64) -> Result<SplitGraph> {
    if n_entities < 2 || shifts.is_empty() {
        return Err(Error::invalid("ring graph needs at least 2 entities and 1 relation"));
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::invalid(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let n = n_entities as u32;
    let triples: Vec<Triple> = shifts
        .iter()
        .enumerate()
        .flat_map(|(r, &s)| (0..n).map(move |i| Triple::new(i, r as u32, (i + s as u32) % n)))
        .collect();
    split(
        Vocabulary::numbered(n_entities),
        Vocabulary::numbered(shifts.len()),
        triples,
        test_fraction,
        seed,
    )
}

/// Uniformly random triples (no self-loops), deduplicated.
pub fn random_graph(
    n_entities: usize,
    n_relations: usize,
    n_triples: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitGraph> {
    if n_entities < 2 || n_relations == 0 {
        return Err(Error::invalid("random graph needs at least 2 entities and 1 relation"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triples: Vec<Triple> = (0..n_triples)
        .map(|_| {
            let h = rng.random_range(0..n_entities as u32);
            let mut t = rng.random_range(0..n_entities as u32 - 1);
            if t >= h {
                t += 1;
            }
            Triple::new(h, rng.random_range(0..n_relations as u32), t)
        })
        .collect();
    split(
        Vocabulary::numbered(n_entities),
        Vocabulary::numbered(n_relations),
        triples,
        test_fraction,
        seed,
    )
}

fn split(
    entities: Vocabulary,
    relations: Vocabulary,
    triples: Vec<Triple>,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitGraph> {
    let graph = KnowledgeGraph::new(entities, relations, triples)?;
    let mut shuffled = graph.triples().to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5EED));
    let n_test = (test_fraction * shuffled.len() as f64).round() as usize;
    let mut train = shuffled.split_off(n_test);
    let mut test = shuffled;
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitGraph { graph, train, test })
}

/// Identity alignment `(i, i)` over `n` entities on each side.
pub fn identity_alignment(n: usize) -> Vec<AlignedPair> {
    (0..n as u32).map(|i| (i, i)).collect()
}
