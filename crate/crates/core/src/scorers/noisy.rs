use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::hash_words;
use crate::ea::{AlignedPair, EaScorer};
use crate::kg::EntityId;

/// Synthetic alignment model with controllable difficulty.
///
/// Each aligned pair shares a standard-normal latent vector; each side
/// observes it with independent Gaussian noise of scale `sigma`. The score
/// of a pair is the negative Euclidean distance of the two observations.
/// `sigma = 0` is a perfect model; large `sigma` approaches chance.
#[derive(Debug, Clone)]
pub struct NoisySimilarityScorer {
    dimension: usize,
    sigma: f64,
    seed: u64,
    left: Observations,
    right: Observations,
}

#[derive(Debug, Clone, Default)]
struct Observations {
    known: Vec<bool>,
    vectors: Vec<f64>,
}

impl Observations {
    fn set(&mut self, id: EntityId, v: &[f64]) {
        let d = v.len();
        let i = id as usize;
        if self.known.len() <= i {
            self.known.resize(i + 1, false);
            self.vectors.resize((i + 1) * d, 0.0);
        }
        if !self.known[i] {
            self.known[i] = true;
            self.vectors[i * d..(i + 1) * d].copy_from_slice(v);
        }
    }

    fn get(&self, id: EntityId, d: usize) -> Option<&[f64]> {
        let i = id as usize;
        (i < self.known.len() && self.known[i]).then(|| &self.vectors[i * d..(i + 1) * d])
    }
}

impl NoisySimilarityScorer {
    /// Draws latents and noise for `pairs` in sorted order. An entity that
    /// appears in several pairs keeps the observation from its first pair.
    pub fn new(pairs: &[AlignedPair], dimension: usize, sigma: f64, seed: u64) -> Self {
        let mut sorted = pairs.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut left = Observations::default();
        let mut right = Observations::default();
        let mut latent = vec![0.0; dimension];
        let mut obs = vec![0.0; dimension];
        for &(l, r) in &sorted {
            for z in latent.iter_mut() {
                *z = StandardNormal.sample(&mut rng);
            }
            for (o, z) in obs.iter_mut().zip(&latent) {
                let e: f64 = StandardNormal.sample(&mut rng);
                *o = z + sigma * e;
            }
            left.set(l, &obs);
            for (o, z) in obs.iter_mut().zip(&latent) {
                let e: f64 = StandardNormal.sample(&mut rng);
                *o = z + sigma * e;
            }
            right.set(r, &obs);
        }
        Self {
            dimension,
            sigma,
            seed,
            left,
            right,
        }
    }

    /// Observation for an entity outside the alignment: a fresh latent plus
    /// noise, derived from the seed and id only.
    fn unaligned(&self, side: u64, id: EntityId) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(hash_words(self.seed, &[side, id as u64]));
        (0..self.dimension)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let e: f64 = StandardNormal.sample(&mut rng);
                z + self.sigma * e
            })
            .collect()
    }

    fn scores(&self, query: &[f64], others: &Observations, side: u64, candidates: &[EntityId]) -> Vec<f64> {
        candidates
            .iter()
            .map(|&c| {
                let owned;
                let v = match others.get(c, self.dimension) {
                    Some(v) => v,
                    None => {
                        owned = self.unaligned(side, c);
                        &owned
                    }
                };
                let sq: f64 = query.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                -sq.sqrt()
            })
            .collect()
    }
}

impl EaScorer for NoisySimilarityScorer {
    fn score_right(&self, left: EntityId, candidates: &[EntityId]) -> Vec<f64> {
        let q = match self.left.get(left, self.dimension) {
            Some(v) => v.to_vec(),
            None => self.unaligned(0, left),
        };
        self.scores(&q, &self.right, 1, candidates)
    }

    fn score_left(&self, right: EntityId, candidates: &[EntityId]) -> Vec<f64> {
        let q = match self.right.get(right, self.dimension) {
            Some(v) => v.to_vec(),
            None => self.unaligned(1, right),
        };
        self.scores(&q, &self.left, 0, candidates)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ea::evaluate_ea;
    use crate::metrics::adjusted_mean_rank_index;

    fn pairs(n: u32) -> Vec<AlignedPair> {
        (0..n).map(|i| (i, 1000 + i)).collect()
    }

    #[test]
    fn noiseless_is_perfect() {
        let p = pairs(200);
        let s = NoisySimilarityScorer::new(&p, 8, 0.0, 1);
        let rc = evaluate_ea(&s, &p, 1).unwrap();
        assert_eq!(adjusted_mean_rank_index(&rc).unwrap(), 1.0);
    }

    #[test]
    fn more_noise_means_closer_to_chance() {
        let p = pairs(300);
        let amri: Vec<f64> = [0.2, 0.6, 1.5, 20.0]
            .iter()
            .map(|&sigma| {
                let s = NoisySimilarityScorer::new(&p, 8, sigma, 5);
                adjusted_mean_rank_index(&evaluate_ea(&s, &p, 1).unwrap()).unwrap()
            })
            .collect();
        assert!(amri.windows(2).all(|w| w[0] > w[1]), "{amri:?}");
        assert!(amri[3].abs() < 0.1, "{amri:?}");
    }

    #[test]
    fn unaligned_entities_get_finite_scores() {
        let s = NoisySimilarityScorer::new(&pairs(3), 4, 0.5, 1);
        let sc = s.score_right(0, &[1000, 5000, 1001]);
        assert!(sc.iter().all(|x| x.is_finite()));
        assert_eq!(sc, s.score_right(0, &[1000, 5000, 1001]));
        assert!(s.score_left(77, &[0, 1]).iter().all(|x| x.is_finite()));
    }
}
