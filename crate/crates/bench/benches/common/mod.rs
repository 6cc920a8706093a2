use gpbandit::{CandidateSet, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uniform_candidates(n: usize, d: usize, seed: u64) -> CandidateSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| Point::new((0..d).map(|_| rng.random::<f64>()).collect()).unwrap())
        .collect();
    CandidateSet::new(points).unwrap()
}

/// Observation schedule cycling through the candidates with a fixed stride.
pub fn schedule(n: usize, rounds: usize) -> Vec<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..rounds)
        .map(|t| ((t * 37) % n, rng.random::<f64>() - 0.5))
        .collect()
}
