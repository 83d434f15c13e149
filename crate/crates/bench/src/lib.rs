//! Shared fixtures for the benchmarks.

use censurv::metrics::Scored;
use censurv::{Mlp, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` samples with `dim` features, about half censored.
pub fn samples(n: usize, dim: usize, seed: u64) -> Vec<Sample> {
    let mut rng = rng(seed);
    (0..n)
        .map(|i| {
            let features = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            Sample::new(
                format!("s{i}"),
                format!("p{i}"),
                features,
                rng.random_range(1.0..3000.0),
                rng.random(),
            )
        })
        .collect()
}

pub fn scored(n: usize, seed: u64) -> Vec<Scored> {
    let mut rng = rng(seed);
    (0..n)
        .map(|_| {
            Scored::new(
                rng.random_range(1.0..3000.0),
                rng.random_range(1.0..3000.0),
                rng.random(),
            )
        })
        .collect()
}

pub fn model(input: usize, hidden: &[usize], output: usize) -> Mlp {
    Mlp::new(input, hidden, output, &mut rng(0)).expect("valid architecture")
}
