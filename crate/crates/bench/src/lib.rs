//! Seeded workloads shared by the benchmarks.

use eremu_core::{DomainDataset, ExperienceBuffer, FeatureMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, dim: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..rows * dim)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    FeatureMatrix::new(rows, dim, values).expect("finite values")
}

pub fn random_domain(rows: usize, dim: usize, arrival: u64) -> DomainDataset {
    let x = random_matrix(rows, dim, arrival);
    DomainDataset::new(format!("bench{arrival}"), arrival, x, vec![0; rows])
        .expect("labels match rows")
}

/// A full buffer of `capacity` domains and the next, not yet buffered, domain.
pub fn filled_buffer(
    capacity: usize,
    per_domain: usize,
    dim: usize,
) -> (ExperienceBuffer, DomainDataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut buf = ExperienceBuffer::new(capacity, per_domain).expect("positive bounds");
    for t in 1..=capacity as u64 {
        buf.rs_ebu_update(&random_domain(per_domain, dim, t), &mut rng)
            .expect("increasing arrivals");
    }
    (buf, random_domain(per_domain, dim, capacity as u64 + 1))
}
