use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::SpectralField;
use crate::grid::BoxGrid;

/// Real white-noise field with the given seed.
pub fn random_field(grid: &BoxGrid, components: usize, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<Vec<Complex64>> = (0..components)
        .map(|_| {
            (0..grid.len())
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0))
                .collect()
        })
        .collect();
    SpectralField::from_physical(*grid, values).unwrap()
}
