//! Initial-data generators: seeded band-limited random fields and Gaussian
//! bump presets.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::{dealias, perp_gradient, SpectralField};
use crate::grid::BoxGrid;
use crate::norms::sobolev_norm;

/// Real random field whose spectrum is confined to `kmin <= |ξ| <= kmax`,
/// dealiased and rescaled to the requested `H^m` norm.
pub fn band_limited(
    grid: &BoxGrid,
    components: usize,
    kmin: f64,
    kmax: f64,
    m: f64,
    target_norm: f64,
    seed: u64,
) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = SpectralField::zeros(*grid, components);
    for c in 0..components {
        let comp = f.component_mut(c);
        for (flat, v) in comp.iter_mut().enumerate() {
            let re: f64 = rng.random_range(-1.0..1.0);
            let im: f64 = rng.random_range(-1.0..1.0);
            let k = grid.wavevector(flat).norm();
            if k >= kmin && k <= kmax {
                *v = Complex64::new(re, im);
            }
        }
    }
    f.make_real();
    let mut f = dealias(&f);
    let norm = sobolev_norm(&f, m);
    if norm > 0.0 {
        f.scale(target_norm / norm);
    }
    f
}

/// Parameters of an isotropic Gaussian `amp * exp(-|x - c|² / (2 w²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: [f64; 3],
    pub width: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn eval(&self, x: [f64; 3], dim: usize) -> f64 {
        let r2: f64 = (0..dim).map(|a| (x[a] - self.center[a]).powi(2)).sum();
        self.amplitude * (-r2 / (2.0 * self.width * self.width)).exp()
    }
}

/// Sum of bumps sampled on the grid as a dealiased scalar field.
pub fn bumps(grid: &BoxGrid, list: &[Bump]) -> SpectralField {
    let dim = grid.dim();
    let list = list.to_vec();
    dealias(&SpectralField::from_fn(*grid, 1, move |x, _| {
        list.iter().map(|b| b.eval(x, dim)).sum()
    }))
}

/// Seeded bumps scattered around the box centre.
pub fn random_bumps(
    grid: &BoxGrid,
    count: usize,
    spread: f64,
    width: f64,
    amplitude: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Bump> {
    let dim = grid.dim();
    (0..count)
        .map(|_| {
            let mut center = [0.0; 3];
            for (a, c) in center.iter_mut().enumerate().take(dim) {
                *c = 0.5 * grid.length(a) + spread * rng.random_range(-1.0..1.0);
            }
            Bump {
                center,
                width: width * rng.random_range(0.8..1.2),
                amplitude: amplitude * rng.random_range(-1.0..1.0),
            }
        })
        .collect()
}

/// Localised, seeded 2D data `(a, w1, w2, w3)` with generic slow and fast
/// content: `a` and `w3` are bump sums, `w_h = ∇^⊥ψ + ∇χ` with bump sums
/// `ψ, χ` so the mean velocity vanishes.
pub fn localized_2d(grid: &BoxGrid, amplitude: f64, width: f64, seed: u64) -> SpectralField {
    localized_2d_spread(grid, amplitude, width, 2.0 * width, seed)
}

/// As [`localized_2d`] with bump centres drawn within `spread` of the box
/// centre on each axis.
pub fn localized_2d_spread(
    grid: &BoxGrid,
    amplitude: f64,
    width: f64,
    spread: f64,
    seed: u64,
) -> SpectralField {
    assert_eq!(grid.dim(), 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = bumps(grid, &random_bumps(grid, 3, spread, width, amplitude, &mut rng));
    let psi = bumps(grid, &random_bumps(grid, 3, spread, width, amplitude * width, &mut rng));
    let chi = bumps(grid, &random_bumps(grid, 3, spread, width, amplitude * width, &mut rng));
    let w3 = bumps(grid, &random_bumps(grid, 2, spread, width, amplitude, &mut rng));
    let rot = perp_gradient(&psi);
    let grad = crate::field::gradient(&chi);
    let wh = rot.add(&grad);
    SpectralField::stack(&[&a, &wh, &w3]).expect("same grid")
}

/// Localised, seeded 3D perturbation `(ϑ, v1, v2, v3)` that is odd in `x3`
/// about the box centre, so it carries no `ξ3 = 0` content; `v3` starts at 0.
pub fn localized_3d(grid: &BoxGrid, amplitude: f64, width: f64, seed: u64) -> SpectralField {
    assert_eq!(grid.dim(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = width;
    let zc = 0.5 * grid.length(2);
    let mut parts = Vec::new();
    for _ in 0..3 {
        let list = random_bumps(grid, 2, spread, width, amplitude, &mut rng);
        let bumps_h: Vec<Bump> = list
            .iter()
            .map(|b| Bump {
                center: [b.center[0], b.center[1], zc],
                ..*b
            })
            .collect();
        let field = dealias(&SpectralField::from_fn(*grid, 1, move |x, _| {
            // the plane x3 = 0 is its own mirror image, so the odd profile must vanish there
            if x[2] == 0.0 {
                return 0.0;
            }
            let s = (x[2] - zc) / width;
            bumps_h.iter().map(|b| s * b.eval(x, 3)).sum()
        }));
        parts.push(field);
    }
    let v3 = SpectralField::zeros(*grid, 1);
    SpectralField::stack(&[&parts[0], &parts[1], &parts[2], &v3]).expect("same grid")
}
