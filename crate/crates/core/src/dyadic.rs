//! Dyadic Littlewood–Paley blocks.
//!
//! The radial profile is `φ(s) = g(s/2) - g(s)` where `g` is a smooth step
//! equal to 1 on `[0, 3/4]` and 0 on `[4/3, ∞)`, built as the normalised
//! primitive of the bump `exp(-1/(1-u²))`. Then `supp φ ⊂ [3/4, 8/3]` and
//! the blocks `φ_k(ξ) = φ(2^{-k}|ξ|)` telescope to 1 away from the origin.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::field::SpectralField;
use crate::grid::BoxGrid;

const STEP_LO: f64 = 0.75;
const STEP_HI: f64 = 4.0 / 3.0;
const PANELS: usize = 64;
const NODES: usize = 24;

fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(NODES))
}

fn gauss_integral(lo: f64, hi: f64) -> f64 {
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    rule().iter().map(|&(x, w)| w * bump(mid + half * x)).sum::<f64>() * half
}

/// Running integrals of the bump at the panel edges `-1 + 2p/PANELS`.
fn panel_edges() -> &'static [f64] {
    static EDGES: OnceLock<Vec<f64>> = OnceLock::new();
    EDGES.get_or_init(|| {
        let h = 2.0 / PANELS as f64;
        let mut acc = vec![0.0];
        for p in 0..PANELS {
            let lo = -1.0 + p as f64 * h;
            acc.push(acc[p] + gauss_integral(lo, lo + h));
        }
        acc
    })
}

/// `∫_{-1}^{u} bump` by composite Gauss–Legendre on fixed panels.
fn bump_primitive(u: f64) -> f64 {
    let u = u.clamp(-1.0, 1.0);
    let h = 2.0 / PANELS as f64;
    let p = (((u + 1.0) / h) as usize).min(PANELS - 1);
    let lo = -1.0 + p as f64 * h;
    panel_edges()[p] + gauss_integral(lo, u)
}

fn bump_mass() -> f64 {
    panel_edges()[PANELS]
}

/// Smooth step: 1 below 3/4, 0 above 4/3.
pub fn smooth_step(s: f64) -> f64 {
    if s <= STEP_LO {
        1.0
    } else if s >= STEP_HI {
        0.0
    } else {
        let u = 2.0 * (s - STEP_LO) / (STEP_HI - STEP_LO) - 1.0;
        (1.0 - bump_primitive(u) / bump_mass()).clamp(0.0, 1.0)
    }
}

/// Radial profile of the unit block, supported in `[3/4, 8/3]`.
pub fn profile(s: f64) -> f64 {
    smooth_step(0.5 * s) - smooth_step(s)
}

/// `φ_k(|ξ|)`.
pub fn block_weight(k: i32, xi_norm: f64) -> f64 {
    if xi_norm == 0.0 {
        return 0.0;
    }
    profile(xi_norm * 2f64.powi(-k))
}

/// The range of blocks needed to cover a grid's resolvable band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicLadder {
    pub k_min: i32,
    pub k_max: i32,
}

impl DyadicLadder {
    pub fn for_grid(grid: &BoxGrid) -> Self {
        // φ_k is supported in 2^k [3/4, 8/3]
        let lo = grid.min_wavenumber();
        let hi = grid.max_wavenumber();
        DyadicLadder {
            k_min: (lo / (8.0 / 3.0)).log2().floor() as i32,
            k_max: (hi / 0.75).log2().ceil() as i32,
        }
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<i32> {
        self.k_min..=self.k_max
    }

    pub fn contains(&self, k: i32) -> bool {
        k >= self.k_min && k <= self.k_max
    }
}

/// `Δ_k f = φ_k(D) f`; zero for blocks outside the grid's ladder.
pub fn dyadic_block(f: &SpectralField, k: i32) -> SpectralField {
    let ladder = DyadicLadder::for_grid(f.grid());
    if !ladder.contains(k) {
        return SpectralField::zeros(*f.grid(), f.components());
    }
    f.map_symbol(|w| Complex64::new(block_weight(k, w.norm()), 0.0))
}
