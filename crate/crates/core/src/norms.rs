//! Sobolev, Besov, Chemin–Lerner and time-Lebesgue norms.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dyadic::{dyadic_block, DyadicLadder};
use crate::error::{Error, Result};
use crate::field::SpectralField;

/// Exponents of a (possibly space-time) Besov norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec {
    /// time exponent
    pub q: f64,
    /// space exponent
    pub r: f64,
    /// regularity
    pub m: f64,
    /// summation exponent over blocks
    pub sigma: f64,
}

impl NormSpec {
    pub fn new(q: f64, r: f64, m: f64, sigma: f64) -> Result<Self> {
        for (name, v) in [("q", q), ("r", r), ("sigma", sigma)] {
            if !(v >= 1.0) {
                return Err(Error::InvalidArgument(format!("{name} = {v} outside [1, inf]")));
            }
        }
        if !m.is_finite() {
            return Err(Error::InvalidArgument("regularity must be finite".into()));
        }
        Ok(NormSpec { q, r, m, sigma })
    }
}

/// `(Σ_k (1+|ξ|²)^m |f̂(k)|² · V/N^{2d})^{1/2}` summed over components.
pub fn sobolev_norm(f: &SpectralField, m: f64) -> f64 {
    let grid = *f.grid();
    let n = grid.len() as f64;
    let table = grid.wavevectors();
    let total: f64 = (0..f.components())
        .map(|c| {
            f.component(c)
                .par_iter()
                .enumerate()
                .map(|(flat, v)| {
                    let k2 = table[flat].norm_sq();
                    (1.0 + k2).powf(m) * v.norm_sqr()
                })
                .collect::<Vec<f64>>()
                .iter()
                .sum::<f64>()
        })
        .sum();
    (total * grid.volume() / (n * n)).sqrt()
}

/// Pointwise Euclidean magnitude of a multi-component physical field.
pub fn pointwise_magnitude(values: &[Vec<Complex64>]) -> Vec<f64> {
    let len = values.first().map_or(0, |v| v.len());
    (0..len)
        .map(|i| values.iter().map(|c| c[i].norm_sqr()).sum::<f64>().sqrt())
        .collect()
}

/// Grid maximum of the pointwise magnitude, optionally after spectral zero
/// padding by `oversample` per axis.
pub fn sup_norm(f: &SpectralField, oversample: usize) -> f64 {
    let field = if oversample > 1 {
        f.resampled(&f.grid().refined(oversample))
            .expect("refinement keeps the box")
    } else {
        f.clone()
    };
    pointwise_magnitude(&field.to_physical())
        .into_iter()
        .fold(0.0, f64::max)
}

/// `∫ |f| dx` by grid quadrature (spectrally accurate for smooth periodic data).
pub fn l1_norm(f: &SpectralField, oversample: usize) -> f64 {
    let field = if oversample > 1 {
        f.resampled(&f.grid().refined(oversample))
            .expect("refinement keeps the box")
    } else {
        f.clone()
    };
    let cell = field.grid().volume() / field.grid().len() as f64;
    pointwise_magnitude(&field.to_physical()).iter().sum::<f64>() * cell
}

/// `L^r` norm of a field with `r ∈ {2, ∞}`.
pub fn lebesgue_norm(f: &SpectralField, r: f64) -> Result<f64> {
    if r == 2.0 {
        Ok(f.l2_norm())
    } else if r == f64::INFINITY {
        Ok(sup_norm(f, 1))
    } else {
        Err(Error::UnsupportedExponent(r))
    }
}

fn check_r(r: f64) -> Result<()> {
    if r == 2.0 || r == f64::INFINITY {
        Ok(())
    } else {
        Err(Error::UnsupportedExponent(r))
    }
}

fn sum_blocks(weighted: impl Iterator<Item = f64>, sigma: f64) -> f64 {
    if sigma == f64::INFINITY {
        weighted.fold(0.0, f64::max)
    } else {
        weighted.map(|v| v.powf(sigma)).sum::<f64>().powf(1.0 / sigma)
    }
}

/// Homogeneous Besov semi-norm `(Σ_k (2^{mk} ‖Δ_k f‖_{L^r})^σ)^{1/σ}`.
pub fn besov_norm(f: &SpectralField, spec: &NormSpec) -> Result<f64> {
    check_r(spec.r)?;
    let ladder = DyadicLadder::for_grid(f.grid());
    let blocks: Vec<f64> = ladder
        .indices()
        .map(|k| {
            let b = dyadic_block(f, k);
            lebesgue_norm(&b, spec.r).map(|n| 2f64.powf(spec.m * k as f64) * n)
        })
        .collect::<Result<_>>()?;
    Ok(sum_blocks(blocks.into_iter(), spec.sigma))
}

/// `(∫ v^q dt)^{1/q}` by the trapezoid rule on uniformly spaced samples; the
/// maximum for `q = ∞`.
pub fn time_lebesgue_norm(values: &[f64], dt: f64, q: f64) -> Result<f64> {
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("negative or NaN sample {v}")));
    }
    if !(q >= 1.0) {
        return Err(Error::InvalidArgument(format!("time exponent {q} < 1")));
    }
    if q == f64::INFINITY {
        return Ok(values.iter().copied().fold(0.0, f64::max));
    }
    if values.len() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let n = values.len();
    let interior: f64 = values[1..n - 1].iter().map(|v| v.powf(q)).sum();
    let ends = 0.5 * (values[0].powf(q) + values[n - 1].powf(q));
    Ok((dt * (interior + ends)).powf(1.0 / q))
}

/// Chemin–Lerner norm: time norm taken inside the dyadic sum.
pub fn chemin_lerner_norm(snapshots: &[SpectralField], dt: f64, spec: &NormSpec) -> Result<f64> {
    check_r(spec.r)?;
    let first = snapshots
        .first()
        .ok_or_else(|| Error::InvalidArgument("no snapshots".into()))?;
    if spec.q < f64::INFINITY && snapshots.len() < 2 {
        return Err(Error::InvalidArgument("need at least two snapshots for q < inf".into()));
    }
    let ladder = DyadicLadder::for_grid(first.grid());
    let mut weighted = Vec::new();
    for k in ladder.indices() {
        let series: Vec<f64> = snapshots
            .iter()
            .map(|s| lebesgue_norm(&dyadic_block(s, k), spec.r))
            .collect::<Result<_>>()?;
        weighted.push(2f64.powf(spec.m * k as f64) * time_lebesgue_norm(&series, dt, spec.q)?);
    }
    Ok(sum_blocks(weighted.into_iter(), spec.sigma))
}

/// `‖ ‖f(t)‖_{Ḃ^m_{r,σ}} ‖_{L^q_t}`: time norm taken outside.
pub fn time_besov_norm(snapshots: &[SpectralField], dt: f64, spec: &NormSpec) -> Result<f64> {
    let series: Vec<f64> = snapshots
        .iter()
        .map(|s| besov_norm(s, spec))
        .collect::<Result<_>>()?;
    time_lebesgue_norm(&series, dt, spec.q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoxGrid;
    use crate::testutil::random_field;
    use std::f64::consts::PI;

    #[test]
    fn sobolev_examples() {
        let g = BoxGrid::square(16, 3.0).unwrap();
        assert_eq!(sobolev_norm(&SpectralField::zeros(g, 2), 1.5), 0.0);

        let c = SpectralField::from_fn(g, 1, |_, _| -2.5);
        for m in [0.0, 1.0, 3.5] {
            assert!((sobolev_norm(&c, m) - 2.5 * 3.0).abs() < 1e-12);
        }

        // e^{i 2 x1} on a 2π box: |ξ| = 2, weight 5
        let g = BoxGrid::square(16, 2.0 * PI).unwrap();
        let mut f = SpectralField::zeros(g, 1);
        f.component_mut(0)[g.flatten([2, 0, 0])] = Complex64::new(g.len() as f64, 0.0);
        let expect = 5f64.sqrt() * g.volume().sqrt();
        assert!((sobolev_norm(&f, 1.0) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn plancherel_matches_physical_quadrature() {
        let g = BoxGrid::new(&[16, 24], &[2.0, 5.0]).unwrap();
        let f = random_field(&g, 2, 4);
        let phys = f.to_physical();
        let cell = g.volume() / g.len() as f64;
        let direct: f64 = phys
            .iter()
            .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            * cell;
        assert!((direct.sqrt() - sobolev_norm(&f, 0.0)).abs() < 1e-12 * direct.sqrt());
    }

    #[test]
    fn time_norm_examples() {
        let v = vec![2.0; 11];
        let n = time_lebesgue_norm(&v, 0.3, 4.0).unwrap();
        assert!((n - 2.0 * 3f64.powf(0.25)).abs() < 1e-14);
        assert_eq!(time_lebesgue_norm(&[0.0; 5], 0.1, 2.0).unwrap(), 0.0);
        assert!(time_lebesgue_norm(&[1.0, -1.0], 0.1, 2.0).is_err());

        let dt = 1.0 / 64.0;
        let ramp: Vec<f64> = (0..=64).map(|i| i as f64 * dt).collect();
        let n = time_lebesgue_norm(&ramp, dt, 2.0).unwrap();
        assert!((n * n - 1.0 / 3.0).abs() <= dt * dt);
        assert!((n - 3f64.powf(-0.5)).abs() <= dt * dt);
    }

    #[test]
    fn besov_rejects_other_exponents() {
        let g = BoxGrid::square(8, 1.0).unwrap();
        let spec = NormSpec::new(2.0, 3.0, 0.0, 2.0).unwrap();
        assert!(matches!(
            besov_norm(&SpectralField::zeros(g, 1), &spec),
            Err(Error::UnsupportedExponent(_))
        ));
    }

    #[test]
    fn chemin_lerner_examples() {
        let g = BoxGrid::square(16, 2.0 * PI).unwrap();
        let spec = NormSpec::new(f64::INFINITY, 2.0, 1.0, 1.0).unwrap();
        let f = random_field(&g, 1, 9);
        let snaps = vec![f.clone(); 4];
        let cl = chemin_lerner_norm(&snaps, 0.1, &spec).unwrap();
        assert!((cl - besov_norm(&f, &spec).unwrap()).abs() < 1e-12 * cl);

        let zeros = vec![SpectralField::zeros(g, 1); 3];
        let spec = NormSpec::new(2.0, f64::INFINITY, 0.5, 2.0).unwrap();
        assert_eq!(chemin_lerner_norm(&zeros, 0.1, &spec).unwrap(), 0.0);
        assert!(chemin_lerner_norm(&zeros[..1], 0.1, &spec).is_err());
    }
}
