//! Multi-component Fourier-coefficient fields and their pointwise algebra.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{BoxGrid, Wavevector};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Fourier coefficients of a (possibly vector-valued) field on a periodic box.
///
/// Coefficients follow the unscaled forward FFT convention: a constant field
/// `c` has `c * N^dim` on the zero mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: BoxGrid,
    comps: Vec<Vec<Complex64>>,
}

impl SpectralField {
    pub fn zeros(grid: BoxGrid, components: usize) -> Self {
        assert!(components > 0, "a field needs at least one component");
        SpectralField {
            grid,
            comps: vec![vec![ZERO; grid.len()]; components],
        }
    }

    pub fn from_components(grid: BoxGrid, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        if comps.is_empty() {
            return Err(Error::InvalidArgument("a field needs at least one component".into()));
        }
        if let Some(bad) = comps.iter().find(|c| c.len() != grid.len()) {
            return Err(Error::GridMismatch(format!(
                "component has {} coefficients, grid has {}",
                bad.len(),
                grid.len()
            )));
        }
        Ok(SpectralField { grid, comps })
    }

    /// Transform physical samples (one buffer per component) to spectral space.
    pub fn from_physical(grid: BoxGrid, mut values: Vec<Vec<Complex64>>) -> Result<Self> {
        for v in values.iter_mut() {
            if v.len() != grid.len() {
                return Err(Error::GridMismatch("physical buffer size".into()));
            }
            fft::forward(&grid, v);
        }
        Self::from_components(grid, values)
    }

    /// Transform real physical samples to spectral space.
    pub fn from_real(grid: BoxGrid, values: &[Vec<f64>]) -> Result<Self> {
        let complex = values
            .iter()
            .map(|v| v.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_physical(grid, complex)
    }

    /// Sample a real function at every grid point.
    pub fn from_fn<F>(grid: BoxGrid, components: usize, f: F) -> Self
    where
        F: Fn([f64; 3], usize) -> f64 + Sync,
    {
        let values: Vec<Vec<f64>> = (0..components)
            .map(|c| {
                (0..grid.len())
                    .into_par_iter()
                    .map(|flat| f(grid.coordinate(flat), c))
                    .collect()
            })
            .collect();
        Self::from_real(grid, &values).expect("buffers sized from grid")
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.comps.len()
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        &self.comps[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.comps[c]
    }

    pub fn into_components(self) -> Vec<Vec<Complex64>> {
        self.comps
    }

    /// A new single- or multi-component field made of the selected components.
    pub fn select(&self, which: &[usize]) -> SpectralField {
        SpectralField {
            grid: self.grid,
            comps: which.iter().map(|&c| self.comps[c].clone()).collect(),
        }
    }

    /// Stack the components of several fields on the same grid.
    pub fn stack(parts: &[&SpectralField]) -> Result<SpectralField> {
        let grid = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to stack".into()))?
            .grid();
        let mut comps = Vec::new();
        for p in parts {
            if p.grid != grid {
                return Err(Error::GridMismatch("stacked fields live on different grids".into()));
            }
            comps.extend(p.comps.iter().cloned());
        }
        Self::from_components(grid, comps)
    }

    pub fn set_component(&mut self, c: usize, values: &[Complex64]) {
        self.comps[c].copy_from_slice(values);
    }

    /// Inverse transform of one component.
    pub fn physical_component(&self, c: usize) -> Vec<Complex64> {
        let mut v = self.comps[c].clone();
        fft::backward(&self.grid, &mut v);
        v
    }

    /// Inverse transform of one component, keeping the real part.
    pub fn real_component(&self, c: usize) -> Vec<f64> {
        self.physical_component(c).into_iter().map(|v| v.re).collect()
    }

    pub fn to_physical(&self) -> Vec<Vec<Complex64>> {
        (0..self.components()).map(|c| self.physical_component(c)).collect()
    }

    pub fn check_same_shape(&self, other: &SpectralField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        if self.components() != other.components() {
            return Err(Error::ComponentMismatch {
                expected: self.components(),
                found: other.components(),
            });
        }
        Ok(())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &SpectralField) {
        debug_assert!(self.check_same_shape(other).is_ok());
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            a.par_iter_mut().zip(b.par_iter()).for_each(|(x, y)| *x += y * alpha);
        }
    }

    /// `self + alpha * other` as a new field.
    pub fn plus_scaled(&self, alpha: f64, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(alpha, other);
        out
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.comps.iter_mut() {
            a.par_iter_mut().for_each(|x| *x *= alpha);
        }
    }

    pub fn scaled(&self, alpha: f64) -> SpectralField {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        self.plus_scaled(-1.0, other)
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        self.plus_scaled(1.0, other)
    }

    /// Sum of squared coefficient magnitudes, over all components.
    pub fn coefficient_energy(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum()
    }

    /// Physical-space L² norm via Plancherel.
    pub fn l2_norm(&self) -> f64 {
        let n = self.grid.len() as f64;
        (self.coefficient_energy() * self.grid.volume() / (n * n)).sqrt()
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.comps
            .iter()
            .all(|c| c.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
    }

    /// Multiply every component by the same scalar symbol.
    pub fn map_symbol<F>(&self, symbol: F) -> SpectralField
    where
        F: Fn(&Wavevector) -> Complex64 + Sync,
    {
        let grid = self.grid;
        let table = grid.wavevectors();
        let comps = if self.comps.len() == 1 {
            vec![self.comps[0]
                .par_iter()
                .zip(table.par_iter())
                .map(|(v, k)| v * symbol(k))
                .collect()]
        } else {
            let sym: Vec<Complex64> = table.par_iter().map(&symbol).collect();
            self.comps
                .iter()
                .map(|c| c.par_iter().zip(sym.par_iter()).map(|(v, s)| v * s).collect())
                .collect()
        };
        SpectralField { grid, comps }
    }

    /// Largest deviation from conjugate symmetry `f(-k) = conj f(k)`,
    /// relative to the largest coefficient.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for c in &self.comps {
            for flat in 0..self.grid.len() {
                if self.grid.is_nyquist(flat) {
                    continue;
                }
                let d = (c[flat] - c[self.grid.conjugate(flat)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst / scale
    }

    /// Project onto the closest field with a real physical representation.
    pub fn make_real(&mut self) {
        for c in self.comps.iter_mut() {
            fft::backward(&self.grid, c);
            for v in c.iter_mut() {
                v.im = 0.0;
            }
            fft::forward(&self.grid, c);
        }
    }

    /// Same field sampled on another lattice of the same box (zero padding or
    /// truncation in spectral space).
    pub fn resampled(&self, to: &BoxGrid) -> Result<SpectralField> {
        if to.dim() != self.grid.dim() || to.lengths() != self.grid.lengths() {
            return Err(Error::GridMismatch("resampling needs the same box".into()));
        }
        let comps = self
            .comps
            .iter()
            .map(|c| fft::resample(&self.grid, to, c))
            .collect();
        Ok(SpectralField { grid: *to, comps })
    }
}

/// A per-wavevector complex matrix symbol mapping `cols` input components to
/// `rows` output components.
pub trait Multiplier: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// Fill `out` (row-major, `rows * cols`) with the symbol at `k`.
    fn fill(&self, k: &Wavevector, out: &mut [Complex64]);
}

/// Closure-backed [`Multiplier`].
pub struct FnMultiplier<F> {
    pub rows: usize,
    pub cols: usize,
    pub symbol: F,
}

impl<F> Multiplier for FnMultiplier<F>
where
    F: Fn(&Wavevector, &mut [Complex64]) + Sync,
{
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn fill(&self, k: &Wavevector, out: &mut [Complex64]) {
        (self.symbol)(k, out)
    }
}

/// Identity on `c` components.
pub struct IdentityMultiplier(pub usize);

impl Multiplier for IdentityMultiplier {
    fn rows(&self) -> usize {
        self.0
    }
    fn cols(&self) -> usize {
        self.0
    }
    fn fill(&self, _k: &Wavevector, out: &mut [Complex64]) {
        out.fill(ZERO);
        for i in 0..self.0 {
            out[i * self.0 + i] = Complex64::new(1.0, 0.0);
        }
    }
}

/// Coefficient-wise matrix product `m(k) f(k)`.
pub fn apply_multiplier(f: &SpectralField, m: &dyn Multiplier) -> Result<SpectralField> {
    let (rows, cols) = (m.rows(), m.cols());
    if cols != f.components() {
        return Err(Error::ComponentMismatch {
            expected: cols,
            found: f.components(),
        });
    }
    let grid = *f.grid();
    let table = grid.wavevectors();
    let per_k: Vec<Vec<Complex64>> = (0..grid.len())
        .into_par_iter()
        .map_init(
            || vec![ZERO; rows * cols],
            |mat, flat| {
                m.fill(&table[flat], mat);
                (0..rows)
                    .map(|r| (0..cols).map(|c| mat[r * cols + c] * f.comps[c][flat]).sum())
                    .collect()
            },
        )
        .collect();
    let mut comps = vec![vec![ZERO; grid.len()]; rows];
    for (flat, vals) in per_k.into_iter().enumerate() {
        for (r, v) in vals.into_iter().enumerate() {
            comps[r][flat] = v;
        }
    }
    Ok(SpectralField { grid, comps })
}

/// True when `k` survives the 2/3 truncation on every axis.
pub fn is_resolved(grid: &BoxGrid, k: &Wavevector) -> bool {
    (0..grid.dim()).all(|a| 3 * k.index[a].unsigned_abs() as usize <= grid.n(a))
}

/// Zero every coefficient with some axis index of magnitude above `N/3`.
pub fn dealias(f: &SpectralField) -> SpectralField {
    let grid = *f.grid();
    let table = grid.wavevectors();
    let mut out = f.clone();
    for c in out.comps.iter_mut() {
        c.par_iter_mut().zip(table.par_iter()).for_each(|(v, k)| {
            if !is_resolved(&grid, k) {
                *v = ZERO;
            }
        });
    }
    out
}

/// Symbol `i ξ_axis`, zero on the unpaired Nyquist index so real fields stay
/// real.
pub fn derivative_symbol(grid: &BoxGrid, k: &Wavevector, axis: usize) -> Complex64 {
    if k.index[axis] == -((grid.n(axis) / 2) as i64) {
        ZERO
    } else {
        Complex64::new(0.0, k.xi[axis])
    }
}

/// Partial derivative along `axis` of every component.
pub fn partial(f: &SpectralField, axis: usize) -> SpectralField {
    let grid = *f.grid();
    f.map_symbol(|k| derivative_symbol(&grid, k, axis))
}

/// Gradient of a scalar field as a `dim`-component field.
pub fn gradient(f: &SpectralField) -> SpectralField {
    assert_eq!(f.components(), 1);
    let parts: Vec<SpectralField> = (0..f.grid().dim()).map(|a| partial(f, a)).collect();
    let refs: Vec<&SpectralField> = parts.iter().collect();
    SpectralField::stack(&refs).expect("same grid")
}

/// Divergence of the `dim` components starting at `first`.
pub fn divergence(f: &SpectralField, first: usize) -> SpectralField {
    let grid = *f.grid();
    let mut out = SpectralField::zeros(grid, 1);
    for a in 0..grid.dim() {
        let comp = f.select(&[first + a]);
        out.axpy(1.0, &partial(&comp, a));
    }
    out
}

/// Horizontal curl `∂1 f_{first+1} - ∂2 f_first`.
pub fn curl_h(f: &SpectralField, first: usize) -> SpectralField {
    let d1 = partial(&f.select(&[first + 1]), 0);
    let d2 = partial(&f.select(&[first]), 1);
    d1.sub(&d2)
}

/// Horizontal perpendicular gradient `∇^⊥ f = (-∂2 f, ∂1 f)` of a scalar.
pub fn perp_gradient(f: &SpectralField) -> SpectralField {
    let d2 = partial(f, 1).scaled(-1.0);
    let d1 = partial(f, 0);
    SpectralField::stack(&[&d2, &d1]).expect("same grid")
}
