//! Linear wave operators: symbols, per-wavevector eigensystems, branch
//! projections and the exact linear propagator.
//!
//! For a symbol `S(ξ)` with `S d_j = i λ_j d_j` the propagator over phase
//! time `s = γ̄ t / δ` is `e^{-s S} = Σ_j e^{-i s λ_j} d_j d_j^*`.

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{curl_h, divergence, gradient, SpectralField};
use crate::grid::BoxGrid;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Symbol of the 2D wave operator acting on `(a, w1, w2)`.
pub fn assemble_symbol_2d(eta: [f64; 2], nu: f64) -> [[Complex64; 3]; 3] {
    let (i1, i2) = (I * eta[0], I * eta[1]);
    [[ZERO, i1, i2], [i1, ZERO, c(-nu)], [i2, c(nu), ZERO]]
}

/// Symbol of the 3D wave operator acting on `(b, u1, u2, u3)`.
pub fn assemble_symbol_3d(xi: [f64; 3], nu: f64) -> [[Complex64; 4]; 4] {
    let (i1, i2, i3) = (I * xi[0], I * xi[1], I * xi[2]);
    [
        [ZERO, i1, i2, i3],
        [i1, ZERO, c(-nu), ZERO],
        [i2, c(nu), ZERO, ZERO],
        [i3, ZERO, ZERO, ZERO],
    ]
}

/// Frequencies and orthonormal eigenvectors at one wavevector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenEntry<const C: usize> {
    pub freq: [f64; C],
    /// `vecs[j]` is the eigenvector of `freq[j]`.
    pub vecs: [[Complex64; C]; C],
}

impl<const C: usize> EigenEntry<C> {
    /// Expansion coefficients `⟨f, d_j⟩`.
    pub fn coefficients(&self, f: &[Complex64; C]) -> [Complex64; C] {
        let mut out = [ZERO; C];
        for (j, o) in out.iter_mut().enumerate() {
            *o = (0..C).map(|i| f[i] * self.vecs[j][i].conj()).sum();
        }
        out
    }
}

/// Make the first non-negligible component real and positive.
fn fix_phase<const C: usize>(v: &mut [Complex64; C]) {
    let scale = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if let Some(lead) = v.iter().find(|x| x.norm() > 1e-10 * scale) {
        let phase = lead.conj() / lead.norm();
        for x in v.iter_mut() {
            *x *= phase;
        }
    }
}

fn normalize<const C: usize>(v: &mut [Complex64; C]) {
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
}

fn cross(a: &[Complex64; 3], b: &[Complex64; 3]) -> [Complex64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Closed-form branch structure of the 2D symbol: frequencies `{0, p, -p}`
/// with `p = √(ν² + |η|²)`, `d_0 ∝ (ν, -iη2, iη1)`, and `d_±` as the null
/// vectors of `Â - i(±p)`.
pub fn eigendecompose_2d(eta: [f64; 2], nu: f64) -> EigenEntry<3> {
    let p = (nu * nu + eta[0] * eta[0] + eta[1] * eta[1]).sqrt();
    let mut d0 = [c(nu), -I * eta[1], I * eta[0]];
    normalize(&mut d0);
    let sym = assemble_symbol_2d(eta, nu);
    let mut vecs = [d0, [ZERO; 3], [ZERO; 3]];
    for (slot, lambda) in [(1usize, p), (2usize, -p)] {
        let mut rows = sym;
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] -= I * lambda;
        }
        // the shifted symbol has rank 2; the largest pairwise cross product of
        // its rows spans the kernel
        let cands = [
            cross(&rows[0], &rows[1]),
            cross(&rows[0], &rows[2]),
            cross(&rows[1], &rows[2]),
        ];
        let mut best = cands[0];
        let mut best_norm = 0.0;
        for cand in cands {
            let n: f64 = cand.iter().map(|x| x.norm_sqr()).sum();
            if n > best_norm {
                best_norm = n;
                best = cand;
            }
        }
        normalize(&mut best);
        fix_phase(&mut best);
        vecs[slot] = best;
    }
    EigenEntry {
        freq: [0.0, p, -p],
        vecs,
    }
}

/// Numerical Hermitian eigendecomposition of `-i S(ξ)`.
///
/// Frequencies are sorted in descending order. Inside a cluster of equal
/// frequencies the basis is rebuilt from the cluster projector applied to
/// `e_1, e_2, ..` in order, so the result does not depend on the solver's
/// arbitrary rotation within degenerate subspaces.
pub fn eigendecompose_3d(xi: [f64; 3], nu: f64) -> Result<EigenEntry<4>> {
    let sym = assemble_symbol_3d(xi, nu);
    let h = Matrix4::from_fn(|r, col| -I * sym[r][col]);
    let eig = SymmetricEigen::try_new(h, 1e-15, 10_000).ok_or(Error::EigenFailure(xi))?;
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let freq_raw: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let raw: Vec<[Complex64; 4]> = order
        .iter()
        .map(|&j| {
            let col = eig.eigenvectors.column(j);
            [col[0], col[1], col[2], col[3]]
        })
        .collect();

    let scale = 1.0 + freq_raw.iter().map(|f| f.abs()).fold(0.0, f64::max);
    let tol = 1e-9 * scale;
    let mut freq = [0.0; 4];
    let mut vecs = [[ZERO; 4]; 4];
    let mut start = 0;
    while start < 4 {
        let mut end = start + 1;
        while end < 4 && (freq_raw[start] - freq_raw[end]).abs() <= tol {
            end += 1;
        }
        let members = &raw[start..end];
        let mean = freq_raw[start..end].iter().sum::<f64>() / (end - start) as f64;
        if end - start == 1 {
            let mut v = members[0];
            fix_phase(&mut v);
            vecs[start] = v;
            freq[start] = freq_raw[start];
        } else {
            let mut chosen: Vec<[Complex64; 4]> = Vec::new();
            for e in 0..4 {
                if chosen.len() == end - start {
                    break;
                }
                // P e_i with P the cluster projector
                let mut u = [ZERO; 4];
                for m in members {
                    let coef = m[e].conj();
                    for i in 0..4 {
                        u[i] += m[i] * coef;
                    }
                }
                for ch in &chosen {
                    let dot: Complex64 = (0..4).map(|i| u[i] * ch[i].conj()).sum();
                    for i in 0..4 {
                        u[i] -= ch[i] * dot;
                    }
                }
                let n = u.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                if n > 1e-6 {
                    for x in u.iter_mut() {
                        *x /= n;
                    }
                    chosen.push(u);
                }
            }
            if chosen.len() != end - start {
                return Err(Error::EigenFailure(xi));
            }
            for (off, mut v) in chosen.into_iter().enumerate() {
                fix_phase(&mut v);
                vecs[start + off] = v;
                freq[start + off] = mean;
            }
        }
        start = end;
    }

    let entry = EigenEntry { freq, vecs };
    if residual_3d(&entry, xi, nu) > 1e-10 * scale {
        return Err(Error::EigenFailure(xi));
    }
    Ok(entry)
}

fn residual_3d(e: &EigenEntry<4>, xi: [f64; 3], nu: f64) -> f64 {
    let sym = assemble_symbol_3d(xi, nu);
    let mut worst: f64 = 0.0;
    for j in 0..4 {
        for r in 0..4 {
            let lhs: Complex64 = (0..4).map(|k| sym[r][k] * e.vecs[j][k]).sum();
            worst = worst.max((lhs - I * e.freq[j] * e.vecs[j][r]).norm());
        }
    }
    worst
}

/// 2D branch labels, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Slow = 0,
    Plus = 1,
    Minus = 2,
}

/// 3D branch groups over the descending frequency order: the inner pair is
/// the slow set, the outer pair the fast (acoustic) set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveSet {
    Slow,
    Fast,
}

impl WaveSet {
    pub fn indices(&self) -> &'static [usize] {
        match self {
            WaveSet::Slow => &[1, 2],
            WaveSet::Fast => &[0, 3],
        }
    }
}

/// Eigen-data for every wavevector of a grid.
#[derive(Debug, Clone)]
pub struct EigenSystem<const C: usize> {
    grid: BoxGrid,
    nu: f64,
    entries: Vec<EigenEntry<C>>,
}

pub type EigenSystem2D = EigenSystem<3>;
pub type EigenSystem3D = EigenSystem<4>;

impl EigenSystem<3> {
    pub fn new(grid: &BoxGrid, nu: f64) -> Result<Self> {
        if grid.dim() != 2 {
            return Err(Error::GridMismatch("2D eigensystem needs a 2D grid".into()));
        }
        let entries = (0..grid.len())
            .into_par_iter()
            .map(|flat| eigendecompose_2d(grid.wavevector(flat).horizontal(), nu))
            .collect();
        Ok(EigenSystem {
            grid: *grid,
            nu,
            entries,
        })
    }
}

impl EigenSystem<4> {
    pub fn new(grid: &BoxGrid, nu: f64) -> Result<Self> {
        if grid.dim() != 3 {
            return Err(Error::GridMismatch("3D eigensystem needs a 3D grid".into()));
        }
        let entries = (0..grid.len())
            .into_par_iter()
            .map(|flat| eigendecompose_3d(grid.wavevector(flat).xi, nu))
            .collect::<Result<Vec<_>>>()?;
        Ok(EigenSystem {
            grid: *grid,
            nu,
            entries,
        })
    }
}

impl<const C: usize> EigenSystem<C> {
    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn entry(&self, flat: usize) -> &EigenEntry<C> {
        &self.entries[flat]
    }

    pub fn entries(&self) -> &[EigenEntry<C>] {
        &self.entries
    }

    fn check(&self, f: &SpectralField, min_components: usize) -> Result<()> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch(
                "field and eigensystem live on different grids".into(),
            ));
        }
        if f.components() < min_components {
            return Err(Error::ComponentMismatch {
                expected: C,
                found: f.components(),
            });
        }
        Ok(())
    }

    /// Apply `Σ_j g_j(flat) d_j d_j^*` on the leading `C` components; any
    /// further components are copied unchanged.
    fn apply_spectral<G>(&self, f: &SpectralField, weight: G) -> SpectralField
    where
        G: Fn(usize, &EigenEntry<C>) -> [Complex64; C] + Sync,
    {
        let n = self.grid.len();
        let mapped: Vec<[Complex64; C]> = (0..n)
            .into_par_iter()
            .map(|flat| {
                let e = &self.entries[flat];
                let mut v = [ZERO; C];
                for (i, x) in v.iter_mut().enumerate() {
                    *x = f.component(i)[flat];
                }
                let coef = e.coefficients(&v);
                let w = weight(flat, e);
                let mut out = [ZERO; C];
                for j in 0..C {
                    let a = coef[j] * w[j];
                    if a == ZERO {
                        continue;
                    }
                    for (i, o) in out.iter_mut().enumerate() {
                        *o += a * e.vecs[j][i];
                    }
                }
                out
            })
            .collect();
        let mut result = f.clone();
        for i in 0..C {
            let comp = result.component_mut(i);
            for (flat, v) in mapped.iter().enumerate() {
                comp[flat] = v[i];
            }
        }
        result
    }

    /// `P_(j) f` summed over the given branches.
    pub fn project(&self, f: &SpectralField, branches: &[usize]) -> Result<SpectralField> {
        self.check(f, C)?;
        if f.components() != C {
            return Err(Error::ComponentMismatch {
                expected: C,
                found: f.components(),
            });
        }
        let mut mask = [ZERO; C];
        for &b in branches {
            if b >= C {
                return Err(Error::InvalidArgument(format!("branch {b} out of range")));
            }
            mask[b] = c(1.0);
        }
        Ok(self.apply_spectral(f, |_, _| mask))
    }

    /// Exact linear flow over phase time `s = γ̄ t / δ`: branch `j` picks up
    /// `e^{-i s λ_j}`. Components beyond the first `C` pass through.
    pub fn propagate(&self, f: &SpectralField, s: f64) -> Result<SpectralField> {
        self.check(f, C)?;
        if s == 0.0 {
            return Ok(f.clone());
        }
        Ok(self.apply_spectral(f, |_, e| {
            let mut w = [ZERO; C];
            for j in 0..C {
                w[j] = Complex64::from_polar(1.0, -s * e.freq[j]);
            }
            w
        }))
    }

    /// Apply the symbol itself: `(S f)^(ξ) = S(ξ) f̂(ξ)`.
    pub fn apply_symbol(&self, f: &SpectralField) -> Result<SpectralField> {
        self.check(f, C)?;
        Ok(self.apply_spectral(f, |_, e| {
            let mut w = [ZERO; C];
            for j in 0..C {
                w[j] = I * e.freq[j];
            }
            w
        }))
    }
}

/// `(W^S, W^F) = (P_(0) W, P_(+) W + P_(-) W)`.
pub fn slow_fast_split(
    eig: &EigenSystem2D,
    w: &SpectralField,
) -> Result<(SpectralField, SpectralField)> {
    let slow = eig.project(w, &[Branch::Slow as usize])?;
    let fast = w.sub(&slow);
    Ok((slow, fast))
}

/// Potential vorticity `curl w_h - ν a` of a field whose first three
/// components are `(a, w1, w2)`.
pub fn potential_vorticity(w: &SpectralField, nu: f64) -> SpectralField {
    let a = w.select(&[0]);
    curl_h(w, 1).plus_scaled(-nu, &a)
}

/// Relative residuals of the slow/fast identities:
/// `ν w_S^⊥ + ∇a_S`, `div w_S`, `curl w_F - ν a_F`, each divided by the L²
/// norm of the scale it is built from.
pub fn slow_fast_residuals(slow: &SpectralField, fast: &SpectralField, nu: f64) -> [f64; 3] {
    let a_s = slow.select(&[0]);
    let grad_a = gradient(&a_s);
    let ws_perp = SpectralField::stack(&[&slow.select(&[2]).scaled(-1.0), &slow.select(&[1])])
        .expect("same grid");
    let balance = ws_perp.scaled(nu).add(&grad_a);
    let balance_scale = ws_perp.scaled(nu).l2_norm() + grad_a.l2_norm();

    let div = divergence(slow, 1);
    let grad_w = gradient(&slow.select(&[1])).l2_norm() + gradient(&slow.select(&[2])).l2_norm();

    let curl_f = curl_h(fast, 1);
    let pv_f = curl_f.plus_scaled(-nu, &fast.select(&[0]));
    let pv_scale = curl_f.l2_norm() + nu * fast.select(&[0]).l2_norm();

    let rel = |num: f64, den: f64| if den > 0.0 { num / den } else { num };
    [
        rel(balance.l2_norm(), balance_scale),
        rel(div.l2_norm(), grad_w),
        rel(pv_f.l2_norm(), pv_scale),
    ]
}
