//! Dispersion and Strichartz measurements for the wave group
//! `e^{i s p(D)}`, `p(η) = (ν² + |η|²)^{1/2}`, and its 3D counterpart.
//!
//! Two evaluators are provided. The lattice evaluator works on a periodic
//! box and is valid up to the wrap-around time. The radial evaluator
//! computes the whole-space kernel of a radial profile through its Hankel
//! transform, which reaches the long times where the envelope decay of a
//! high-frequency block sets in.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::data::band_limited;
use crate::dyadic::dyadic_block;
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::BoxGrid;
use crate::norms::{l1_norm, sup_norm};
use crate::params::PhysicalParams;
use crate::wave::EigenSystem3D;

/// `M_k = 1` if `2^k <= ν`, else `2^{3k}`.
pub fn mk(k: i32, nu: f64) -> f64 {
    if (k as f64) <= nu.log2() {
        1.0
    } else {
        2f64.powi(3 * k)
    }
}

/// `2 <= q, r <= ∞`, `1/q + 1/r <= 1/2`, `(q, r) != (2, ∞)`.
pub fn admissible(q: f64, r: f64) -> bool {
    let in_range = |x: f64| x >= 2.0;
    in_range(q) && in_range(r) && 1.0 / q + 1.0 / r <= 0.5 && !(q == 2.0 && r == f64::INFINITY)
}

/// Least-squares power law `value ≈ prefactor · parameter^exponent`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub samples: Vec<(f64, f64)>,
    pub exponent: f64,
    pub prefactor: f64,
    /// RMS of the log-space residuals.
    pub residual: f64,
}

pub fn fit_scaling(samples: &[(f64, f64)]) -> Result<ScalingFit> {
    if samples.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "a scaling fit needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    if let Some(s) = samples.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::InvalidArgument(format!("non-positive sample {s:?}")));
    }
    let n = samples.len() as f64;
    let logs: Vec<(f64, f64)> = samples.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all parameters are equal".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let residual = (logs
        .iter()
        .map(|p| (p.1 - intercept - exponent * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(ScalingFit {
        samples: samples.to_vec(),
        exponent,
        prefactor: intercept.exp(),
        residual,
    })
}

/// Local maxima of a sampled curve (endpoints count when they dominate
/// their single neighbour). Falls back to every sample when fewer than
/// three maxima exist, as for a monotone curve.
pub fn envelope(samples: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = samples.len();
    let peaks: Vec<(f64, f64)> = (0..n)
        .filter(|&i| {
            let left = i == 0 || samples[i].1 >= samples[i - 1].1;
            let right = i + 1 == n || samples[i].1 >= samples[i + 1].1;
            left && right
        })
        .map(|i| samples[i])
        .collect();
    if peaks.len() >= 3 {
        peaks
    } else {
        samples.to_vec()
    }
}

fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

/// Smooth radial profile supported in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    /// The part of block `k` where `φ_k = 1`, so `Δ_k f = f`.
    pub fn plateau(k: i32) -> Self {
        let s = 2f64.powi(k);
        Band {
            lo: 4.0 / 3.0 * s,
            hi: 1.5 * s,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn symbol(&self, rho: f64) -> f64 {
        let c = 0.5 * (self.lo + self.hi);
        bump((rho - c) / (0.5 * self.width()))
    }
}

fn dispersion(nu: f64, rho: f64) -> f64 {
    (nu * nu + rho * rho).sqrt()
}

/// A band-limited radial profile in one dyadic block on a periodic box.
#[derive(Debug, Clone)]
pub struct DispersionProbe {
    pub k: i32,
    pub params: PhysicalParams,
    pub band: Band,
    pub t_max: f64,
    pub profile: SpectralField,
}

/// Largest admissible window: `0.4 L δ / γ̄` with `L` the shortest side.
pub fn wrap_around_time(grid: &BoxGrid, params: &PhysicalParams) -> f64 {
    let l = (0..grid.dim()).map(|a| grid.length(a)).fold(f64::INFINITY, f64::min);
    0.4 * l * params.delta / params.gamma_bar
}

/// A square grid with `n` points resolving `Band::plateau(k)` with margin.
pub fn probe_grid(k: i32, n: usize) -> Result<BoxGrid> {
    let b = Band::plateau(k).hi;
    BoxGrid::square(n, PI * n as f64 / (1.25 * b))
}

impl DispersionProbe {
    /// Probe on block `k` with window `(0, t_max]`; `t_max` defaults to the
    /// wrap-around bound.
    pub fn new(k: i32, params: PhysicalParams, grid: &BoxGrid, t_max: Option<f64>) -> Result<Self> {
        if grid.dim() != 2 {
            return Err(Error::GridMismatch("dispersion probes live on 2D grids".into()));
        }
        let band = Band::plateau(k);
        let kmax = (0..2)
            .map(|a| (grid.n(a) / 2 - 1) as f64 * grid.dk(a))
            .fold(f64::INFINITY, f64::min);
        if band.hi >= kmax {
            return Err(Error::InvalidArgument(format!(
                "block {k} reaches |ξ| = {} beyond the grid's {kmax}",
                band.hi
            )));
        }
        let limit = wrap_around_time(grid, &params);
        let t_max = t_max.unwrap_or(limit);
        if !(t_max > 0.0) || t_max > limit {
            return Err(Error::InvalidArgument(format!(
                "window {t_max} outside (0, {limit}] set by wrap-around"
            )));
        }
        let coeffs = (0..grid.len())
            .map(|flat| Complex64::new(band.symbol(grid.wavevector(flat).norm()), 0.0))
            .collect();
        let profile = SpectralField::from_components(*grid, vec![coeffs])?;
        let probe = DispersionProbe {
            k,
            params,
            band,
            t_max,
            profile,
        };
        let defect = dyadic_block(&probe.profile, k).sub(&probe.profile).l2_norm();
        if defect > 1e-10 * probe.profile.l2_norm() {
            return Err(Error::InvalidArgument(format!("profile leaks out of block {k}")));
        }
        Ok(probe)
    }

    /// Same profile and window shape at another Mach number: the window
    /// scales with `δ`.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        let params = self.params.with_delta(delta)?;
        let mut p = self.clone();
        p.t_max = self.t_max * (delta / self.params.delta);
        p.params = params;
        Ok(p)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0) || t > self.t_max {
            return Err(Error::OutsideWindow {
                time: t,
                start: 0.0,
                end: self.t_max,
            });
        }
        Ok(())
    }

    /// `e^{i (γ̄ t/δ) p(D)} f`.
    pub fn evolved(&self, t: f64) -> Result<SpectralField> {
        self.check_time(t)?;
        let s = self.params.phase_time(t);
        let nu = self.params.nu;
        Ok(self
            .profile
            .map_symbol(|w| Complex64::from_polar(1.0, s * dispersion(nu, w.norm()))))
    }
}

/// `‖e^{i(γ̄t/δ)p(D)} f‖_∞ / ‖f‖_1` on the probe's lattice with 2× padding.
pub fn kernel_supnorm(probe: &DispersionProbe, t: f64) -> Result<f64> {
    let u = probe.evolved(t)?;
    let l1 = l1_norm(&probe.profile, 2);
    if l1 == 0.0 {
        return Ok(0.0);
    }
    Ok(sup_norm(&u, 2) / l1)
}

/// Whole-space kernel of a radial profile on a band, by Hankel transform:
/// `u(s, r) = (1/2π) ∫ f̂(ρ) e^{i s p(ρ)} J0(ρ r) ρ dρ`.
#[derive(Debug, Clone)]
pub struct RadialKernel {
    pub band: Band,
    pub nu: f64,
    l1: f64,
}

/// `ρ r` above which only the outgoing Hankel branch is kept.
const OUTGOING_ONLY: f64 = 2000.0;

impl RadialKernel {
    pub fn new(band: Band, nu: f64) -> Self {
        let mut kernel = RadialKernel { band, nu, l1: 0.0 };
        kernel.l1 = kernel.l1_norm();
        kernel
    }

    pub fn for_block(k: i32, nu: f64) -> Self {
        Self::new(Band::plateau(k), nu)
    }

    fn nodes(&self, rate: f64) -> Vec<(f64, f64)> {
        // trapezoid: the integrand vanishes to all orders at both ends
        let n = 64 + (4.0 * self.band.width() * rate).ceil() as usize;
        let h = self.band.width() / n as f64;
        (1..n)
            .map(|i| {
                let rho = self.band.lo + i as f64 * h;
                (rho, h * self.band.symbol(rho) * rho)
            })
            .collect()
    }

    /// `u(s, r)`.
    pub fn value(&self, s: f64, r: f64) -> Complex64 {
        let (lo, hi) = (self.band.lo, self.band.hi);
        let nu = self.nu;
        if lo * r >= OUTGOING_ONLY {
            let slope = |rho: f64| s * rho / dispersion(nu, rho) - r;
            let rate = slope(lo).abs().max(slope(hi).abs());
            let sum: Complex64 = self
                .nodes(rate)
                .iter()
                .map(|&(rho, w)| {
                    let x = rho * r;
                    let (p0, q0) = hankel_pq(x);
                    let amp = w * (2.0 / (PI * x)).sqrt() * 0.5;
                    let phase = s * dispersion(nu, rho) - x + 0.25 * PI;
                    Complex64::new(p0, -q0) * Complex64::from_polar(amp, phase)
                })
                .sum();
            sum / (2.0 * PI)
        } else {
            let rate = s + r;
            let sum: Complex64 = self
                .nodes(rate)
                .iter()
                .map(|&(rho, w)| {
                    Complex64::from_polar(w * libm::j0(rho * r), s * dispersion(nu, rho))
                })
                .sum();
            sum / (2.0 * PI)
        }
    }

    /// `‖f‖_1 = 2π ∫ |u(0, r)| r dr`.
    fn l1_norm(&self) -> f64 {
        let r_max = 400.0 / self.band.width();
        let h = PI / (16.0 * self.band.hi);
        let n = (r_max / h).ceil() as usize;
        let vals: Vec<f64> = (0..=n)
            .into_par_iter()
            .map(|i| {
                let r = i as f64 * h;
                self.value(0.0, r).norm() * r
            })
            .collect();
        let total: f64 = vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[n]);
        2.0 * PI * total * h
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    /// `sup_r |u(s, r)|` over a window around the group-velocity ring.
    pub fn sup(&self, s: f64) -> f64 {
        let group = |rho: f64| rho / dispersion(self.nu, rho);
        let margin = 60.0 / self.band.width();
        let r_lo = (s * group(self.band.lo) - margin).max(0.0);
        let r_hi = s * group(self.band.hi) + margin;
        let step = if self.band.lo * r_lo >= OUTGOING_ONLY {
            0.05 / self.band.width()
        } else {
            PI / (16.0 * self.band.hi)
        };
        let n = ((r_hi - r_lo) / step).ceil() as usize;
        let vals: Vec<f64> = (0..=n)
            .into_par_iter()
            .map(|i| self.value(s, r_lo + i as f64 * step).norm())
            .collect();
        vals.into_iter().fold(0.0, f64::max)
    }

    /// `sup_r |u| / ‖f‖_1` at physical time `t`.
    pub fn supnorm(&self, params: &PhysicalParams, t: f64) -> f64 {
        self.sup(params.phase_time(t)) / self.l1
    }
}

/// Asymptotic `P0`, `Q0` of `J0(x) = (2/(πx))^{1/2} (P0 cos χ - Q0 sin χ)`,
/// `χ = x - π/4`, accurate to about `x^{-6}`.
fn hankel_pq(x: f64) -> (f64, f64) {
    let y = 1.0 / (x * x);
    let p = 1.0 - 9.0 / 128.0 * y + 3675.0 / 32768.0 * y * y;
    let q = (-1.0 / 8.0 + 75.0 / 1024.0 * y - 59535.0 / 262144.0 * y * y) / x;
    (p, q)
}

/// Sample times on `(0, t_max]` clustered towards 0, where the block is
/// still concentrated.
pub fn clustered_times(t_max: f64, samples: usize) -> Vec<f64> {
    (0..=samples)
        .map(|i| {
            let u = i as f64 / samples as f64;
            t_max * u * u
        })
        .collect()
}

/// `(∫ g^q dt)^{1/q}` by the trapezoid rule on arbitrary nodes; `max g`
/// for `q = ∞`.
pub fn time_norm(times: &[f64], values: &[f64], q: f64) -> Result<f64> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::InvalidArgument("need matching time and value samples".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("negative or NaN sample {v}")));
    }
    if q == f64::INFINITY {
        return Ok(values.iter().copied().fold(0.0, f64::max));
    }
    let total: f64 = times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0].powf(q) + v[1].powf(q)))
        .sum();
    Ok(total.powf(1.0 / q))
}

/// One measured Strichartz ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrichartzRecord {
    pub k: i32,
    pub nu: f64,
    pub delta: f64,
    pub q: f64,
    pub r: f64,
    pub t_max: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

fn space_norm(f: &SpectralField, r: f64) -> Result<f64> {
    if r == 2.0 {
        Ok(f.l2_norm())
    } else if r == f64::INFINITY {
        Ok(sup_norm(f, 2))
    } else {
        Err(Error::UnsupportedExponent(r))
    }
}

/// `‖e^{i(γ̄t/δ)p(D)} f‖_{L^q(0,t_max; L^r)}` divided by
/// `2^{2k(1/2-1/r)} (M_k δ)^{1/q} ‖f‖_2`.
pub fn strichartz_ratio(probe: &DispersionProbe, q: f64, r: f64, samples: usize) -> Result<StrichartzRecord> {
    if !admissible(q, r) {
        return Err(Error::InvalidArgument(format!("({q}, {r}) is not admissible")));
    }
    if !(r == 2.0 || r == f64::INFINITY) {
        return Err(Error::UnsupportedExponent(r));
    }
    let times = clustered_times(probe.t_max, samples.max(2));
    let values = times
        .iter()
        .map(|&t| space_norm(&probe.evolved(t)?, r))
        .collect::<Result<Vec<_>>>()?;
    let lhs = time_norm(&times, &values, q)?;
    let p = &probe.params;
    let rhs = 2f64.powf(2.0 * probe.k as f64 * (0.5 - 1.0 / r))
        * (mk(probe.k, p.nu) * p.delta).powf(1.0 / q)
        * probe.profile.l2_norm();
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(StrichartzRecord {
        k: probe.k,
        nu: p.nu,
        delta: p.delta,
        q,
        r,
        t_max: probe.t_max,
        lhs,
        rhs,
        ratio,
    })
}

/// Measure `‖Δ_k e^{-(γ̄t/δ)L} f‖_{L^q_t L^r}` on a 3D grid for each `δ`
/// over the common window `(0, 0.4 L δ_min / γ̄]` and fit the `δ`-exponent.
pub fn verify_3d_block_decay(
    k: i32,
    params: &PhysicalParams,
    q: f64,
    r: f64,
    grid3: &BoxGrid,
    deltas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<ScalingFit> {
    if !admissible(q, r) {
        return Err(Error::InvalidArgument(format!("({q}, {r}) is not admissible")));
    }
    if deltas.len() < 3 {
        return Err(Error::InvalidArgument("window too short for a 3-point fit".into()));
    }
    let eig = EigenSystem3D::new(grid3, params.nu)?;
    let f = dyadic_block(&band_limited(grid3, 4, 0.0, f64::INFINITY, 0.0, 1.0, seed), k);
    let d_min = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let window = wrap_around_time(grid3, &params.with_delta(d_min)?);
    let times = clustered_times(window, samples.max(2));
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let p = params.with_delta(delta)?;
        let values = times
            .iter()
            .map(|&t| space_norm(&eig.propagate(&f, p.phase_time(t))?, r))
            .collect::<Result<Vec<_>>>()?;
        out.push((delta, time_norm(&times, &values, q)?));
    }
    if out.iter().all(|s| s.1 == 0.0) {
        return Ok(ScalingFit {
            samples: out,
            exponent: 0.0,
            prefactor: 0.0,
            residual: 0.0,
        });
    }
    fit_scaling(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn mk_examples() {
        assert_eq!(mk(0, 1.0), 1.0);
        assert_eq!(mk(2, 1.0), 64.0);
        assert_eq!(mk(2, 4.0), 1.0);
        assert_eq!(mk(-3, 1.0), 1.0);
        // for ν < 1 the branch 2^{3k} dips below 1 on negative k
        for nu in [1.0, 2.5, 8.0] {
            for k in -4..6 {
                assert!(mk(k + 1, nu) >= mk(k, nu));
            }
        }
    }

    #[test]
    fn admissible_examples() {
        let inf = f64::INFINITY;
        assert!(admissible(4.0, inf));
        assert!(!admissible(2.0, inf));
        assert!(!admissible(3.0, 2.0));
        assert!(admissible(inf, 2.0));
        assert!(!admissible(1.5, inf));
    }

    #[test]
    fn fit_examples() {
        let f = fit_scaling(&[(0.1, 0.01), (0.2, 0.02), (0.4, 0.04)]).unwrap();
        assert!((f.exponent - 1.0).abs() < 1e-12 && f.residual < 1e-12);
        let f = fit_scaling(&[(0.1, 2.0), (0.2, 2.0), (0.4, 2.0)]).unwrap();
        assert!(f.exponent.abs() < 1e-12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let s: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let x = 0.01 * 1.15f64.powi(i);
                (x, 3.0 * x.sqrt() * (1.0 + 0.01 * rng.random_range(-1.0..1.0)))
            })
            .collect();
        assert!((fit_scaling(&s).unwrap().exponent - 0.5).abs() < 0.02);
        assert!(fit_scaling(&[(0.1, 1.0), (0.2, 0.0), (0.3, 1.0)]).is_err());
        assert!(fit_scaling(&[(0.1, 1.0), (0.2, 1.0)]).is_err());
    }

    #[test]
    fn bessel_asymptotics_match_j0() {
        for x in [200.0, 900.0, 2000.0, 12345.6] {
            let (p, q) = hankel_pq(x);
            let chi = x - 0.25 * PI;
            let approx = (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin());
            assert!((approx - libm::j0(x)).abs() < 1e-13, "x = {x}");
        }
    }

    #[test]
    fn probe_is_inside_its_block() {
        let params = PhysicalParams::new(2.0, 0.1, 1.0).unwrap();
        for k in 0..3 {
            let g = probe_grid(k, 64).unwrap();
            let p = DispersionProbe::new(k, params, &g, None).unwrap();
            assert!(p.profile.l2_norm() > 0.0);
            assert!(kernel_supnorm(&p, p.t_max * 1.01).is_err());
        }
        let g = BoxGrid::square(16, 2.0 * PI).unwrap();
        assert!(DispersionProbe::new(4, params, &g, None).is_err());
    }

    #[test]
    fn delta_rescaling_is_bit_exact() {
        let params = PhysicalParams::new(2.0, 0.01, 1.0).unwrap();
        let g = probe_grid(1, 64).unwrap();
        let p = DispersionProbe::new(1, params, &g, None).unwrap();
        let p2 = p.with_delta(0.02).unwrap();
        for t in [0.0, 0.013, 0.1 * p.t_max, p.t_max] {
            assert_eq!(kernel_supnorm(&p, t).unwrap(), kernel_supnorm(&p2, 2.0 * t).unwrap());
        }
    }

    #[test]
    fn zero_probe_ratio_is_zero() {
        let params = PhysicalParams::new(2.0, 0.1, 1.0).unwrap();
        let g = probe_grid(0, 32).unwrap();
        let mut p = DispersionProbe::new(0, params, &g, None).unwrap();
        p.profile = p.profile.scaled(0.0);
        let rec = strichartz_ratio(&p, 4.0, f64::INFINITY, 8).unwrap();
        assert_eq!(rec.ratio, 0.0);
        assert!(strichartz_ratio(&p, 2.0, f64::INFINITY, 8).is_err());
    }

    #[test]
    fn time_norm_matches_closed_forms() {
        let times = clustered_times(2.0, 400);
        let vals: Vec<f64> = times.iter().map(|t| t.sqrt()).collect();
        // ∫_0^2 t^2 dt = 8/3
        let n = time_norm(&times, &vals, 4.0).unwrap();
        assert!((n.powi(4) - 8.0 / 3.0).abs() < 1e-4);
        assert_eq!(time_norm(&times, &vals, f64::INFINITY).unwrap(), 2f64.sqrt());
    }
}
