//! The 2D intermediate system: rotating compressible Euler for
//! `W = (a, w1, w2)` plus passive transport of `w3`, integrated with the
//! exact wave propagator as integrating factor.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{dealias, partial, SpectralField};
use crate::grid::BoxGrid;
use crate::integrator::{integrate, if_rk4_step, Schedule, SplitSystem, Trajectory};
use crate::norms::sobolev_norm;
use crate::params::PhysicalParams;
use crate::wave::EigenSystem2D;

/// Snapshot of the intermediate system; components are `(a, w1, w2, w3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct State2D {
    pub fields: SpectralField,
    pub time: f64,
}

impl State2D {
    pub fn new(fields: SpectralField, time: f64) -> Result<Self> {
        if fields.grid().dim() != 2 {
            return Err(Error::GridMismatch("2D state needs a 2D grid".into()));
        }
        if fields.components() != 4 {
            return Err(Error::ComponentMismatch {
                expected: 4,
                found: fields.components(),
            });
        }
        Ok(State2D { fields, time })
    }

    pub fn from_parts(a: &SpectralField, wh: &SpectralField, w3: &SpectralField) -> Result<Self> {
        Self::new(SpectralField::stack(&[a, wh, w3])?, 0.0)
    }

    pub fn zeros(grid: &BoxGrid) -> Self {
        State2D {
            fields: SpectralField::zeros(*grid, 4),
            time: 0.0,
        }
    }

    pub fn grid(&self) -> &BoxGrid {
        self.fields.grid()
    }

    pub fn a(&self) -> SpectralField {
        self.fields.select(&[0])
    }

    pub fn w_h(&self) -> SpectralField {
        self.fields.select(&[1, 2])
    }

    pub fn w3(&self) -> SpectralField {
        self.fields.select(&[3])
    }

    /// `W = (a, w1, w2)`.
    pub fn wave_part(&self) -> SpectralField {
        self.fields.select(&[0, 1, 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Largest step; the run uses `min(dt, cfl * dx / max|w|)`.
    pub dt: f64,
    pub t_final: f64,
    pub dealias: bool,
    pub snapshot_stride: usize,
    pub cfl: f64,
    /// Sobolev index of the reported sup-in-time norm.
    pub norm_index: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 1e-2,
            t_final: 1.0,
            dealias: true,
            snapshot_stride: 1,
            cfl: 0.5,
            norm_index: 3.0,
        }
    }
}

/// Physical values of the first component of each (real) field. Fields are
/// transformed two at a time as `f + i g`.
pub fn real_parts(fields: &[SpectralField]) -> Vec<Vec<f64>> {
    let grid = *fields[0].grid();
    fields
        .par_chunks(2)
        .flat_map_iter(|pair| {
            let mut z = pair[0].component(0).to_vec();
            if let Some(g) = pair.get(1) {
                z.iter_mut()
                    .zip(g.component(0))
                    .for_each(|(a, b)| *a += Complex64::new(-b.im, b.re));
            }
            crate::fft::backward(&grid, &mut z);
            let re = z.iter().map(|v| v.re).collect::<Vec<f64>>();
            let im = (pair.len() == 2).then(|| z.iter().map(|v| v.im).collect::<Vec<f64>>());
            std::iter::once(re).chain(im)
        })
        .collect()
}

/// Spectral field from real physical buffers, two transforms per pair.
pub fn to_spectral(grid: &BoxGrid, values: Vec<Vec<f64>>, dealiased: bool) -> SpectralField {
    let conj = grid.conjugates();
    let comps: Vec<Vec<Complex64>> = values
        .par_chunks(2)
        .flat_map_iter(|pair| {
            let mut z: Vec<Complex64> = match pair.get(1) {
                Some(b) => pair[0].iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect(),
                None => pair[0].iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            };
            crate::fft::forward(grid, &mut z);
            if pair.len() == 1 {
                return vec![z].into_iter();
            }
            let (f, g): (Vec<Complex64>, Vec<Complex64>) = (0..z.len())
                .map(|k| {
                    let (p, m) = (z[k], z[conj[k]].conj());
                    ((p + m) * 0.5, (p - m) * Complex64::new(0.0, -0.5))
                })
                .unzip();
            vec![f, g].into_iter()
        })
        .collect();
    let f = SpectralField::from_components(*grid, comps).expect("buffers sized from grid");
    if dealiased {
        dealias(&f)
    } else {
        f
    }
}

/// `-Ñ(W, ∇W)` and the `w3` transport term, for a field with components
/// `(a, w1, w2[, w3])`. Products are formed in physical space.
pub fn rhs_2d(f: &SpectralField, params: &PhysicalParams, dealiased: bool) -> SpectralField {
    let grid = *f.grid();
    let gb = params.gamma_bar;
    let with_w3 = f.components() > 3;
    let mut spectral = vec![f.select(&[0]), f.select(&[1]), f.select(&[2])];
    for c in 0..3 {
        let comp = f.select(&[c]);
        spectral.push(partial(&comp, 0));
        spectral.push(partial(&comp, 1));
    }
    if with_w3 {
        let w3 = f.select(&[3]);
        spectral.push(partial(&w3, 0));
        spectral.push(partial(&w3, 1));
    }
    let p = real_parts(&spectral);
    let (a, w1, w2) = (&p[0], &p[1], &p[2]);
    let (a1, a2, w11, w12, w21, w22) = (&p[3], &p[4], &p[5], &p[6], &p[7], &p[8]);
    let n = grid.len();
    let mut out = vec![vec![0.0; n]; if with_w3 { 4 } else { 3 }];
    {
        let (ra, rest) = out.split_at_mut(1);
        let (rw1, rest) = rest.split_at_mut(1);
        let (rw2, rest) = rest.split_at_mut(1);
        ra[0]
            .par_iter_mut()
            .zip(rw1[0].par_iter_mut())
            .zip(rw2[0].par_iter_mut())
            .enumerate()
            .for_each(|(i, ((ra, rw1), rw2))| {
                let div = w11[i] + w22[i];
                *ra = -(w1[i] * a1[i] + w2[i] * a2[i] + gb * a[i] * div);
                *rw1 = -(w1[i] * w11[i] + w2[i] * w12[i] + gb * a[i] * a1[i]);
                *rw2 = -(w1[i] * w21[i] + w2[i] * w22[i] + gb * a[i] * a2[i]);
            });
        if with_w3 {
            let (w31, w32) = (&p[9], &p[10]);
            rest[0].par_iter_mut().enumerate().for_each(|(i, r)| {
                *r = -(w1[i] * w31[i] + w2[i] * w32[i]);
            });
        }
    }
    to_spectral(&grid, out, dealiased)
}

/// `-Ñ(W, ∇W)` for `W = (a, w1, w2)`, dealiased.
pub fn nonlinear_rhs_2d(w: &SpectralField, params: &PhysicalParams) -> SpectralField {
    rhs_2d(&w.select(&[0, 1, 2]), params, true)
}

/// Largest pointwise speed `|w_h|` of a field whose components `first`,
/// `first + 1` are the horizontal velocity.
pub fn max_speed(f: &SpectralField, first: usize) -> f64 {
    let p = real_parts(&[f.select(&[first]), f.select(&[first + 1])]);
    p[0].iter()
        .zip(&p[1])
        .map(|(u, v)| (u * u + v * v).sqrt())
        .fold(0.0, f64::max)
}

/// One RK4 step of `∂_t s = -w_h·∇s` with frozen velocity.
pub fn advect_scalar(s: &SpectralField, w_h: &SpectralField, dt: f64) -> Result<SpectralField> {
    if s.grid() != w_h.grid() {
        return Err(Error::GridMismatch("scalar and velocity grids differ".into()));
    }
    let vel = real_parts(&[w_h.select(&[0]), w_h.select(&[1])]);
    let grid = *s.grid();
    let rhs = |f: &SpectralField| -> SpectralField {
        let d = real_parts(&[partial(f, 0), partial(f, 1)]);
        let vals: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|i| -(vel[0][i] * d[0][i] + vel[1][i] * d[1][i]))
            .collect();
        to_spectral(&grid, vec![vals], true)
    };
    let k1 = rhs(s);
    let k2 = rhs(&s.plus_scaled(0.5 * dt, &k1));
    let k3 = rhs(&s.plus_scaled(0.5 * dt, &k2));
    let k4 = rhs(&s.plus_scaled(dt, &k3));
    let mut out = s.clone();
    out.axpy(dt / 6.0, &k1);
    out.axpy(dt / 3.0, &k2);
    out.axpy(dt / 3.0, &k3);
    out.axpy(dt / 6.0, &k4);
    Ok(out)
}

/// The intermediate system as an integrating-factor problem.
pub struct Intermediate {
    pub params: PhysicalParams,
    pub eig: Arc<EigenSystem2D>,
    pub nonlinear: bool,
    pub dealias: bool,
}

impl Intermediate {
    pub fn new(grid: &BoxGrid, params: PhysicalParams) -> Result<Self> {
        Ok(Intermediate {
            params,
            eig: Arc::new(EigenSystem2D::new(grid, params.nu)?),
            nonlinear: true,
            dealias: true,
        })
    }

    pub fn with_eigensystem(eig: Arc<EigenSystem2D>, params: PhysicalParams) -> Result<Self> {
        if (eig.nu() - params.nu).abs() > 0.0 {
            return Err(Error::InvalidArgument("eigensystem built for another nu".into()));
        }
        Ok(Intermediate {
            params,
            eig,
            nonlinear: true,
            dealias: true,
        })
    }

    /// Full time derivative `-(γ̄/δ) A W - Ñ` (and `-w·∇w3`).
    pub fn time_derivative(&self, f: &SpectralField) -> Result<SpectralField> {
        let lin = self.eig.apply_symbol(f)?;
        let mut out = self.rhs(0.0, f)?;
        let scale = self.params.gamma_bar / self.params.delta;
        for c in 0..3 {
            let l = lin.component(c);
            for (o, v) in out.component_mut(c).iter_mut().zip(l) {
                *o -= v * scale;
            }
        }
        Ok(out)
    }
}

impl SplitSystem for Intermediate {
    fn propagate(&self, f: &SpectralField, tau: f64) -> Result<SpectralField> {
        self.eig.propagate(f, self.params.phase_time(tau))
    }

    fn rhs(&self, _t: f64, f: &SpectralField) -> Result<SpectralField> {
        if !self.nonlinear {
            return Ok(SpectralField::zeros(*f.grid(), f.components()));
        }
        Ok(rhs_2d(f, &self.params, self.dealias))
    }
}

/// One integrating-factor RK4 step of the intermediate system.
pub fn step_if_rk4_2d(sys: &Intermediate, state: &State2D, dt: f64) -> Result<State2D> {
    let next = if_rk4_step(sys, state.time, &state.fields, dt)?;
    if !next.is_finite() {
        return Err(Error::NonFinite {
            time: state.time + dt,
        });
    }
    State2D::new(next, state.time + dt)
}

/// A finished run of the intermediate system.
#[derive(Debug, Clone)]
pub struct Run2D {
    pub trajectory: Trajectory,
    pub schedule: Schedule,
    /// `H^{norm_index}` norm of the initial data.
    pub initial_norm: f64,
    /// Largest `H^{norm_index}` norm over the stored snapshots.
    pub sup_norm: f64,
}

impl Run2D {
    pub fn states(&self) -> Vec<State2D> {
        self.trajectory
            .times
            .iter()
            .zip(&self.trajectory.states)
            .map(|(&t, f)| State2D {
                fields: f.clone(),
                time: t,
            })
            .collect()
    }
}

/// Step size honouring both the configured `dt` and the advective CFL bound.
pub fn cfl_step(f: &SpectralField, first_velocity: usize, dt: f64, cfl: f64) -> f64 {
    let speed = max_speed(f, first_velocity);
    if speed > 0.0 {
        dt.min(cfl * f.grid().min_spacing() / speed)
    } else {
        dt
    }
}

/// Integrate the intermediate system from `w0` up to `config.t_final`.
pub fn solve_intermediate(
    sys: &Intermediate,
    w0: &State2D,
    config: &SolverConfig,
) -> Result<Run2D> {
    if w0.grid() != sys.eig.grid() {
        return Err(Error::GridMismatch("initial data and eigensystem grids differ".into()));
    }
    let dt = cfl_step(&w0.fields, 1, config.dt, config.cfl);
    let schedule = Schedule::covering(config.t_final, dt, config.snapshot_stride)?;
    let dx = w0.grid().min_spacing();
    let trajectory = integrate(sys, &w0.fields, w0.time, &schedule, |t, f| {
        let cfl = schedule.dt * max_speed(f, 1) / dx;
        if cfl > 1.0 {
            return Err(Error::CflViolation { time: t, cfl });
        }
        Ok(())
    })?;
    let initial_norm = sobolev_norm(&w0.fields, config.norm_index);
    let sup_norm = trajectory
        .states
        .iter()
        .map(|s| sobolev_norm(s, config.norm_index))
        .fold(0.0, f64::max);
    Ok(Run2D {
        trajectory,
        schedule,
        initial_norm,
        sup_norm,
    })
}

/// Largest imaginary part of the physical fields relative to their largest
/// magnitude.
pub fn imaginary_defect(f: &SpectralField) -> f64 {
    let phys = f.to_physical();
    let mag = phys
        .iter()
        .flat_map(|c| c.iter())
        .map(|v: &Complex64| v.norm())
        .fold(0.0, f64::max);
    let im = phys
        .iter()
        .flat_map(|c| c.iter())
        .map(|v| v.im.abs())
        .fold(0.0, f64::max);
    if mag > 0.0 {
        im / mag
    } else {
        im
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;
    use crate::field::perp_gradient;
    use std::f64::consts::PI;

    fn params(delta: f64) -> PhysicalParams {
        PhysicalParams::new(2.0, delta, 1.0).unwrap()
    }

    #[test]
    fn rhs_vanishes_on_trivial_states() {
        let g = BoxGrid::square(16, 2.0 * PI).unwrap();
        let p = params(0.1);
        let z = SpectralField::zeros(g, 3);
        assert_eq!(nonlinear_rhs_2d(&z, &p).max_abs(), 0.0);
        let a = SpectralField::from_fn(g, 1, |_, _| 0.7);
        let w = SpectralField::zeros(g, 2);
        let f = SpectralField::stack(&[&a, &w]).unwrap();
        assert!(nonlinear_rhs_2d(&f, &p).max_abs() < 1e-12);
    }

    #[test]
    fn rhs_single_mode_pressure_term() {
        // a = cos(κ x1), w = 0: only -γ̄ a ∂1 a = γ̄ κ cos sin = (γ̄ κ / 2) sin(2κ x1)
        let l = 4.0 * PI;
        let g = BoxGrid::square(32, l).unwrap();
        let kappa = 2.0 * PI / l;
        let p = params(0.1);
        let a = SpectralField::from_fn(g, 1, |x, _| (kappa * x[0]).cos());
        let f = SpectralField::stack(&[&a, &SpectralField::zeros(g, 2)]).unwrap();
        let out = nonlinear_rhs_2d(&f, &p);
        let gb = p.gamma_bar;
        let expect = SpectralField::from_fn(g, 3, |x, c| {
            if c == 1 {
                0.5 * gb * kappa * (2.0 * kappa * x[0]).sin()
            } else {
                0.0
            }
        });
        assert!(out.sub(&expect).max_abs() < 1e-10 * g.len() as f64);
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = BoxGrid::square(16, 2.0 * PI).unwrap();
        let sys = Intermediate::new(&g, params(0.05)).unwrap();
        let s = step_if_rk4_2d(&sys, &State2D::zeros(&g), 0.1).unwrap();
        assert_eq!(s.fields.max_abs(), 0.0);
    }

    #[test]
    fn linear_step_matches_propagator() {
        let g = BoxGrid::square(32, 8.0 * PI).unwrap();
        for delta in [0.1, 1e-2, 1e-3] {
            let mut sys = Intermediate::new(&g, params(delta)).unwrap();
            sys.nonlinear = false;
            let w0 = data::band_limited(&g, 4, 0.0, 3.0, 0.0, 1.0, 3);
            let state = State2D::new(w0.clone(), 0.0).unwrap();
            let dt = 0.037;
            let stepped = step_if_rk4_2d(&sys, &state, dt).unwrap();
            let exact = sys.eig.propagate(&w0, sys.params.phase_time(dt)).unwrap();
            assert!(stepped.fields.sub(&exact).l2_norm() <= 1e-13 * w0.l2_norm());
        }
    }

    #[test]
    fn advect_constant_and_shift() {
        let l = 2.0 * PI;
        let g = BoxGrid::square(32, l).unwrap();
        let c = SpectralField::from_fn(g, 1, |_, _| 1.3);
        let w = SpectralField::from_fn(g, 2, |x, k| if k == 0 { x[1].sin() } else { 0.4 });
        let out = advect_scalar(&c, &w, 0.1).unwrap();
        assert!(out.sub(&c).max_abs() < 1e-10);

        // uniform drift: exact solution is a shift, e^{-i ξ1 c t} in Fourier space
        let speed = 0.8;
        let s0 = SpectralField::from_fn(g, 1, |x, _| (x[0]).sin() + 0.5 * (2.0 * x[0] + x[1]).cos());
        let w = SpectralField::from_fn(g, 2, |_, k| if k == 0 { speed } else { 0.0 });
        let dt = 1e-3;
        let mut s = s0.clone();
        for _ in 0..1000 {
            s = advect_scalar(&s, &w, dt).unwrap();
        }
        let exact = s0.map_symbol(|k| Complex64::from_polar(1.0, -k.xi[0] * speed * 1.0));
        assert!(s.sub(&exact).l2_norm() <= 1e-8 * s0.l2_norm());
    }

    #[test]
    fn advect_conserves_l2_for_solenoidal_flow() {
        let g = BoxGrid::square(32, 2.0 * PI).unwrap();
        let psi = SpectralField::from_fn(g, 1, |x, _| 0.3 * (x[0]).sin() * (x[1]).cos());
        let w = perp_gradient(&psi);
        let s0 = SpectralField::from_fn(g, 1, |x, _| (-((x[0] - 3.0).powi(2) + (x[1] - 3.0).powi(2))).exp());
        let s0 = dealias(&s0);
        let mut s = s0.clone();
        for _ in 0..100 {
            s = advect_scalar(&s, &w, 0.01).unwrap();
        }
        assert!((s.l2_norm() - s0.l2_norm()).abs() <= 1e-6 * s0.l2_norm());
    }
}
