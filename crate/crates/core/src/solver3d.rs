//! The 3D perturbation `V = (ϑ, v)` around an `x3`-independent solution of
//! the intermediate system, and reconstruction of the full 3D state.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{partial, SpectralField};
use crate::grid::BoxGrid;
use crate::integrator::{integrate, Schedule, SplitSystem, Trajectory};
use crate::norms::sobolev_norm;
use crate::params::PhysicalParams;
use crate::solver2d::{
    real_parts, solve_intermediate, to_spectral, Intermediate, Run2D, SolverConfig, State2D,
};
use crate::wave::EigenSystem3D;

/// Perturbation state; components are `(ϑ, v1, v2, v3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct State3D {
    pub fields: SpectralField,
    pub time: f64,
}

impl State3D {
    pub fn new(fields: SpectralField, time: f64) -> Result<Self> {
        if fields.grid().dim() != 3 {
            return Err(Error::GridMismatch("3D state needs a 3D grid".into()));
        }
        if fields.components() != 4 {
            return Err(Error::ComponentMismatch {
                expected: 4,
                found: fields.components(),
            });
        }
        Ok(State3D { fields, time })
    }

    pub fn zeros(grid: &BoxGrid) -> Self {
        State3D {
            fields: SpectralField::zeros(*grid, 4),
            time: 0.0,
        }
    }

    pub fn grid(&self) -> &BoxGrid {
        self.fields.grid()
    }

    pub fn theta(&self) -> SpectralField {
        self.fields.select(&[0])
    }

    pub fn v(&self) -> SpectralField {
        self.fields.select(&[1, 2, 3])
    }
}

fn check_horizontal(f2: &BoxGrid, grid3: &BoxGrid) -> Result<BoxGrid> {
    let gh = grid3.horizontal()?;
    if f2.dim() != 2 || f2.lengths() != gh.lengths() {
        return Err(Error::GridMismatch(format!(
            "2D box {:?} does not match the horizontal 3D box {:?}",
            f2.lengths(),
            gh.lengths()
        )));
    }
    for a in 0..2 {
        if gh.n(a) % f2.n(a) != 0 {
            return Err(Error::GridMismatch(format!(
                "2D resolution {} does not divide the 3D resolution {}",
                f2.n(a),
                gh.n(a)
            )));
        }
    }
    Ok(gh)
}

/// Place a 2D field on the `ξ3 = 0` plane of a 3D grid, so the result is
/// constant in `x3` with the same pointwise values.
pub fn extend_2d_to_3d(f2: &SpectralField, grid3: &BoxGrid) -> Result<SpectralField> {
    let gh = check_horizontal(f2.grid(), grid3)?;
    let fine = f2.resampled(&gh)?;
    let n3 = grid3.n(2);
    let mut out = SpectralField::zeros(*grid3, f2.components());
    for c in 0..f2.components() {
        let src = fine.component(c);
        let dst = out.component_mut(c);
        for i in 0..gh.n(0) {
            for j in 0..gh.n(1) {
                dst[grid3.flatten([i, j, 0])] = src[gh.flatten([i, j, 0])] * n3 as f64;
            }
        }
    }
    Ok(out)
}

/// Dense-in-time access to a 2D intermediate solution by cubic Hermite
/// interpolation of stored values and time derivatives.
#[derive(Debug, Clone)]
pub struct ForcingContext {
    grid: BoxGrid,
    t0: f64,
    spacing: f64,
    values: Vec<SpectralField>,
    slopes: Vec<SpectralField>,
}

impl ForcingContext {
    /// Context with a vanishing 2D solution on `[0, t_end]`.
    pub fn zero(grid_h: &BoxGrid, t_end: f64) -> Self {
        let z = SpectralField::zeros(*grid_h, 4);
        ForcingContext {
            grid: *grid_h,
            t0: 0.0,
            spacing: t_end,
            values: vec![z.clone(), z.clone()],
            slopes: vec![z.clone(), z],
        }
    }

    /// Build from a finished 2D run, resampled to the horizontal lattice of
    /// `grid3`.
    pub fn from_run(sys: &Intermediate, run: &Run2D, grid3: &BoxGrid) -> Result<Self> {
        let traj = &run.trajectory;
        if traj.states.len() < 2 {
            return Err(Error::InvalidArgument("forcing needs at least two snapshots".into()));
        }
        let gh = check_horizontal(traj.states[0].grid(), grid3)?;
        let pairs = traj
            .states
            .iter()
            .map(|s| {
                let d = sys.time_derivative(s)?;
                Ok((s.resampled(&gh)?, d.resampled(&gh)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let (values, slopes) = pairs.into_iter().unzip();
        Ok(ForcingContext {
            grid: gh,
            t0: traj.times[0],
            spacing: traj.spacing(),
            values,
            slopes,
        })
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn start(&self) -> f64 {
        self.t0
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.spacing * (self.values.len() - 1) as f64
    }

    /// The 2D state `(a, w1, w2, w3)` at time `t`.
    pub fn at(&self, t: f64) -> Result<SpectralField> {
        let (start, end) = (self.start(), self.end());
        let tol = 1e-9 * self.spacing;
        if t < start - tol || t > end + tol {
            return Err(Error::OutsideWindow { time: t, start, end });
        }
        let x = ((t - start) / self.spacing).clamp(0.0, (self.values.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let s = x - i as f64;
        if s == 0.0 {
            return Ok(self.values[i].clone());
        }
        if s == 1.0 {
            return Ok(self.values[i + 1].clone());
        }
        let h = self.spacing;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let mut out = self.values[i].scaled(h00);
        out.axpy(h * h10, &self.slopes[i]);
        out.axpy(h01, &self.values[i + 1]);
        out.axpy(h * h11, &self.slopes[i + 1]);
        Ok(out)
    }
}

/// Physical-space coefficients of the 2D state used by the coupling terms.
struct Background {
    a: Vec<f64>,
    w: [Vec<f64>; 3],
    grad_a: [Vec<f64>; 2],
    /// `∂_j w_i` for `i = 1..3`, `j = 1, 2`.
    grad_w: [[Vec<f64>; 2]; 3],
}

impl Background {
    fn new(f2: &SpectralField) -> Self {
        let mut list = vec![f2.select(&[0]), f2.select(&[1]), f2.select(&[2]), f2.select(&[3])];
        for c in 0..4 {
            let comp = f2.select(&[c]);
            list.push(partial(&comp, 0));
            list.push(partial(&comp, 1));
        }
        let mut p = real_parts(&list).into_iter();
        let mut next = || p.next().expect("fixed count");
        let a = next();
        let w = [next(), next(), next()];
        let grad_a = [next(), next()];
        let grad_w = [[next(), next()], [next(), next()], [next(), next()]];
        Background { a, w, grad_a, grad_w }
    }
}

/// `-N(V, ∇V) + G(V)` for the given (possibly absent) 2D background.
/// Returns the dealiased tendency when `dealiased` is set.
fn perturbation_rhs(
    f: &SpectralField,
    background: Option<&SpectralField>,
    params: &PhysicalParams,
    dealiased: bool,
) -> SpectralField {
    let grid = *f.grid();
    let gb = params.gamma_bar;
    let mut list = vec![f.select(&[0]), f.select(&[1]), f.select(&[2]), f.select(&[3])];
    for c in 0..4 {
        let comp = f.select(&[c]);
        for axis in 0..3 {
            list.push(partial(&comp, axis));
        }
    }
    let p = real_parts(&list);
    let th = &p[0];
    let v = [&p[1], &p[2], &p[3]];
    // d[c][axis] = ∂_axis of component c (0 = ϑ, 1..3 = v)
    let d = |c: usize, axis: usize| &p[4 + 3 * c + axis];
    let bg = background.map(|b| Background::new(&b.select(&[0, 1, 2, 3])));
    let nh = grid.n(2);
    let n = grid.len();

    let mut out = vec![vec![0.0; n]; 4];
    let (o0, rest) = out.split_at_mut(1);
    let (o1, rest) = rest.split_at_mut(1);
    let (o2, o3) = rest.split_at_mut(1);
    o0[0]
        .par_iter_mut()
        .zip(o1[0].par_iter_mut())
        .zip(o2[0].par_iter_mut())
        .zip(o3[0].par_iter_mut())
        .enumerate()
        .for_each(|(i, (((r0, r1), r2), r3))| {
            let vi = [v[0][i], v[1][i], v[2][i]];
            let div_v = d(1, 0)[i] + d(2, 1)[i] + d(3, 2)[i];
            let t = th[i];
            let adv = |c: usize, u: &[f64; 3]| u[0] * d(c, 0)[i] + u[1] * d(c, 1)[i] + u[2] * d(c, 2)[i];
            let mut r = [
                -(adv(0, &vi) + gb * t * div_v),
                -(adv(1, &vi) + gb * t * d(0, 0)[i]),
                -(adv(2, &vi) + gb * t * d(0, 1)[i]),
                -(adv(3, &vi) + gb * t * d(0, 2)[i]),
            ];
            if let Some(b) = &bg {
                let h = i / nh;
                let w = [b.w[0][h], b.w[1][h], b.w[2][h]];
                let a = b.a[h];
                let ga = [b.grad_a[0][h], b.grad_a[1][h], 0.0];
                let div_w = b.grad_w[0][0][h] + b.grad_w[1][1][h];
                let v_grad_a = vi[0] * ga[0] + vi[1] * ga[1];
                r[0] -= adv(0, &w) + gb * a * div_v + v_grad_a + gb * t * div_w;
                for k in 0..3 {
                    let v_grad_w = vi[0] * b.grad_w[k][0][h] + vi[1] * b.grad_w[k][1][h];
                    r[k + 1] -= adv(k + 1, &w) + gb * a * d(0, k)[i] + v_grad_w + gb * t * ga[k];
                }
            }
            *r0 = r[0];
            *r1 = r[1];
            *r2 = r[2];
            *r3 = r[3];
        });
    to_spectral(&grid, out, dealiased)
}

/// `-N(V, ∇V) = -(v·∇ϑ + γ̄ϑ div v, (v·∇)v + γ̄ϑ∇ϑ)`, dealiased.
pub fn nonlinear_rhs_3d(v: &State3D, params: &PhysicalParams) -> SpectralField {
    perturbation_rhs(&v.fields, None, params, true)
}

/// The coupling `G(V)` with the 2D state of `ctx` at time `t`, extended
/// constantly in `x3`.
pub fn coupling_rhs(
    v: &State3D,
    ctx: &ForcingContext,
    t: f64,
    params: &PhysicalParams,
) -> Result<SpectralField> {
    let bg = ctx.at(t)?;
    check_context(ctx, v.grid())?;
    let full = perturbation_rhs(&v.fields, Some(&bg), params, true);
    Ok(full.sub(&nonlinear_rhs_3d(v, params)))
}

fn check_context(ctx: &ForcingContext, grid3: &BoxGrid) -> Result<()> {
    if ctx.grid() != &grid3.horizontal()? {
        return Err(Error::GridMismatch(
            "forcing context is not on the horizontal 3D lattice".into(),
        ));
    }
    Ok(())
}

/// The perturbation system as an integrating-factor problem.
pub struct Perturbed {
    pub params: PhysicalParams,
    pub eig: Arc<EigenSystem3D>,
    pub context: Arc<ForcingContext>,
    pub nonlinear: bool,
}

impl Perturbed {
    pub fn new(
        grid: &BoxGrid,
        params: PhysicalParams,
        context: Arc<ForcingContext>,
    ) -> Result<Self> {
        check_context(&context, grid)?;
        Ok(Perturbed {
            params,
            eig: Arc::new(EigenSystem3D::new(grid, params.nu)?),
            context,
            nonlinear: true,
        })
    }

    pub fn with_eigensystem(
        eig: Arc<EigenSystem3D>,
        params: PhysicalParams,
        context: Arc<ForcingContext>,
    ) -> Result<Self> {
        check_context(&context, eig.grid())?;
        Ok(Perturbed {
            params,
            eig,
            context,
            nonlinear: true,
        })
    }
}

impl SplitSystem for Perturbed {
    fn propagate(&self, f: &SpectralField, tau: f64) -> Result<SpectralField> {
        self.eig.propagate(f, self.params.phase_time(tau))
    }

    fn rhs(&self, t: f64, f: &SpectralField) -> Result<SpectralField> {
        let bg = self.context.at(t)?;
        if !self.nonlinear {
            // linear in V: drop -N but keep the coupling
            let full = perturbation_rhs(f, Some(&bg), &self.params, true);
            return Ok(full.sub(&perturbation_rhs(f, None, &self.params, true)));
        }
        Ok(perturbation_rhs(f, Some(&bg), &self.params, true))
    }
}

/// A finished perturbation run.
#[derive(Debug, Clone)]
pub struct Run3D {
    pub trajectory: Trajectory,
    pub schedule: Schedule,
    pub initial_norm: f64,
    pub sup_norm: f64,
}

/// Integrate the perturbation system with a fixed step `config.dt`; the
/// advective CFL number of `v + w` is checked after every step.
pub fn solve_perturbed(sys: &Perturbed, v0: &State3D, config: &SolverConfig) -> Result<Run3D> {
    let schedule = Schedule::covering(config.t_final, config.dt, config.snapshot_stride)?;
    let t0 = v0.time;
    if t0 < sys.context.start() - 1e-12 || t0 + config.t_final > sys.context.end() + 1e-9 * schedule.dt {
        return Err(Error::OutsideWindow {
            time: t0 + config.t_final,
            start: sys.context.start(),
            end: sys.context.end(),
        });
    }
    let dx = v0.grid().min_spacing();
    let trajectory = integrate(sys, &v0.fields, t0, &schedule, |t, f| {
        let bg = sys.context.at(t)?;
        let speed = crate::solver2d::max_speed(f, 1) + crate::solver2d::max_speed(&bg, 1);
        let vertical = f.select(&[3]).real_component(0).iter().fold(0.0f64, |m, x| m.max(x.abs()))
            + bg.select(&[3]).real_component(0).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let cfl = schedule.dt * (speed + vertical) / dx;
        if cfl > 1.0 {
            return Err(Error::CflViolation { time: t, cfl });
        }
        Ok(())
    })?;
    let initial_norm = sobolev_norm(&v0.fields, config.norm_index);
    let sup_norm = trajectory
        .states
        .iter()
        .map(|s| sobolev_norm(s, config.norm_index))
        .fold(0.0, f64::max);
    Ok(Run3D {
        trajectory,
        schedule,
        initial_norm,
        sup_norm,
    })
}

/// Result of a coupled 2D + 3D run.
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub two_d: Run2D,
    pub three_d: Run3D,
}

/// Run the intermediate system on the horizontal lattice of `grid3` with a
/// quarter of the 3D step, then the perturbation system forced by it.
pub fn solve_coupled(
    params: PhysicalParams,
    w0: &State2D,
    v0: &State3D,
    config: &SolverConfig,
) -> Result<CoupledRun> {
    let grid3 = *v0.grid();
    let gh = check_horizontal(w0.grid(), &grid3)?;
    let w0 = State2D::new(w0.fields.resampled(&gh)?, w0.time)?;
    let sys2 = Intermediate::new(&gh, params)?;
    let schedule3 = Schedule::covering(config.t_final, config.dt, config.snapshot_stride)?;
    let config2 = SolverConfig {
        dt: schedule3.dt / 4.0,
        snapshot_stride: 1,
        cfl: f64::INFINITY,
        ..*config
    };
    let two_d = solve_intermediate(&sys2, &w0, &config2)?;
    let ctx = Arc::new(ForcingContext::from_run(&sys2, &two_d, &grid3)?);
    let sys3 = Perturbed::new(&grid3, params, ctx)?;
    let config3 = SolverConfig {
        dt: schedule3.dt,
        ..*config
    };
    let three_d = solve_perturbed(&sys3, v0, &config3)?;
    Ok(CoupledRun { two_d, three_d })
}

/// `U = (a, w)(x_h) + (ϑ, v)(x)`.
pub fn reconstruct_full(two_d: &State2D, three_d: &State3D, dt: f64) -> Result<SpectralField> {
    if (two_d.time - three_d.time).abs() > 0.5 * dt {
        return Err(Error::InvalidArgument(format!(
            "2D state at t = {} and 3D state at t = {} do not match",
            two_d.time, three_d.time
        )));
    }
    Ok(extend_2d_to_3d(&two_d.fields, three_d.grid())?.add(&three_d.fields))
}

/// `ρ = (γ̄ (1 + δ b))^{1/γ̄}` evaluated pointwise.
pub fn reconstruct_density(b: &SpectralField, params: &PhysicalParams) -> Result<SpectralField> {
    let grid = *b.grid();
    let values = b.real_component(0);
    let (worst, min) = values
        .iter()
        .enumerate()
        .map(|(i, v)| (i, 1.0 + params.delta * v))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    if !(min > 0.0) {
        return Err(Error::NonPositiveDensity {
            value: min,
            position: grid.unflatten(worst),
        });
    }
    let gb = params.gamma_bar;
    let rho: Vec<f64> = values
        .par_iter()
        .map(|v| (gb * (1.0 + params.delta * v)).powf(1.0 / gb))
        .collect();
    Ok(to_spectral(&grid, vec![rho], false))
}

/// Full symbol of the linear 3D operator applied to `f`, scaled by `γ̄/δ`.
pub fn linear_3d(eig: &EigenSystem3D, f: &SpectralField, params: &PhysicalParams) -> Result<SpectralField> {
    Ok(eig.apply_symbol(f)?.scaled(params.gamma_bar / params.delta))
}

/// `∂_t U` of the full compressible system in the scaled variables,
/// `-(γ̄/δ) L U - Q(U)`.
pub fn full_time_derivative(
    eig: &EigenSystem3D,
    u: &SpectralField,
    params: &PhysicalParams,
) -> Result<SpectralField> {
    let lin = linear_3d(eig, u, params)?;
    Ok(perturbation_rhs(u, None, params, true).sub(&lin))
}

/// Pointwise values of a constant `c` placed on every component.
pub fn constant_field(grid: &BoxGrid, comps: usize, c: f64) -> SpectralField {
    let mut f = SpectralField::zeros(*grid, comps);
    for k in 0..comps {
        f.component_mut(k)[0] = Complex64::new(c * grid.len() as f64, 0.0);
    }
    f
}
