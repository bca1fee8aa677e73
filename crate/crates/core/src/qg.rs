//! The quasi-geostrophic limit: potential vorticity transported by the
//! geostrophic velocity recovered from it, plus transport of `u3`.

use crate::error::{Error, Result};
use crate::field::{curl_h, dealias, partial, perp_gradient, SpectralField};
use crate::grid::BoxGrid;
use crate::integrator::{integrate, Schedule, SplitSystem, Trajectory};
use crate::solver2d::{cfl_step, real_parts, to_spectral};

use num_complex::Complex64;
use rayon::prelude::*;

/// Limit state; components are `(q, u3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QGState {
    pub fields: SpectralField,
    pub time: f64,
}

impl QGState {
    pub fn new(fields: SpectralField, time: f64) -> Result<Self> {
        if fields.grid().dim() != 2 {
            return Err(Error::GridMismatch("QG state needs a 2D grid".into()));
        }
        if fields.components() != 2 {
            return Err(Error::ComponentMismatch {
                expected: 2,
                found: fields.components(),
            });
        }
        Ok(QGState { fields, time })
    }

    pub fn q(&self) -> SpectralField {
        self.fields.select(&[0])
    }

    pub fn u3(&self) -> SpectralField {
        self.fields.select(&[1])
    }

    /// `(b, u_h)` recovered from the PV.
    pub fn diagnostics(&self, nu: f64) -> (SpectralField, SpectralField) {
        invert_pv(&self.q(), nu)
    }
}

/// Limit initial state from data: `q = curl u_h - ν b`, `u3` unchanged.
pub fn init_from_data(
    b0: &SpectralField,
    uh0: &SpectralField,
    u30: &SpectralField,
    nu: f64,
) -> Result<QGState> {
    b0.check_same_shape(u30)?;
    if uh0.grid() != b0.grid() || uh0.components() != 2 {
        return Err(Error::InvalidArgument("horizontal velocity must have 2 components on the same grid".into()));
    }
    let q = curl_h(uh0, 0).plus_scaled(-nu, b0);
    QGState::new(SpectralField::stack(&[&q, u30])?, 0.0)
}

/// `b̂ = -ν q̂ / (ν² + |η|²)`, `u_h = ∇^⊥ b / ν`.
pub fn invert_pv(q: &SpectralField, nu: f64) -> (SpectralField, SpectralField) {
    let b = q
        .select(&[0])
        .map_symbol(|k| Complex64::new(-nu / (nu * nu + k.norm_sq()), 0.0));
    let uh = perp_gradient(&b).scaled(1.0 / nu);
    (b, uh)
}

/// The limit system as a `SplitSystem` with trivial linear part.
#[derive(Debug, Clone, Copy)]
pub struct QuasiGeostrophic {
    pub nu: f64,
}

impl QuasiGeostrophic {
    /// `-u_h·∇(q, u3)` with `u_h` inverted from `q`.
    pub fn tendency(&self, f: &SpectralField) -> SpectralField {
        let grid = *f.grid();
        let (_, uh) = invert_pv(f, self.nu);
        let q = f.select(&[0]);
        let u3 = f.select(&[1]);
        let p = real_parts(&[
            uh.select(&[0]),
            uh.select(&[1]),
            partial(&q, 0),
            partial(&q, 1),
            partial(&u3, 0),
            partial(&u3, 1),
        ]);
        let n = grid.len();
        let rq: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| -(p[0][i] * p[2][i] + p[1][i] * p[3][i]))
            .collect();
        let ru: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| -(p[0][i] * p[4][i] + p[1][i] * p[5][i]))
            .collect();
        to_spectral(&grid, vec![rq, ru], true)
    }
}

impl SplitSystem for QuasiGeostrophic {
    fn propagate(&self, f: &SpectralField, _tau: f64) -> Result<SpectralField> {
        Ok(f.clone())
    }

    fn rhs(&self, _t: f64, f: &SpectralField) -> Result<SpectralField> {
        Ok(self.tendency(f))
    }
}

/// One RK4 step; `u_h` is refreshed from `q` at every stage.
pub fn step_qg(state: &QGState, dt: f64, nu: f64) -> Result<QGState> {
    let sys = QuasiGeostrophic { nu };
    let next = crate::integrator::if_rk4_step(&sys, state.time, &state.fields, dt)?;
    if !next.is_finite() {
        return Err(Error::NonFinite {
            time: state.time + dt,
        });
    }
    QGState::new(next, state.time + dt)
}

/// Velocity field `(u1, u2)` of a QG state packed for CFL estimates.
fn velocity(f: &SpectralField, nu: f64) -> SpectralField {
    invert_pv(f, nu).1
}

/// Integrate the limit system to `t_final` with steps no larger than `dt`
/// and the advective CFL bound.
pub fn solve(
    q0: &QGState,
    nu: f64,
    t_final: f64,
    dt: f64,
    cfl: f64,
    stride: usize,
) -> Result<(Trajectory, Schedule)> {
    let sys = QuasiGeostrophic { nu };
    let init = SpectralField::stack(&[&dealias(&q0.q()), &dealias(&q0.u3())])?;
    let dt = cfl_step(&velocity(&init, nu), 0, dt, cfl);
    let schedule = Schedule::covering(t_final, dt, stride)?;
    let dx = init.grid().min_spacing();
    let traj = integrate(&sys, &init, q0.time, &schedule, |t, f| {
        let c = schedule.dt * crate::solver2d::max_speed(&velocity(f, nu), 0) / dx;
        if c > 1.0 {
            return Err(Error::CflViolation { time: t, cfl: c });
        }
        Ok(())
    })?;
    Ok((traj, schedule))
}

/// Largest `|q|` on the grid.
pub fn max_pv(state: &QGState) -> f64 {
    state
        .q()
        .real_component(0)
        .iter()
        .fold(0.0, |m, v| m.max(v.abs()))
}

/// Residual `‖ν u_h^⊥ + ∇b‖₂`.
pub fn balance_residual(b: &SpectralField, uh: &SpectralField, nu: f64) -> f64 {
    let grad = crate::field::gradient(b);
    let perp = SpectralField::stack(&[&uh.select(&[1]).scaled(-nu), &uh.select(&[0]).scaled(nu)])
        .expect("same grid");
    perp.add(&grad).l2_norm()
}

/// A radially symmetric PV patch centred in the box.
pub fn radial_vortex(grid: &BoxGrid, amplitude: f64, width: f64) -> SpectralField {
    let c = [0.5 * grid.length(0), 0.5 * grid.length(1)];
    dealias(&SpectralField::from_fn(*grid, 1, move |x, _| {
        let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
        amplitude * (-r2 / (2.0 * width * width)).exp()
    }))
}
