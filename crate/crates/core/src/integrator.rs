//! Integrating-factor Runge–Kutta stepping.
//!
//! For `u' = -K u + R(t, u)` with an exactly computable flow `E(τ) = e^{-τK}`
//! the step works on `z(t) = E(t_n - t) u(t)`, so the linear part never
//! restricts the step size and a purely linear problem is advanced exactly.

use crate::error::{Error, Result};
use crate::field::SpectralField;

pub trait SplitSystem {
    /// Exact linear flow over physical time `tau`.
    fn propagate(&self, f: &SpectralField, tau: f64) -> Result<SpectralField>;

    /// Nonlinear (non-stiff) right-hand side.
    fn rhs(&self, t: f64, f: &SpectralField) -> Result<SpectralField>;
}

/// One classical RK4 step in the interaction representation (Lawson RK4).
pub fn if_rk4_step<S: SplitSystem + ?Sized>(
    sys: &S,
    t: f64,
    u: &SpectralField,
    h: f64,
) -> Result<SpectralField> {
    let half = 0.5 * h;
    let k1 = sys.rhs(t, u)?;
    let a = sys.propagate(&u.plus_scaled(half, &k1), half)?;
    let r2 = sys.rhs(t + half, &a)?;
    let eu = sys.propagate(u, half)?;
    let b = eu.plus_scaled(half, &r2);
    let r3 = sys.rhs(t + half, &b)?;
    let c = sys.propagate(&eu.plus_scaled(h, &r3), half)?;
    let r4 = sys.rhs(t + h, &c)?;

    let mut inner = sys.propagate(&u.plus_scaled(h / 6.0, &k1), half)?;
    inner.axpy(h / 3.0, &r2);
    inner.axpy(h / 3.0, &r3);
    let mut out = sys.propagate(&inner, half)?;
    out.axpy(h / 6.0, &r4);
    Ok(out)
}

/// Uniform stepping schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
}

impl Schedule {
    /// Steps of size at most `dt_max` that land exactly on `t_final`, in a
    /// whole number of snapshot strides.
    pub fn covering(t_final: f64, dt_max: f64, stride: usize) -> Result<Self> {
        if !(t_final > 0.0) || !(dt_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need positive final time and step, got T = {t_final}, dt = {dt_max}"
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("snapshot stride must be positive".into()));
        }
        let steps = (t_final / dt_max - 1e-9).ceil().max(1.0) as usize;
        // whole number of strides keeps the stored snapshots uniformly spaced
        let steps = steps.div_ceil(stride) * stride;
        Ok(Schedule {
            dt: t_final / steps as f64,
            steps,
            stride,
        })
    }

    /// `samples` equal intervals on `[0, t_final]`, each split into the
    /// fewest steps of size at most `dt_max`.
    pub fn sampled(t_final: f64, dt_max: f64, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidArgument("need at least one sample interval".into()));
        }
        let per = Self::covering(t_final / samples as f64, dt_max, 1)?.steps;
        let steps = per * samples;
        Ok(Schedule {
            dt: t_final / steps as f64,
            steps,
            stride: per,
        })
    }

    pub fn snapshot_dt(&self) -> f64 {
        self.dt * self.stride as f64
    }
}

/// Snapshots of a run at uniformly spaced times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
}

impl Trajectory {
    /// Spacing between stored snapshots.
    pub fn spacing(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn last(&self) -> &SpectralField {
        self.states.last().expect("trajectories start with the initial state")
    }
}

/// Growth limit relative to the initial L² norm before a run is declared
/// blown up.
pub const BLOWUP_FACTOR: f64 = 1e6;

/// Drive `if_rk4_step` over a schedule without storing states.
/// `visit(step, t, u)` sees the initial state (step 0) and every new state
/// and may abort the run. Returns the final state.
pub fn drive<S, F>(
    sys: &S,
    u0: &SpectralField,
    t0: f64,
    schedule: &Schedule,
    mut visit: F,
) -> Result<SpectralField>
where
    S: SplitSystem + ?Sized,
    F: FnMut(usize, f64, &SpectralField) -> Result<()>,
{
    let initial = u0.l2_norm();
    let limit = BLOWUP_FACTOR * initial;
    visit(0, t0, u0)?;
    let mut u = u0.clone();
    for step in 1..=schedule.steps {
        let t_prev = t0 + (step - 1) as f64 * schedule.dt;
        let next = if_rk4_step(sys, t_prev, &u, schedule.dt)?;
        let t = t0 + step as f64 * schedule.dt;
        if !next.is_finite() {
            log::warn!("non-finite state at t = {t}; keeping state at t = {t_prev}");
            return Err(Error::NonFinite { time: t });
        }
        if initial > 0.0 {
            let norm = next.l2_norm();
            if norm > limit {
                return Err(Error::BlowUp {
                    time: t,
                    norm,
                    limit,
                });
            }
        }
        u = next;
        visit(step, t, &u)?;
    }
    Ok(u)
}

/// Like [`drive`], storing every `schedule.stride`-th state. `after_step`
/// sees every new state (after `t += dt`) and may veto it.
pub fn integrate<S, F>(
    sys: &S,
    u0: &SpectralField,
    t0: f64,
    schedule: &Schedule,
    mut after_step: F,
) -> Result<Trajectory>
where
    S: SplitSystem + ?Sized,
    F: FnMut(f64, &SpectralField) -> Result<()>,
{
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
    };
    drive(sys, u0, t0, schedule, |step, t, u| {
        if step > 0 {
            after_step(t, u)?;
        }
        if step % schedule.stride == 0 {
            traj.times.push(t);
            traj.states.push(u.clone());
        }
        Ok(())
    })?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoxGrid;
    use num_complex::Complex64;

    /// Scalar test problem u' = -i ω u + λ u on a single mode.
    struct Mode {
        omega: f64,
        lambda: f64,
    }

    impl SplitSystem for Mode {
        fn propagate(&self, f: &SpectralField, tau: f64) -> Result<SpectralField> {
            let phase = Complex64::from_polar(1.0, -self.omega * tau);
            Ok(f.map_symbol(|_| phase))
        }
        fn rhs(&self, _t: f64, f: &SpectralField) -> Result<SpectralField> {
            Ok(f.scaled(self.lambda))
        }
    }

    fn value(f: &SpectralField) -> Complex64 {
        f.component(0)[0]
    }

    #[test]
    fn fourth_order_on_linear_mode() {
        let g = BoxGrid::square(2, 1.0).unwrap();
        let mut u0 = SpectralField::zeros(g, 1);
        u0.component_mut(0)[0] = Complex64::new(1.0, 0.0);
        let sys = Mode {
            omega: 40.0,
            lambda: -0.7,
        };
        let exact = Complex64::from_polar((-0.7f64).exp(), -40.0);
        let mut errs = Vec::new();
        for steps in [10usize, 20, 40] {
            let sched = Schedule::covering(1.0, 1.0 / steps as f64, 1).unwrap();
            let traj = integrate(&sys, &u0, 0.0, &sched, |_, _| Ok(())).unwrap();
            errs.push((value(traj.last()) - exact).norm());
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 4.0).abs() < 0.3, "order {order}");
        }
    }

    #[test]
    fn schedule_lands_on_final_time() {
        let s = Schedule::covering(1.0, 0.3, 3).unwrap();
        assert_eq!(s.steps, 6);
        assert!((s.dt * s.steps as f64 - 1.0).abs() < 1e-15);
        let s = Schedule::covering(0.5, 0.1, 1).unwrap();
        assert_eq!(s.steps, 5);
        let s = Schedule::sampled(1.0, 0.03, 10).unwrap();
        assert_eq!((s.steps, s.stride), (40, 4));
        assert!(Schedule::covering(1.0, 0.0, 1).is_err());
    }
}
