use crate::error::{Error, Result};

/// Physical constants of the scaled rotating Euler system.
///
/// `epsilon` is derived from `delta` and `nu`; it is never set independently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub gamma: f64,
    pub gamma_bar: f64,
    pub delta: f64,
    pub nu: f64,
    pub epsilon: f64,
}

impl PhysicalParams {
    pub fn new(gamma: f64, delta: f64, nu: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma = {gamma} must exceed 1")));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("delta = {delta} must be positive")));
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::InvalidArgument(format!("nu = {nu} must be positive")));
        }
        let gamma_bar = (gamma - 1.0) / 2.0;
        Ok(PhysicalParams {
            gamma,
            gamma_bar,
            delta,
            nu,
            epsilon: delta / (gamma_bar * nu),
        })
    }

    /// Same constants at another Mach number.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.gamma, delta, self.nu)
    }

    /// Phase time `γ̄ t / δ` of the fast linear flow. Computed as
    /// `γ̄ * (t / δ)` so that rescaling `t` and `δ` together by a power of two
    /// leaves it bit-identical.
    pub fn phase_time(&self, t: f64) -> f64 {
        self.gamma_bar * (t / self.delta)
    }

    /// Ratio `δ/ε = γ̄ ν`, fixed along the limit.
    pub fn delta_over_epsilon(&self) -> f64 {
        self.gamma_bar * self.nu
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_constants() {
        for (g, d, n) in [(2.0, 0.1, 1.0), (1.4, 0.025, 2.5), (3.0, 0.7, 0.3)] {
            let p = PhysicalParams::new(g, d, n).unwrap();
            assert_eq!(p.gamma_bar, (g - 1.0) / 2.0);
            assert!((p.epsilon * p.gamma_bar * p.nu - d).abs() <= 2.0 * f64::EPSILON * d);
        }
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PhysicalParams::new(1.0, 0.1, 1.0).is_err());
        assert!(PhysicalParams::new(2.0, 0.0, 1.0).is_err());
        assert!(PhysicalParams::new(2.0, 0.1, -1.0).is_err());
        assert!(PhysicalParams::new(f64::NAN, 0.1, 1.0).is_err());
    }
}
