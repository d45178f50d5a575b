//! The driving potential `D`; crowds descend along `U = -D'`.

use serde::{Deserialize, Serialize};

use crate::domain::Domain1D;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Profile {
    /// `c0 + c1 r + c2 r^2`.
    Polynomial { c0: f64, c1: f64, c2: f64 },
    /// Piecewise linear interpolation of `(r_i, d_i)`, constant outside.
    Table { r: Vec<f64>, d: Vec<f64> },
}

/// Potential `D` with its semiconvexity constant `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialD {
    profile: Profile,
    lambda: f64,
}

impl PotentialD {
    pub fn polynomial(c0: f64, c1: f64, c2: f64) -> Self {
        Self {
            profile: Profile::Polynomial { c0, c1, c2 },
            lambda: 2.0 * c2,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::polynomial(c, 0.0, 0.0)
    }

    /// `D(r) = r - a`: distance to the exit along the corridor.
    pub fn distance_to_exit(domain: &Domain1D) -> Self {
        Self::polynomial(-domain.a(), 1.0, 0.0)
    }

    /// Piecewise-linear table; `lambda` is `0` when the slopes increase and
    /// `-inf` otherwise.
    pub fn table(r: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if r.len() < 2 || r.len() != d.len() || r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("table needs at least two increasing radii".into()));
        }
        let slopes: Vec<f64> = (0..r.len() - 1).map(|i| (d[i + 1] - d[i]) / (r[i + 1] - r[i])).collect();
        let convex = slopes.windows(2).all(|w| w[1] >= w[0] - 1e-14);
        Ok(Self {
            profile: Profile::Table { r, d },
            lambda: if convex { 0.0 } else { f64::NEG_INFINITY },
        })
    }

    pub fn from_profile(profile: Profile) -> Result<Self> {
        match profile {
            Profile::Polynomial { c0, c1, c2 } => Ok(Self::polynomial(c0, c1, c2)),
            Profile::Table { r, d } => Self::table(r, d),
        }
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn value(&self, r: f64) -> f64 {
        match &self.profile {
            Profile::Polynomial { c0, c1, c2 } => c0 + r * (c1 + r * c2),
            Profile::Table { r: xs, d } => {
                let i = table_interval(xs, r);
                match i {
                    None if r < xs[0] => d[0],
                    None => d[d.len() - 1],
                    Some(i) => d[i] + (d[i + 1] - d[i]) * (r - xs[i]) / (xs[i + 1] - xs[i]),
                }
            }
        }
    }

    /// `D'(r)`; right derivative at table knots.
    pub fn slope(&self, r: f64) -> f64 {
        match &self.profile {
            Profile::Polynomial { c1, c2, .. } => c1 + 2.0 * c2 * r,
            Profile::Table { r: xs, d } => match table_interval(xs, r) {
                None => 0.0,
                Some(i) => (d[i + 1] - d[i]) / (xs[i + 1] - xs[i]),
            },
        }
    }

    /// Velocity field `U = -D'`.
    pub fn drift(&self, r: f64) -> f64 {
        -self.slope(r)
    }

    /// Largest step `1 / (4 |lambda|_-)` for which each step is strictly convex.
    pub fn tau_cap(&self) -> f64 {
        if self.lambda >= 0.0 {
            f64::INFINITY
        } else {
            1.0 / (4.0 * -self.lambda)
        }
    }

    /// Checks that `D` is finite on the domain and, with an exit, minimal at `a`.
    pub fn validate(&self, domain: &Domain1D) -> Result<()> {
        let n = 1000;
        let da = self.value(domain.a());
        for i in 0..=n {
            let r = domain.a() + domain.diameter() * i as f64 / n as f64;
            let v = self.value(r);
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("potential is not finite at r={r}")));
            }
            if domain.has_exit() && v < da - 1e-12 * (1.0 + da.abs()) {
                return Err(Error::InvalidArgument(format!(
                    "potential must be minimal at the exit: D({r}) = {v} < D(a) = {da}"
                )));
            }
        }
        Ok(())
    }
}

fn table_interval(xs: &[f64], r: f64) -> Option<usize> {
    if r < xs[0] || r >= xs[xs.len() - 1] {
        if r == xs[xs.len() - 1] {
            return Some(xs.len() - 2);
        }
        return None;
    }
    Some(xs.partition_point(|&x| x <= r) - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_derivatives() {
        let d = PotentialD::polynomial(1.0, -2.0, 0.5);
        assert_eq!(d.value(2.0), 1.0 - 4.0 + 2.0);
        assert_eq!(d.slope(2.0), 0.0);
        assert_eq!(d.lambda(), 1.0);
        assert_eq!(d.tau_cap(), f64::INFINITY);
        assert_eq!(PotentialD::polynomial(0.0, 0.0, -1.0).tau_cap(), 0.125);
    }

    #[test]
    fn table_detects_nonconvexity() {
        let convex = PotentialD::table(vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(convex.lambda(), 0.0);
        assert_eq!(convex.value(0.5), 0.5);
        assert_eq!(convex.slope(0.5), -1.0);
        let bumpy = PotentialD::table(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 1.5]).unwrap();
        assert_eq!(bumpy.lambda(), f64::NEG_INFINITY);
    }

    #[test]
    fn exit_requires_minimum_at_a() {
        let dom = Domain1D::flat(1.0, 3.0, true).unwrap();
        assert!(PotentialD::distance_to_exit(&dom).validate(&dom).is_ok());
        assert!(PotentialD::polynomial(0.0, -1.0, 0.0).validate(&dom).is_err());
    }
}
