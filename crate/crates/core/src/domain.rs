//! One-dimensional weighted domains `[a, R]`.
//!
//! Mass is measured against `w(r) dr`, where `w` is either `1` (a flat
//! corridor) or `2 alpha r` (a narrow cone of half-angle `alpha`, reduced to
//! its radial coordinate). All mass bookkeeping uses the cumulative weight
//! `W(r) = \int_a^r w`, so that quantile functions are linear in `W`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radial weight profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Flat,
    Radial,
}

/// The interval `[a, R]` with its weight and an optional absorbing exit at `r = a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain1D {
    a: f64,
    r_max: f64,
    kind: WeightKind,
    half_angle: f64,
    has_exit: bool,
}

impl Domain1D {
    pub fn new(a: f64, r_max: f64, kind: WeightKind, half_angle: f64, has_exit: bool) -> Result<Self> {
        if !(a.is_finite() && r_max.is_finite()) || a < 0.0 || r_max <= a {
            return Err(Error::Domain(format!("need 0 <= a < R, got a={a}, R={r_max}")));
        }
        if kind == WeightKind::Radial && !(half_angle > 0.0 && half_angle.is_finite()) {
            return Err(Error::Domain(format!("half angle must be positive, got {half_angle}")));
        }
        let half_angle = if kind == WeightKind::Flat { 0.0 } else { half_angle };
        Ok(Self {
            a,
            r_max,
            kind,
            half_angle,
            has_exit,
        })
    }

    pub fn flat(a: f64, r_max: f64, has_exit: bool) -> Result<Self> {
        Self::new(a, r_max, WeightKind::Flat, 0.0, has_exit)
    }

    pub fn radial(a: f64, r_max: f64, half_angle: f64, has_exit: bool) -> Result<Self> {
        Self::new(a, r_max, WeightKind::Radial, half_angle, has_exit)
    }

    /// Radial domain whose half-angle makes the uniform density `rho0` a probability measure.
    pub fn radial_normalized(a: f64, r_max: f64, rho0: f64, has_exit: bool) -> Result<Self> {
        if !(rho0 > 0.0 && rho0 <= 1.0) {
            return Err(Error::Domain(format!("initial density must lie in (0, 1], got {rho0}")));
        }
        Self::radial(a, r_max, 1.0 / (rho0 * (r_max * r_max - a * a)), has_exit)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn has_exit(&self) -> bool {
        self.has_exit
    }

    pub fn diameter(&self) -> f64 {
        self.r_max - self.a
    }

    /// Weight `w(r)`.
    pub fn weight(&self, r: f64) -> f64 {
        match self.kind {
            WeightKind::Flat => 1.0,
            WeightKind::Radial => 2.0 * self.half_angle * r,
        }
    }

    /// Cumulative weight `W(r)` measured from `a`.
    pub fn cum_weight(&self, r: f64) -> f64 {
        match self.kind {
            WeightKind::Flat => r - self.a,
            WeightKind::Radial => self.half_angle * (r - self.a) * (r + self.a),
        }
    }

    /// Weighted length of `[lo, hi]`.
    pub fn weight_between(&self, lo: f64, hi: f64) -> f64 {
        match self.kind {
            WeightKind::Flat => hi - lo,
            WeightKind::Radial => self.half_angle * (hi - lo) * (hi + lo),
        }
    }

    /// Inverse of [`Self::cum_weight`]; negative arguments map to `a`.
    pub fn inv_cum_weight(&self, y: f64) -> f64 {
        let y = y.max(0.0);
        match self.kind {
            WeightKind::Flat => self.a + y,
            WeightKind::Radial => (self.a * self.a + y / self.half_angle).sqrt(),
        }
    }

    /// Total weighted capacity `W(R)`: the most mass the domain holds at density one.
    pub fn capacity(&self) -> f64 {
        self.cum_weight(self.r_max)
    }

    /// Lower bound `m` such that `W(x) - W(y) >= m (x - y)` on the domain.
    pub fn min_weight(&self) -> f64 {
        self.weight(self.a)
    }

    /// Upper bound on `w` over the domain.
    pub fn max_weight(&self) -> f64 {
        self.weight(self.r_max)
    }

    /// Whether two domains describe the same geometry.
    pub fn same_as(&self, other: &Domain1D) -> bool {
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs()));
        self.kind == other.kind
            && self.has_exit == other.has_exit
            && close(self.a, other.a)
            && close(self.r_max, other.r_max)
            && close(self.half_angle, other.half_angle)
    }

    pub(crate) fn require_same(&self, other: &Domain1D) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::Domain("measures live on different domains".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_intervals() {
        assert!(Domain1D::flat(1.0, 1.0, false).is_err());
        assert!(Domain1D::flat(-1.0, 1.0, false).is_err());
        assert!(Domain1D::radial(0.0, 1.0, 0.0, false).is_err());
    }

    #[test]
    fn cumulative_weight_inverts() {
        let d = Domain1D::radial(1.0, 10.0, 0.3, true).unwrap();
        for r in [1.0, 1.5, 4.0, 9.99] {
            assert!((d.inv_cum_weight(d.cum_weight(r)) - r).abs() < 1e-13);
        }
        assert!((d.capacity() - 0.3 * 99.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_radial_has_unit_mass_at_rho0() {
        let d = Domain1D::radial_normalized(0.0, 10.0, 0.4, false).unwrap();
        assert!((0.4 * d.capacity() - 1.0).abs() < 1e-15);
    }
}
