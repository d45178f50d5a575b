//! Crowd in a convergent corridor: a cone sector `a <= r <= R` with
//! `D(r) = r`, either closed at the apex (`a = 0`) or draining through an
//! exit at `r = a`.
//!
//! Starting from a uniform density `rho0`, every iterate and the continuous
//! solution share one shape: packed (`rho = 1`) on `[a, b)`, free on
//! `[b, R - t)` with `rho = rho0 (1 + t / r)`, empty beyond. Only the front
//! `b` and the exited mass need to be tracked.

mod ode;
mod recurrence;

pub use ode::{ode_b_exit, ode_b_no_exit, ode_reference, saturation_time, start_slope, OdeReference};
pub use recurrence::{
    discrete_profiles, exit_objective, exit_pressure, step_b_exit, step_b_no_exit, step_with_exit_radius,
    ExitStep,
};

use serde::{Deserialize, Serialize};

use crate::domain::Domain1D;
use crate::error::{Error, Result};
use crate::measure::{uniform_edges, Measure1D};
use crate::potential::PotentialD;
use crate::quantile::QuantileFn;

/// Whether mass can leave through `r = a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NoExit,
    Exit,
}

/// Geometry and initial density of a corridor scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corridor {
    pub a: f64,
    pub r_max: f64,
    pub rho0: f64,
    pub regime: Regime,
}

/// Default number of RK4 steps per unit time for continuous fronts.
const ODE_STEPS_PER_UNIT: f64 = 8192.0;

impl Corridor {
    /// Validates `0 <= a < R`, `0 < rho0 <= 1`; an exit needs `a > 0`, a closed apex needs `a = 0`.
    pub fn new(a: f64, r_max: f64, rho0: f64, has_exit: bool) -> Result<Self> {
        if !(a >= 0.0 && r_max > a && r_max.is_finite()) {
            return Err(Error::Domain(format!("need 0 <= a < R, got a = {a}, R = {r_max}")));
        }
        if !(rho0 > 0.0 && rho0 <= 1.0) {
            return Err(Error::InvalidArgument(format!("initial density must lie in (0, 1], got {rho0}")));
        }
        if has_exit && a <= 0.0 {
            return Err(Error::Domain("an exit needs a > 0".into()));
        }
        if !has_exit && a != 0.0 {
            return Err(Error::Domain("a closed corridor ends at the apex, a = 0".into()));
        }
        let regime = if has_exit { Regime::Exit } else { Regime::NoExit };
        Ok(Self { a, r_max, rho0, regime })
    }

    /// Apex, `R = 10`, `rho0 = 0.4`.
    pub fn fig3() -> Self {
        Self::new(0.0, 10.0, 0.4, false).expect("valid preset")
    }

    /// Exit at `a = 1`, `R = 10`, `rho0 = 0.4`.
    pub fn fig4() -> Self {
        Self::new(1.0, 10.0, 0.4, true).expect("valid preset")
    }

    /// Fully packed start with an exit at `a = 1`, `R = 10`.
    pub fn saturated() -> Self {
        Self::new(1.0, 10.0, 1.0, true).expect("valid preset")
    }

    pub fn has_exit(&self) -> bool {
        self.regime == Regime::Exit
    }

    /// Radially weighted domain normalised to unit initial mass.
    pub fn domain(&self) -> Domain1D {
        Domain1D::radial_normalized(self.a, self.r_max, self.rho0, self.has_exit()).expect("validated corridor")
    }

    /// `D(r) = r - a`.
    pub fn potential(&self) -> PotentialD {
        PotentialD::distance_to_exit(&self.domain())
    }

    /// Total mass in units of `\int 2 r dr`.
    pub(crate) fn scale(&self) -> f64 {
        self.rho0 * (self.r_max * self.r_max - self.a * self.a)
    }

    /// Front position at `t = 0`.
    pub fn initial_front(&self) -> f64 {
        if self.rho0 >= 1.0 {
            self.r_max
        } else {
            self.a
        }
    }

    pub fn initial_profile(&self) -> RadialProfile {
        self.profile(0.0, self.initial_front(), 0.0)
    }

    /// Uniform initial density on `n_cells` cells.
    pub fn initial_measure(&self, n_cells: usize) -> Result<Measure1D> {
        Measure1D::uniform(self.domain(), self.rho0, n_cells)
    }

    /// Time at which a closed corridor is fully packed.
    pub fn packing_time(&self) -> Option<f64> {
        match self.regime {
            Regime::NoExit => Some(self.r_max * (1.0 - self.rho0.sqrt())),
            Regime::Exit => None,
        }
    }

    pub(crate) fn profile(&self, t: f64, b: f64, exited: f64) -> RadialProfile {
        RadialProfile {
            t,
            a: self.a,
            r_max: self.r_max,
            rho0: self.rho0,
            b,
            exited,
            regime: self.regime,
        }
    }

    /// Solution of the continuity equation at time `t`.
    pub fn continuous_profile(&self, t: f64) -> Result<RadialProfile> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
        }
        let b = match self.regime {
            Regime::NoExit => {
                let t_pack = self.packing_time().expect("closed corridor");
                if t >= t_pack {
                    self.r_max * self.rho0.sqrt()
                } else {
                    let c = self.rho0.sqrt();
                    t * c / (1.0 - c)
                }
            }
            Regime::Exit => {
                let steps = ((t * ODE_STEPS_PER_UNIT).ceil() as usize).max(64);
                ode_b_exit(self, t, steps)?
            }
        };
        let mut p = self.profile(t, b, 0.0);
        if self.has_exit() {
            p.exited = (1.0 - p.interior_mass()).max(0.0);
        }
        Ok(p)
    }
}

/// Density of the corridor at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialProfile {
    pub t: f64,
    pub a: f64,
    pub r_max: f64,
    pub rho0: f64,
    /// Outer edge of the packed zone.
    pub b: f64,
    /// Mass absorbed by the exit.
    pub exited: f64,
    pub regime: Regime,
}

impl RadialProfile {
    pub fn corridor(&self) -> Corridor {
        Corridor {
            a: self.a,
            r_max: self.r_max,
            rho0: self.rho0,
            regime: self.regime,
        }
    }

    /// Outer edge of the support.
    pub fn support_end(&self) -> f64 {
        self.b.max(self.free_end())
    }

    fn free_end(&self) -> f64 {
        (self.r_max - self.t).max(self.a)
    }

    pub fn has_free_zone(&self) -> bool {
        self.b < self.free_end()
    }

    pub fn density(&self, r: f64) -> f64 {
        if r < self.a || r > self.r_max {
            0.0
        } else if r < self.b {
            1.0
        } else if r < self.free_end() {
            self.rho0 * (1.0 + self.t / r)
        } else {
            0.0
        }
    }

    /// Interior mass of `[a, r]` in units of `\int 2 r dr`.
    fn cum(&self, r: f64) -> f64 {
        let a = self.a;
        let r = r.clamp(a, self.r_max);
        let b = self.b.min(self.r_max);
        if r <= b {
            return r * r - a * a;
        }
        let packed = b * b - a * a;
        let end = self.free_end();
        if b >= end {
            return packed;
        }
        let t = self.t;
        packed + self.rho0 * ((r.min(end) + t).powi(2) - (b + t).powi(2))
    }

    /// Normalised mass inside the corridor.
    pub fn interior_mass(&self) -> f64 {
        self.cum(self.r_max) / self.corridor().scale()
    }

    pub fn total_mass(&self) -> f64 {
        self.exited + self.interior_mass()
    }

    /// Cell-averaged density on `n_cells` uniform cells.
    pub fn render(&self, n_cells: usize) -> Result<Measure1D> {
        let c = self.corridor();
        let dom = c.domain();
        let scale = c.scale();
        let edges = uniform_edges(&dom, n_cells);
        let masses: Vec<f64> = edges.windows(2).map(|e| (self.cum(e[1]) - self.cum(e[0])) / scale).collect();
        Measure1D::from_cell_masses(dom, &masses, self.exited)
    }

    /// Quantile function: exact on the packed zone, `n_points` samples on the free zone.
    pub fn quantile(&self, n_points: usize) -> Result<QuantileFn> {
        let c = self.corridor();
        let dom = c.domain();
        let scale = c.scale();
        let a = self.a;
        let e = self.exited;
        let b = self.b.min(self.r_max);
        let s_b = e + (b * b - a * a) / scale;
        let mut pts = vec![(e, a)];
        if b > a {
            pts.push((s_b, b));
        }
        if self.has_free_zone() {
            let t = self.t;
            let (b0, b1) = ((b + t).powi(2), (self.free_end() + t).powi(2));
            let n = n_points.max(2);
            for i in 1..=n {
                let u = b0 + (b1 - b0) * i as f64 / n as f64;
                let s = s_b + self.rho0 * (u - b0) / scale;
                pts.push((s, (u.sqrt() - t).clamp(a, self.r_max)));
            }
        }
        if pts.len() == 1 {
            // Everything has left.
            return QuantileFn::from_points(dom, &[], 1.0);
        }
        if let Some(last) = pts.last_mut() {
            last.0 = 1.0;
        }
        QuantileFn::from_points(dom, &pts, e)
    }
}
