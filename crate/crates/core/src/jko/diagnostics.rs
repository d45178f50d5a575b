//! Consistency checks on the pressure and velocity of a step.

use crate::potential::PotentialD;

use super::state::SATURATION_TOL;
use super::JkoStepResult;

/// Residuals of the decomposition `U = v + p'` and its side conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureChecks {
    /// `|| U - v - p' ||` in `L^2(rho)`.
    pub decomposition: f64,
    /// `| \int p' v drho |`.
    pub complementarity: f64,
    /// `\int v (p h)' drho` for a positive weight `h`; admissible velocities keep it `<= 0`.
    pub feasibility: f64,
    /// Largest gap between the multiplier pressure and `(l - F)_+` at the nodes.
    pub multiplier_gap: f64,
}

fn level_fn<'a>(step: &'a JkoStepResult, d: &'a PotentialD) -> impl Fn(f64) -> f64 + 'a {
    move |r| d.value(r) + step.kant_potential.value(r) / step.tau
}

/// Residuals of the pressure/velocity decomposition of one step.
///
/// Integrals against `rho` use the mass midpoint of every node interval, so
/// every sample lies inside the support.
pub fn pressure_velocity_checks(step: &JkoStepResult, d: &PotentialD) -> PressureChecks {
    let f = level_fn(step, d);
    let st = &step.state;
    let dom = st.domain();
    let (a, big_r) = (dom.a(), dom.r_max());
    let mut dec = 0.0;
    let mut comp = 0.0;
    let mut feas = 0.0;
    for w in st.interior_points().windows(2) {
        let ((s0, r0), (s1, r1)) = (w[0], w[1]);
        let ds = s1 - s0;
        if r1 <= r0 || ds <= 0.0 {
            continue;
        }
        let r = dom.inv_cum_weight(0.5 * (dom.cum_weight(r0) + dom.cum_weight(r1)));
        let u = d.drift(r);
        let v = step.kant_potential.slope(r) / step.tau;
        let p = (step.level_l - f(r)).max(0.0);
        let dp = if p > 0.0 { -(d.slope(r) + v) } else { 0.0 };
        dec += ds * (u - v - dp).powi(2);
        comp += ds * dp * v;
        let h = 1.0 + (r - a) / (big_r - a);
        let dh = 1.0 / (big_r - a);
        feas += ds * v * (dp * h + p * dh);
    }
    let (q, n) = (st.nodes(), st.n());
    let gap = (step.state.exit_nodes()..=n)
        .map(|j| (step.node_pressure[j] - (step.level_l - f(q[j])).max(0.0)).abs())
        .fold(0.0, f64::max);
    PressureChecks {
        decomposition: dec.sqrt(),
        complementarity: comp.abs(),
        feasibility: feas,
        multiplier_gap: gap,
    }
}

/// Violations of the three-zone picture: `F <= l` where packed, `F = l`
/// where free and `F >= l` in vacuum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneReport {
    pub saturated_excess: f64,
    pub free_deviation: f64,
    pub vacuum_deficit: f64,
    /// Tolerance from the variation of `F` across one node interval.
    pub tolerance: f64,
}

impl ZoneReport {
    pub fn holds(&self) -> bool {
        self.saturated_excess <= self.tolerance
            && self.free_deviation <= self.tolerance
            && self.vacuum_deficit <= self.tolerance
    }
}

/// Classifies node intervals by density and checks `F` against the level at
/// their ends, where the discrete optimality conditions hold. Inside an
/// interval `F` carries the interpolation error of the potential.
pub fn zone_structure(step: &JkoStepResult, d: &PotentialD) -> ZoneReport {
    let f = level_fn(step, d);
    let l = step.level_l;
    let st = &step.state;
    let dom = st.domain();
    let pts = st.interior_points();
    let mut tol: f64 = 0.0;
    let (mut sat, mut free) = (0.0f64, 0.0f64);
    for w in pts.windows(2) {
        let ((s0, r0), (s1, r1)) = (w[0], w[1]);
        tol = tol.max((f(r1) - f(r0)).abs());
        if r1 <= r0 || s1 <= s0 {
            continue;
        }
        let dy = dom.weight_between(r0, r1);
        let (f0, f1) = (f(r0), f(r1));
        if (s1 - s0) / dy >= 1.0 - SATURATION_TOL {
            sat = sat.max(f0 - l).max(f1 - l);
        } else {
            free = free.max((f0 - l).abs()).max((f1 - l).abs());
        }
    }
    // End gaps narrower than one node's share of mass are below resolution.
    let min_gap = 1.0 / st.n() as f64;
    let mut vac = 0.0f64;
    let probes = 16;
    let (lo_end, hi_end) = match (pts.first(), pts.last()) {
        (Some(p0), Some(p1)) => (p0.1, p1.1),
        _ => (dom.a(), dom.a()),
    };
    let probe_lo = dom.weight_between(dom.a(), lo_end) >= min_gap;
    let probe_hi = dom.weight_between(hi_end, dom.r_max()) >= min_gap;
    for k in 0..probes {
        let th = (k as f64 + 0.5) / probes as f64;
        if probe_lo {
            vac = vac.max(l - f(dom.a() + th * (lo_end - dom.a())));
        }
        if probe_hi {
            vac = vac.max(l - f(hi_end + th * (dom.r_max() - hi_end)));
        }
    }
    ZoneReport {
        saturated_excess: sat.max(0.0),
        free_deviation: free,
        vacuum_deficit: vac.max(0.0),
        tolerance: 2.0 * tol + 1e-9,
    }
}
