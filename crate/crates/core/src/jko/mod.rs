//! Minimising movement under the density constraint `rho <= 1`.
//!
//! One step minimises `J(rho) + W_2^2(rho, rho_prev) / (2 tau)` over admissible
//! densities, where `J(rho) = \int D drho` and mass may leave through the exit
//! at `r = a`. Steps are solved exactly in quantile coordinates (see
//! [`solver`]); the pressure is recovered from the optimality conditions.

mod diagnostics;
mod flow;
mod interp;
pub mod reference;
pub mod solver;
mod state;

pub use diagnostics::{pressure_velocity_checks, zone_structure, PressureChecks, ZoneReport};
pub use flow::{run_flow, run_flow_from, step_count, FlowConfig, FlowTrajectory, StepRecord};
pub use interp::{geodesic_interpolant, momentum_discrepancy, momentum_fields, Interpolant, MomentumFields};
pub use state::{NodeState, SATURATION_TOL};

use crate::domain::Domain1D;
use crate::error::{Error, Result};
use crate::measure::Measure1D;
use crate::potential::PotentialD;
use crate::transport::Potential1D;

use solver::StepProblem;

/// Default number of quantile node intervals.
pub const DEFAULT_NODES: usize = 4096;
/// Default number of density cells used for rendering and diagnostics.
pub const DEFAULT_CELLS: usize = 2048;

/// Discretisation parameters for a single step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub n_nodes: usize,
    pub n_cells: usize,
    /// Reject steps above `1 / (4 |lambda|_-)`.
    pub enforce_tau_cap: bool,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            n_nodes: DEFAULT_NODES,
            n_cells: DEFAULT_CELLS,
            enforce_tau_cap: true,
        }
    }
}

/// Outcome of one minimising-movement step.
#[derive(Debug, Clone)]
pub struct JkoStepResult {
    pub state: NodeState,
    pub rho_next: Measure1D,
    /// Wasserstein-2 distance travelled during the step.
    pub w2_increment: f64,
    /// Cell centres of `rho_next`, where the fields below are sampled.
    pub centers: Vec<f64>,
    pub pressure: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Level `l` in `p = (l - F)_+` with `F = D + phi / tau`.
    pub level_l: f64,
    /// Potential of the optimal map from `rho_next` back to the previous iterate.
    pub kant_potential: Potential1D,
    pub objective_value: f64,
    /// Energy of the new state.
    pub energy: f64,
    pub exit_increment: f64,
    pub tau: f64,
    /// Node pressure recovered from the constraint multipliers.
    pub node_pressure: Vec<f64>,
}

/// `J(rho) = \int D drho`; mass in the exit counts `D(a)`.
pub fn energy(m: &Measure1D, d: &PotentialD) -> f64 {
    m.integrate(|r| d.value(r))
}

/// Rejects non-positive steps and, when enforced, steps above the semiconvexity cap.
pub fn check_tau(d: &PotentialD, tau: f64, cfg: &StepConfig) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {tau}")));
    }
    if cfg.enforce_tau_cap && tau > d.tau_cap() {
        return Err(Error::InvalidArgument(format!(
            "time step {tau} exceeds the convexity cap {}",
            d.tau_cap()
        )));
    }
    Ok(())
}

/// One step from a density.
pub fn jko_step(prev: &Measure1D, d: &PotentialD, tau: f64, cfg: &StepConfig) -> Result<JkoStepResult> {
    d.validate(prev.domain())?;
    let st = NodeState::from_measure(prev, cfg.n_nodes)?;
    jko_step_nodes(&st, d, tau, cfg)
}

/// One step from a node state.
pub fn jko_step_nodes(prev: &NodeState, d: &PotentialD, tau: f64, cfg: &StepConfig) -> Result<JkoStepResult> {
    check_tau(d, tau, cfg)?;
    let dom = *prev.domain();
    let sol = StepProblem::new(dom, d, tau, prev.nodes(), prev.exit_nodes())
        .with_exit_mass(prev.exit_mass())
        .solve()?;
    let state = NodeState::with_exit_mass(dom, sol.q.clone(), sol.exit_nodes, sol.exit_mass)?;
    let rho_next = state.render(cfg.n_cells)?;
    let n = state.n();
    let mut node_pressure = vec![0.0; n + 1];
    for j in sol.exit_nodes..=n {
        let left = if j == sol.exit_nodes { sol.lower_multiplier } else { sol.multipliers[j - 1] };
        let right = if j < n { sol.multipliers[j] } else { 0.0 };
        // The lower multiplier is unbounded at a cone apex, where the weight vanishes.
        node_pressure[j] = if left.is_finite() { 0.5 * (left + right) } else { right };
    }
    let phi = node_potential(&dom, &state, prev, Some(Bridge { d, tau, node_pressure: &node_pressure }))?;
    let f = |r: f64| d.value(r) + phi.value(r) / tau;
    // F + p is constant on the support; the median over the nodes is robust
    // to the one-interval bias at its ends.
    let mut lv: Vec<f64> = (sol.exit_nodes..=n).map(|j| f(state.nodes()[j]) + node_pressure[j]).collect();
    lv.sort_by(f64::total_cmp);
    let level_l = lv.get(lv.len() / 2).copied().unwrap_or_else(|| f(dom.a()));
    let centers = rho_next.centers();
    let mut pressure = Vec::with_capacity(centers.len());
    let mut velocity = Vec::with_capacity(centers.len());
    for (i, &r) in centers.iter().enumerate() {
        pressure.push((level_l - f(r)).max(0.0));
        velocity.push(if rho_next.rho()[i] > 0.0 { phi.slope(r) / tau } else { d.drift(r) });
    }
    let w2_increment = state.w2_to(prev);
    let energy = state.energy(d);
    Ok(JkoStepResult {
        exit_increment: state.exit_mass() - prev.exit_mass(),
        state,
        rho_next,
        w2_increment,
        centers,
        pressure,
        velocity,
        level_l,
        kant_potential: phi,
        objective_value: sol.objective,
        energy,
        tau,
        node_pressure,
    })
}

/// Data for choosing the map on unsaturated intervals next to a packed block.
struct Bridge<'a> {
    d: &'a PotentialD,
    tau: f64,
    node_pressure: &'a [f64],
}

/// Potential of the map sending each node of `next` to the same node of `prev`.
///
/// Between nodes the map is free up to monotonicity, since no mass lies
/// there. It is linear by default. On an unsaturated interval touching a
/// pressurised node it bends so that `F + p` agrees at both ends, which keeps
/// the pressure level of packed blocks separated by sparse gaps consistent.
fn node_potential(dom: &Domain1D, next: &NodeState, prev: &NodeState, bridge: Option<Bridge>) -> Result<Potential1D> {
    let (qn, qp) = (next.nodes(), prev.nodes());
    let n = next.n();
    let mut radii = vec![dom.a()];
    let mut t_lo = Vec::new();
    let mut t_hi = Vec::new();
    let mut push = |r: f64, tl: f64, th: f64| {
        if r > *radii.last().expect("non-empty") {
            radii.push(r);
            t_lo.push(tl);
            t_hi.push(th);
        }
    };
    let j0 = next.exit_nodes();
    if j0 == 0 {
        push(qn[0], qp[0], qp[0]);
    } else if j0 <= n {
        // The cut interval starts where the previous quantile sits at the new exit mass.
        push(qn[j0], prev.value_at(next.exit_mass()), qp[j0]);
    }
    for j in j0..n {
        let (r0, r1, t0, t1) = (qn[j], qn[j + 1], qp[j], qp[j + 1]);
        if let Some(x) = bridge.as_ref().and_then(|b| bend_point(dom, next, prev, b, j)) {
            let rb = r0 + x * (r1 - r0);
            let tb = t0 + (1.0 - x) * (t1 - t0);
            push(rb, t0, tb);
            push(r1, tb, t1);
        } else {
            push(r1, t0, t1);
        }
    }
    push(dom.r_max(), qp[n], qp[n]);
    if radii.len() < 2 {
        radii.push(dom.r_max());
        t_lo.push(qp[n]);
        t_hi.push(qp[n]);
    }
    Potential1D::from_map(radii, t_lo, t_hi)
}

/// Relative position of the bend on interval `j`, or `None` to keep the map
/// linear.
///
/// The map runs through `(x, 1 - x)` in unit coordinates, so its mean over
/// the interval is `1 - x` of the way from `t_j` to `t_{j+1}`. The bend is
/// clamped to keep the map monotone.
fn bend_point(dom: &Domain1D, next: &NodeState, prev: &NodeState, b: &Bridge, j: usize) -> Option<f64> {
    let (r0, r1) = (next.nodes()[j], next.nodes()[j + 1]);
    let (t0, t1) = (prev.nodes()[j], prev.nodes()[j + 1]);
    let (p0, p1) = (b.node_pressure[j], b.node_pressure[j + 1]);
    if r1 <= r0 || t1 <= t0 || (p0 <= 0.0 && p1 <= 0.0) {
        return None;
    }
    if 1.0 / next.n() as f64 >= (1.0 - SATURATION_TOL) * dom.weight_between(r0, r1) {
        return None;
    }
    let (d0, d1) = (b.d.value(r0), b.d.value(r1));
    let int_t = 0.5 * (r1 * r1 - r0 * r0) - b.tau * (p0 - p1 - d1 + d0);
    let mean = int_t / (r1 - r0);
    Some((1.0 - (mean - t0) / (t1 - t0)).clamp(0.0, 1.0))
}
