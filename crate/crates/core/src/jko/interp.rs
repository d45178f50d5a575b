//! Interpolation between iterates: displacement geodesics and the momentum
//! fields carried along them.

use crate::error::{Error, Result};
use crate::measure::uniform_edges;
use crate::quantile::QuantileFn;

use super::flow::FlowTrajectory;
use super::state::NodeState;

/// Point on the displacement geodesic between two consecutive iterates.
#[derive(Debug, Clone)]
pub struct Interpolant {
    pub quantile: QuantileFn,
    pub max_density: f64,
    /// Whether the interpolant satisfies `rho <= 1`.
    pub feasible: bool,
}

fn locate(traj: &FlowTrajectory, t: f64) -> Result<(usize, f64)> {
    let n = traj.n_steps();
    let tt = t / traj.tau;
    if !(tt >= -1e-12 && tt <= n as f64 + 1e-12) || n == 0 {
        return Err(Error::InvalidArgument(format!("time {t} outside the trajectory")));
    }
    let k = (tt.ceil() as usize).clamp(1, n);
    let theta = (tt - (k - 1) as f64).clamp(0.0, 1.0);
    Ok((k, theta))
}

/// Sorted mass levels where either state's quantile has a breakpoint.
fn breakpoints(s0: &NodeState, s1: &NodeState) -> Vec<f64> {
    let mut s: Vec<f64> = [s0, s1]
        .iter()
        .flat_map(|st| st.interior_points().into_iter().map(|p| p.0))
        .chain([0.0, 1.0, s0.exit_mass(), s1.exit_mass()])
        .collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// Displacement interpolation `Q_t = (1 - theta) Q^{k-1} + theta Q^k` for `t`
/// in `[(k-1) tau, k tau]`. Mass on its way to the exit is still in the
/// interior, so the result may exceed the density bound; this is flagged.
pub fn geodesic_interpolant(traj: &FlowTrajectory, t: f64) -> Result<Interpolant> {
    let (k, theta) = locate(traj, t)?;
    let (s0, s1) = (&traj.states[k - 1], &traj.states[k]);
    let quantile = if theta >= 1.0 {
        s1.quantile()?
    } else if theta <= 0.0 {
        s0.quantile()?
    } else {
        let exit_mass = s0.exit_mass();
        let points: Vec<(f64, f64)> = breakpoints(s0, s1)
            .into_iter()
            .filter(|&s| s >= exit_mass)
            .map(|s| (s, (1.0 - theta) * s0.value_at(s) + theta * s1.value_at(s)))
            .collect();
        QuantileFn::from_points(*s0.domain(), &points, exit_mass)?
    };
    let max_density = quantile.max_density();
    Ok(Interpolant {
        feasible: max_density <= 1.0 + 1e-9,
        max_density,
        quantile,
    })
}

/// Momentum measures binned on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumFields {
    pub centers: Vec<f64>,
    /// Momentum of the interpolant, excluding mass that ends in the exit.
    pub e_hat: Vec<f64>,
    /// Full momentum of the interpolant.
    pub e_tilde: Vec<f64>,
}

/// Momentum fields at time `t`, binned on `n_cells` cells.
///
/// Mass at level `s` travels from `Q^{k-1}(s)` to `Q^k(s)` and carries its
/// displacement over `tau`. Each mass interval between breakpoints is
/// represented by its midpoint.
pub fn momentum_fields(traj: &FlowTrajectory, t: f64, n_cells: usize) -> Result<MomentumFields> {
    let (k, theta) = locate(traj, t)?;
    let (prev, next) = (&traj.states[k - 1], &traj.states[k]);
    let dom = *prev.domain();
    let edges = uniform_edges(&dom, n_cells);
    let centers: Vec<f64> = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
    let mut e_hat = vec![0.0; n_cells];
    let mut e_tilde = vec![0.0; n_cells];
    for w in breakpoints(prev, next).windows(2) {
        let (sm, ds) = (0.5 * (w[0] + w[1]), w[1] - w[0]);
        let (y, x) = (prev.value_at(sm), next.value_at(sm));
        let pos = (1.0 - theta) * y + theta * x;
        let mom = ds * (x - y) / traj.tau;
        let cell = (edges.partition_point(|&e| e <= pos).saturating_sub(1)).min(n_cells - 1);
        e_tilde[cell] += mom;
        if sm > next.exit_mass() {
            e_hat[cell] += mom;
        }
    }
    Ok(MomentumFields {
        centers,
        e_hat,
        e_tilde,
    })
}

/// `\int_0^T \int |E_tilde - E_hat| dt`: the transport cost of mass newly
/// absorbed by the exit, summed over steps.
pub fn momentum_discrepancy(traj: &FlowTrajectory) -> Result<f64> {
    let mut total = 0.0;
    for k in 1..=traj.n_steps() {
        let (prev, next) = (&traj.states[k - 1], &traj.states[k]);
        let (m0, m1) = (prev.exit_mass(), next.exit_mass());
        if m1 > m0 {
            let a = prev.domain().a();
            total += prev.quantile()?.integrate_between(|r| (r - a).abs(), m0, m1);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corridor::Corridor;
    use crate::jko::{run_flow, FlowConfig, StepConfig};
    use crate::transport::w2_quantiles;

    fn short_flow() -> FlowTrajectory {
        let c = Corridor::fig4();
        let cfg = FlowConfig {
            step: StepConfig {
                n_cells: 256,
                n_nodes: 256,
                ..StepConfig::default()
            },
            ..FlowConfig::default()
        };
        run_flow(&c.initial_measure(256).unwrap(), &c.potential(), 0.1, 3.0, &cfg).unwrap()
    }

    #[test]
    fn geodesic_hits_the_iterates() {
        let tr = short_flow();
        for k in [1, 17, 30] {
            let at = geodesic_interpolant(&tr, k as f64 * tr.tau).unwrap();
            let w = w2_quantiles(&at.quantile, &tr.states[k].quantile().unwrap()).unwrap();
            assert!(w < 1e-9, "k = {k}: {w}");
        }
    }

    #[test]
    fn geodesic_midpoint_halves_the_distance() {
        let tr = short_flow();
        let k = 25;
        let mid = geodesic_interpolant(&tr, (k as f64 - 0.5) * tr.tau).unwrap();
        let (q0, q1) = (tr.states[k - 1].quantile().unwrap(), tr.states[k].quantile().unwrap());
        let d = w2_quantiles(&q0, &q1).unwrap();
        let d0 = w2_quantiles(&q0, &mid.quantile).unwrap();
        assert!((d0 - 0.5 * d).abs() < 1e-3 * d + 1e-12, "{d0} vs {d}");
    }

    #[test]
    fn momenta_differ_only_by_absorbed_mass() {
        let tr = short_flow();
        let k = tr.n_steps();
        let m = momentum_fields(&tr, (k as f64 - 0.5) * tr.tau, 64).unwrap();
        let gap: f64 = m.e_tilde.iter().zip(&m.e_hat).map(|(a, b)| (a - b).abs()).sum();
        let (prev, next) = (&tr.states[k - 1], &tr.states[k]);
        let a = prev.domain().a();
        let want = prev
            .quantile()
            .unwrap()
            .integrate_between(|r| r - a, prev.exit_mass(), next.exit_mass())
            / tr.tau;
        assert!(next.exit_mass() > prev.exit_mass());
        assert!((gap - want).abs() < 0.05 * want, "{gap} vs {want}");
    }
}
