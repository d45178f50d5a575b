//! Properties of single minimising-movement steps and their agreement with
//! the closed-form corridor recurrences.

use crowdflow::corridor::{discrete_profiles, Corridor};
use crowdflow::domain::Domain1D;
use crowdflow::jko::{geodesic_interpolant, jko_step_nodes, run_flow, FlowConfig, NodeState, StepConfig};
use crowdflow::measure::Measure1D;
use crowdflow::potential::PotentialD;
use proptest::prelude::*;

const NODES: usize = 96;

fn step_cfg() -> StepConfig {
    StepConfig {
        n_nodes: NODES,
        n_cells: 256,
        enforce_tau_cap: true,
    }
}

fn objective(s: &NodeState, prev: &NodeState, d: &PotentialD, tau: f64) -> f64 {
    s.energy(d) + s.w2_to(prev).powi(2) / (2.0 * tau)
}

/// Convex combination in cumulative-weight coordinates, where the density
/// constraint between neighbouring nodes is linear.
fn blend(dom: &Domain1D, p: &[f64], q: &[f64], theta: f64) -> Vec<f64> {
    p.iter()
        .zip(q)
        .map(|(&x, &y)| dom.inv_cum_weight((1.0 - theta) * dom.cum_weight(x) + theta * dom.cum_weight(y)))
        .collect()
}

fn closed_start(rho: &[f64]) -> (Domain1D, NodeState) {
    let dom = Domain1D::flat(0.0, 4.0, false).unwrap();
    // Cells have width 0.25; scale to unit mass without exceeding one.
    let scale = 4.0 / rho.iter().sum::<f64>();
    let m = Measure1D::new(dom, rho.iter().map(|r| r * scale).collect(), 0.0).unwrap();
    (dom, NodeState::from_measure(&m, NODES).unwrap())
}

fn densities() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0f64], 16)
        .prop_filter("room for unit mass", |v| v.iter().sum::<f64>() >= 4.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn step_beats_feasible_perturbations(rho in densities(), c1 in -1.0..1.0f64, c2 in 0.0..0.5f64, seed in 0u64..1000) {
        let (dom, prev) = closed_start(&rho);
        let d = PotentialD::polynomial(0.0, c1, c2);
        let tau = 0.05;
        let step = jko_step_nodes(&prev, &d, tau, &step_cfg()).unwrap();
        let best = objective(&step.state, &prev, &d, tau);
        prop_assert!((best - step.objective_value).abs() <= 1e-9 * (1.0 + best.abs()));

        // Competitors: the previous state, full packing at either end, and
        // uniform spreading, each blended with the minimiser.
        let n = NODES;
        let cap = dom.capacity();
        let packed_lo: Vec<f64> = (0..=n).map(|j| dom.inv_cum_weight(j as f64 / n as f64)).collect();
        let packed_hi: Vec<f64> = (0..=n).map(|j| dom.inv_cum_weight(cap - 1.0 + j as f64 / n as f64)).collect();
        let spread: Vec<f64> = (0..=n).map(|j| dom.inv_cum_weight(cap * j as f64 / n as f64)).collect();
        let targets = [prev.nodes().to_vec(), packed_lo, packed_hi, spread];
        let mut rng = seed;
        for k in 0..100 {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let theta = 1e-4 + (rng >> 11) as f64 / (1u64 << 53) as f64 * 0.5;
            let q = blend(&dom, step.state.nodes(), &targets[k % targets.len()], theta);
            let s = NodeState::new(dom, q, 0).unwrap();
            let v = objective(&s, &prev, &d, tau);
            prop_assert!(v >= best - 1e-9, "perturbation {k} at theta {theta}: {v} < {best}");
        }
    }

    #[test]
    fn step_cost_never_exceeds_previous_energy(rho in densities(), c1 in -1.0..1.0f64) {
        let (_, prev) = closed_start(&rho);
        let d = PotentialD::polynomial(0.0, c1, 0.0);
        let step = jko_step_nodes(&prev, &d, 0.05, &step_cfg()).unwrap();
        prop_assert!(step.objective_value <= prev.energy(&d) + 1e-12);
        prop_assert!(step.energy <= prev.energy(&d) + 1e-12);
    }
}

#[test]
fn packed_block_cannot_slide_into_the_exit_along_a_geodesic() {
    // A packed block moving rigidly towards the exit compresses along the
    // displacement interpolation only if the weight grows; on the cone it
    // overflows density one, so the interpolant is flagged.
    let c = Corridor::saturated();
    let traj = run_flow(&c.initial_measure(1024).unwrap(), &c.potential(), 0.1, 0.5, &FlowConfig::default()).unwrap();
    let mut flagged = 0;
    for k in 0..traj.n_steps() {
        let it = geodesic_interpolant(&traj, (k as f64 + 0.5) * traj.tau).unwrap();
        if !it.feasible {
            flagged += 1;
        }
    }
    assert!(flagged > 0);
    for s in &traj.states {
        assert!(s.render(1024).unwrap().rho().iter().all(|&r| r <= 1.0 + 1e-9));
    }
}

fn exit_gap(c: Corridor, tau: f64, steps: usize) -> (f64, f64) {
    let traj = run_flow(&c.initial_measure(2048).unwrap(), &c.potential(), tau, tau * steps as f64, &FlowConfig::default()).unwrap();
    let exact = discrete_profiles(&c, tau, steps).unwrap();
    let mut exit: f64 = 0.0;
    let mut front: f64 = 0.0;
    for k in (10..=steps).step_by(10) {
        exit = exit.max((traj.states[k].exit_mass() - exact[k].exited).abs());
        front = front.max((traj.states[k].saturated_front() - exact[k].b).abs());
    }
    (exit, front)
}

#[test]
fn generic_solver_tracks_the_exit_recurrence() {
    let (exit, front) = exit_gap(Corridor::fig4(), 0.05, 60);
    assert!(exit < 5e-4, "fig4 exit mass gap {exit}");
    // Just before saturation the near-critical density blurs the node front.
    assert!(front < 2e-2, "fig4 front gap {front}");
    let (exit, front) = exit_gap(Corridor::saturated(), 0.025, 40);
    assert!(exit < 1e-4, "saturated exit mass gap {exit}");
    assert!(front < 1e-3, "saturated front gap {front}");
}
