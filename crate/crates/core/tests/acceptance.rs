//! Acceptance suite. Each test checks one criterion at its stated tolerance
//! and prints a single `criterion N: PASS|FAIL ...` line.

use std::io::Write as _;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use crowdflow::corridor::{discrete_profiles, step_b_no_exit, Corridor};
use crowdflow::harness::{convergence_study, fit_order, halving_sequence, momentum_study, property_campaign, StudyMethod};
use crowdflow::jko::{momentum_discrepancy, momentum_fields, run_flow, FlowConfig, FlowTrajectory};
use crowdflow::quantile::QuantileFn;
use crowdflow::scenario::InvariantSummary;
use crowdflow::transport::{w2_atoms, w2_quantiles};
use crowdflow::w2_lp_oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes past the test harness capture so the line lands in the log.
fn report(n: u32, ok: bool, detail: String) {
    let status = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stdout(), "criterion {n}: {status} {detail}");
}

fn diagnosed() -> FlowConfig {
    FlowConfig {
        diagnostics: true,
        ..FlowConfig::default()
    }
}

fn preset_run(c: Corridor, t_final: f64) -> (FlowTrajectory, Duration) {
    let t0 = Instant::now();
    let traj = run_flow(&c.initial_measure(2048).unwrap(), &c.potential(), 0.01, t_final, &diagnosed()).unwrap();
    (traj, t0.elapsed())
}

fn fig3_run() -> &'static (FlowTrajectory, Duration) {
    static RUN: OnceLock<(FlowTrajectory, Duration)> = OnceLock::new();
    RUN.get_or_init(|| preset_run(Corridor::fig3(), 6.0))
}

fn fig4_run() -> &'static (FlowTrajectory, Duration) {
    static RUN: OnceLock<(FlowTrajectory, Duration)> = OnceLock::new();
    RUN.get_or_init(|| preset_run(Corridor::fig4(), 10.0))
}

#[test]
fn criterion_1_closed_corridor_is_exact() {
    let t0 = Instant::now();
    let (rho0, tau) = (0.4f64, 0.01);
    let c = rho0.sqrt() / (1.0 - rho0.sqrt());
    let mut b = 0.0;
    let mut worst: f64 = 0.0;
    for k in 1..=100 {
        b = step_b_no_exit(b, k, tau, rho0, 10.0).unwrap();
        let exact = k as f64 * tau * c;
        worst = worst.max((b - exact).abs() / exact);
    }
    let dt = t0.elapsed();
    let ok = worst <= 1e-10 && dt < Duration::from_secs(1);
    report(1, ok, format!("max relative error {worst:.3e} in {dt:.2?}"));
    assert!(ok);
}

#[test]
fn criterion_2_generic_solver_matches_benchmark() {
    let t0 = Instant::now();
    let c = Corridor::fig3();
    let traj = run_flow(&c.initial_measure(2048).unwrap(), &c.potential(), 0.01, 1.0, &FlowConfig::default()).unwrap();
    let exact = discrete_profiles(&c, 0.01, 100).unwrap()[100].quantile(4096).unwrap();
    let w = w2_quantiles(&traj.states[100].quantile().unwrap(), &exact).unwrap();
    let dt = t0.elapsed();
    let ok = w <= 1e-3 && dt < Duration::from_secs(120);
    report(2, ok, format!("W2 at k = 100: {w:.3e} in {dt:.2?}"));
    assert!(ok);
}

#[test]
fn criterion_3_convergence_order() {
    let t0 = Instant::now();
    let c = Corridor::saturated();
    let taus = halving_sequence(0.1, 5);
    let r = convergence_study(&c, &taus, 1.0, StudyMethod::Recurrence).unwrap();
    let (ob, ow) = (r.order_b.unwrap().order, r.order_w2.unwrap().order);
    let trimmed = fit_order(&taus[1..], &r.err_b[1..]).unwrap().order;
    let dt = t0.elapsed();
    let band = 0.85..=1.1;
    let ok = band.contains(&ob) && band.contains(&ow) && (trimmed - ob).abs() < 0.1 && dt < Duration::from_secs(600);
    report(
        3,
        ok,
        format!("front order {ob:.4}, W2 order {ow:.4}, without largest tau {trimmed:.4} in {dt:.2?}"),
    );
    assert!(ok);
}

#[test]
fn criterion_4_energy_and_discrete_h1() {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, (traj, _)) in [("fig3", fig3_run()), ("fig4", fig4_run())] {
        let s = InvariantSummary::of(traj);
        let slack = 2.0 * (s.initial_energy - s.final_energy) + 1e-8 - s.kinetic_sum;
        ok &= s.energy_nonincreasing && s.h1_bound;
        lines.push(format!("{name}: nonincreasing {} h1 slack {slack:.3e}", s.energy_nonincreasing));
    }
    // Independent of the summary: recompute from the raw records.
    for (traj, _) in [fig3_run(), fig4_run()] {
        let e = traj.energies();
        ok &= e.windows(2).all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
        ok &= traj.kinetic_sum() <= 2.0 * (e[0] - e[e.len() - 1]) + 1e-8;
    }
    report(4, ok, lines.join(", "));
    assert!(ok);
}

#[test]
fn criterion_5_decomposition_and_complementarity() {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, (traj, _)) in [("fig3", fig3_run()), ("fig4", fig4_run())] {
        let dec = traj.records.iter().map(|r| r.decomposition.unwrap()).fold(0.0, f64::max);
        let comp = traj.records.iter().map(|r| r.complementarity.unwrap()).fold(0.0, f64::max);
        ok &= dec <= 1e-3 && comp <= 1e-3;
        lines.push(format!("{name}: decomposition {dec:.3e} complementarity {comp:.3e}"));
    }
    report(5, ok, lines.join(", "));
    assert!(ok);
}

fn random_atoms(rng: &mut impl Rng, n: usize) -> Vec<(f64, f64)> {
    let raw: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(0.0..5.0), rng.random_range(0.01..1.0))).collect();
    let total: f64 = raw.iter().map(|a| a.1).sum();
    raw.into_iter().map(|(x, m)| (x, m / total)).collect()
}

#[test]
fn criterion_6_ot_oracle_equivalence() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let (n, m) = (2 + case % 7, 1 + (case * 5) % 9);
        let (src, dst) = (random_atoms(&mut rng, n), random_atoms(&mut rng, m));
        let lp = w2_lp_oracle(&src, &dst).unwrap();
        let quantile = w2_quantiles(&QuantileFn::from_atoms(&src).unwrap(), &QuantileFn::from_atoms(&dst).unwrap()).unwrap();
        let merge = w2_atoms(&src, &dst).unwrap();
        worst = worst.max((quantile - lp).abs()).max((merge - lp).abs());
    }
    let dt = t0.elapsed();
    let ok = worst <= 1e-9 && dt < Duration::from_secs(30);
    report(6, ok, format!("max |w2_1d - lp| {worst:.3e} over 200 instances in {dt:.2?}"));
    assert!(ok);
}

#[test]
fn criterion_7_property_battery() {
    let t0 = Instant::now();
    let r = property_campaign(2024, 200);
    let dt = t0.elapsed();
    let wanted = ["integral_flat", "integral_exit", "excess_mass", "three_zone", "exit_monotone", "no_return"];
    let mut ok = dt < Duration::from_secs(300);
    let mut parts = Vec::new();
    for name in wanted {
        let p = r.property(name).unwrap();
        ok &= p.cases == 200 && p.failures == 0;
        parts.push(format!("{name} {}/{}", p.cases - p.failures, p.cases));
    }
    report(7, ok, format!("{} in {dt:.2?}", parts.join(", ")));
    assert!(ok, "{}", r.to_text());
}

#[test]
fn criterion_8_momentum_discrepancy_rate() {
    let t0 = Instant::now();
    let c = Corridor::fig4();
    let taus = halving_sequence(0.08, 5);
    let r = momentum_study(&c, &taus, 10.0, &FlowConfig::default()).unwrap();
    let slope = r.order.unwrap().order;

    // Second route at the coarsest step: integrate the binned momentum gap.
    let tau = taus[0];
    let traj = run_flow(&c.initial_measure(2048).unwrap(), &c.potential(), tau, 10.0, &FlowConfig::default()).unwrap();
    let mut binned = 0.0;
    for k in 1..=traj.n_steps() {
        let m = momentum_fields(&traj, (k as f64 - 0.5) * tau, 512).unwrap();
        binned += tau * m.e_tilde.iter().zip(&m.e_hat).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    let direct = momentum_discrepancy(&traj).unwrap();
    let routes = (binned - direct).abs() / direct;
    let dt = t0.elapsed();
    let ok = slope >= 0.23 && routes < 0.05 && (direct - r.discrepancy[0]).abs() < 1e-12 && dt < Duration::from_secs(600);
    report(
        8,
        ok,
        format!(
            "slope {slope:.4} over tau {:?}, binned vs direct {routes:.2e} in {dt:.2?}",
            taus
        ),
    );
    assert!(ok, "{:?}", r.discrepancy);
}
