//! Randomized invariant battery.
//!
//! Every case draws its own generator from `seed + case`, so a failing case
//! can be replayed alone with `property_campaign(seed + case, 1)`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{Domain1D, WeightKind};
use crate::error::Result;
use crate::jko::{self, FlowConfig, FlowTrajectory, NodeState, StepConfig};
use crate::measure::{uniform_edges, Measure1D};
use crate::numerics::integrate;
use crate::potential::PotentialD;
use crate::quantile::QuantileFn;
use crate::transport::{plan_summary, w2_atoms, w2_lp_oracle, w2_quantiles};

/// Properties checked by [`property_campaign`], in report order.
pub const PROPERTY_NAMES: [&str; 8] = [
    "ot_oracle",
    "integral_flat",
    "integral_exit",
    "excess_mass",
    "energy_h1",
    "three_zone",
    "exit_monotone",
    "no_return",
];

const OT_TOL: f64 = 1e-9;
const REL_TOL: f64 = 1e-9;
const ABS_TOL: f64 = 1e-12;

/// Outcome of one property across all cases.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest `lhs / rhs` ratio seen; at most one when every case passes.
    pub worst_ratio: f64,
    /// `(case seed, message)` of the first failure.
    pub first_failure: Option<(u64, String)>,
}

impl PropertyResult {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            failures: 0,
            worst_ratio: 0.0,
            first_failure: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn record(&mut self, case_seed: u64, outcome: Result<Check>) {
        self.cases += 1;
        let fail = |s: &mut Self, msg: String| {
            s.failures += 1;
            if s.first_failure.is_none() {
                s.first_failure = Some((case_seed, msg));
            }
        };
        match outcome {
            Ok(c) => {
                if c.ratio.is_finite() {
                    self.worst_ratio = self.worst_ratio.max(c.ratio);
                }
                if !c.ok {
                    fail(self, c.detail);
                }
            }
            Err(e) => fail(self, format!("error: {e}")),
        }
    }
}

/// Per-property results of a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    pub seed: u64,
    pub n_cases: usize,
    pub properties: Vec<PropertyResult>,
}

impl CampaignReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyResult::passed)
    }

    pub fn property(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }

    /// CSV with header `property,cases,failures,worst_ratio,first_failure_seed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("property,cases,failures,worst_ratio,first_failure_seed\n");
        for p in &self.properties {
            let seed = p.first_failure.as_ref().map(|f| f.0.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{:e},{}", p.name, p.cases, p.failures, p.worst_ratio, seed);
        }
        out
    }

    /// One `PASS`/`FAIL` line per property.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.properties {
            let status = if p.passed() { "PASS" } else { "FAIL" };
            let _ = write!(
                out,
                "{status} {:<14} cases={} failures={} worst_ratio={:.3e}",
                p.name, p.cases, p.failures, p.worst_ratio
            );
            if let Some((seed, msg)) = &p.first_failure {
                let _ = write!(out, " first_failure_seed={seed} ({msg})");
            }
            out.push('\n');
        }
        out
    }
}

struct Check {
    ok: bool,
    ratio: f64,
    detail: String,
}

/// `lhs <= rhs` with the campaign tolerances.
fn bound(lhs: f64, rhs: f64, what: &str) -> Check {
    let ok = lhs <= rhs * (1.0 + REL_TOL) + ABS_TOL;
    Check {
        ok,
        ratio: if rhs > 0.0 { lhs / rhs } else if lhs <= ABS_TOL { 0.0 } else { f64::INFINITY },
        detail: format!("{what}: {lhs:e} > {rhs:e}"),
    }
}

fn flag(ok: bool, detail: impl Into<String>) -> Check {
    Check {
        ok,
        ratio: if ok { 0.0 } else { f64::INFINITY },
        detail: detail.into(),
    }
}

/// Runs `n_cases` randomized cases of every property in [`PROPERTY_NAMES`].
///
/// Deterministic: the same `(seed, n_cases)` gives an identical report.
pub fn property_campaign(seed: u64, n_cases: usize) -> CampaignReport {
    let mut props: Vec<PropertyResult> = PROPERTY_NAMES.iter().map(|n| PropertyResult::new(n)).collect();
    for case in 0..n_cases {
        let case_seed = seed.wrapping_add(case as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
        props[0].record(case_seed, ot_oracle(&mut rng));
        props[1].record(case_seed, integral_flat_check(&mut rng));
        props[3].record(case_seed, excess_mass(&mut rng));

        // One flow with an exit and one without, shared by the trajectory checks.
        let exit_seed: u64 = rng.random();
        let exit_flow = random_flow(&mut rng, true).map_err(|e| e.to_string());
        let closed_flow = random_flow(&mut rng, false).map_err(|e| e.to_string());
        let on_flow = |flow: &std::result::Result<RandomFlow, String>, check: &dyn Fn(&RandomFlow) -> Result<Check>| match flow {
            Ok(t) => check(t),
            Err(e) => Ok(flag(false, format!("flow failed: {e}"))),
        };
        props[2].record(case_seed, on_flow(&exit_flow, &|t| integral_exit_check(&mut ChaCha8Rng::seed_from_u64(exit_seed), t)));
        props[4].record(case_seed, and(on_flow(&exit_flow, &energy_h1), on_flow(&closed_flow, &energy_h1)));
        props[5].record(case_seed, and(on_flow(&exit_flow, &three_zone), on_flow(&closed_flow, &three_zone)));
        props[6].record(case_seed, on_flow(&exit_flow, &exit_monotone));
        props[7].record(case_seed, on_flow(&exit_flow, &no_return));
    }
    CampaignReport {
        seed,
        n_cases,
        properties: props,
    }
}

fn and(a: Result<Check>, b: Result<Check>) -> Result<Check> {
    let (a, b) = (a?, b?);
    Ok(Check {
        ok: a.ok && b.ok,
        ratio: a.ratio.max(b.ratio),
        detail: if a.ok { b.detail } else { a.detail },
    })
}

fn random_atoms(rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let n = rng.random_range(1..=8);
    let raw: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random::<f64>(), rng.random_range(0.05..1.0)))
        .collect();
    let total: f64 = raw.iter().map(|a| a.1).sum();
    raw.into_iter().map(|(x, m)| (x, m / total)).collect()
}

/// Quantile route against the transport linear program.
fn ot_oracle(rng: &mut impl Rng) -> Result<Check> {
    let src = random_atoms(rng);
    let dst = random_atoms(rng);
    let by_quantiles = w2_quantiles(&QuantileFn::from_atoms(&src)?, &QuantileFn::from_atoms(&dst)?)?;
    let by_merge = w2_atoms(&src, &dst)?;
    let by_lp = w2_lp_oracle(&src, &dst)?;
    let gap = (by_quantiles - by_lp).abs().max((by_merge - by_lp).abs());
    Ok(Check {
        ok: gap <= OT_TOL,
        ratio: gap / OT_TOL,
        detail: format!("quantile {by_quantiles} merge {by_merge} lp {by_lp}"),
    })
}

/// Random smooth test function `sum_k c_k sin(k pi x / L + phi_k) + c_0 x`.
struct TestFn {
    terms: Vec<(f64, f64, f64)>,
    slope: f64,
}

impl TestFn {
    fn random(rng: &mut impl Rng, length: f64) -> Self {
        let terms = (1..=4)
            .map(|k| {
                (
                    rng.random_range(-1.0..1.0),
                    k as f64 * std::f64::consts::PI / length,
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        Self {
            terms,
            slope: rng.random_range(-1.0..1.0),
        }
    }

    fn value(&self, x: f64) -> f64 {
        self.slope * x + self.terms.iter().map(|(c, w, p)| c * (w * x + p).sin()).sum::<f64>()
    }

    fn deriv(&self, x: f64) -> f64 {
        self.slope + self.terms.iter().map(|(c, w, p)| c * w * (w * x + p).cos()).sum::<f64>()
    }

    /// `||f'||_{L^2(w dr)}` over the domain.
    fn grad_norm(&self, dom: &Domain1D) -> f64 {
        integrate(|r| self.deriv(r).powi(2) * dom.weight(r), dom.a(), dom.r_max(), 1e-14, 1e-13).sqrt()
    }
}

/// Piecewise constant density bounded by `cap` on a flat interval, as a quantile.
fn capped_quantile(rng: &mut impl Rng, dom: Domain1D, cap: f64) -> Result<(QuantileFn, Vec<f64>)> {
    let n = 16;
    let edges = uniform_edges(&dom, n);
    let h = edges[1] - edges[0];
    let u: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random::<f64>() })
        .collect();
    let rho = fill_to_mass(&u, &vec![h; n], cap, 1.0);
    let mut pts = vec![(0.0, dom.a())];
    let mut s = 0.0;
    for i in 0..n {
        s += rho[i] * h;
        pts.push((s.min(1.0), edges[i + 1]));
    }
    pts.last_mut().expect("non-empty").0 = 1.0;
    // Repeated `s` values encode empty cells.
    Ok((QuantileFn::from_points(dom, &pts, 0.0)?, rho))
}

/// Densities `min(cap, lambda u_i)` with `lambda` chosen so that the cells of
/// size `w_i` carry `mass`. Cells with `u_i = 0` are revived if capacity is short.
fn fill_to_mass(u: &[f64], w: &[f64], cap: f64, mass: f64) -> Vec<f64> {
    let mut u = u.to_vec();
    let room = |u: &[f64]| -> f64 { u.iter().zip(w).filter(|(v, _)| **v > 0.0).map(|(_, w)| cap * w).sum() };
    if room(&u) < mass * 1.05 {
        for v in u.iter_mut() {
            if *v == 0.0 {
                *v = 0.5;
            }
        }
    }
    let at = |lam: f64| -> f64 { u.iter().zip(w).map(|(v, w)| (lam * v).min(cap) * w).sum() };
    let (mut lo, mut hi) = (0.0, 1.0);
    while at(hi) < mass {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid) < mass {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho: Vec<f64> = u.iter().map(|v| (hi * v).min(cap)).collect();
    // Remove the last bits of bisection error from an unsaturated cell.
    let err = mass - at(hi);
    let mut rho = rho;
    if let Some(i) = (0..rho.len()).find(|&i| rho[i] > 0.0 && rho[i] < cap) {
        rho[i] = (rho[i] + err / w[i]).clamp(0.0, cap);
    }
    rho
}

/// `\int f d(mu - nu) <= sqrt(C) ||f'||_{L^2} W_2(mu, nu)` for densities below `C`.
fn integral_flat_check(rng: &mut impl Rng) -> Result<Check> {
    let length = rng.random_range(1.0..4.0);
    let dom = Domain1D::flat(0.0, length, false)?;
    let cap = rng.random_range(1.0f64..3.0).max(1.2 / length);
    let (mu, rho_mu) = capped_quantile(rng, dom, cap)?;
    let (nu, rho_nu) = capped_quantile(rng, dom, cap)?;
    let f = TestFn::random(rng, length);
    let edges = uniform_edges(&dom, rho_mu.len());
    let lhs: f64 = (0..rho_mu.len())
        .map(|i| (rho_mu[i] - rho_nu[i]) * integrate(|x| f.value(x), edges[i], edges[i + 1], 1e-15, 1e-14))
        .sum();
    let rhs = cap.sqrt() * f.grad_norm(&dom) * w2_quantiles(&mu, &nu)?;
    Ok(bound(lhs, rhs, "flat integral bound"))
}

fn random_domain(rng: &mut impl Rng, has_exit: bool) -> Result<Domain1D> {
    let cap = rng.random_range(1.5..3.0);
    if rng.random_bool(0.5) {
        let a = rng.random_range(0.0..1.0);
        Domain1D::flat(a, a + cap, has_exit)
    } else {
        let a = if has_exit || rng.random_bool(0.5) { rng.random_range(0.3..1.5) } else { 0.0 };
        let r_max = a + rng.random_range(1.0..3.0);
        Domain1D::radial(a, r_max, cap / (r_max * r_max - a * a), has_exit)
    }
}

fn random_measure(rng: &mut impl Rng, dom: Domain1D, exit_mass: f64) -> Result<Measure1D> {
    let n = 24;
    let edges = uniform_edges(&dom, n);
    let w: Vec<f64> = edges.windows(2).map(|e| dom.weight_between(e[0], e[1])).collect();
    let u: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() })
        .collect();
    let rho = fill_to_mass(&u, &w, 1.0, 1.0 - exit_mass);
    Measure1D::unnormalized(dom, edges, rho, exit_mass)
}

/// Geometry constant `(3 c^2)^{1/3}` where `|[a, a + t]| <= c t`.
pub(crate) fn excess_constant(dom: &Domain1D) -> f64 {
    let c = match dom.kind() {
        WeightKind::Flat => 1.0,
        WeightKind::Radial => dom.half_angle() * (dom.a() + dom.r_max()),
    };
    (3.0 * c * c).cbrt()
}

/// `|mu(exit) - nu(exit)| <= C W_2^{2/3}`.
fn excess_mass(rng: &mut impl Rng) -> Result<Check> {
    let dom = random_domain(rng, true)?;
    let e1 = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..0.6) };
    let e2 = rng.random_range(0.0..0.6);
    let mu = QuantileFn::exact(&random_measure(rng, dom, e1)?)?;
    let nu = QuantileFn::exact(&random_measure(rng, dom, e2)?)?;
    let w2 = w2_quantiles(&mu, &nu)?;
    Ok(bound((e1 - e2).abs(), excess_constant(&dom) * w2.powf(2.0 / 3.0), "excess mass"))
}

struct RandomFlow {
    traj: FlowTrajectory,
    d: PotentialD,
    step: StepConfig,
}

fn random_flow(rng: &mut impl Rng, has_exit: bool) -> Result<RandomFlow> {
    random_flow_with(rng, has_exit, 256)
}

fn random_flow_with(rng: &mut impl Rng, has_exit: bool, n_nodes: usize) -> Result<RandomFlow> {
    let dom = random_domain(rng, has_exit)?;
    let d = if has_exit {
        PotentialD::polynomial(0.0, rng.random_range(0.3..2.0), rng.random_range(0.0..0.3))
    } else {
        // Interior minimum somewhere in the domain.
        let c2 = rng.random_range(0.1..0.5);
        let centre = rng.random_range(dom.a()..dom.r_max());
        PotentialD::polynomial(0.0, -2.0 * c2 * centre, c2)
    };
    let exit_mass = if has_exit && rng.random_bool(0.5) { rng.random_range(0.0..0.3) } else { 0.0 };
    let m0 = random_measure(rng, dom, exit_mass)?;
    let tau = rng.random_range(0.02..0.2);
    let steps = rng.random_range(3..=6);
    let cfg = FlowConfig {
        step: StepConfig {
            n_nodes,
            n_cells: n_nodes,
            enforce_tau_cap: true,
        },
        check_invariants: false,
        diagnostics: true,
    };
    let s0 = NodeState::from_measure(&m0, cfg.step.n_nodes)?;
    d.validate(&dom)?;
    let traj = jko::run_flow_from(s0, &d, tau, steps, &cfg)?;
    Ok(RandomFlow { traj, d, step: cfg.step })
}

/// With `f(a) = 0`, `\int f d(rho_j - rho_k) <= ||f'||_{L^2} sum_{i=j+1}^k W_2(rho_{i-1}, rho_i)`.
fn integral_exit_check(rng: &mut impl Rng, flow: &RandomFlow) -> Result<Check> {
    let traj = &flow.traj;
    let dom = *traj.states[0].domain();
    let n = traj.n_steps();
    let j = rng.random_range(0..n);
    let k = rng.random_range(j + 1..=n);
    let g = TestFn::random(rng, dom.diameter());
    let fa = g.value(dom.a());
    let f = |r: f64| g.value(r) - fa;
    let qj = traj.states[j].quantile()?;
    let qk = traj.states[k].quantile()?;
    let lhs = qj.integrate_refined(f, 512) - qk.integrate_refined(f, 512);
    let path: f64 = traj.records[j..k].iter().map(|r| r.w2_increment).sum();
    Ok(bound(lhs, g.grad_norm(&dom) * path, "exit integral bound"))
}

fn energy_h1(flow: &RandomFlow) -> Result<Check> {
    let traj = &flow.traj;
    let e = traj.energies();
    let mut worst = 0.0f64;
    for w in e.windows(2) {
        worst = worst.max(w[1] - w[0]);
    }
    let mono = flag(worst <= 1e-12 * (1.0 + e[0].abs()), format!("energy increased by {worst:e}"));
    let drop = e[0] - e[e.len() - 1];
    let h1 = bound(traj.kinetic_sum(), 2.0 * drop + 1e-8, "kinetic sum");
    and(Ok(mono), Ok(h1))
}

fn three_zone(flow: &RandomFlow) -> Result<Check> {
    let traj = &flow.traj;
    let mut worst = 0.0f64;
    for (k, r) in traj.records.iter().enumerate() {
        // Recomputed to get the margins; the flow itself only keeps the verdict.
        let step = jko::jko_step_nodes(&traj.states[k], &flow.d, traj.tau, &flow.step)?;
        let z = jko::zone_structure(&step, &flow.d);
        let excess = z.saturated_excess.max(z.free_deviation).max(z.vacuum_deficit);
        worst = worst.max(excess / z.tolerance);
        if !z.holds() || r.zones_hold != Some(true) {
            return Ok(Check {
                ok: false,
                ratio: excess / z.tolerance,
                detail: format!("step {}: {z:?}", k + 1),
            });
        }
    }
    Ok(Check {
        ok: true,
        ratio: worst,
        detail: String::new(),
    })
}

fn exit_monotone(flow: &RandomFlow) -> Result<Check> {
    let traj = &flow.traj;
    let m: Vec<f64> = traj.states.iter().map(|s| s.exit_mass()).collect();
    let ok = m.windows(2).all(|w| w[1] >= w[0]);
    Ok(flag(ok, format!("exit masses {m:?}")))
}

/// Mass already in the exit is mapped to the exit by the optimal plan.
fn no_return(flow: &RandomFlow) -> Result<Check> {
    let traj = &flow.traj;
    for w in traj.states.windows(2) {
        let (q0, q1) = (w[0].quantile()?, w[1].quantile()?);
        let plan = plan_summary(&q0, &q1, 256)?;
        let a = w[0].domain().a();
        let m0 = w[0].exit_mass();
        let moved = plan.map_samples.iter().any(|&(s, _, dst)| s < m0 && dst != a);
        if !plan.stay_on_exit || moved {
            return Ok(flag(false, format!("exit mass {m0} left the exit")));
        }
    }
    Ok(flag(true, ""))
}
