//! Convergence studies and randomized property campaigns.

mod campaign;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corridor::{discrete_profiles, ode_reference, Corridor, Regime};
use crate::error::{Error, Result};
use crate::jko::{self, FlowConfig, NodeState, StepConfig};
use crate::numerics::linear_fit;
use crate::quantile::QuantileFn;
use crate::transport::w2_quantiles;

pub use campaign::{property_campaign, CampaignReport, PropertyResult, PROPERTY_NAMES};

/// Errors below this are treated as round-off and excluded from order fits.
const MACHINE_ERROR: f64 = 1e-11;

/// How the discrete front is produced in a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMethod {
    /// Semi-analytic step recurrence of the corridor.
    #[default]
    Recurrence,
    /// Generic node solver with resolution growing like `1 / tau`.
    Generic,
}

/// Slope and quality of a log-log least squares fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderFit {
    pub order: f64,
    pub r_squared: f64,
}

/// Per-`tau` errors at the final time and their fitted orders.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub t_final: f64,
    pub taus: Vec<f64>,
    /// `|b(T) - b_tau(T)|`.
    pub err_b: Vec<f64>,
    /// `W_2(rho(T), rho_tau(T))`.
    pub err_w2: Vec<f64>,
    /// `None` when the errors are at round-off level.
    pub order_b: Option<OrderFit>,
    pub order_w2: Option<OrderFit>,
    pub b_reference: f64,
}

impl SweepReport {
    /// CSV with header `tau,err_b,err_w2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,err_b,err_w2\n");
        for i in 0..self.taus.len() {
            let _ = writeln!(out, "{},{},{}", self.taus[i], self.err_b[i], self.err_w2[i]);
        }
        out
    }

    /// `order=<value> r2=<value>` for the front error.
    pub fn summary_line(&self) -> String {
        match self.order_b {
            Some(f) => format!("order={:.4} r2={:.4}", f.order, f.r_squared),
            None => "order=n/a r2=n/a".to_string(),
        }
    }
}

/// Least squares slope of `ln err` against `ln tau`.
///
/// Returns `None` if fewer than two errors exceed round-off.
pub fn fit_order(taus: &[f64], errs: &[f64]) -> Option<OrderFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = taus
        .iter()
        .zip(errs)
        .filter(|(_, &e)| e > MACHINE_ERROR)
        .map(|(t, e)| (t.ln(), e.ln()))
        .unzip();
    if x.len() < 2 || x.len() < taus.len() {
        return None;
    }
    let (k, _, r2) = linear_fit(&x, &y);
    k.is_finite().then_some(OrderFit { order: k, r_squared: r2 })
}

fn check_taus(taus: &[f64], t_final: f64) -> Result<Vec<usize>> {
    if taus.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "a convergence study needs at least 4 time steps, got {}",
            taus.len()
        )));
    }
    for w in taus.windows(2) {
        if ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "time steps must halve, got {} followed by {}",
                w[0], w[1]
            )));
        }
    }
    taus.iter().map(|&tau| jko::step_count(tau, t_final)).collect()
}

/// Quantile resolution used for a given step: proportional to `1 / tau`, capped.
pub fn resolution_for(tau: f64) -> usize {
    ((64.0 / tau).ceil() as usize).clamp(1024, 16_384)
}

struct Point {
    b: f64,
    quantile: QuantileFn,
}

fn discrete_point(c: &Corridor, tau: f64, steps: usize, method: StudyMethod) -> Result<Point> {
    let n = resolution_for(tau);
    match method {
        StudyMethod::Recurrence => {
            let last = *discrete_profiles(c, tau, steps)?.last().expect("initial profile");
            Ok(Point {
                b: last.b,
                quantile: last.quantile(n)?,
            })
        }
        StudyMethod::Generic => {
            let s0 = NodeState::from_quantile(&c.initial_profile().quantile(n)?, n)?;
            let cfg = FlowConfig {
                step: StepConfig {
                    n_nodes: n,
                    ..StepConfig::default()
                },
                check_invariants: true,
                diagnostics: false,
            };
            let traj = jko::run_flow_from(s0, &c.potential(), tau, steps, &cfg)?;
            let last = traj.states.last().expect("initial state");
            Ok(Point {
                b: last.saturated_front(),
                quantile: last.quantile()?,
            })
        }
    }
}

/// Errors of the discrete scheme against the continuous front at `t_final`
/// for a halving sequence of steps.
///
/// The reference is the self-converged RK4 front for an exit corridor and the
/// closed form otherwise. Runs for different steps execute concurrently.
pub fn convergence_study(c: &Corridor, taus: &[f64], t_final: f64, method: StudyMethod) -> Result<SweepReport> {
    let steps = check_taus(taus, t_final)?;
    let exact = match c.regime {
        Regime::Exit => {
            let r = ode_reference(c, t_final)?;
            let mut p = c.continuous_profile(t_final)?;
            p.b = r.b;
            p.exited = (1.0 - p.interior_mass()).max(0.0);
            p
        }
        Regime::NoExit => c.continuous_profile(t_final)?,
    };
    let exact_q = exact.quantile(resolution_for(*taus.last().expect("non-empty")))?;
    let points: Vec<Result<Point>> = std::thread::scope(|scope| {
        let handles: Vec<_> = taus
            .iter()
            .zip(&steps)
            .map(|(&tau, &n)| scope.spawn(move || discrete_point(c, tau, n, method)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("study worker panicked")).collect()
    });
    let mut err_b = Vec::with_capacity(taus.len());
    let mut err_w2 = Vec::with_capacity(taus.len());
    for (p, &tau) in points.into_iter().zip(taus) {
        let p = p.map_err(|e| Error::InvalidArgument(format!("tau = {tau}: {e}")))?;
        err_b.push((p.b - exact.b).abs());
        err_w2.push(w2_quantiles(&p.quantile, &exact_q)?);
    }
    Ok(SweepReport {
        t_final,
        order_b: fit_order(taus, &err_b),
        order_w2: fit_order(taus, &err_w2),
        taus: taus.to_vec(),
        err_b,
        err_w2,
        b_reference: exact.b,
    })
}

/// Momentum carried into the exit per step size, with its fitted decay.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumReport {
    pub taus: Vec<f64>,
    /// `\int_0^T \int |E_tilde - E_hat| dt` for each step.
    pub discrepancy: Vec<f64>,
    pub order: Option<OrderFit>,
}

impl MomentumReport {
    /// CSV with header `tau,discrepancy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,discrepancy\n");
        for (t, d) in self.taus.iter().zip(&self.discrepancy) {
            let _ = writeln!(out, "{t},{d}");
        }
        out
    }
}

/// Runs the generic flow of `c` up to `t_final` for each step and measures the
/// momentum discrepancy of its interpolants. Runs execute concurrently.
pub fn momentum_study(c: &Corridor, taus: &[f64], t_final: f64, cfg: &FlowConfig) -> Result<MomentumReport> {
    check_taus(taus, t_final)?;
    let rho0 = c.initial_measure(cfg.step.n_cells)?;
    let d = c.potential();
    let results: Vec<Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = taus
            .iter()
            .map(|&tau| {
                let (rho0, d) = (&rho0, &d);
                scope.spawn(move || jko::momentum_discrepancy(&jko::run_flow(rho0, d, tau, t_final, cfg)?))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("study worker panicked")).collect()
    });
    let mut discrepancy = Vec::with_capacity(taus.len());
    for (r, &tau) in results.into_iter().zip(taus) {
        discrepancy.push(r.map_err(|e| Error::InvalidArgument(format!("tau = {tau}: {e}")))?);
    }
    Ok(MomentumReport {
        order: fit_order(taus, &discrepancy),
        taus: taus.to_vec(),
        discrepancy,
    })
}

/// `tau_0, tau_0 / 2, ...` with `n` entries.
pub fn halving_sequence(tau0: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| tau0 / (1u64 << i) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_invariant_under_scaling() {
        let taus = halving_sequence(0.1, 5);
        let errs: Vec<f64> = taus.iter().map(|t| 0.3 * t.powf(0.97) * (1.0 + t)).collect();
        let doubled: Vec<f64> = errs.iter().map(|e| 2.0 * e).collect();
        let f1 = fit_order(&taus, &errs).unwrap();
        let f2 = fit_order(&taus, &doubled).unwrap();
        assert!((f1.order - f2.order).abs() < 1e-12);
        assert!((f1.r_squared - f2.r_squared).abs() < 1e-12);
    }

    #[test]
    fn machine_level_errors_have_no_order() {
        let taus = halving_sequence(0.1, 4);
        assert!(fit_order(&taus, &[1e-15, 0.0, 3e-16, 1e-14]).is_none());
    }

    #[test]
    fn rejects_short_or_irregular_sweeps() {
        let c = Corridor::saturated();
        assert!(convergence_study(&c, &[0.1], 1.0, StudyMethod::Recurrence).is_err());
        assert!(convergence_study(&c, &[0.1, 0.05, 0.02, 0.01], 1.0, StudyMethod::Recurrence).is_err());
        assert!(convergence_study(&c, &halving_sequence(0.3, 4), 1.0, StudyMethod::Recurrence).is_err());
    }

    #[test]
    fn closed_corridor_is_exact() {
        let r = convergence_study(&Corridor::fig3(), &halving_sequence(0.1, 4), 1.0, StudyMethod::Recurrence).unwrap();
        assert!(r.err_b.iter().all(|&e| e < 1e-12), "{:?}", r.err_b);
        assert!(r.order_b.is_none());
        assert_eq!(r.summary_line(), "order=n/a r2=n/a");
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let r = convergence_study(&Corridor::fig3(), &halving_sequence(0.1, 4), 1.0, StudyMethod::Recurrence).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("tau,err_b,err_w2\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}
