//! Iterated minimising movements.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::measure::Measure1D;
use crate::potential::PotentialD;

use super::diagnostics::{pressure_velocity_checks, zone_structure};
use super::state::NodeState;
use super::{check_tau, jko_step_nodes, StepConfig};

/// Options for [`run_flow`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub step: StepConfig,
    /// Fail on energy increase, H^1 bound, density or exit-mass violations.
    pub check_invariants: bool,
    /// Compute pressure residuals for every step.
    pub diagnostics: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            step: StepConfig::default(),
            check_invariants: true,
            diagnostics: false,
        }
    }
}

/// Scalar summary of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub w2_increment: f64,
    pub energy: f64,
    pub exit_mass: f64,
    pub b_estimate: f64,
    pub objective: f64,
    pub level_l: f64,
    pub max_density: f64,
    /// Pressure residuals, present when diagnostics are enabled.
    pub decomposition: Option<f64>,
    pub complementarity: Option<f64>,
    pub feasibility: Option<f64>,
    pub zones_hold: Option<bool>,
}

/// Node states `rho^0, ..., rho^N` with per-step records.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub tau: f64,
    pub states: Vec<NodeState>,
    pub records: Vec<StepRecord>,
    pub initial_energy: f64,
    pub n_cells: usize,
}

impl FlowTrajectory {
    pub fn n_steps(&self) -> usize {
        self.records.len()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.tau
    }

    /// Density of iterate `k` on the configured grid.
    pub fn iterate(&self, k: usize) -> Result<Measure1D> {
        self.states[k].render(self.n_cells)
    }

    /// Energies `J(rho^0), ..., J(rho^N)`.
    pub fn energies(&self) -> Vec<f64> {
        std::iter::once(self.initial_energy)
            .chain(self.records.iter().map(|r| r.energy))
            .collect()
    }

    /// `sum_k W_2^2(rho^{k+1}, rho^k) / tau`.
    pub fn kinetic_sum(&self) -> f64 {
        self.records.iter().map(|r| r.w2_increment.powi(2)).sum::<f64>() / self.tau
    }

    /// Index of the iterate closest to time `t`.
    pub fn index_at(&self, t: f64) -> usize {
        ((t / self.tau).round() as usize).min(self.n_steps())
    }

    /// CSV with columns `k,t,w2_increment,energy,exit_mass,b_estimate`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,t,w2_increment,energy,exit_mass,b_estimate\n");
        let s0 = &self.states[0];
        let _ = writeln!(out, "0,0,0,{},{},{}", self.initial_energy, s0.exit_mass(), s0.saturated_front());
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.k, r.t, r.w2_increment, r.energy, r.exit_mass, r.b_estimate
            );
        }
        out
    }
}

/// Number of steps of size `tau` reaching `t_final`.
pub fn step_count(tau: f64, t_final: f64) -> Result<usize> {
    if !(t_final >= 0.0 && tau > 0.0) {
        return Err(Error::InvalidArgument(format!("need tau > 0 and T >= 0, got {tau}, {t_final}")));
    }
    let n = (t_final / tau).round();
    if (n * tau - t_final).abs() > 1e-9 * t_final.max(tau) {
        return Err(Error::InvalidArgument(format!("T = {t_final} is not a multiple of tau = {tau}")));
    }
    Ok(n as usize)
}

/// Runs `T / tau` steps from `rho0`, failing at the first step that errors or
/// breaks an invariant.
pub fn run_flow(rho0: &Measure1D, d: &PotentialD, tau: f64, t_final: f64, cfg: &FlowConfig) -> Result<FlowTrajectory> {
    d.validate(rho0.domain())?;
    check_tau(d, tau, &cfg.step)?;
    let steps = step_count(tau, t_final)?;
    let s0 = NodeState::from_measure(rho0, cfg.step.n_nodes)?;
    run_flow_from(s0, d, tau, steps, cfg)
}

/// Runs `steps` steps from a node state.
pub fn run_flow_from(s0: NodeState, d: &PotentialD, tau: f64, steps: usize, cfg: &FlowConfig) -> Result<FlowTrajectory> {
    let e0 = s0.energy(d);
    let mut traj = FlowTrajectory {
        tau,
        states: Vec::with_capacity(steps + 1),
        records: Vec::with_capacity(steps),
        initial_energy: e0,
        n_cells: cfg.step.n_cells,
    };
    traj.states.push(s0);
    let mut kinetic = 0.0;
    for k in 1..=steps {
        let prev = traj.states.last().expect("non-empty");
        let step = jko_step_nodes(prev, d, tau, &cfg.step).map_err(|e| e.at_step(k))?;
        kinetic += step.w2_increment.powi(2) / tau;
        let prev_energy = traj.records.last().map_or(e0, |r| r.energy);
        let max_density = step.rho_next.max_density();
        if cfg.check_invariants {
            let fail = |msg: String| Err(Error::Invariant(msg).at_step(k));
            if step.energy > prev_energy + 1e-12 * (1.0 + prev_energy.abs()) {
                return fail(format!("energy increased from {prev_energy} to {}", step.energy));
            }
            if kinetic > 2.0 * (e0 - step.energy) + 1e-8 {
                return fail(format!("kinetic sum {kinetic} exceeds twice the energy drop {}", e0 - step.energy));
            }
            if max_density > 1.0 + 1e-8 {
                return fail(format!("density {max_density} exceeds one"));
            }
            if step.state.exit_mass() < prev.exit_mass() {
                return fail("exit mass decreased".into());
            }
        }
        let (mut dec, mut comp, mut feas, mut zones) = (None, None, None, None);
        if cfg.diagnostics {
            let c = pressure_velocity_checks(&step, d);
            dec = Some(c.decomposition);
            comp = Some(c.complementarity);
            feas = Some(c.feasibility);
            zones = Some(zone_structure(&step, d).holds());
        }
        traj.records.push(StepRecord {
            k,
            t: k as f64 * tau,
            w2_increment: step.w2_increment,
            energy: step.energy,
            exit_mass: step.state.exit_mass(),
            b_estimate: step.state.saturated_front(),
            objective: step.objective_value,
            level_l: step.level_l,
            max_density,
            decomposition: dec,
            complementarity: comp,
            feasibility: feas,
            zones_hold: zones,
        });
        traj.states.push(step.state);
    }
    Ok(traj)
}
