//! Scenario files: domain, initial density, potential, time stepping and
//! outputs, with the presets used for the corridor figures.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corridor::Corridor;
use crate::domain::{Domain1D, WeightKind};
use crate::error::{Error, Result};
use crate::harness::{halving_sequence, StudyMethod};
use crate::jko::{self, FlowConfig, FlowTrajectory, StepConfig};
use crate::measure::Measure1D;
use crate::plot::{density_svg, DensityPlot};
use crate::potential::PotentialD;

/// Residual bound for the pressure decomposition and complementarity at the
/// default resolutions. The complementarity residual is first order in `tau`,
/// so this is reported rather than enforced.
pub const PRESSURE_TOL: f64 = 1e-3;

/// A complete scenario as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub domain: DomainSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub study: StudySpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub a: f64,
    #[serde(rename = "R")]
    pub r_max: f64,
    pub weight: WeightKind,
    /// Radial domains without it are scaled to unit initial mass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_angle: Option<f64>,
    pub has_exit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Uniform { value: f64 },
    /// Piecewise constant: `rho[i]` on `[r[i], r[i + 1])`.
    Table { r: Vec<f64>, rho: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `D(r) = r - a`.
    #[default]
    DistanceToExit,
    Polynomial { c0: f64, c1: f64, c2: f64 },
    /// Piecewise linear through `(r[i], d[i])`.
    Table { r: Vec<f64>, d: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub tau: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    /// Pressure and zone checks on every step.
    #[serde(default = "yes")]
    pub diagnostics: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_cells")]
    pub n_cells: usize,
    #[serde(default = "default_nodes")]
    pub n_nodes: usize,
}

fn default_cells() -> usize {
    StepConfig::default().n_cells
}

fn default_nodes() -> usize {
    StepConfig::default().n_nodes
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_cells: default_cells(),
            n_nodes: default_nodes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    /// Halving step sizes; empty means `0.1, 0.05, ..., 0.00625`.
    #[serde(default)]
    pub taus: Vec<f64>,
    #[serde(default)]
    pub method: StudyMethod,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

/// Command-line style replacements applied on top of a scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    /// One value for a run, at least four halving values for a study.
    pub taus: Option<Vec<f64>>,
    pub t_final: Option<f64>,
    pub snapshots: Option<Vec<f64>>,
    pub out: Option<String>,
}

/// Validated objects ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub domain: Domain1D,
    pub rho0: Measure1D,
    pub potential: PotentialD,
    pub flow: FlowConfig,
    pub steps: usize,
}

impl ScenarioConfig {
    /// Parses and validates a TOML scenario.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.build()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    /// `fig3` (closed cone), `fig4` (cone with exit) or `saturated`.
    pub fn preset(name: &str) -> Result<Self> {
        let (c, tau, t_final, snapshots) = match name {
            "fig3" => (Corridor::fig3(), 0.01, 6.0, vec![0.5, 1.5, 3.0, 6.0]),
            "fig4" => (
                Corridor::fig4(),
                0.01,
                10.0,
                vec![1.25, 2.5, 3.75, 5.0, 6.25, 7.5, 8.75, 10.0],
            ),
            "saturated" => (Corridor::saturated(), 0.00625, 1.0, vec![0.25, 0.5, 1.0]),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?}; expected fig3, fig4 or saturated"
                )))
            }
        };
        Ok(Self::corridor_scenario(&c, tau, t_final, snapshots))
    }

    fn corridor_scenario(c: &Corridor, tau: f64, t_final: f64, snapshots: Vec<f64>) -> Self {
        Self {
            domain: DomainSpec {
                a: c.a,
                r_max: c.r_max,
                weight: WeightKind::Radial,
                half_angle: None,
                has_exit: c.has_exit(),
            },
            initial: InitialSpec::Uniform { value: c.rho0 },
            potential: PotentialSpec::DistanceToExit,
            run: RunSpec {
                tau,
                t_final,
                snapshots,
                diagnostics: true,
            },
            grid: GridSpec::default(),
            study: StudySpec::default(),
            output: OutputSpec::default(),
        }
    }

    /// Checks every field and builds the domain, initial measure and potential.
    pub fn build(&self) -> Result<Scenario> {
        let ds = &self.domain;
        let (a, r) = (ds.a, ds.r_max);
        let (edges, rho) = match &self.initial {
            InitialSpec::Uniform { value } => (vec![a, r], vec![*value]),
            InitialSpec::Table { r: e, rho } => (e.clone(), rho.clone()),
        };
        if edges.len() != rho.len() + 1 {
            return Err(Error::Config(format!(
                "initial: {} edges for {} densities",
                edges.len(),
                rho.len()
            )));
        }
        let half_angle = match (ds.weight, ds.half_angle) {
            (WeightKind::Radial, None) => {
                let m: f64 = rho
                    .iter()
                    .zip(edges.windows(2))
                    .map(|(v, e)| v * (e[1] * e[1] - e[0] * e[0]))
                    .sum();
                if !(m > 0.0) {
                    return Err(Error::Config("initial: density carries no mass".into()));
                }
                1.0 / m
            }
            (_, h) => h.unwrap_or(0.0),
        };
        let domain = Domain1D::new(a, r, ds.weight, half_angle, ds.has_exit)?;
        let rho0 = if rho.len() == 1 {
            Measure1D::uniform(domain, rho[0], self.grid.n_cells)?
        } else {
            Measure1D::with_edges(domain, edges, rho, 0.0)?
        };
        let potential = match &self.potential {
            PotentialSpec::DistanceToExit => PotentialD::distance_to_exit(&domain),
            PotentialSpec::Polynomial { c0, c1, c2 } => PotentialD::polynomial(*c0, *c1, *c2),
            PotentialSpec::Table { r, d } => PotentialD::table(r.clone(), d.clone())?,
        };
        potential.validate(&domain)?;
        if self.grid.n_cells < 2 || self.grid.n_nodes < 2 {
            return Err(Error::Config("grid: need at least two cells and two nodes".into()));
        }
        let rs = &self.run;
        let steps = jko::step_count(rs.tau, rs.t_final)?;
        if let Some(t) = rs.snapshots.iter().find(|&&t| !(t >= 0.0 && t <= rs.t_final)) {
            return Err(Error::Config(format!("run: snapshot {t} outside [0, {}]", rs.t_final)));
        }
        let flow = FlowConfig {
            step: StepConfig {
                n_nodes: self.grid.n_nodes,
                n_cells: self.grid.n_cells,
                ..StepConfig::default()
            },
            check_invariants: false,
            diagnostics: rs.diagnostics,
        };
        jko::check_tau(&potential, rs.tau, &flow.step)?;
        Ok(Scenario {
            domain,
            rho0,
            potential,
            flow,
            steps,
        })
    }

    /// The corridor this scenario describes, if it is one: a radial domain
    /// scaled to unit mass, uniform initial density and `D = r - a`.
    pub fn corridor(&self) -> Result<Corridor> {
        let rho0 = match (&self.initial, &self.potential, self.domain.weight, self.domain.half_angle) {
            (InitialSpec::Uniform { value }, PotentialSpec::DistanceToExit, WeightKind::Radial, None) => *value,
            _ => {
                return Err(Error::Config(
                    "studies need a radial domain without half_angle, uniform initial density and distance_to_exit".into(),
                ))
            }
        };
        Corridor::new(self.domain.a, self.domain.r_max, rho0, self.domain.has_exit)
    }

    /// Applies overrides for a run and revalidates.
    pub fn for_run(mut self, o: &Overrides) -> Result<Self> {
        if let Some(t) = &o.taus {
            match t.as_slice() {
                [tau] => self.run.tau = *tau,
                _ => return Err(Error::Config(format!("run: need exactly one tau, got {}", t.len()))),
            }
        }
        self.apply_common(o);
        self.build()?;
        Ok(self)
    }

    /// Applies overrides for a convergence study and revalidates.
    pub fn for_study(mut self, o: &Overrides) -> Result<Self> {
        if let Some(t) = &o.taus {
            self.study.taus = t.clone();
        }
        self.apply_common(o);
        self.build()?;
        let taus = self.study_taus();
        if taus.len() < 4 {
            return Err(Error::Config(format!(
                "study: need at least 4 time steps, got {}",
                taus.len()
            )));
        }
        for &tau in &taus {
            jko::step_count(tau, self.run.t_final)?;
        }
        self.corridor()?;
        Ok(self)
    }

    fn apply_common(&mut self, o: &Overrides) {
        if let Some(t) = o.t_final {
            self.run.t_final = t;
            if o.snapshots.is_none() {
                self.run.snapshots.retain(|&s| s <= t);
            }
        }
        if let Some(s) = &o.snapshots {
            self.run.snapshots = s.clone();
        }
        if let Some(d) = &o.out {
            self.output.dir = Some(d.clone());
        }
    }

    /// Output directory, `out` unless configured.
    pub fn out_dir(&self) -> &str {
        self.output.dir.as_deref().unwrap_or("out")
    }

    /// Step sizes of the convergence study.
    pub fn study_taus(&self) -> Vec<f64> {
        if self.study.taus.is_empty() {
            halving_sequence(0.1, 5)
        } else {
            self.study.taus.clone()
        }
    }
}

/// Checks along a trajectory; the run fails if any is violated.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantSummary {
    pub steps: usize,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub kinetic_sum: f64,
    pub energy_nonincreasing: bool,
    pub h1_bound: bool,
    pub max_density: f64,
    pub exit_monotone: bool,
    pub final_exit_mass: f64,
    pub max_decomposition: Option<f64>,
    pub max_complementarity: Option<f64>,
    pub zone_failures: Option<usize>,
}

impl InvariantSummary {
    pub fn of(traj: &FlowTrajectory) -> Self {
        let e = traj.energies();
        let energy_nonincreasing = e.windows(2).all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
        let mut kinetic = 0.0;
        let mut h1_bound = true;
        for r in &traj.records {
            kinetic += r.w2_increment.powi(2) / traj.tau;
            h1_bound &= kinetic <= 2.0 * (traj.initial_energy - r.energy) + 1e-8;
        }
        let exit: Vec<f64> = traj.states.iter().map(|s| s.exit_mass()).collect();
        let fold = |f: fn(&jko::StepRecord) -> Option<f64>| -> Option<f64> {
            traj.records.iter().map(f).try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))
        };
        let zone_failures = traj
            .records
            .iter()
            .map(|r| r.zones_hold)
            .try_fold(0usize, |n, z| z.map(|ok| n + usize::from(!ok)));
        Self {
            steps: traj.n_steps(),
            initial_energy: traj.initial_energy,
            final_energy: *e.last().expect("initial energy"),
            kinetic_sum: kinetic,
            energy_nonincreasing,
            h1_bound,
            max_density: traj.records.iter().map(|r| r.max_density).fold(0.0, f64::max),
            exit_monotone: exit.windows(2).all(|w| w[1] >= w[0]),
            final_exit_mass: *exit.last().expect("initial state"),
            max_decomposition: if traj.records.is_empty() { None } else { fold(|r| r.decomposition) },
            max_complementarity: if traj.records.is_empty() { None } else { fold(|r| r.complementarity) },
            zone_failures: if traj.records.is_empty() { None } else { zone_failures },
        }
    }

    /// Energy, discrete `H^1` bound, density bound, exit monotonicity and zones.
    pub fn passed(&self) -> bool {
        self.energy_nonincreasing
            && self.h1_bound
            && self.max_density <= 1.0 + 1e-8
            && self.exit_monotone
            && self.zone_failures.is_none_or(|n| n == 0)
    }

    /// Whether both pressure residuals are below [`PRESSURE_TOL`].
    pub fn pressure_within_tol(&self) -> Option<bool> {
        Some(self.max_decomposition? <= PRESSURE_TOL && self.max_complementarity? <= PRESSURE_TOL)
    }

    /// `key = value` lines followed by `status = pass|fail`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:e}"));
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "initial_energy = {}", self.initial_energy);
        let _ = writeln!(s, "final_energy = {}", self.final_energy);
        let _ = writeln!(s, "kinetic_sum = {}", self.kinetic_sum);
        let _ = writeln!(s, "energy_nonincreasing = {}", self.energy_nonincreasing);
        let _ = writeln!(s, "h1_bound = {}", self.h1_bound);
        let _ = writeln!(s, "max_density = {}", self.max_density);
        let _ = writeln!(s, "exit_monotone = {}", self.exit_monotone);
        let _ = writeln!(s, "final_exit_mass = {}", self.final_exit_mass);
        let _ = writeln!(s, "max_decomposition = {}", opt(self.max_decomposition));
        let _ = writeln!(s, "max_complementarity = {}", opt(self.max_complementarity));
        let within = self.pressure_within_tol().map_or("n/a".to_string(), |b| b.to_string());
        let _ = writeln!(s, "pressure_within_tol = {within}");
        let zones = self.zone_failures.map_or("n/a".to_string(), |n| n.to_string());
        let _ = writeln!(s, "zone_failures = {zones}");
        let _ = writeln!(s, "status = {}", if self.passed() { "pass" } else { "fail" });
        s
    }
}

/// Files produced by a run, by name, plus the invariant summary.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub files: Vec<(String, String)>,
    pub summary: InvariantSummary,
}

/// Runs the flow and renders the trajectory, snapshots and summary.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let sc = cfg.build()?;
    let traj = jko::run_flow(&sc.rho0, &sc.potential, cfg.run.tau, cfg.run.t_final, &sc.flow)?;
    let corridor = cfg.corridor().ok();
    let mut files = vec![
        ("config.toml".to_string(), cfg.to_toml()),
        ("trajectory.csv".to_string(), traj.to_csv()),
    ];
    for &t in &cfg.run.snapshots {
        let k = traj.index_at(t);
        let time = traj.time(k);
        let m = traj.iterate(k)?;
        let reference = match &corridor {
            Some(c) => Some(reference_curve(c, time)?),
            None => None,
        };
        let svg = density_svg(&DensityPlot {
            density: &m,
            time,
            reference,
            show_exit: true,
        });
        let stem = format!("rho_t{}", snapshot_label(time));
        files.push((format!("{stem}.csv"), m.to_csv()));
        files.push((format!("{stem}.svg"), svg));
    }
    let summary = InvariantSummary::of(&traj);
    files.push(("summary.txt".to_string(), summary.to_text()));
    Ok(RunOutput { files, summary })
}

impl RunOutput {
    /// Writes every file into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

fn reference_curve(c: &Corridor, t: f64) -> Result<Vec<(f64, f64)>> {
    let p = c.continuous_profile(t)?;
    let n = 800;
    Ok((0..=n)
        .map(|i| {
            let r = c.a + (c.r_max - c.a) * i as f64 / n as f64;
            (r, p.density(r))
        })
        .collect())
}

/// Time with three decimals, as used in snapshot file names.
pub fn snapshot_label(t: f64) -> String {
    format!("{t:.3}")
}
