//! Minimising-movement (JKO) schemes for congested crowd motion on
//! one-dimensional weighted domains, with analytic corridor solutions used
//! as references.

pub mod corridor;
pub mod domain;
pub mod error;
pub mod harness;
pub mod jko;
pub mod measure;
pub mod numerics;
pub mod plot;
pub mod potential;
pub mod quantile;
pub mod scenario;
pub mod transport;

pub use domain::{Domain1D, WeightKind};
pub use error::{Error, Result};
pub use jko::{jko_step, run_flow, FlowConfig, FlowTrajectory, JkoStepResult, StepConfig};
pub use measure::{total_mass, Measure1D};
pub use potential::{PotentialD, Profile};
pub use scenario::{run_scenario, ScenarioConfig};
pub use quantile::{density_of, quantile_of, QuantileFn};
pub use transport::{
    kantorovich_potential, w2_1d, w2_lp_oracle, Potential1D, TransportPlanSummary,
};
