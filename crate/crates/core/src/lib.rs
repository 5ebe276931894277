//! Graph Gaussian Process movement primitives on a simulated impedance-controlled arm.
//!
//! A demonstration becomes a chain of `(position, time)` nodes ([`GraphModel`]). The
//! policy correlates the arm state and its time belief with every node, picks the
//! best one and returns its successor as the attractor, with `1 - correlation` as an
//! uncertainty. The attractor drives a critically damped point-mass impedance loop
//! whose displacement and stiffness are clamped to velocity and force limits and
//! softened when the uncertainty is high. Two arms can be tied by a coupling spring.

pub mod coupling;
pub mod demo;
pub mod engine;
pub mod error;
pub mod ggp;
pub mod gp;
pub mod impedance;
pub mod io;
pub mod kernel;

pub use coupling::{coupling_forces, dual_step, ArmDrive, CouplingConfig, DualArmState};
pub use demo::{DemoOptions, Demonstration, Recording};
pub use engine::{
    execute_dual_tick, execute_tick, rollout_ensemble, run_active_teaching, run_execution, run_passive_teaching,
    vector_field, Phase, PhaseMachine, RolloutConfig, RolloutStats, TickRecord,
};
pub use error::{Error, Result};
pub use ggp::{GraphModel, QueryResult};
pub use gp::GpBaselineModel;
pub use impedance::{
    ArmState, ControlCommand, Gains, ImpedanceController, SafetyLimits, SimConfig,
};
pub use kernel::{exp_kernel, nearest_node, KernelMode, KernelParams};
