//! Teaching and execution loops on top of the graph policy and the impedance arm.

mod field;
mod rollout;

pub use field::{vector_field, FieldBounds, FieldPolicy, FieldSample};
pub use rollout::{rollout_ensemble, rollout_single, RolloutConfig, RolloutStats};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::coupling::{dual_step, ArmDrive, CouplingConfig, DualArmState};
use crate::demo::{DemoOptions, Demonstration, Recording};
use crate::error::{Error, Result};
use crate::ggp::GraphModel;
use crate::impedance::{step_dynamics, ArmState, ControlCommand, ImpedanceController, SimConfig};

/// Operating mode of an engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    PassiveTeaching,
    ActiveTeaching,
    Executing,
}

/// Phase state with the legal transitions and the model precondition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseMachine {
    phase: Phase,
}

impl Default for PhaseMachine {
    fn default() -> Self {
        Self { phase: Phase::Idle }
    }
}

impl PhaseMachine {
    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Moves to `to`. Every non-idle phase is entered from and returns to `Idle`;
    /// active teaching and execution need a fitted model.
    pub fn transition(&mut self, to: Phase, has_model: bool) -> Result<()> {
        let legal = match (self.phase, to) {
            (Phase::Idle, Phase::PassiveTeaching) => true,
            (Phase::Idle, Phase::ActiveTeaching | Phase::Executing) => has_model,
            (Phase::PassiveTeaching | Phase::ActiveTeaching | Phase::Executing, Phase::Idle) => true,
            _ => false,
        };
        if !legal {
            if !has_model && matches!(to, Phase::ActiveTeaching | Phase::Executing) && self.phase == Phase::Idle {
                return Err(Error::EmptyModel);
            }
            return Err(Error::PhaseTransition {
                from: self.phase,
                to,
            });
        }
        self.phase = to;
        Ok(())
    }
}

/// Per-arm snapshot of one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmTick {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub attractor: Vec<f64>,
    pub sigma: f64,
    pub k_scale: f64,
    /// Diagonal of the regulated stiffness.
    pub k_hat_diag: Vec<f64>,
    pub f_ext: Vec<f64>,
    /// Saturated attractor displacement sent this tick.
    pub delta_x: Vec<f64>,
    /// Static command force `K̂·Δx`.
    pub f_cmd: Vec<f64>,
    pub t_b: f64,
    pub nearest_index: usize,
}

fn arm_tick(state: &ArmState, plan: &Plan, f_ext: &DVector<f64>) -> ArmTick {
    ArmTick {
        x: state.x.as_slice().to_vec(),
        v: state.v.as_slice().to_vec(),
        attractor: plan.attractor.as_slice().to_vec(),
        sigma: plan.sigma,
        k_scale: plan.command.k_scale,
        k_hat_diag: plan.command.k_hat().diagonal().as_slice().to_vec(),
        f_ext: f_ext.as_slice().to_vec(),
        delta_x: plan.command.delta_x.as_slice().to_vec(),
        f_cmd: plan.command.static_force().as_slice().to_vec(),
        t_b: state.t_b,
        nearest_index: plan.nearest_index,
    }
}

/// One simulation tick, one entry per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub time: f64,
    pub arms: Vec<ArmTick>,
}

/// Result of [`execute_tick`].
#[derive(Debug, Clone)]
pub struct TickOutput {
    pub state: ArmState,
    pub command: ControlCommand,
    pub record: ArmTick,
}

/// Policy half of a tick: query, time-belief update and the saturated, regulated command.
#[derive(Debug, Clone)]
pub struct Plan {
    pub command: ControlCommand,
    pub attractor: DVector<f64>,
    pub sigma: f64,
    pub goal_time: f64,
    pub nearest_index: usize,
}

pub fn plan_tick(model: &GraphModel, arm: &ArmState, controller: &ImpedanceController) -> Result<Plan> {
    if controller.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: controller.dim(),
        });
    }
    let q = model.query(arm.x.as_slice(), arm.t_b)?;
    let goal = DVector::from_vec(q.goal_pos);
    let command = controller.command(&arm.x, &goal, q.sigma)?;
    let attractor = command.attractor(&arm.x);
    Ok(Plan {
        command,
        attractor,
        sigma: q.sigma,
        goal_time: q.goal_time,
        nearest_index: q.nearest_index,
    })
}

/// Queries the policy at `(x, t_b)`, moves the time belief to the selected label,
/// sends the saturated displacement with the regulated stiffness and steps the arm.
pub fn execute_tick(
    model: &GraphModel,
    arm: &ArmState,
    controller: &ImpedanceController,
    f_ext: &DVector<f64>,
    sim: &SimConfig,
) -> Result<TickOutput> {
    let plan = plan_tick(model, arm, controller)?;
    let mut state = step_dynamics(arm, &plan.attractor, &plan.command.gains, f_ext, sim)?;
    state.t_b = plan.goal_time;
    let record = arm_tick(&state, &plan, f_ext);
    Ok(TickOutput {
        state,
        command: plan.command,
        record,
    })
}

/// Result of [`execute_dual_tick`].
#[derive(Debug, Clone)]
pub struct DualTickOutput {
    pub state: DualArmState,
    /// Coupling after saturation and regulation.
    pub coupling: CouplingConfig,
    pub records: [ArmTick; 2],
}

/// Bimanual tick: each arm plans on its own model, the coupling channel is saturated
/// and regulated with the larger of the two uncertainties, then both arms are stepped
/// together. `f_ext` is the external (human) force per arm, coupling excluded.
pub fn execute_dual_tick(
    models: [&GraphModel; 2],
    dual: &DualArmState,
    controller: &ImpedanceController,
    coupling: &CouplingConfig,
    f_ext: [&DVector<f64>; 2],
    sim: &SimConfig,
) -> Result<DualTickOutput> {
    let pl = plan_tick(models[0], &dual.left, controller)?;
    let pr = plan_tick(models[1], &dual.right, controller)?;
    let coupling = coupling.saturated(controller.limits(), pl.sigma.max(pr.sigma))?;
    let mut state = dual_step(
        dual,
        ArmDrive {
            attractor: &pl.attractor,
            gains: &pl.command.gains,
            f_ext: f_ext[0],
        },
        ArmDrive {
            attractor: &pr.attractor,
            gains: &pr.command.gains,
            f_ext: f_ext[1],
        },
        &coupling,
        sim,
    )?;
    state.left.t_b = pl.goal_time;
    state.right.t_b = pr.goal_time;
    let records = [arm_tick(&state.left, &pl, f_ext[0]), arm_tick(&state.right, &pr, f_ext[1])];
    Ok(DualTickOutput {
        state,
        coupling,
        records,
    })
}

/// Stop rule: within `2λ_pos` of the goal position and `λ_time` of the goal time.
pub fn reached_goal(model: &GraphModel, arm: &ArmState) -> bool {
    let p = model.params();
    let d = crate::kernel::euclidean(arm.x.as_slice(), model.goal_pos());
    d <= 2.0 * p.lambda_pos && (arm.t_b - model.goal_time()).abs() <= p.lambda_time
}

/// Outcome of [`run_execution`].
#[derive(Debug, Clone)]
pub struct ExecutionTrace {
    pub records: Vec<TickRecord>,
    pub final_state: ArmState,
    pub converged: bool,
    pub ticks: usize,
}

/// Runs ticks until [`reached_goal`] or the tick budget. `force(tick, state)` supplies
/// the external force at each tick.
pub fn run_execution<F>(
    model: &GraphModel,
    start: ArmState,
    controller: &ImpedanceController,
    sim: &SimConfig,
    max_ticks: usize,
    record: bool,
    mut force: F,
) -> Result<ExecutionTrace>
where
    F: FnMut(usize, &ArmState) -> DVector<f64>,
{
    sim.validate()?;
    let mut state = start;
    let mut records = Vec::new();
    let mut ticks = 0;
    let mut converged = reached_goal(model, &state);
    while !converged && ticks < max_ticks {
        let f = force(ticks, &state);
        let out = execute_tick(model, &state, controller, &f, sim)?;
        state = out.state;
        ticks += 1;
        if record {
            records.push(TickRecord {
                time: ticks as f64 * sim.dt,
                arms: vec![out.record],
            });
        }
        converged = reached_goal(model, &state);
    }
    Ok(ExecutionTrace {
        records,
        final_state: state,
        converged,
        ticks,
    })
}

/// Execution start state: at rest on `x` with the time belief at the first node.
pub fn start_state(model: &GraphModel, x: &[f64]) -> Result<ArmState> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    Ok(ArmState::from_slice(x, model.start_time()))
}

/// Collects a streamed kinesthetic demonstration.
pub fn run_passive_teaching<I, P>(stream: I, options: DemoOptions) -> Result<Demonstration>
where
    I: IntoIterator<Item = (P, f64)>,
    P: AsRef<[f64]>,
{
    let mut rec: Option<Recording> = None;
    for (i, (p, t)) in stream.into_iter().enumerate() {
        let p = p.as_ref();
        let r = rec.get_or_insert_with(|| Recording::new(p.len()));
        if let Some(&prev) = r.times().last() {
            if t <= prev {
                return Err(Error::NonIncreasingTime {
                    index: i,
                    previous: prev,
                    current: t,
                });
            }
        }
        r.push(p, t)?;
    }
    match rec {
        Some(r) => r.into_demonstration(options),
        None => Err(Error::TooFewPoints { required: 2, got: 0 }),
    }
}

/// Outcome of [`run_active_teaching`].
#[derive(Debug, Clone)]
pub struct ActiveTeachingOutcome {
    pub model: GraphModel,
    pub records: Vec<TickRecord>,
    pub final_state: ArmState,
}

/// Executes the policy for `n_ticks` while `human(tick, state)` pushes the arm, records
/// the visited positions at simulation time and appends them to the model.
pub fn run_active_teaching<F>(
    model: &GraphModel,
    start: ArmState,
    controller: &ImpedanceController,
    sim: &SimConfig,
    n_ticks: usize,
    mut human: F,
) -> Result<ActiveTeachingOutcome>
where
    F: FnMut(usize, &ArmState) -> DVector<f64>,
{
    if n_ticks < 2 {
        return Err(Error::TooFewPoints {
            required: 2,
            got: n_ticks,
        });
    }
    sim.validate()?;
    let mut session = Recording::new(model.dim());
    let mut records = Vec::with_capacity(n_ticks);
    let mut state = start;
    for k in 0..n_ticks {
        let f = human(k, &state);
        let out = execute_tick(model, &state, controller, &f, sim)?;
        state = out.state;
        let time = (k + 1) as f64 * sim.dt;
        session.push(state.x.as_slice(), time)?;
        records.push(TickRecord {
            time,
            arms: vec![out.record],
        });
    }
    Ok(ActiveTeachingOutcome {
        model: model.append_session(&session)?,
        records,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelMode, KernelParams};
    use approx::assert_relative_eq;

    fn line_model(n: usize, spacing: f64, dt: f64, params: KernelParams) -> GraphModel {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![0.1 + i as f64 * spacing, 0.5]).collect();
        let demo = Demonstration::from_rows(&rows, (0..n).map(|i| i as f64 * dt).collect()).unwrap();
        GraphModel::fit(&demo, params).unwrap()
    }

    #[test]
    fn phase_machine_rules() {
        let mut m = PhaseMachine::default();
        assert!(matches!(m.transition(Phase::Executing, false), Err(Error::EmptyModel)));
        m.transition(Phase::PassiveTeaching, false).unwrap();
        assert!(matches!(
            m.transition(Phase::Executing, true),
            Err(Error::PhaseTransition { .. })
        ));
        m.transition(Phase::Idle, false).unwrap();
        m.transition(Phase::Executing, true).unwrap();
        assert!(m.transition(Phase::ActiveTeaching, true).is_err());
        m.transition(Phase::Idle, true).unwrap();
        m.transition(Phase::ActiveTeaching, true).unwrap();
        assert_eq!(m.phase(), Phase::ActiveTeaching);
    }

    #[test]
    fn tick_at_node_targets_successor() {
        let model = line_model(20, 0.01, 0.05, KernelParams::default());
        let c = ImpedanceController::default_for(2);
        let arm = ArmState::from_slice(model.node_pos(3), model.node_time(3));
        let out = execute_tick(&model, &arm, &c, &DVector::zeros(2), &SimConfig::default()).unwrap();
        assert_eq!(out.record.nearest_index, 3);
        assert_eq!(out.record.sigma, 0.0);
        assert_eq!(out.record.k_scale, 1.0);
        assert_relative_eq!(out.record.attractor[0], model.node_pos(4)[0], epsilon = 1e-15);
        assert_eq!(out.state.t_b, model.node_time(4));
    }

    #[test]
    fn dragged_far_from_chain_softens() {
        let model = line_model(20, 0.01, 0.05, KernelParams::default());
        let c = ImpedanceController::default_for(2);
        let mut x = model.node_pos(5).to_vec();
        x[1] += 0.15;
        let arm = ArmState::from_slice(&x, model.node_time(5));
        let out = execute_tick(&model, &arm, &c, &DVector::zeros(2), &SimConfig::default()).unwrap();
        assert_relative_eq!(out.record.sigma, 1.0 - (-3.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(out.record.k_scale, (-2.0f64).exp(), epsilon = 1e-12);
        assert!((out.record.k_scale - 0.1353).abs() < 1e-4);
    }

    #[test]
    fn blocked_arm_waits_on_successor() {
        // position-dominated regime: per-node spacing / λ_pos exceeds per-node time step / λ_time
        let params = KernelParams::new(0.05, 1.0, KernelMode::PoseTime).unwrap();
        let model = line_model(40, 0.01, 0.02, params);
        let c = ImpedanceController::default_for(2);
        let sim = SimConfig::default();
        let mut arm = ArmState::from_slice(model.node_pos(10), model.node_time(10));
        let wall = arm.x[0];
        let mut prev_tb = arm.t_b;
        for _ in 0..400 {
            // blocking force cancels the spring along the motion
            let plan = plan_tick(&model, &arm, &c).unwrap();
            let spring = plan.command.k_hat() * (&plan.attractor - &arm.x) - plan.command.gains.damping() * &arm.v;
            let f = DVector::from_vec(vec![-spring[0], 0.0]);
            let out = execute_tick(&model, &arm, &c, &f, &sim).unwrap();
            let idx_now = (out.state.t_b - model.start_time()) / 0.02;
            let idx_prev = (prev_tb - model.start_time()) / 0.02;
            assert!(idx_now - idx_prev <= 1.0 + 1e-9);
            prev_tb = out.state.t_b;
            arm = out.state;
            assert!((arm.x[0] - wall).abs() < 1e-9);
        }
        assert_relative_eq!(arm.t_b, model.node_time(11), epsilon = 1e-12);
    }

    #[test]
    fn execution_converges_with_monotone_time_belief() {
        let model = line_model(60, 0.01, 0.05, KernelParams::default());
        let c = ImpedanceController::default_for(2);
        let start = start_state(&model, model.start_pos()).unwrap();
        let trace = run_execution(&model, start, &c, &SimConfig::default(), 20_000, true, |_, s| {
            DVector::zeros(s.dim())
        })
        .unwrap();
        assert!(trace.converged);
        assert!(trace
            .records
            .windows(2)
            .all(|w| w[1].arms[0].t_b >= w[0].arms[0].t_b));
    }

    #[test]
    fn passive_teaching_examples() {
        let pts = vec![(vec![0.0, 0.0], 0.0), (vec![0.01, 0.0], 0.1), (vec![0.02, 0.0], 0.2)];
        let demo = run_passive_teaching(pts.clone(), DemoOptions::default()).unwrap();
        assert_eq!(demo.len(), 3);
        let repeated = vec![(vec![0.0], 0.0), (vec![0.01], 0.1), (vec![0.02], 0.1)];
        assert!(matches!(
            run_passive_teaching(repeated, DemoOptions::default()),
            Err(Error::NonIncreasingTime { index: 2, .. })
        ));
        let model = GraphModel::fit(&demo, KernelParams::default()).unwrap();
        let mut x = model.start_pos().to_vec();
        let mut t = model.start_time();
        let mut visited = vec![];
        for _ in 0..model.n_pairs() {
            let q = model.query(&x, t).unwrap();
            x = q.goal_pos;
            t = q.goal_time;
            visited.push(x.clone());
        }
        let expected: Vec<Vec<f64>> = pts[1..].iter().map(|(p, _)| p.clone()).collect();
        assert_eq!(visited, expected);
    }

    #[test]
    fn active_teaching_rejects_short_sessions() {
        let model = line_model(10, 0.01, 0.05, KernelParams::default());
        let c = ImpedanceController::default_for(2);
        let start = start_state(&model, model.start_pos()).unwrap();
        let r = run_active_teaching(&model, start, &c, &SimConfig::default(), 1, |_, s| DVector::zeros(s.dim()));
        assert!(r.is_err());
    }

    #[test]
    fn lateral_push_shifts_appended_nodes() {
        let sim = SimConfig::default();
        let model = line_model(800, 0.0005, sim.dt, KernelParams::default());
        let c = ImpedanceController::default_for(2);
        let start = start_state(&model, model.start_pos()).unwrap();
        let push = 6.0;
        let out = run_active_teaching(&model, start, &c, &sim, 600, |k, s| {
            if (100..500).contains(&k) {
                DVector::from_vec(vec![0.0, push])
            } else {
                DVector::zeros(s.dim())
            }
        })
        .unwrap();
        assert_eq!(out.model.n_nodes(), model.n_nodes() + 600);
        let base = model.n_nodes();
        assert!(out.records[300..500].iter().all(|r| r.arms[0].k_scale == 1.0));
        for k in 300..500 {
            let y = out.model.node_pos(base + k)[1];
            assert!((y - 0.5 - push / 600.0).abs() < 1e-3, "node {k}: {y}");
        }
    }

    #[test]
    fn dual_tick_without_coupling_matches_single_arms() {
        let params = KernelParams::default();
        let a = line_model(40, 0.01, 0.05, params);
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![0.6, 0.1 + i as f64 * 0.01]).collect();
        let b = GraphModel::fit(
            &Demonstration::from_rows(&rows, (0..40).map(|i| i as f64 * 0.05).collect()).unwrap(),
            params,
        )
        .unwrap();
        let c = ImpedanceController::default_for(2);
        let sim = SimConfig::default();
        let mut dual = DualArmState::new(
            ArmState::from_slice(&[0.12, 0.52], 0.0),
            ArmState::from_slice(&[0.58, 0.1], 0.0),
        )
        .unwrap();
        let (mut l, mut r) = (dual.left.clone(), dual.right.clone());
        let f = DVector::from_vec(vec![1.0, -2.0]);
        let z = DVector::zeros(2);
        for _ in 0..50 {
            let out = execute_dual_tick([&a, &b], &dual, &c, &CouplingConfig::disabled(2), [&f, &z], &sim).unwrap();
            dual = out.state;
            l = execute_tick(&a, &l, &c, &f, &sim).unwrap().state;
            r = execute_tick(&b, &r, &c, &z, &sim).unwrap().state;
        }
        assert_eq!(dual.left, l);
        assert_eq!(dual.right, r);
    }

    #[test]
    fn coupled_arms_follow_a_pushed_partner() {
        let params = KernelParams::new(0.05, 1.0, KernelMode::PoseTime).unwrap();
        let a = line_model(40, 0.001, 0.005, params);
        let c = ImpedanceController::default_for(2);
        let sim = SimConfig::default();
        let offset = DVector::from_vec(vec![0.0, 0.0]);
        let coupling = CouplingConfig::default_for(2).with_offset(offset).unwrap();
        let start = ArmState::from_slice(&[0.1, 0.5], 0.0);
        let mut dual = DualArmState::new(start.clone(), start).unwrap();
        let push = DVector::from_vec(vec![0.0, 10.0]);
        let z = DVector::zeros(2);
        let mut coupled_force = 0.0f64;
        for _ in 0..100 {
            let out = execute_dual_tick([&a, &a], &dual, &c, &coupling, [&push, &z], &sim).unwrap();
            dual = out.state;
            coupled_force = coupled_force.max(out.coupling.stiffness()[(1, 1)]);
        }
        assert!(dual.right.x[1] > 0.5 + 1e-3, "right {}", dual.right.x[1]);
        assert!(dual.left.x[1] > dual.right.x[1]);
        assert!(coupled_force > 0.0);
    }
}
