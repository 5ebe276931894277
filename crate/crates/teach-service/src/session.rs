//! One teaching session: phase machine, per-arm recordings and models, drag springs
//! and the fixed-rate simulation. Pure and synchronous; the server drives it.

use ggp_core::engine::{execute_dual_tick, execute_tick, ArmTick, PhaseMachine};
use ggp_core::impedance::{ArmState, Gains, ImpedanceController, SafetyLimits, SimConfig, DEFAULT_STIFFNESS};
use ggp_core::kernel::{KernelMode, KernelParams};
use ggp_core::{CouplingConfig, DemoOptions, Demonstration, DualArmState, GraphModel, Phase, Recording};
use nalgebra::DVector;

use crate::protocol::{parse_client, ArmFrame, ClientFrame, ErrorCode, ServerFrame, PROTOCOL_VERSION};

/// Default drag spring [N/m].
pub const DEFAULT_K_DRAG: f64 = 1000.0;
/// Default simulation rate [Hz].
pub const DEFAULT_SIM_RATE: f64 = 200.0;
/// Default tick broadcast rate [Hz].
pub const DEFAULT_TICK_RATE: f64 = 30.0;
/// Upper bound on recorded samples per arm and phase.
pub const MAX_RECORDING: usize = 1_000_000;

const MAX_ARMS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub sim: SimConfig,
    pub tick_rate: f64,
    pub k_drag: f64,
    pub params: KernelParams,
    pub stiffness: f64,
    pub arms: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            tick_rate: DEFAULT_TICK_RATE,
            k_drag: DEFAULT_K_DRAG,
            params: KernelParams::default(),
            stiffness: DEFAULT_STIFFNESS,
            arms: 1,
        }
    }
}

impl SessionConfig {
    /// Simulation at `sim_rate` Hz, ticks broadcast at `tick_rate` Hz.
    pub fn with_rates(sim_rate: f64, tick_rate: f64) -> Result<Self, String> {
        if !(sim_rate.is_finite() && sim_rate > 0.0 && tick_rate.is_finite() && tick_rate > 0.0) {
            return Err(format!("rates must be positive, got {sim_rate} and {tick_rate}"));
        }
        if tick_rate > sim_rate {
            return Err(format!("tick rate {tick_rate} exceeds simulation rate {sim_rate}"));
        }
        let sim = SimConfig::new(1.0, 1.0 / sim_rate).map_err(|e| e.to_string())?;
        Ok(Self {
            sim,
            tick_rate,
            ..Self::default()
        })
    }

    pub fn sim_rate(&self) -> f64 {
        1.0 / self.sim.dt
    }
}

/// Pointer spring attached to one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct DragState {
    pub active: bool,
    pub pointer: DVector<f64>,
    pub k_drag: f64,
}

impl DragState {
    pub fn released(dim: usize, k_drag: f64) -> Self {
        Self {
            active: false,
            pointer: DVector::zeros(dim),
            k_drag,
        }
    }
}

/// `K_drag·(pointer − x)` clamped per axis to `± f_max`; zero when released.
pub fn drag_to_force(drag: &DragState, arm: &ArmState, f_max: &[f64]) -> DVector<f64> {
    if !drag.active || drag.pointer.len() != arm.dim() {
        return DVector::zeros(arm.dim());
    }
    let mut f = (&drag.pointer - &arm.x) * drag.k_drag;
    for (v, &cap) in f.iter_mut().zip(f_max) {
        *v = v.clamp(-cap, cap);
    }
    f
}

#[derive(Debug, Clone, Default)]
struct ArmSlot {
    recording: Option<Recording>,
    model: Option<GraphModel>,
    state: Option<ArmState>,
    drag: Option<DragState>,
    correction: Option<Recording>,
}

#[derive(Debug, Clone, PartialEq)]
struct CouplingSetting {
    stiffness: f64,
    offset: Option<Vec<f64>>,
}

type Reply = Result<Vec<ServerFrame>, (ErrorCode, String)>;

fn invalid(msg: impl Into<String>) -> (ErrorCode, String) {
    (ErrorCode::Invalid, msg.into())
}

fn positive(name: &str, v: Option<f64>) -> Result<(), (ErrorCode, String)> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => Err(invalid(format!("{name} must be positive, got {x}"))),
        _ => Ok(()),
    }
}

/// Session state. Every client frame yields an `ack` or an `error` first, followed by
/// any frames it caused.
#[derive(Debug, Clone)]
pub struct Session {
    cfg: SessionConfig,
    phase: PhaseMachine,
    dim: Option<usize>,
    arms: Vec<ArmSlot>,
    coupling: Option<CouplingSetting>,
    ticks: u64,
    broadcasts: u64,
}

impl Default for Session {
    fn default() -> Self {
        Self::new(SessionConfig::default())
    }
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Self {
        let arms = vec![ArmSlot::default(); cfg.arms.clamp(1, MAX_ARMS)];
        Self {
            cfg,
            phase: PhaseMachine::default(),
            dim: None,
            arms,
            coupling: None,
            ticks: 0,
            broadcasts: 0,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase.phase()
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    /// Simulated time [s].
    pub fn time(&self) -> f64 {
        self.ticks as f64 * self.cfg.sim.dt
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn model(&self, arm: usize) -> Option<&GraphModel> {
        self.arms.get(arm).and_then(|a| a.model.as_ref())
    }

    pub fn arm_state(&self, arm: usize) -> Option<&ArmState> {
        self.arms.get(arm).and_then(|a| a.state.as_ref())
    }

    pub fn handle_text(&mut self, text: &str) -> Vec<ServerFrame> {
        match parse_client(text) {
            Ok(frame) => self.handle(frame),
            Err(e) => vec![e],
        }
    }

    pub fn handle(&mut self, frame: ClientFrame) -> Vec<ServerFrame> {
        let id = frame.id();
        match self.dispatch(frame) {
            Ok(mut extra) => {
                extra.insert(0, ServerFrame::Ack { id });
                extra
            }
            Err((code, msg)) => vec![ServerFrame::error(id, code, msg)],
        }
    }

    fn arm_index(&self, arm: usize) -> Result<usize, (ErrorCode, String)> {
        if arm < self.arms.len() {
            Ok(arm)
        } else {
            Err(invalid(format!("arm {arm} out of range, session has {} arm(s)", self.arms.len())))
        }
    }

    fn check_vector(&self, x: &[f64], what: &str) -> Result<(), (ErrorCode, String)> {
        if let Some(d) = self.dim {
            if x.len() != d {
                return Err(invalid(format!("{what} has {} components, expected {d}", x.len())));
            }
        } else if x.is_empty() {
            return Err(invalid(format!("{what} is empty")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("{what} is not finite")));
        }
        Ok(())
    }

    fn transition(&mut self, to: Phase, needs_models: bool) -> Result<(), (ErrorCode, String)> {
        let has_model = !needs_models || self.arms.iter().all(|a| a.model.is_some());
        self.phase.transition(to, has_model).map_err(|e| match e {
            ggp_core::Error::EmptyModel => (ErrorCode::NoModel, format!("{to:?} needs a fitted model for every arm")),
            other => (ErrorCode::Phase, other.to_string()),
        })
    }

    fn require_phase(&self, allowed: &[Phase], what: &str) -> Result<(), (ErrorCode, String)> {
        if allowed.contains(&self.phase()) {
            Ok(())
        } else {
            Err((ErrorCode::Phase, format!("{what} not allowed while {:?}", self.phase())))
        }
    }

    fn controller(&self, dim: usize) -> Result<ImpedanceController, (ErrorCode, String)> {
        let gains = Gains::isotropic(dim, self.cfg.stiffness).map_err(|e| invalid(e.to_string()))?;
        ImpedanceController::new(gains, SafetyLimits::default_for(dim)).map_err(|e| invalid(e.to_string()))
    }

    fn dispatch(&mut self, frame: ClientFrame) -> Reply {
        match frame {
            ClientFrame::Hello { version, .. } => {
                if let Some(v) = version {
                    if v > PROTOCOL_VERSION {
                        return Err(invalid(format!("protocol version {v} unsupported, server speaks {PROTOCOL_VERSION}")));
                    }
                }
                Ok(vec![])
            }
            ClientFrame::Config {
                arms,
                lambda_pos,
                lambda_time,
                k_drag,
                stiffness,
                ..
            } => self.configure(arms, lambda_pos, lambda_time, k_drag, stiffness),
            ClientFrame::StartDemo { arm, .. } => {
                if let Some(a) = arm {
                    self.arm_index(a)?;
                }
                self.transition(Phase::PassiveTeaching, false)?;
                for (i, slot) in self.arms.iter_mut().enumerate() {
                    if arm.is_none() || arm == Some(i) {
                        slot.recording = None;
                    }
                }
                Ok(vec![])
            }
            ClientFrame::DemoPoint { arm, x, t, .. } => {
                self.require_phase(&[Phase::PassiveTeaching], "demo_point")?;
                let arm = self.arm_index(arm)?;
                self.check_vector(&x, "x")?;
                if !t.is_finite() {
                    return Err(invalid("t is not finite"));
                }
                let dim = x.len();
                let rec = self.arms[arm].recording.get_or_insert_with(|| Recording::new(dim));
                if let Some(&prev) = rec.times().last() {
                    if t <= prev {
                        return Err(invalid(format!("time {t} does not increase (previous {prev})")));
                    }
                }
                if rec.len() >= MAX_RECORDING {
                    return Err(invalid("recording is full"));
                }
                rec.push(&x, t).map_err(|e| invalid(e.to_string()))?;
                self.dim = Some(dim);
                Ok(vec![])
            }
            ClientFrame::EndDemo { .. } => {
                self.require_phase(&[Phase::PassiveTeaching], "end_demo")?;
                self.transition(Phase::Idle, false)?;
                Ok(vec![])
            }
            ClientFrame::Fit { .. } => self.fit(),
            ClientFrame::StartExec { .. } => {
                self.transition(Phase::Executing, true)?;
                self.reset_time_belief(None);
                Ok(vec![])
            }
            ClientFrame::StartCorrect { .. } => {
                self.transition(Phase::ActiveTeaching, true)?;
                self.reset_time_belief(None);
                Ok(vec![])
            }
            ClientFrame::Drag { arm, pointer_x, .. } => {
                self.require_phase(&[Phase::Executing, Phase::ActiveTeaching], "drag")?;
                let arm = self.arm_index(arm)?;
                self.check_vector(&pointer_x, "pointer_x")?;
                let k_drag = self.cfg.k_drag;
                let slot = &mut self.arms[arm];
                slot.drag = Some(DragState {
                    active: true,
                    pointer: DVector::from_vec(pointer_x),
                    k_drag,
                });
                Ok(vec![])
            }
            ClientFrame::DragEnd { arm, .. } => {
                let arm = self.arm_index(arm)?;
                if let Some(d) = self.arms[arm].drag.as_mut() {
                    d.active = false;
                }
                self.commit_correction(arm)
            }
            ClientFrame::ResetTb { arm, .. } => {
                if let Some(a) = arm {
                    self.arm_index(a)?;
                }
                let targets: Vec<usize> = (0..self.arms.len()).filter(|&i| arm.is_none_or(|a| a == i)).collect();
                if targets.iter().any(|&i| self.arms[i].model.is_none()) {
                    return Err((ErrorCode::NoModel, "reset_tb needs a fitted model".into()));
                }
                self.reset_time_belief(arm);
                Ok(vec![])
            }
            ClientFrame::SetCoupling {
                enabled,
                stiffness,
                offset,
                ..
            } => {
                if !enabled {
                    self.coupling = None;
                    return Ok(vec![]);
                }
                if self.arms.len() != 2 {
                    return Err(invalid("coupling needs a two-arm session"));
                }
                let k = stiffness.unwrap_or(ggp_core::coupling::DEFAULT_COUPLING_STIFFNESS);
                if !(k.is_finite() && k >= 0.0) {
                    return Err(invalid(format!("coupling stiffness must be non-negative, got {k}")));
                }
                if let Some(o) = &offset {
                    self.check_vector(o, "offset")?;
                }
                self.coupling = Some(CouplingSetting { stiffness: k, offset });
                Ok(vec![])
            }
            ClientFrame::Stop { .. } => {
                if self.phase() != Phase::Idle {
                    self.transition(Phase::Idle, false)?;
                }
                for slot in &mut self.arms {
                    slot.drag = None;
                    slot.correction = None;
                }
                Ok(vec![])
            }
        }
    }

    fn configure(
        &mut self,
        arms: Option<usize>,
        lambda_pos: Option<f64>,
        lambda_time: Option<f64>,
        k_drag: Option<f64>,
        stiffness: Option<f64>,
    ) -> Reply {
        self.require_phase(&[Phase::Idle], "config")?;
        if let Some(n) = arms {
            if !(1..=MAX_ARMS).contains(&n) {
                return Err(invalid(format!("arms must be 1 or 2, got {n}")));
            }
        }
        positive("lambda_pos", lambda_pos)?;
        positive("lambda_time", lambda_time)?;
        positive("k_drag", k_drag)?;
        positive("stiffness", stiffness)?;
        let p = self.cfg.params;
        let params = KernelParams::new(
            lambda_pos.unwrap_or(p.lambda_pos),
            lambda_time.unwrap_or(p.lambda_time),
            KernelMode::PoseTime,
        )
        .map_err(|e| invalid(e.to_string()))?;
        let mut models = Vec::with_capacity(self.arms.len());
        for slot in &self.arms {
            models.push(match &slot.model {
                Some(m) => Some(m.with_params(params).map_err(|e| invalid(e.to_string()))?),
                None => None,
            });
        }
        for (slot, m) in self.arms.iter_mut().zip(models) {
            slot.model = m;
        }
        self.cfg.params = params;
        if let Some(k) = k_drag {
            self.cfg.k_drag = k;
        }
        if let Some(k) = stiffness {
            self.cfg.stiffness = k;
        }
        if let Some(n) = arms {
            self.arms.resize_with(n, ArmSlot::default);
            self.cfg.arms = n;
            if n == 1 {
                self.coupling = None;
            }
        }
        Ok(vec![])
    }

    fn fit(&mut self) -> Reply {
        self.require_phase(&[Phase::Idle], "fit")?;
        if self.arms.iter().all(|a| a.recording.is_none()) {
            return Err(invalid("no demonstration recorded"));
        }
        let mut fitted = Vec::new();
        for (i, slot) in self.arms.iter().enumerate() {
            if let Some(rec) = &slot.recording {
                let demo: Demonstration = rec
                    .clone()
                    .into_demonstration(DemoOptions::default())
                    .map_err(|e| invalid(format!("arm {i}: {e}")))?;
                let model = GraphModel::fit(&demo, self.cfg.params).map_err(|e| invalid(format!("arm {i}: {e}")))?;
                fitted.push((i, model));
            }
        }
        let mut frames = Vec::with_capacity(fitted.len());
        for (i, model) in fitted {
            let slot = &mut self.arms[i];
            slot.recording = None;
            slot.state = Some(ArmState::from_slice(model.start_pos(), model.start_time()));
            frames.push(model_info(i, &model));
            slot.model = Some(model);
        }
        Ok(frames)
    }

    fn reset_time_belief(&mut self, arm: Option<usize>) {
        for (i, slot) in self.arms.iter_mut().enumerate() {
            if arm.is_some_and(|a| a != i) {
                continue;
            }
            if let (Some(m), Some(s)) = (&slot.model, slot.state.as_mut()) {
                s.t_b = m.start_time();
            }
        }
    }

    fn commit_correction(&mut self, arm: usize) -> Reply {
        let slot = &mut self.arms[arm];
        let Some(rec) = slot.correction.take() else {
            return Ok(vec![]);
        };
        let Some(model) = &slot.model else {
            return Ok(vec![]);
        };
        let updated = model.append_session(&rec).map_err(|e| invalid(e.to_string()))?;
        let info = model_info(arm, &updated);
        slot.model = Some(updated);
        Ok(vec![info])
    }

    /// Runs `n` simulation ticks when a physics phase is active and returns the
    /// decimated tick frames.
    pub fn advance(&mut self, n: usize) -> Vec<ServerFrame> {
        let mut frames = Vec::new();
        for _ in 0..n {
            if !matches!(self.phase(), Phase::Executing | Phase::ActiveTeaching) {
                break;
            }
            match self.step() {
                Ok(arms) => {
                    self.ticks += 1;
                    let due = (self.ticks as f64 * self.cfg.tick_rate * self.cfg.sim.dt + 1e-9).floor() as u64;
                    if due > self.broadcasts {
                        self.broadcasts = due;
                        frames.push(ServerFrame::Tick {
                            t: self.time(),
                            arms: arms.iter().map(ArmFrame::from).collect(),
                            phase: self.phase(),
                        });
                    }
                }
                Err(msg) => {
                    frames.push(ServerFrame::error(None, ErrorCode::Invalid, msg));
                    let _ = self.phase.transition(Phase::Idle, true);
                    break;
                }
            }
        }
        frames
    }

    fn step(&mut self) -> Result<Vec<ArmTick>, String> {
        let dim = self.dim.ok_or("no dimension established")?;
        let controller = self.controller(dim).map_err(|e| e.1)?;
        let f_max = controller.limits().f_max.clone();
        let sim = self.cfg.sim;
        let forces: Vec<DVector<f64>> = self
            .arms
            .iter()
            .map(|s| match (&s.drag, &s.state) {
                (Some(d), Some(st)) => drag_to_force(d, st, &f_max),
                _ => DVector::zeros(dim),
            })
            .collect();
        let records = if self.arms.len() == 1 {
            let slot = &self.arms[0];
            let (model, state) = slot.model.as_ref().zip(slot.state.as_ref()).ok_or("arm 0 has no model")?;
            let out = execute_tick(model, state, &controller, &forces[0], &sim).map_err(|e| e.to_string())?;
            self.arms[0].state = Some(out.state);
            vec![out.record]
        } else {
            let (l, r) = (&self.arms[0], &self.arms[1]);
            let (ml, sl) = l.model.as_ref().zip(l.state.clone()).ok_or("arm 0 has no model")?;
            let (mr, sr) = r.model.as_ref().zip(r.state.clone()).ok_or("arm 1 has no model")?;
            let coupling = match &self.coupling {
                Some(c) => {
                    let offset = c.offset.clone().map(DVector::from_vec).unwrap_or_else(|| &sr.x - &sl.x);
                    CouplingConfig::isotropic(dim, c.stiffness, offset).map_err(|e| e.to_string())?
                }
                None => CouplingConfig::disabled(dim),
            };
            let dual = DualArmState::new(sl, sr).map_err(|e| e.to_string())?;
            let out = execute_dual_tick([ml, mr], &dual, &controller, &coupling, [&forces[0], &forces[1]], &sim)
                .map_err(|e| e.to_string())?;
            // freeze an implicit offset at the first coupled tick
            if let Some(c) = self.coupling.as_mut() {
                if c.offset.is_none() {
                    c.offset = Some(coupling.delta_rel_des().as_slice().to_vec());
                }
            }
            self.arms[0].state = Some(out.state.left);
            self.arms[1].state = Some(out.state.right);
            out.records.to_vec()
        };
        if self.phase() == Phase::ActiveTeaching {
            let t = (self.ticks + 1) as f64 * sim.dt;
            for slot in &mut self.arms {
                let dragging = slot.drag.as_ref().is_some_and(|d| d.active);
                if let (true, Some(st)) = (dragging, &slot.state) {
                    let rec = slot.correction.get_or_insert_with(|| Recording::new(dim));
                    if rec.len() < MAX_RECORDING {
                        rec.push(st.x.as_slice(), t).map_err(|e| e.to_string())?;
                    }
                }
            }
        }
        Ok(records)
    }
}

fn model_info(arm: usize, model: &GraphModel) -> ServerFrame {
    ServerFrame::ModelInfo {
        arm,
        n_nodes: model.n_pairs(),
        goal: model.goal_pos().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arm_at(x: &[f64]) -> ArmState {
        ArmState::from_slice(x, 0.0)
    }

    #[test]
    fn drag_force_examples() {
        let arm = arm_at(&[0.2, 0.3]);
        let mut d = DragState {
            active: true,
            pointer: DVector::from_vec(vec![0.2, 0.3]),
            k_drag: DEFAULT_K_DRAG,
        };
        assert_eq!(drag_to_force(&d, &arm, &[30.0, 30.0]), DVector::zeros(2));
        d.pointer = DVector::from_vec(vec![0.3, 0.3]);
        assert_eq!(drag_to_force(&d, &arm, &[30.0, 30.0]).as_slice(), &[30.0, 0.0]);
        d.pointer = DVector::from_vec(vec![0.21, 0.29]);
        let f = drag_to_force(&d, &arm, &[30.0, 30.0]);
        assert!((f[0] - 10.0).abs() < 1e-9 && (f[1] + 10.0).abs() < 1e-9);
        d.active = false;
        assert_eq!(drag_to_force(&d, &arm, &[30.0, 30.0]), DVector::zeros(2));
    }

    #[test]
    fn decimation_matches_broadcast_rate() {
        let mut s = Session::default();
        s.handle_text(r#"{"type":"start_demo"}"#);
        for i in 0..20 {
            let f = s.handle_text(&format!(
                r#"{{"type":"demo_point","arm":0,"x":[{},0.5],"t":{}}}"#,
                0.1 + i as f64 * 0.01,
                i as f64 * 0.05
            ));
            assert_eq!(f, vec![ServerFrame::Ack { id: None }]);
        }
        s.handle_text(r#"{"type":"end_demo"}"#);
        s.handle_text(r#"{"type":"fit"}"#);
        s.handle_text(r#"{"type":"start_exec"}"#);
        let frames = s.advance(200);
        assert_eq!(frames.len(), 30);
        assert_eq!(s.ticks(), 200);
    }

    #[test]
    fn rates_are_checked() {
        assert!(SessionConfig::with_rates(200.0, 30.0).is_ok());
        assert!(SessionConfig::with_rates(20.0, 30.0).is_err());
        assert!(SessionConfig::with_rates(0.0, 0.0).is_err());
        assert!(SessionConfig::with_rates(10.0, 5.0).is_err());
    }
}
