//! JSON frames exchanged with the teaching client. One frame per WebSocket text
//! message, discriminated by `"type"`.

use ggp_core::Phase;
use serde::{Deserialize, Serialize};

/// Protocol version announced in `hello`.
pub const PROTOCOL_VERSION: u32 = 1;

/// Client → server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientFrame {
    Hello {
        #[serde(default)]
        id: Option<u64>,
        #[serde(default)]
        version: Option<u32>,
    },
    /// Session settings; absent keys keep their current value.
    Config {
        #[serde(default)]
        id: Option<u64>,
        /// Number of arms, 1 or 2.
        #[serde(default)]
        arms: Option<usize>,
        #[serde(default)]
        lambda_pos: Option<f64>,
        #[serde(default)]
        lambda_time: Option<f64>,
        /// Drag spring constant [N/m].
        #[serde(default)]
        k_drag: Option<f64>,
        /// Nominal isotropic stiffness [N/m].
        #[serde(default)]
        stiffness: Option<f64>,
    },
    StartDemo {
        #[serde(default)]
        id: Option<u64>,
        /// Arm to record; every arm when absent.
        #[serde(default)]
        arm: Option<usize>,
    },
    DemoPoint {
        #[serde(default)]
        id: Option<u64>,
        arm: usize,
        x: Vec<f64>,
        t: f64,
    },
    EndDemo {
        #[serde(default)]
        id: Option<u64>,
    },
    Fit {
        #[serde(default)]
        id: Option<u64>,
    },
    StartExec {
        #[serde(default)]
        id: Option<u64>,
    },
    StartCorrect {
        #[serde(default)]
        id: Option<u64>,
    },
    Drag {
        #[serde(default)]
        id: Option<u64>,
        arm: usize,
        pointer_x: Vec<f64>,
    },
    DragEnd {
        #[serde(default)]
        id: Option<u64>,
        arm: usize,
    },
    ResetTb {
        #[serde(default)]
        id: Option<u64>,
        #[serde(default)]
        arm: Option<usize>,
    },
    SetCoupling {
        #[serde(default)]
        id: Option<u64>,
        enabled: bool,
        #[serde(default)]
        stiffness: Option<f64>,
        /// Desired `x_right - x_left`.
        #[serde(default)]
        offset: Option<Vec<f64>>,
    },
    Stop {
        #[serde(default)]
        id: Option<u64>,
    },
}

impl ClientFrame {
    pub fn id(&self) -> Option<u64> {
        match self {
            Self::Hello { id, .. }
            | Self::Config { id, .. }
            | Self::StartDemo { id, .. }
            | Self::DemoPoint { id, .. }
            | Self::EndDemo { id }
            | Self::Fit { id }
            | Self::StartExec { id }
            | Self::StartCorrect { id }
            | Self::Drag { id, .. }
            | Self::DragEnd { id, .. }
            | Self::ResetTb { id, .. }
            | Self::SetCoupling { id, .. }
            | Self::Stop { id } => *id,
        }
    }
}

/// Server → client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    Ack {
        id: Option<u64>,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        code: ErrorCode,
        msg: String,
    },
    ModelInfo {
        arm: usize,
        n_nodes: usize,
        goal: Vec<f64>,
    },
    Tick {
        t: f64,
        arms: Vec<ArmFrame>,
        phase: Phase,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not JSON, unknown type, missing or malformed field.
    BadFrame,
    /// Frame not allowed in the current phase.
    Phase,
    /// Needs a fitted model.
    NoModel,
    /// Well-formed frame with unusable values.
    Invalid,
}

/// Per-arm tick payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmFrame {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub attractor: Vec<f64>,
    pub sigma: f64,
    pub k_scale: f64,
    pub t_b: f64,
    pub f_ext: Vec<f64>,
    /// Commanded attractor displacement.
    pub delta_x: Vec<f64>,
    /// Commanded static force `K̂·Δx`.
    pub f_cmd: Vec<f64>,
}

impl From<&ggp_core::engine::ArmTick> for ArmFrame {
    fn from(t: &ggp_core::engine::ArmTick) -> Self {
        Self {
            x: t.x.clone(),
            v: t.v.clone(),
            attractor: t.attractor.clone(),
            sigma: t.sigma,
            k_scale: t.k_scale,
            t_b: t.t_b,
            f_ext: t.f_ext.clone(),
            delta_x: t.delta_x.clone(),
            f_cmd: t.f_cmd.clone(),
        }
    }
}

/// Parses one client message. Errors are returned as ready-to-send frames.
pub fn parse_client(text: &str) -> Result<ClientFrame, ServerFrame> {
    serde_json::from_str(text).map_err(|e| ServerFrame::Error {
        id: None,
        code: ErrorCode::BadFrame,
        msg: e.to_string(),
    })
}

impl ServerFrame {
    pub fn to_json(&self) -> String {
        // frames hold only strings, integers and finite floats
        serde_json::to_string(self).unwrap_or_else(|e| {
            format!(r#"{{"type":"error","id":null,"code":"invalid","msg":"encode: {e}"}}"#)
        })
    }

    pub fn error(id: Option<u64>, code: ErrorCode, msg: impl Into<String>) -> Self {
        Self::Error {
            id,
            code,
            msg: msg.into(),
        }
    }
}
