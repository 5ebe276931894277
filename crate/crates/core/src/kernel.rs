//! Negative-exponential kernels and the nearest-node (one-hot) selection rule.
//!
//! The pose-time correlation between a query `(x, t_b)` and a node `(ξ, τ)` is the
//! product of a position kernel on the Euclidean distance and a time kernel on the
//! absolute time difference. Saturating a correlation row to one-hot at its argmax
//! is what turns the GP posterior into a successor lookup.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which blocks of the state take part in the correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    PoseOnly,
    TimeOnly,
    PoseTime,
}

impl std::str::FromStr for KernelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pose" | "pose-only" => Ok(KernelMode::PoseOnly),
            "time" | "time-only" => Ok(KernelMode::TimeOnly),
            "pose-time" => Ok(KernelMode::PoseTime),
            other => Err(Error::InvalidInput(format!("unknown kernel mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for KernelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelMode::PoseOnly => "pose-only",
            KernelMode::TimeOnly => "time-only",
            KernelMode::PoseTime => "pose-time",
        })
    }
}

/// Length scales of the position and time kernels plus the active mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Position length scale [m].
    pub lambda_pos: f64,
    /// Time length scale [s].
    pub lambda_time: f64,
    pub mode: KernelMode,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            lambda_pos: 0.05,
            lambda_time: 0.05,
            mode: KernelMode::PoseTime,
        }
    }
}

impl KernelParams {
    pub fn new(lambda_pos: f64, lambda_time: f64, mode: KernelMode) -> Result<Self> {
        let params = Self {
            lambda_pos,
            lambda_time,
            mode,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_pos", self.lambda_pos), ("lambda_time", self.lambda_time)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn with_mode(mut self, mode: KernelMode) -> Self {
        self.mode = mode;
        self
    }
}

/// `exp(-distance / lambda)`.
pub fn exp_kernel(distance: f64, lambda: f64) -> Result<f64> {
    if !distance.is_finite() || distance < 0.0 {
        return Err(Error::InvalidInput(format!(
            "kernel distance must be non-negative, got {distance}"
        )));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidInput(format!(
            "kernel length scale must be positive, got {lambda}"
        )));
    }
    Ok((-distance / lambda).exp())
}

/// Correlation of one node with the query; inputs are assumed validated.
///
/// The pose-time product `exp(-d/λ_pos) · exp(-|Δt|/λ_time)` is evaluated as a
/// single exponential of the summed exponents.
#[inline]
pub(crate) fn node_correlation(
    query: &[f64],
    t_b: f64,
    node_pos: &[f64],
    node_time: f64,
    params: &KernelParams,
    mode: KernelMode,
) -> f64 {
    (-node_score(query, t_b, node_pos, node_time, params, mode)).exp()
}

/// Negative log of [`node_correlation`].
#[inline]
pub(crate) fn node_score(
    query: &[f64],
    t_b: f64,
    node_pos: &[f64],
    node_time: f64,
    params: &KernelParams,
    mode: KernelMode,
) -> f64 {
    match mode {
        KernelMode::PoseOnly => euclidean(query, node_pos) / params.lambda_pos,
        KernelMode::TimeOnly => (t_b - node_time).abs() / params.lambda_time,
        KernelMode::PoseTime => {
            euclidean(query, node_pos) / params.lambda_pos
                + (t_b - node_time).abs() / params.lambda_time
        }
    }
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Index of the largest correlation; ties go to the lowest index.
pub fn nearest_node(correlations: &[f64]) -> Result<usize> {
    if correlations.is_empty() {
        return Err(Error::InvalidInput("empty correlation vector".into()));
    }
    if correlations.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("correlations must be finite".into()));
    }
    let mut best = 0;
    for (i, &c) in correlations.iter().enumerate().skip(1) {
        if c > correlations[best] {
            best = i;
        }
    }
    Ok(best)
}
