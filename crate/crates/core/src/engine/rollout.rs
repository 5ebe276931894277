use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ggp::GraphModel;
use crate::kernel::{euclidean, KernelMode};

/// Kinematic rollout settings: `x ← goal(x, t_b) + N(0, noise_std² I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub n_rollouts: usize,
    pub n_steps: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Propagate the time belief; when off the policy is queried position-only.
    pub use_time_belief: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            n_rollouts: 200,
            n_steps: 200,
            noise_std: 0.01,
            seed: 0,
            use_time_belief: true,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rollouts < 1 || self.n_steps < 1 {
            return Err(Error::InvalidInput(format!(
                "need at least one rollout and one step, got {} x {}",
                self.n_rollouts, self.n_steps
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise std must be non-negative, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// Ensemble statistics, one row per step including the start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub dim: usize,
    /// `(n_steps + 1) × dim`, row-major.
    pub mean: Vec<f64>,
    /// Population standard deviation, same layout as `mean`.
    pub std: Vec<f64>,
    /// Distance of each rollout's final position to the goal node, by rollout index.
    pub terminal: Vec<f64>,
}

impl RolloutStats {
    pub fn n_rows(&self) -> usize {
        self.mean.len() / self.dim.max(1)
    }

    pub fn mean_at(&self, step: usize) -> &[f64] {
        &self.mean[step * self.dim..(step + 1) * self.dim]
    }

    pub fn std_at(&self, step: usize) -> &[f64] {
        &self.std[step * self.dim..(step + 1) * self.dim]
    }

    pub fn mean_terminal(&self) -> f64 {
        self.terminal.iter().sum::<f64>() / self.terminal.len() as f64
    }

    pub fn max_terminal(&self) -> f64 {
        self.terminal.iter().copied().fold(0.0, f64::max)
    }
}

/// Positions visited by rollout `index`, `(n_steps + 1) × dim` row-major.
pub fn rollout_single(model: &GraphModel, start: &[f64], cfg: &RolloutConfig, index: u64) -> Result<Vec<f64>> {
    if start.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: start.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let noise = Normal::new(0.0, cfg.noise_std)
        .map_err(|e| Error::InvalidInput(format!("noise distribution: {e}")))?;
    let dim = model.dim();
    let mut path = Vec::with_capacity((cfg.n_steps + 1) * dim);
    path.extend_from_slice(start);
    let mut x = start.to_vec();
    let mut t_b = model.start_time();
    for _ in 0..cfg.n_steps {
        let q = if cfg.use_time_belief {
            model.query(&x, t_b)?
        } else {
            model.query_with_mode(&x, 0.0, KernelMode::PoseOnly)?
        };
        for (xi, gi) in x.iter_mut().zip(&q.goal_pos) {
            *xi = gi + if cfg.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        }
        if cfg.use_time_belief {
            t_b = q.goal_time;
        }
        path.extend_from_slice(&x);
    }
    Ok(path)
}

/// Runs `n_rollouts` independent rollouts in parallel, each seeded by `(seed, index)`,
/// and reduces them in index order.
pub fn rollout_ensemble(model: &GraphModel, start: &[f64], cfg: &RolloutConfig) -> Result<RolloutStats> {
    cfg.validate()?;
    let paths = (0..cfg.n_rollouts as u64)
        .into_par_iter()
        .map(|i| rollout_single(model, start, cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let dim = model.dim();
    let rows = cfg.n_steps + 1;
    let n = paths.len() as f64;
    let mut mean = vec![0.0; rows * dim];
    for p in &paths {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; rows * dim];
    for p in &paths {
        for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
    let goal = model.goal_pos();
    let terminal = paths
        .iter()
        .map(|p| euclidean(&p[(rows - 1) * dim..], goal))
        .collect();
    Ok(RolloutStats {
        dim,
        mean,
        std,
        terminal,
    })
}
