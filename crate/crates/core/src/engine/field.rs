use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ggp::GraphModel;
use crate::gp::GpBaselineModel;

/// Rectangular 2-D evaluation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldBounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl FieldBounds {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.min.iter().chain(&self.max).all(|v| v.is_finite());
        if !finite || self.min[0] >= self.max[0] || self.min[1] >= self.max[1] {
            return Err(Error::InvalidInput(format!(
                "degenerate field bounds {:?} .. {:?}",
                self.min, self.max
            )));
        }
        Ok(())
    }

    /// Grid point `(i, j)` of an `nx × ny` lattice including the borders.
    pub fn point(&self, i: usize, j: usize, nx: usize, ny: usize) -> [f64; 2] {
        let fx = i as f64 / (nx - 1) as f64;
        let fy = j as f64 / (ny - 1) as f64;
        [
            self.min[0] + fx * (self.max[0] - self.min[0]),
            self.min[1] + fy * (self.max[1] - self.min[1]),
        ]
    }
}

/// Policy whose attractor field is sampled.
#[derive(Debug, Clone, Copy)]
pub enum FieldPolicy<'a> {
    Ggp(&'a GraphModel),
    Gp(&'a GpBaselineModel),
}

/// Field value at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub pos: [f64; 2],
    /// `goal - pos` for the graph policy, `mean - pos` for the GP baseline.
    pub displacement: [f64; 2],
    pub sigma: f64,
    /// Selected training row (graph policy only).
    pub nearest_index: Option<usize>,
}

/// Samples the attractor field on an `nx × ny` grid, row by row in `y` then `x`.
/// `t_b` conditions the graph policy and is ignored by the GP baseline.
pub fn vector_field(
    policy: FieldPolicy<'_>,
    bounds: &FieldBounds,
    resolution: (usize, usize),
    t_b: f64,
) -> Result<Vec<FieldSample>> {
    bounds.validate()?;
    let (nx, ny) = resolution;
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidInput(format!(
            "field resolution must be at least 2 x 2, got {nx} x {ny}"
        )));
    }
    let dim = match policy {
        FieldPolicy::Ggp(m) => m.dim(),
        FieldPolicy::Gp(g) => g.dim(),
    };
    if dim != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: dim });
    }
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let pos = bounds.point(i, j, nx, ny);
            let sample = match policy {
                FieldPolicy::Ggp(m) => {
                    let q = m.query(&pos, t_b)?;
                    FieldSample {
                        pos,
                        displacement: [q.goal_pos[0] - pos[0], q.goal_pos[1] - pos[1]],
                        sigma: q.sigma,
                        nearest_index: Some(q.nearest_index),
                    }
                }
                FieldPolicy::Gp(g) => {
                    let p = g.query(&pos)?;
                    FieldSample {
                        pos,
                        displacement: [p.mean[0] - pos[0], p.mean[1] - pos[1]],
                        sigma: p.sigma,
                        nearest_index: None,
                    }
                }
            };
            out.push(sample);
        }
    }
    Ok(out)
}
