//! Recorded trajectories.
//!
//! A [`Recording`] is an unchecked stream of `(position, time)` samples as it comes
//! off a teaching session. A [`Demonstration`] is a recording that has passed the
//! checks the graph model relies on: at least two samples, strictly increasing
//! time, finite values and no spatial jump larger than the configured gap.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::kernel::euclidean;

/// Default largest allowed distance between consecutive samples [m].
pub const DEFAULT_MAX_GAP: f64 = 0.1;

/// Validation knobs for [`Demonstration::with_options`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoOptions {
    /// Largest allowed distance between consecutive samples [m]; `None` disables the check.
    pub max_gap: Option<f64>,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self {
            max_gap: Some(DEFAULT_MAX_GAP),
        }
    }
}

/// Unchecked sample stream with a fixed dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Recording {
    dim: usize,
    points: Vec<f64>,
    times: Vec<f64>,
}

impl Recording {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            points: Vec::new(),
            times: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, position: &[f64], t: f64) -> Result<()> {
        if position.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: position.len(),
            });
        }
        ensure_finite(position, "sample position")?;
        ensure_finite(&[t], "sample time")?;
        self.points.extend_from_slice(position);
        self.times.push(t);
        Ok(())
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn clear(&mut self) {
        self.points.clear();
        self.times.clear();
    }

    pub fn into_demonstration(self, options: DemoOptions) -> Result<Demonstration> {
        Demonstration::with_options(self.dim, self.points, self.times, options)
    }
}

/// Timestamped end-effector positions, row-major `n × dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    dim: usize,
    points: Vec<f64>,
    times: Vec<f64>,
}

impl Demonstration {
    /// Builds a demonstration with the default 0.1 m gap check.
    pub fn new(dim: usize, points: Vec<f64>, times: Vec<f64>) -> Result<Self> {
        Self::with_options(dim, points, times, DemoOptions::default())
    }

    pub fn with_options(
        dim: usize,
        points: Vec<f64>,
        times: Vec<f64>,
        options: DemoOptions,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if points.len() != times.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: times.len() * dim,
                got: points.len(),
            });
        }
        if times.len() < 2 {
            return Err(Error::TooFewPoints {
                required: 2,
                got: times.len(),
            });
        }
        ensure_finite(&points, "demonstration positions")?;
        ensure_finite(&times, "demonstration times")?;
        for (i, w) in times.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::NonIncreasingTime {
                    index: i + 1,
                    previous: w[0],
                    current: w[1],
                });
            }
        }
        if let Some(max_gap) = options.max_gap {
            for i in 0..times.len() - 1 {
                let gap = euclidean(
                    &points[i * dim..(i + 1) * dim],
                    &points[(i + 1) * dim..(i + 2) * dim],
                );
                if gap > max_gap {
                    return Err(Error::GapTooLarge {
                        index: i,
                        next: i + 1,
                        gap,
                        max_gap,
                    });
                }
            }
        }
        Ok(Self { dim, points, times })
    }

    /// Convenience constructor from per-sample rows.
    pub fn from_rows(rows: &[Vec<f64>], times: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput("rows have different lengths".into()));
        }
        Self::new(dim, rows.concat(), times)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn duration(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// Total polyline length.
    pub fn arc_length(&self) -> f64 {
        (0..self.len() - 1)
            .map(|i| euclidean(self.point(i), self.point(i + 1)))
            .sum()
    }

    /// Linear re-interpolation onto a uniform time grid with period `dt`, starting at
    /// the first sample. The last sample is kept even when it falls off the grid.
    pub fn resample(&self, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!("resample period must be positive, got {dt}")));
        }
        let t0 = self.times[0];
        let t_end = self.times[self.len() - 1];
        let steps = ((t_end - t0) / dt).floor() as usize;
        let mut points = Vec::with_capacity((steps + 2) * self.dim);
        let mut times = Vec::with_capacity(steps + 2);
        let mut seg = 0;
        for k in 0..=steps {
            let t = t0 + k as f64 * dt;
            while seg + 2 < self.len() && self.times[seg + 1] < t {
                seg += 1;
            }
            let (ta, tb) = (self.times[seg], self.times[seg + 1]);
            let f = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
            let (a, b) = (self.point(seg), self.point(seg + 1));
            points.extend(a.iter().zip(b).map(|(p, q)| p + f * (q - p)));
            times.push(t);
        }
        if t_end - times[times.len() - 1] > 1e-9 * dt.max(1.0) {
            points.extend_from_slice(self.point(self.len() - 1));
            times.push(t_end);
        } else {
            let n = times.len();
            points.truncate((n - 1) * self.dim);
            points.extend_from_slice(self.point(self.len() - 1));
            times[n - 1] = t_end;
        }
        Self::with_options(self.dim, points, times, DemoOptions { max_gap: None })
    }

    /// Drops samples closer than `min_dt` in time or `min_dist` in space to the last
    /// kept sample. The final sample is always kept so the goal is preserved.
    pub fn downsample(&self, min_dt: f64, min_dist: f64) -> Result<Self> {
        let n = self.len();
        let mut points = self.point(0).to_vec();
        let mut times = vec![self.times[0]];
        let mut last = 0;
        for i in 1..n {
            let keep = i == n - 1
                || (self.times[i] - self.times[last] >= min_dt
                    && euclidean(self.point(i), self.point(last)) >= min_dist);
            if keep {
                points.extend_from_slice(self.point(i));
                times.push(self.times[i]);
                last = i;
            }
        }
        Self::with_options(self.dim, points, times, DemoOptions { max_gap: None })
    }
}
