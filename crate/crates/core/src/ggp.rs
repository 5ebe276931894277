//! The Graph Gaussian Process policy.
//!
//! A trajectory is stored as a chain of nodes `(ξ_i, τ_i)`. Training states are all
//! nodes but the last, labels are all nodes but the first, so the label of row `i`
//! is node `i + 1` and the final node is the goal. A query correlates the state with
//! every training row, keeps only the best row (one-hot kernel row) and returns its
//! label. No covariance matrix is ever built: fit is a copy, query is one pass.

use serde::{Deserialize, Serialize};

use crate::demo::{Demonstration, Recording};
use crate::error::{ensure_finite, Error, Result};
use crate::kernel::{node_correlation, node_score, KernelMode, KernelParams};

/// Posterior of a single query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub goal_pos: Vec<f64>,
    pub goal_time: f64,
    /// `1 - max correlation`, in `[0, 1]`.
    pub sigma: f64,
    /// Training row whose label was selected.
    pub nearest_index: usize,
}

/// Fitted chain of `(position ⊕ time)` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphModel {
    dim: usize,
    params: KernelParams,
    /// Row-major `n_nodes × (dim + 1)`; the last column is time.
    nodes: Vec<f64>,
}

impl GraphModel {
    /// Passive-teaching fit: states are samples `0..n-1`, labels `1..n`.
    pub fn fit(demo: &Demonstration, params: KernelParams) -> Result<Self> {
        params.validate()?;
        let dim = demo.dim();
        let mut nodes = Vec::with_capacity(demo.len() * (dim + 1));
        for i in 0..demo.len() {
            nodes.extend_from_slice(demo.point(i));
            nodes.push(demo.times()[i]);
        }
        Ok(Self { dim, params, nodes })
    }

    /// Rebuilds a model from a stored node chain (see the model file format).
    pub fn from_nodes(dim: usize, params: KernelParams, nodes: Vec<f64>) -> Result<Self> {
        params.validate()?;
        if dim == 0 || !nodes.len().is_multiple_of(dim + 1) {
            return Err(Error::InvalidInput(format!(
                "node buffer of length {} does not hold rows of width {}",
                nodes.len(),
                dim + 1
            )));
        }
        let n = nodes.len() / (dim + 1);
        if n < 2 {
            return Err(Error::TooFewPoints { required: 2, got: n });
        }
        ensure_finite(&nodes, "model nodes")?;
        let model = Self { dim, params, nodes };
        for i in 1..n {
            if model.node_time(i) <= model.node_time(i - 1) {
                return Err(Error::NonIncreasingTime {
                    index: i,
                    previous: model.node_time(i - 1),
                    current: model.node_time(i),
                });
            }
        }
        Ok(model)
    }

    /// Active-teaching update: the session samples are appended after the current
    /// goal and labels are re-derived by shifting over the whole chain.
    ///
    /// Session clocks restart at zero, so they are offset to start one session
    /// sample interval after the current goal time.
    pub fn append_session(&self, session: &Recording) -> Result<Self> {
        if session.is_empty() {
            return Err(Error::InvalidInput("cannot append an empty session".into()));
        }
        if session.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: session.dim(),
            });
        }
        let times = session.times();
        for (i, w) in times.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::NonIncreasingTime {
                    index: i + 1,
                    previous: w[0],
                    current: w[1],
                });
            }
        }
        let gap = if times.len() >= 2 {
            times[1] - times[0]
        } else {
            // single-sample session: reuse the chain's last interval
            self.node_time(self.n_nodes() - 1) - self.node_time(self.n_nodes() - 2)
        };
        let offset = self.goal_time() + gap - times[0];
        let mut nodes = Vec::with_capacity(self.nodes.len() + session.len() * (self.dim + 1));
        nodes.extend_from_slice(&self.nodes);
        for (i, &t) in times.iter().enumerate() {
            nodes.extend_from_slice(session.point(i));
            nodes.push(t + offset);
        }
        Ok(Self {
            dim: self.dim,
            params: self.params,
            nodes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn with_params(&self, params: KernelParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            ..self.clone()
        })
    }

    /// Number of chain nodes, goal included.
    pub fn n_nodes(&self) -> usize {
        self.nodes.len() / (self.dim + 1)
    }

    /// Number of training pairs (`n_nodes - 1`).
    pub fn n_pairs(&self) -> usize {
        self.n_nodes() - 1
    }

    /// Length of the backing storage in `f64`s; linear in the number of nodes.
    pub fn storage_len(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    fn row(&self, i: usize) -> &[f64] {
        let w = self.dim + 1;
        &self.nodes[i * w..(i + 1) * w]
    }

    pub fn node_pos(&self, i: usize) -> &[f64] {
        &self.row(i)[..self.dim]
    }

    pub fn node_time(&self, i: usize) -> f64 {
        self.row(i)[self.dim]
    }

    /// Training state `i` (position ⊕ time).
    pub fn state(&self, i: usize) -> &[f64] {
        assert!(i < self.n_pairs(), "state index {i} out of range");
        self.row(i)
    }

    /// Label of training state `i`, which is the next node.
    pub fn label(&self, i: usize) -> &[f64] {
        assert!(i < self.n_pairs(), "label index {i} out of range");
        self.row(i + 1)
    }

    pub fn goal_pos(&self) -> &[f64] {
        self.node_pos(self.n_nodes() - 1)
    }

    pub fn goal_time(&self) -> f64 {
        self.node_time(self.n_nodes() - 1)
    }

    pub fn start_pos(&self) -> &[f64] {
        self.node_pos(0)
    }

    pub fn start_time(&self) -> f64 {
        self.node_time(0)
    }

    /// Largest distance between consecutive nodes.
    pub fn max_spacing(&self) -> f64 {
        (0..self.n_pairs())
            .map(|i| crate::kernel::euclidean(self.node_pos(i), self.node_pos(i + 1)))
            .fold(0.0, f64::max)
    }

    fn check_query(&self, x: &[f64], t_b: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        ensure_finite(x, "query position")?;
        ensure_finite(&[t_b], "time belief")
    }

    /// Correlation of the query with every training state, using the model's mode.
    pub fn joint_correlation(&self, x: &[f64], t_b: f64) -> Result<Vec<f64>> {
        self.joint_correlation_with_mode(x, t_b, self.params.mode)
    }

    pub fn joint_correlation_with_mode(
        &self,
        x: &[f64],
        t_b: f64,
        mode: KernelMode,
    ) -> Result<Vec<f64>> {
        self.check_query(x, t_b)?;
        Ok((0..self.n_pairs())
            .map(|i| {
                node_correlation(x, t_b, self.node_pos(i), self.node_time(i), &self.params, mode)
            })
            .collect())
    }

    /// One-hot posterior: label of the most correlated state and `1 - correlation`.
    pub fn query(&self, x: &[f64], t_b: f64) -> Result<QueryResult> {
        self.query_with_mode(x, t_b, self.params.mode)
    }

    /// Same as [`GraphModel::query`] with the kernel mode overridden.
    pub fn query_with_mode(&self, x: &[f64], t_b: f64, mode: KernelMode) -> Result<QueryResult> {
        self.check_query(x, t_b)?;
        // argmin of the negative log correlation
        let mut best = 0;
        let mut best_score = f64::INFINITY;
        for i in 0..self.n_pairs() {
            let s = node_score(x, t_b, self.node_pos(i), self.node_time(i), &self.params, mode);
            if s < best_score {
                best_score = s;
                best = i;
            }
        }
        let best_corr = (-best_score).exp();
        let label = self.label(best);
        Ok(QueryResult {
            goal_pos: label[..self.dim].to_vec(),
            goal_time: label[self.dim],
            sigma: 1.0 - best_corr,
            nearest_index: best,
        })
    }
}
