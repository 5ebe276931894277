//! Vanilla GP regression with an RBF kernel, kept as a comparison baseline.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{ensure_finite, Error, Result};
use crate::ggp::GraphModel;

pub const DEFAULT_JITTER: f64 = 1e-6;

/// Squared-exponential kernel with unit signal variance.
pub fn rbf(a: &[f64], b: &[f64], length_scale: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-0.5 * d2 / (length_scale * length_scale)).exp()
}

#[derive(Debug, Clone)]
pub struct GpPrediction {
    pub mean: DVector<f64>,
    /// Posterior variance `k(x,x) - k⋆ᵀ(K + σ_n² I)⁻¹k⋆`.
    pub sigma: f64,
}

/// Zero-mean GP over position inputs with a cached Cholesky factor of `K + σ_n² I`.
#[derive(Debug, Clone)]
pub struct GpBaselineModel {
    inputs: DMatrix<f64>,
    /// `(K + σ_n² I)⁻¹ Y`, one column per output.
    alpha: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    length_scale: f64,
    jitter: f64,
}

impl GpBaselineModel {
    /// `inputs` and `labels` hold one sample per row.
    pub fn fit(
        inputs: DMatrix<f64>,
        labels: DMatrix<f64>,
        length_scale: f64,
        jitter: f64,
    ) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::EmptyModel);
        }
        if inputs.nrows() != labels.nrows() {
            return Err(Error::DimensionMismatch {
                expected: inputs.nrows(),
                got: labels.nrows(),
            });
        }
        if !(length_scale.is_finite() && length_scale > 0.0) || !(jitter.is_finite() && jitter >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "bad GP hyper-parameters: length scale {length_scale}, jitter {jitter}"
            )));
        }
        ensure_finite(inputs.as_slice(), "GP inputs")?;
        ensure_finite(labels.as_slice(), "GP labels")?;
        let n = inputs.nrows();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| inputs.row(i).iter().copied().collect()).collect();
        let mut k = DMatrix::from_fn(n, n, |i, j| rbf(&rows[i], &rows[j], length_scale));
        for i in 0..n {
            k[(i, i)] += jitter;
        }
        let chol = Cholesky::new(k).ok_or(Error::Factorization { jitter })?;
        let alpha = chol.solve(&labels);
        Ok(Self {
            inputs,
            alpha,
            chol,
            length_scale,
            jitter,
        })
    }

    /// Position-only GP on the chain of a graph model: node `i` maps to node `i + 1`.
    pub fn from_graph(model: &GraphModel, length_scale: f64, jitter: f64) -> Result<Self> {
        let n = model.n_pairs();
        let d = model.dim();
        let inputs = DMatrix::from_fn(n, d, |i, j| model.node_pos(i)[j]);
        let labels = DMatrix::from_fn(n, d, |i, j| model.node_pos(i + 1)[j]);
        Self::fit(inputs, labels, length_scale, jitter)
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn query(&self, x: &[f64]) -> Result<GpPrediction> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        ensure_finite(x, "GP query")?;
        let n = self.inputs.nrows();
        let k_star = DVector::from_fn(n, |i, _| {
            let row: Vec<f64> = self.inputs.row(i).iter().copied().collect();
            rbf(&row, x, self.length_scale)
        });
        let mean = self.alpha.tr_mul(&k_star);
        let v = self.chol.solve(&k_star);
        let sigma = 1.0 - k_star.dot(&v);
        Ok(GpPrediction { mean, sigma })
    }
}
