//! One-dimensional Gaussian-process regression with a squared-exponential
//! kernel and a constant prior mean.
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl GpHyper {
    fn kernel(&self, a: f64, b: f64) -> f64 {
        let d = (a - b) / self.length_scale;
        self.signal_variance * (-0.5 * d * d).exp()
    }
}

/// A conditioned GP posterior.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    hyper: GpHyper,
    xs: Vec<f64>,
    prior_mean: f64,
    alpha: DVector<f64>,
    chol_l: DMatrix<f64>,
}

impl GpPosterior {
    /// Conditions on `(xs, ys)` with the prior mean set to the sample mean.
    /// Returns `None` for empty input or a non-positive-definite Gram matrix.
    pub fn fit(hyper: GpHyper, xs: &[f64], ys: &[f64]) -> Option<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return None;
        }
        let n = xs.len();
        let prior_mean = ys.iter().sum::<f64>() / n as f64;
        let gram = DMatrix::from_fn(n, n, |i, j| {
            hyper.kernel(xs[i], xs[j]) + if i == j { hyper.noise_variance } else { 0.0 }
        });
        let chol = gram.cholesky()?;
        let centered = DVector::from_iterator(n, ys.iter().map(|y| y - prior_mean));
        let alpha = chol.solve(&centered);
        Some(Self {
            hyper,
            xs: xs.to_vec(),
            prior_mean,
            alpha,
            chol_l: chol.l(),
        })
    }

    /// Posterior mean and standard deviation of the latent function at `x`.
    pub fn predict(&self, x: f64) -> (f64, f64) {
        let k = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|&xi| self.hyper.kernel(x, xi)));
        let mean = self.prior_mean + k.dot(&self.alpha);
        let v = self
            .chol_l
            .solve_lower_triangular(&k)
            .unwrap_or_else(|| DVector::zeros(self.xs.len()));
        let var = (self.hyper.signal_variance - v.dot(&v)).max(0.0);
        (mean, var.sqrt())
    }
}
