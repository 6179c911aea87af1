//! Kernel PCA with a polynomial kernel.
//!
//! The Gram matrix of the training frames is double-centred and
//! eigendecomposed; new frames are projected through their centred kernel
//! vector. Eigenvectors are stored pre-divided by `sqrt(λ)` so a projection
//! is a single matrix product.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::FrameSequence;

/// Eigenvalues below this fraction of the largest count as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum KpcaError {
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} training vectors, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("centred Gram matrix has rank {rank}, cannot extract {requested} components")]
    InsufficientRank { rank: usize, requested: usize },
    #[error("training data contains non-finite values")]
    NonFiniteInput,
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("eigenvalue spectrum is all zero")]
    AllZeroSpectrum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyKernel {
    pub degree: u32,
    pub gamma: f64,
    pub coef0: f64,
}

impl PolyKernel {
    /// Degree 3, `gamma = 1/dim`, `coef0 = 1`.
    pub fn default_for_dim(dim: usize) -> Self {
        Self { degree: 3, gamma: 1.0 / dim.max(1) as f64, coef0: 1.0 }
    }

    pub fn eval(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64, KpcaError> {
        if x.len() != y.len() {
            return Err(KpcaError::LengthMismatch(x.len(), y.len()));
        }
        Ok(self.apply(x.dot(&y)))
    }

    #[inline]
    fn apply(&self, inner: f64) -> f64 {
        (self.gamma * inner + self.coef0).powi(self.degree as i32)
    }

    /// Kernel matrix between rows of `a` and rows of `b`.
    pub fn matrix(&self, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
        let mut k = a.dot(&b.t());
        k.mapv_inplace(|v| self.apply(v));
        k
    }

    /// Symmetric Gram matrix of the rows of `a`; the lower triangle is a
    /// copy of the upper one so `K == Kᵀ` holds bitwise.
    pub fn gram(&self, a: ArrayView2<f64>) -> Array2<f64> {
        let mut k = self.matrix(a, a);
        let n = k.nrows();
        for i in 0..n {
            for j in 0..i {
                k[[i, j]] = k[[j, i]];
            }
        }
        k
    }
}

/// Polynomial kernel `(gamma·<x,y> + coef0)^degree` on plain slices.
pub fn kernel(x: &[f64], y: &[f64], params: &PolyKernel) -> Result<f64, KpcaError> {
    params.eval(ArrayView1::from(x), ArrayView1::from(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KpcaConfig {
    pub out_dim: usize,
    pub degree: u32,
    /// `None` means `1 / input_dim`.
    pub gamma: Option<f64>,
    pub coef0: f64,
    /// Fit on at most this many frames, drawn uniformly without replacement.
    pub max_fit_samples: usize,
}

impl Default for KpcaConfig {
    fn default() -> Self {
        Self { out_dim: 30, degree: 3, gamma: None, coef0: 1.0, max_fit_samples: 2000 }
    }
}

impl KpcaConfig {
    pub fn kernel_for_dim(&self, dim: usize) -> PolyKernel {
        PolyKernel {
            degree: self.degree,
            gamma: self.gamma.unwrap_or(1.0 / dim.max(1) as f64),
            coef0: self.coef0,
        }
    }
}

/// Double-centres a symmetric Gram matrix in place and returns its row means
/// and grand mean.
pub fn center_gram(gram: &mut Array2<f64>) -> (Array1<f64>, f64) {
    let n = gram.nrows() as f64;
    let row_means = gram.mean_axis(Axis(1)).expect("nonempty gram");
    let grand = row_means.sum() / n;
    for ((i, j), v) in gram.indexed_iter_mut() {
        *v = *v - row_means[i] - row_means[j] + grand;
    }
    (row_means, grand)
}

/// Descending eigenpairs of a symmetric matrix. Ties keep solver order;
/// each eigenvector is signed so its largest-magnitude entry is positive.
pub fn symmetric_eigen_desc(m: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = m.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(src);
        let pivot = (0..n).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[[i, col]] = sign * v[i];
        }
    }
    (values, vectors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpcaModel {
    pub kernel: PolyKernel,
    pub training_vectors: Array2<f64>,
    /// Row means of the uncentred training Gram matrix.
    pub row_means: Array1<f64>,
    pub grand_mean: f64,
    /// Full spectrum of the centred Gram, descending, negatives clamped to 0.
    pub eigenvalues: Vec<f64>,
    /// `N × out_dim`, column `k` is `v_k / sqrt(λ_k)`.
    pub scaled_eigenvectors: Array2<f64>,
}

impl KpcaModel {
    pub fn fit(
        training: ArrayView2<f64>,
        out_dim: usize,
        kernel: PolyKernel,
    ) -> Result<Self, KpcaError> {
        let n = training.nrows();
        if n < out_dim + 1 || out_dim == 0 {
            return Err(KpcaError::InsufficientSamples { needed: out_dim.max(1) + 1, got: n });
        }
        if training.iter().any(|v| !v.is_finite()) {
            return Err(KpcaError::NonFiniteInput);
        }
        let mut gram = kernel.gram(training);
        // Round-off floor for a centred spectrum that should be exactly zero.
        let noise_floor = 1e-12 * gram.diag().iter().fold(0.0f64, |a, &v| a.max(v.abs())) * n as f64;
        let (row_means, grand_mean) = center_gram(&mut gram);
        let (values, vectors) = symmetric_eigen_desc(&gram);
        let eigenvalues: Vec<f64> = values.iter().map(|&l| l.max(0.0)).collect();
        let top = eigenvalues[0];
        let rank = eigenvalues.iter().filter(|&&l| l > RANK_TOLERANCE * top && l > noise_floor).count();
        if rank < out_dim {
            return Err(KpcaError::InsufficientRank { rank, requested: out_dim });
        }
        let mut scaled = vectors.slice(ndarray::s![.., ..out_dim]).to_owned();
        for (mut col, &l) in scaled.axis_iter_mut(Axis(1)).zip(&eigenvalues) {
            col.mapv_inplace(|v| v / l.sqrt());
        }
        Ok(Self {
            kernel,
            training_vectors: training.to_owned(),
            row_means,
            grand_mean,
            eigenvalues,
            scaled_eigenvectors: scaled,
        })
    }

    /// Fits on at most `config.max_fit_samples` rows drawn with `seed`.
    pub fn fit_subsampled(
        features: &FrameSequence,
        config: &KpcaConfig,
        seed: u64,
    ) -> Result<Self, KpcaError> {
        let kernel = config.kernel_for_dim(features.dim());
        let n = features.count();
        if n <= config.max_fit_samples {
            return Self::fit(features.data.view(), config.out_dim, kernel);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = index::sample(&mut rng, n, config.max_fit_samples).into_vec();
        rows.sort_unstable();
        let subset = features.data.select(Axis(0), &rows);
        Self::fit(subset.view(), config.out_dim, kernel)
    }

    pub fn input_dim(&self) -> usize {
        self.training_vectors.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.scaled_eigenvectors.ncols()
    }

    pub fn n_training(&self) -> usize {
        self.training_vectors.nrows()
    }

    /// Projections of the training vectors, `sqrt(λ_k) · v_k`.
    pub fn training_projection(&self) -> Array2<f64> {
        let mut p = self.scaled_eigenvectors.clone();
        for (mut col, &l) in p.axis_iter_mut(Axis(1)).zip(&self.eigenvalues) {
            col *= l;
        }
        p
    }

    /// Projects each row of `x`.
    pub fn transform_matrix(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, KpcaError> {
        if x.ncols() != self.input_dim() {
            return Err(KpcaError::DimMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        let mut k = self.kernel.matrix(x, self.training_vectors.view());
        let n = self.n_training() as f64;
        for mut row in k.rows_mut() {
            let mean = row.sum() / n;
            for (v, rm) in row.iter_mut().zip(&self.row_means) {
                *v = *v - mean - rm + self.grand_mean;
            }
        }
        Ok(k.dot(&self.scaled_eigenvectors))
    }

    pub fn transform(&self, features: &FrameSequence) -> Result<FrameSequence, KpcaError> {
        let data = self.transform_matrix(features.data.view())?;
        Ok(FrameSequence {
            data,
            frame_rate_hz: features.frame_rate_hz,
            layout: format!("kpca[0..{}]", self.out_dim()),
            labels: features.labels.clone(),
        })
    }

    pub fn explained_variance_curve(&self) -> Result<Vec<f64>, KpcaError> {
        explained_variance_curve(&self.eigenvalues)
    }
}

/// Cumulative share of total eigenvalue mass.
pub fn explained_variance_curve(eigenvalues: &[f64]) -> Result<Vec<f64>, KpcaError> {
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(KpcaError::AllZeroSpectrum);
    }
    let mut acc = 0.0;
    let mut curve: Vec<f64> = eigenvalues
        .iter()
        .map(|l| {
            acc += l;
            (acc / total).min(1.0)
        })
        .collect();
    if let Some(last) = curve.last_mut() {
        *last = 1.0;
    }
    Ok(curve)
}
