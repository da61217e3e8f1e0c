//! Encoding an image set as a covariance matrix, a linear subspace and an
//! embedded Gaussian.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spd::{regularize_spd, sym_eig, symmetrize, SpdMatrix, SymMatrix};

/// Default trace-ridge divisor for covariance regularization.
pub const DEFAULT_ALPHA: f64 = 1e3;
/// Default subspace dimension, capped per gallery by the harness.
pub const DEFAULT_SUBSPACE_DIM: usize = 10;
/// Relative eigenvalue threshold below which a subspace is ill-defined.
pub const RANK_TOL: f64 = 1e-12;

/// A set of feature vectors stored column-wise (`d x n`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub features: DMatrix<f64>,
    pub label: String,
    pub set_id: String,
}

impl ImageSet {
    pub fn new(features: DMatrix<f64>, label: impl Into<String>, set_id: impl Into<String>) -> Result<Self> {
        let set = ImageSet {
            features,
            label: label.into(),
            set_id: set_id.into(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::BadDimension(format!(
                "set `{}` has zero feature dimension",
                self.set_id
            )));
        }
        if self.len() < 2 {
            return Err(self.too_few());
        }
        if !self.features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    /// Number of samples (columns).
    pub fn len(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn too_few(&self) -> Error {
        Error::TooFewSamples {
            set_id: self.set_id.clone(),
            samples: self.len(),
        }
    }
}

/// Orthonormal `d x q` basis of a point on the Grassmann manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannPoint {
    pub basis: DMatrix<f64>,
}

impl GrassmannPoint {
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let q = basis.ncols();
        if q == 0 || q > basis.nrows() {
            return Err(Error::BadDimension(format!(
                "basis of shape {}x{} is not a valid subspace",
                basis.nrows(),
                q
            )));
        }
        let gram = basis.transpose() * &basis;
        if (gram - DMatrix::identity(q, q)).amax() > 1e-10 {
            return Err(Error::BadDimension("basis columns are not orthonormal".into()));
        }
        Ok(GrassmannPoint { basis })
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn subspace_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// The projector `Y Y^T`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }
}

/// A single Gaussian together with its `(d+1) x (d+1)` SPD embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDescriptor {
    pub mean: DVector<f64>,
    pub covariance: SpdMatrix,
    pub embedding: SpdMatrix,
}

/// The three descriptors of one set, indexed (covariance, subspace, gaussian).
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorTriple {
    pub cov: SpdMatrix,
    pub subspace: GrassmannPoint,
    pub gauss: GaussianDescriptor,
    pub label: String,
    pub set_id: String,
}

/// Parameters controlling set encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodingConfig {
    pub alpha: f64,
    pub subspace_dim: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            alpha: DEFAULT_ALPHA,
            subspace_dim: DEFAULT_SUBSPACE_DIM,
        }
    }
}

/// Sample mean of the columns.
pub fn sample_mean(set: &ImageSet) -> DVector<f64> {
    set.features.column_mean()
}

/// Unbiased sample covariance (divisor `n - 1`), without regularization.
pub fn sample_covariance(set: &ImageSet) -> Result<SymMatrix> {
    let n = set.len();
    if n < 2 {
        return Err(set.too_few());
    }
    let mean = sample_mean(set);
    let mut centered = set.features.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = (&centered * centered.transpose()) / (n as f64 - 1.0);
    Ok(SymMatrix::new_unchecked(symmetrize(&cov)))
}

/// Regularized sample covariance.
pub fn covariance_descriptor(set: &ImageSet, alpha: f64) -> Result<SpdMatrix> {
    regularize_spd(&sample_covariance(set)?, alpha)
}

/// Top-`q` eigenvectors of the (uncentered) second-moment matrix `S S^T`.
pub fn subspace_descriptor(set: &ImageSet, q: usize) -> Result<GrassmannPoint> {
    let d = set.dim();
    if q == 0 || q > d.min(set.len()) {
        return Err(Error::BadDimension(format!(
            "subspace dimension {q} not in 1..={} for set `{}`",
            d.min(set.len()),
            set.set_id
        )));
    }
    let moment = symmetrize(&(&set.features * set.features.transpose()));
    let eig = sym_eig(&moment)?;
    let largest = eig.values[0];
    let qth = eig.values[q - 1];
    if !(largest > 0.0) || qth < RANK_TOL * largest {
        return Err(Error::RankDeficient {
            q,
            eigenvalue: qth,
            largest,
        });
    }
    Ok(GrassmannPoint {
        basis: eig.vectors.columns(0, q).into_owned(),
    })
}

/// Embeds `N(mean, cov)` as the determinant-one SPD matrix
/// `|A|^{-2/(d+1)} [[A A^T + m m^T, m], [m^T, 1]]` with `A` the Cholesky factor of `cov`.
pub fn embed_gaussian(mean: &DVector<f64>, cov: &SpdMatrix) -> Result<SpdMatrix> {
    let d = cov.dim();
    if mean.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "mean has length {}, covariance is {d}x{d}",
            mean.len()
        )));
    }
    let chol = Cholesky::new(cov.as_matrix().clone()).ok_or(Error::NotPositiveDefinite {
        min_eigenvalue: f64::NAN,
    })?;
    let factor = chol.l();
    // log|A| from the Cholesky diagonal keeps large d from overflowing
    let log_det_a: f64 = factor.diagonal().iter().map(|v| v.ln()).sum();
    let scale = (-2.0 / (d as f64 + 1.0) * log_det_a).exp();

    let mut p = DMatrix::zeros(d + 1, d + 1);
    let top = &factor * factor.transpose() + mean * mean.transpose();
    p.view_mut((0, 0), (d, d)).copy_from(&top);
    p.view_mut((0, d), (d, 1)).copy_from(mean);
    p.view_mut((d, 0), (1, d)).copy_from(&mean.transpose());
    p[(d, d)] = 1.0;
    p *= scale;
    Ok(SpdMatrix::new_unchecked(symmetrize(&p)))
}

/// Sample mean, regularized covariance and their embedding.
pub fn gaussian_descriptor(set: &ImageSet, alpha: f64) -> Result<GaussianDescriptor> {
    let covariance = covariance_descriptor(set, alpha)?;
    let mean = sample_mean(set);
    let embedding = embed_gaussian(&mean, &covariance)?;
    Ok(GaussianDescriptor {
        mean,
        covariance,
        embedding,
    })
}

/// Encodes a set as its descriptor triple.
pub fn encode_set(set: &ImageSet, cfg: &EncodingConfig) -> Result<DescriptorTriple> {
    set.validate()?;
    let gauss = gaussian_descriptor(set, cfg.alpha)?;
    let subspace = subspace_descriptor(set, cfg.subspace_dim)?;
    Ok(DescriptorTriple {
        cov: gauss.covariance.clone(),
        subspace,
        gauss,
        label: set.label.clone(),
        set_id: set.set_id.clone(),
    })
}

/// Encodes every set, in parallel; output order follows input order.
pub fn encode_all(sets: &[ImageSet], cfg: &EncodingConfig) -> Result<Vec<DescriptorTriple>> {
    use rayon::prelude::*;
    sets.par_iter().map(|s| encode_set(s, cfg)).collect()
}
