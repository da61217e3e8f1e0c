//! Log-Euclidean, projection and Gaussian-embedding kernels, plus Gram and
//! cross-kernel construction over descriptor collections.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::set_model::{DescriptorTriple, GaussianDescriptor, GrassmannPoint};
use crate::spd::{spd_log, trace_product, SpdMatrix};

/// Trace below which trace normalization is refused.
pub const NORMALIZATION_FLOOR: f64 = 1e-12;

/// Which descriptor/kernel pair a Gram matrix was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelId {
    LogEuclidean,
    Projection,
    GaussianEmbedded,
}

impl KernelId {
    pub const ALL: [KernelId; 3] = [KernelId::LogEuclidean, KernelId::Projection, KernelId::GaussianEmbedded];

    /// 1-based descriptor slot: covariance = 1, subspace = 2, gaussian = 3.
    pub fn slot(self) -> usize {
        match self {
            KernelId::LogEuclidean => 1,
            KernelId::Projection => 2,
            KernelId::GaussianEmbedded => 3,
        }
    }

    /// Short descriptor name used on the command line and in reports.
    pub fn descriptor_name(self) -> &'static str {
        match self {
            KernelId::LogEuclidean => "cov",
            KernelId::Projection => "subspace",
            KernelId::GaussianEmbedded => "gauss",
        }
    }

    pub fn from_descriptor_name(name: &str) -> Option<Self> {
        match name.trim() {
            "cov" => Some(KernelId::LogEuclidean),
            "subspace" => Some(KernelId::Projection),
            "gauss" => Some(KernelId::GaussianEmbedded),
            _ => None,
        }
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.descriptor_name())
    }
}

fn same_dim(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// `tr(log C1 log C2)`.
pub fn k_log(c1: &SpdMatrix, c2: &SpdMatrix) -> Result<f64> {
    same_dim(c1.dim(), c2.dim(), "SPD dimensions")?;
    let l1 = spd_log(c1)?;
    let l2 = spd_log(c2)?;
    Ok(trace_product(l1.as_matrix(), l2.as_matrix()))
}

/// `||Y1^T Y2||_F^2`.
pub fn k_proj(y1: &GrassmannPoint, y2: &GrassmannPoint) -> Result<f64> {
    same_dim(y1.ambient_dim(), y2.ambient_dim(), "ambient dimensions")?;
    same_dim(y1.subspace_dim(), y2.subspace_dim(), "subspace dimensions")?;
    Ok(projection_inner(&y1.basis, &y2.basis))
}

fn projection_inner(y1: &DMatrix<f64>, y2: &DMatrix<f64>) -> f64 {
    (y1.transpose() * y2).norm_squared()
}

/// Log-Euclidean kernel between the two Gaussian embeddings.
pub fn k_gauss(g1: &GaussianDescriptor, g2: &GaussianDescriptor) -> Result<f64> {
    same_dim(g1.mean.len(), g2.mean.len(), "Gaussian dimensions")?;
    k_log(&g1.embedding, &g2.embedding)
}

/// Evaluates kernel `id` on two descriptor triples.
pub fn kernel(id: KernelId, a: &DescriptorTriple, b: &DescriptorTriple) -> Result<f64> {
    match id {
        KernelId::LogEuclidean => k_log(&a.cov, &b.cov),
        KernelId::Projection => k_proj(&a.subspace, &b.subspace),
        KernelId::GaussianEmbedded => k_gauss(&a.gauss, &b.gauss),
    }
}

/// Per-descriptor precomputation: matrix logs for the SPD kernels, the
/// projector `Y Y^T` for the projection kernel. Every kernel is then a
/// Frobenius inner product, which is bit-symmetric in its arguments.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct KernelFeature(DMatrix<f64>);

impl KernelFeature {
    pub(crate) fn new(id: KernelId, t: &DescriptorTriple) -> Result<Self> {
        let m = match id {
            KernelId::LogEuclidean => spd_log(&t.cov)?.into_matrix(),
            KernelId::Projection => t.subspace.projector(),
            KernelId::GaussianEmbedded => spd_log(&t.gauss.embedding)?.into_matrix(),
        };
        Ok(KernelFeature(m))
    }

    pub(crate) fn eval(&self, id: KernelId, other: &KernelFeature) -> Result<f64> {
        if self.0.shape() != other.0.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{id} features of shape {:?} vs {:?}",
                self.0.shape(),
                other.0.shape()
            )));
        }
        Ok(trace_product(&self.0, &other.0))
    }
}

pub(crate) fn features(triples: &[DescriptorTriple], id: KernelId) -> Result<Vec<KernelFeature>> {
    triples
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            KernelFeature::new(id, t).map_err(|e| Error::KernelPair {
                i,
                j: i,
                source: Box::new(e),
            })
        })
        .collect()
}

pub(crate) fn gram_from_features(feats: &[KernelFeature], id: KernelId) -> Result<DMatrix<f64>> {
    let n = feats.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            feats[i].eval(id, &feats[j]).map_err(|e| Error::KernelPair {
                i,
                j,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let mut k = DMatrix::zeros(n, n);
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        k[(i, j)] = v;
        k[(j, i)] = v;
    }
    Ok(k)
}

/// Raw (unnormalized) Gram matrix of kernel `id`.
fn raw_gram(triples: &[DescriptorTriple], id: KernelId) -> Result<DMatrix<f64>> {
    if triples.is_empty() {
        return Err(Error::BadDimension("empty descriptor list".into()));
    }
    gram_from_features(&features(triples, id)?, id)
}

/// Scale factor `N / tr(K)` used by trace normalization.
pub fn normalization_scale(k: &DMatrix<f64>, id: KernelId) -> Result<f64> {
    let trace = k.trace();
    if trace <= NORMALIZATION_FLOOR {
        return Err(Error::NormalizationDegenerate {
            kernel: id.descriptor_name(),
            trace,
        });
    }
    Ok(k.nrows() as f64 / trace)
}

/// `N x N` Gram matrix; with `normalize`, rescaled to `N K / tr(K)`.
pub fn gram_matrix(triples: &[DescriptorTriple], id: KernelId, normalize: bool) -> Result<DMatrix<f64>> {
    let k = raw_gram(triples, id)?;
    if normalize {
        let s = normalization_scale(&k, id)?;
        Ok(k * s)
    } else {
        Ok(k)
    }
}

/// Kernel values between `test` and every gallery descriptor, times `normalize_ref`.
pub fn cross_kernel_vector(
    test: &DescriptorTriple,
    gallery: &[DescriptorTriple],
    id: KernelId,
    normalize_ref: f64,
) -> Result<DVector<f64>> {
    if gallery.is_empty() {
        return Err(Error::BadDimension("empty gallery".into()));
    }
    let t = KernelFeature::new(id, test)?;
    let feats = features(gallery, id)?;
    cross_from_features(&t, &feats, id, normalize_ref)
}

pub(crate) fn cross_from_features(
    test: &KernelFeature,
    gallery: &[KernelFeature],
    id: KernelId,
    normalize_ref: f64,
) -> Result<DVector<f64>> {
    let vals: Vec<f64> = gallery
        .iter()
        .enumerate()
        .map(|(i, g)| {
            test.eval(id, g)
                .map(|v| v * normalize_ref)
                .map_err(|e| Error::KernelPair {
                    i,
                    j: i,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    Ok(DVector::from_vec(vals))
}

/// The Gram matrices of the enabled kernels over a training gallery.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    pub ids: Vec<KernelId>,
    pub grams: Vec<DMatrix<f64>>,
    /// Multiplier applied to raw kernel values (1 when normalization is off).
    pub scales: Vec<f64>,
    pub normalized: Vec<bool>,
}

impl KernelBank {
    /// Builds one Gram per id, in the given order.
    pub fn build(triples: &[DescriptorTriple], ids: &[KernelId], normalize: bool) -> Result<Self> {
        let raw = ids
            .iter()
            .map(|&id| raw_gram(triples, id))
            .collect::<Result<Vec<_>>>()?;
        Self::from_raw_grams(ids, raw, normalize)
    }

    /// Wraps precomputed raw Grams, applying trace normalization if requested.
    pub fn from_raw_grams(ids: &[KernelId], raw: Vec<DMatrix<f64>>, normalize: bool) -> Result<Self> {
        if ids.is_empty() || ids.len() != raw.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} kernel ids for {} Gram matrices",
                ids.len(),
                raw.len()
            )));
        }
        let n = raw[0].nrows();
        let mut grams = Vec::with_capacity(raw.len());
        let mut scales = Vec::with_capacity(raw.len());
        for (&id, k) in ids.iter().zip(raw) {
            if k.shape() != (n, n) {
                return Err(Error::ShapeMismatch(format!(
                    "{id} Gram is {:?}, expected ({n}, {n})",
                    k.shape()
                )));
            }
            let s = if normalize { normalization_scale(&k, id)? } else { 1.0 };
            grams.push(if normalize { k * s } else { k });
            scales.push(s);
        }
        Ok(KernelBank {
            ids: ids.to_vec(),
            grams,
            scales,
            normalized: vec![normalize; ids.len()],
        })
    }

    /// Number of kernels Q.
    pub fn n_kernels(&self) -> usize {
        self.grams.len()
    }

    /// Number of training sets N.
    pub fn n_train(&self) -> usize {
        self.grams[0].nrows()
    }
}
