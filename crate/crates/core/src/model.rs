//! Trained model state: the learned transform, gating parameters, and the
//! frozen gallery needed to score new sets.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::gating::{GatingParams, GatingWeights};
use crate::kernels::{features, KernelBank, KernelFeature};
use crate::metric::{train, TrainedMetric};
use crate::set_model::{encode_all, DescriptorTriple, ImageSet};

/// Everything needed at prediction time.
#[derive(Debug, Clone)]
pub struct ModelState {
    /// Configuration actually used (subspace dimension already capped).
    pub config: TrainConfig,
    pub gallery: Vec<DescriptorTriple>,
    pub bank: KernelBank,
    /// `N x d_w`.
    pub transform: DMatrix<f64>,
    pub gating: GatingParams,
    pub train_weights: GatingWeights,
    pub objective_trace: Vec<f64>,
    features: Vec<Vec<KernelFeature>>,
    /// `E^T K^q` per kernel.
    projected: Vec<DMatrix<f64>>,
}

impl PartialEq for ModelState {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.gallery == other.gallery
            && self.bank == other.bank
            && self.transform == other.transform
            && self.gating == other.gating
            && self.train_weights == other.train_weights
            && self.objective_trace == other.objective_trace
    }
}

impl ModelState {
    /// Assembles a model from its parts and precomputes the gallery caches.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        config: TrainConfig,
        gallery: Vec<DescriptorTriple>,
        bank: KernelBank,
        transform: DMatrix<f64>,
        gating: GatingParams,
        train_weights: GatingWeights,
        objective_trace: Vec<f64>,
    ) -> Result<Self> {
        let n = gallery.len();
        if bank.n_train() != n
            || transform.nrows() != n
            || train_weights.n_samples() != n
            || gating.n_kernels() != bank.n_kernels()
            || train_weights.n_kernels() != bank.n_kernels()
            || bank.ids != config.descriptors
        {
            return Err(Error::ShapeMismatch(format!(
                "inconsistent model: {n} gallery sets, bank over {}, transform {}x{}",
                bank.n_train(),
                transform.nrows(),
                transform.ncols()
            )));
        }
        if !transform.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let features = bank
            .ids
            .iter()
            .map(|&id| features(&gallery, id))
            .collect::<Result<Vec<_>>>()?;
        let projected = bank.grams.iter().map(|k| transform.tr_mul(k)).collect();
        Ok(ModelState {
            config,
            gallery,
            bank,
            transform,
            gating,
            train_weights,
            objective_trace,
            features,
            projected,
        })
    }

    pub fn n_train(&self) -> usize {
        self.gallery.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.gallery.iter().map(|t| t.label.as_str())
    }

    pub(crate) fn kernel_features(&self) -> &[Vec<KernelFeature>] {
        &self.features
    }

    pub(crate) fn projected(&self) -> &[DMatrix<f64>] {
        &self.projected
    }
}

/// Maps string labels to dense class indices in sorted label order.
pub fn class_indices<'a>(labels: impl IntoIterator<Item = &'a str> + Clone) -> Vec<usize> {
    let classes: BTreeSet<&str> = labels.clone().into_iter().collect();
    let classes: Vec<&str> = classes.into_iter().collect();
    labels
        .into_iter()
        .map(|l| classes.binary_search(&l).expect("label was collected"))
        .collect()
}

/// Caps the subspace dimension at `min(d - 1, n_min)` over the gallery.
///
/// `q = d` is excluded because every set then spans the whole space and the
/// projection kernel is constant.
pub fn effective_config(sets: &[ImageSet], cfg: &TrainConfig) -> Result<TrainConfig> {
    let first = sets
        .first()
        .ok_or_else(|| Error::BadDimension("empty gallery".into()))?;
    let n_min = sets.iter().map(ImageSet::len).min().unwrap_or(0);
    let cap = first.dim().saturating_sub(1).min(n_min).max(1);
    let mut out = cfg.clone();
    if out.subspace_dim > cap {
        log::warn!("capping subspace dimension {} to {cap}", out.subspace_dim);
        out.subspace_dim = cap;
    }
    Ok(out)
}

/// Trains on already-encoded descriptors with a prebuilt bank.
pub fn fit_encoded(gallery: Vec<DescriptorTriple>, bank: KernelBank, cfg: &TrainConfig) -> Result<ModelState> {
    let labels = class_indices(gallery.iter().map(|t| t.label.as_str()));
    let TrainedMetric {
        transform,
        gating,
        weights,
        objective_trace,
        ..
    } = train(&bank, &labels, cfg)?;
    ModelState::from_parts(cfg.clone(), gallery, bank, transform, gating, weights, objective_trace)
}

/// Encodes the gallery, builds the kernel bank and trains.
pub fn fit(sets: &[ImageSet], cfg: &TrainConfig) -> Result<ModelState> {
    cfg.validate()?;
    let cfg = effective_config(sets, cfg)?;
    let gallery = encode_all(sets, &cfg.encoding())?;
    let bank = KernelBank::build(&gallery, &cfg.descriptors, cfg.normalize_kernels)?;
    fit_encoded(gallery, bank, &cfg)
}
