//! Seeded synthetic image-set generator.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::set_model::ImageSet;

/// Parameters of a synthetic classification task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub sets_per_class: usize,
    pub dim: usize,
    pub samples: usize,
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 3 classes, 6 sets per class, d = 10, separation 5, seed 42.
    pub fn standard() -> Self {
        SyntheticSpec {
            classes: 3,
            sets_per_class: 6,
            dim: 10,
            samples: 50,
            separation: 5.0,
            seed: 42,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.sets_per_class == 0 {
            return Err(Error::BadSpec("class and set counts must be at least 1".into()));
        }
        if self.dim < 2 {
            return Err(Error::BadSpec("dimension must be at least 2".into()));
        }
        if self.samples < 2 {
            return Err(Error::BadSpec("each set needs at least 2 samples".into()));
        }
        if !(self.separation >= 0.0) || !self.separation.is_finite() {
            return Err(Error::BadSpec("separation must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| normal(rng));
    (&g * g.transpose()) / d as f64 + DMatrix::identity(d, d) * 0.25
}

/// Generates `classes * sets_per_class` sets.
///
/// Class centers are drawn from `N(0, separation^2 I)`, so two centers lie
/// roughly `separation * sqrt(2 d)` apart. Each set gets its own mean (center
/// plus unit Gaussian jitter) and a covariance blending a per-set and a
/// per-class random SPD matrix with class weight `separation / (1 + separation)`.
/// With `separation = 0` all classes share one distribution.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<ImageSet>> {
    spec.validate()?;
    let d = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let class_weight = spec.separation / (1.0 + spec.separation);
    let mut sets = Vec::with_capacity(spec.classes * spec.sets_per_class);
    for c in 0..spec.classes {
        let center = DVector::from_fn(d, |_, _| spec.separation * normal(&mut rng));
        let class_cov = random_spd(&mut rng, d);
        for s in 0..spec.sets_per_class {
            let mean = &center + DVector::from_fn(d, |_, _| normal(&mut rng));
            let cov = random_spd(&mut rng, d) * (1.0 - class_weight) + &class_cov * class_weight;
            let factor = cov.cholesky().expect("blend of SPD matrices is SPD").l();
            let noise = DMatrix::from_fn(d, spec.samples, |_, _| normal(&mut rng));
            let mut features = factor * noise;
            for mut col in features.column_iter_mut() {
                col += &mean;
            }
            sets.push(ImageSet::new(features, format!("class{c}"), format!("c{c}_s{s}"))?);
        }
    }
    Ok(sets)
}
