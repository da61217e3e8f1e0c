//! Gated set-to-set distances under the learned metric and 1-NN prediction.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gating::weights_for_columns;
use crate::kernels::{cross_from_features, KernelFeature};
use crate::model::ModelState;
use crate::set_model::{encode_set, DescriptorTriple, ImageSet};

/// Nearest-neighbor decision with the full distance vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub distances: Vec<f64>,
    pub nearest_index: usize,
}

impl Prediction {
    /// The `k` closest gallery indices, ties broken by index.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.distances.len()).collect();
        idx.sort_by(|&a, &b| self.distances[a].total_cmp(&self.distances[b]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }
}

/// Cross-kernel columns of a test descriptor against the model gallery, one per kernel.
pub fn cross_columns(test: &DescriptorTriple, model: &ModelState) -> Result<Vec<DVector<f64>>> {
    model
        .bank
        .ids
        .iter()
        .zip(model.kernel_features())
        .zip(&model.bank.scales)
        .map(|((&id, feats), &scale)| {
            let t = KernelFeature::new(id, test)?;
            cross_from_features(&t, feats, id, scale)
        })
        .collect()
}

/// Distances from a test set, given its kernel columns, to every gallery set.
///
/// `d(te, i) = sum_q xi_q(te) xi_q(i) ||E^T (K_te^q - K_i^q)||^2`.
pub fn distances_from_columns(columns: &[DVector<f64>], model: &ModelState) -> Result<Vec<f64>> {
    let n = model.n_train();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::DimensionMismatch(format!("kernel columns must have length {n}")));
    }
    let xi_te = weights_for_columns(columns, &model.gating)?;
    let projected_te: Vec<DVector<f64>> = columns.iter().map(|c| model.transform.tr_mul(c)).collect();
    let mut out = vec![0.0; n];
    for (q, (p_te, p_gal)) in projected_te.iter().zip(model.projected()).enumerate() {
        for (i, d) in out.iter_mut().enumerate() {
            let sq: f64 = p_te
                .iter()
                .zip(p_gal.column(i).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            *d += xi_te[q] * model.train_weights.get(q, i) * sq;
        }
    }
    Ok(out)
}

/// Distance between an encoded test set and gallery set `i`.
pub fn set_distance(test: &DescriptorTriple, model: &ModelState, i: usize) -> Result<f64> {
    if i >= model.n_train() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: model.n_train(),
        });
    }
    let cols = cross_columns(test, model)?;
    Ok(distances_from_columns(&cols, model)?[i])
}

/// Argmin with lowest-index tie-breaking.
pub fn nearest(distances: &[f64]) -> usize {
    let mut best = 0;
    for (i, &d) in distances.iter().enumerate().skip(1) {
        if d < distances[best] {
            best = i;
        }
    }
    best
}

fn decide(distances: Vec<f64>, model: &ModelState) -> Prediction {
    let nearest_index = nearest(&distances);
    Prediction {
        label: model.gallery[nearest_index].label.clone(),
        distances,
        nearest_index,
    }
}

/// Classifies precomputed kernel columns.
pub fn predict_columns(columns: &[DVector<f64>], model: &ModelState) -> Result<Prediction> {
    Ok(decide(distances_from_columns(columns, model)?, model))
}

/// Classifies an encoded test set.
pub fn predict_encoded(test: &DescriptorTriple, model: &ModelState) -> Result<Prediction> {
    predict_columns(&cross_columns(test, model)?, model)
}

/// Encodes a raw test set with the model's configuration and classifies it.
pub fn predict(test: &ImageSet, model: &ModelState) -> Result<Prediction> {
    let first = &model.gallery[0];
    if test.dim() != first.cov.dim() {
        return Err(Error::DimensionMismatch(format!(
            "test set has dimension {}, model expects {}",
            test.dim(),
            first.cov.dim()
        )));
    }
    let encoded = encode_set(test, &model.config.encoding())?;
    predict_encoded(&encoded, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use crate::model::{fit, ModelState};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn sets(rng: &mut ChaCha8Rng, classes: usize, per: usize, d: usize) -> Vec<ImageSet> {
        let mut out = vec![];
        for c in 0..classes {
            let center: Vec<f64> = (0..d).map(|_| 4.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            for s in 0..per {
                let f = DMatrix::from_fn(d, 20, |r, _| center[r] + rng.sample::<f64, _>(StandardNormal));
                out.push(ImageSet::new(f, format!("c{c}"), format!("c{c}s{s}")).unwrap());
            }
        }
        out
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            subspace_dim: 3,
            target_dim: 4,
            outer_iters: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn copy_of_training_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = sets(&mut rng, 3, 3, 5);
        let model = fit(&data, &cfg()).unwrap();
        for (i, s) in data.iter().enumerate() {
            let p = predict(s, &model).unwrap();
            assert!(p.distances[i].abs() <= 1e-9);
            assert_eq!(p.label, s.label);
            assert!(p.distances.iter().all(|&d| d >= -1e-9));
        }
    }

    #[test]
    fn distance_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = sets(&mut rng, 2, 5, 4);
        let model = fit(&data, &cfg()).unwrap();
        let probe = sets(&mut rng, 1, 1, 4).remove(0);
        let enc = encode_set(&probe, &model.config.encoding()).unwrap();
        let cols = cross_columns(&enc, &model).unwrap();
        // Eq-by-term: recompute xi_te by explicit exp-sum, and E E^T as a full matrix
        let e = &model.transform;
        let eet = e * e.transpose();
        let scores: Vec<f64> = (0..cols.len())
            .map(|q| model.gating.deltas[q].dot(&cols[q]) + model.gating.rhos[q])
            .collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        for i in 0..model.n_train() {
            let mut naive = 0.0;
            for q in 0..cols.len() {
                let diff = &cols[q] - model.bank.grams[q].column(i);
                let quad = (diff.transpose() * &eet * &diff)[(0, 0)];
                naive += scores[q].exp() / z * quad * model.train_weights.get(q, i);
            }
            let got = set_distance(&enc, &model, i).unwrap();
            assert!((got - naive).abs() <= 1e-10 * naive.abs().max(1.0), "{got} vs {naive}");
        }
        assert!(matches!(
            set_distance(&enc, &model, 99),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn zero_transform_gives_zero_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = sets(&mut rng, 2, 3, 4);
        let m = fit(&data, &cfg()).unwrap();
        let zero = DMatrix::zeros(m.transform.nrows(), m.transform.ncols());
        let m = ModelState::from_parts(
            m.config.clone(),
            m.gallery.clone(),
            m.bank.clone(),
            zero,
            m.gating.clone(),
            m.train_weights.clone(),
            m.objective_trace.clone(),
        )
        .unwrap();
        let p = predict(&data[0], &m).unwrap();
        assert!(p.distances.iter().all(|&d| d == 0.0));
        assert_eq!(p.nearest_index, 0);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(nearest(&[3.0, 1.0, 1.0, 2.0]), 1);
        assert_eq!(nearest(&[0.5, 0.5]), 0);
        let p = Prediction {
            label: "x".into(),
            distances: vec![2.0, 1.0, 1.0, 0.5],
            nearest_index: 3,
        };
        assert_eq!(p.top_k(3), vec![3, 1, 2]);
    }

    #[test]
    fn predictions_are_repeatable_and_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = sets(&mut rng, 3, 3, 5);
        let model = fit(&data, &cfg()).unwrap();
        let probes = sets(&mut rng, 2, 3, 5);
        let mut shifted = model.clone();
        shifted.gating.rhos.iter_mut().for_each(|r| *r += 3.7);
        for p in &probes {
            let a = predict(p, &model).unwrap();
            let b = predict(p, &model).unwrap();
            assert_eq!(a, b);
            assert_eq!(predict(p, &shifted).unwrap().nearest_index, a.nearest_index);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = sets(&mut rng, 2, 3, 4);
        let model = fit(&data, &cfg()).unwrap();
        let other = sets(&mut rng, 1, 1, 5).remove(0);
        assert!(matches!(predict(&other, &model), Err(Error::DimensionMismatch(_))));
    }
}
