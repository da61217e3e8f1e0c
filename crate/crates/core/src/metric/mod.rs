//! Kernel-space scatter matrices, the trace-ratio objective and its solver,
//! and the alternating trainer.

mod itr;
mod train;

pub use itr::{itr_solve, random_orthonormal, solve_trace_ratio, ItrResult, TraceRatioResult};
pub use train::{train, TrainedMetric};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gating::GatingWeights;
use crate::kernels::KernelBank;
use crate::spd::{sym_eig, symmetrize};

/// Relative eigenvalue threshold separating the range of the total scatter from its null space.
pub const NULL_SPACE_TOL: f64 = 1e-10;

/// Ordered-pair counts of the within- and between-class double sums (`i = j` included).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub within: usize,
    pub between: usize,
}

impl PairCounts {
    pub fn from_labels(labels: &[usize]) -> Self {
        let n = labels.len();
        let mut per_class = std::collections::BTreeMap::<usize, usize>::new();
        for &l in labels {
            *per_class.entry(l).or_default() += 1;
        }
        let within = per_class.values().map(|c| c * c).sum();
        PairCounts {
            within,
            between: n * n - within,
        }
    }
}

/// Gated within-class and between-class scatter in kernel space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    pub within: DMatrix<f64>,
    pub between: DMatrix<f64>,
    pub n_within_pairs: usize,
    pub n_between_pairs: usize,
}

impl ScatterPair {
    pub fn total(&self) -> DMatrix<f64> {
        &self.within + &self.between
    }
}

/// Builds `Y_w` and `Y_b`.
///
/// `sum_{i,j} w_ij (K_i - K_j)(K_i - K_j)^T` with symmetric weights equals
/// `K (2 diag(W 1) - 2 W) K^T`, so each kernel costs two `N x N` products
/// instead of a loop over pairs.
pub fn scatter_matrices(bank: &KernelBank, labels: &[usize], weights: &GatingWeights) -> Result<ScatterPair> {
    let n = bank.n_train();
    if labels.len() != n || weights.n_samples() != n || weights.n_kernels() != bank.n_kernels() {
        return Err(Error::ShapeMismatch(format!(
            "N = {n}, {} labels, weights {}x{}",
            labels.len(),
            weights.n_kernels(),
            weights.n_samples()
        )));
    }
    let counts = PairCounts::from_labels(labels);
    if counts.between == 0 {
        return Err(Error::SingleClassGallery);
    }

    let mut within = DMatrix::zeros(n, n);
    let mut between = DMatrix::zeros(n, n);
    for (q, k) in bank.grams.iter().enumerate() {
        let mut lap_w = DMatrix::zeros(n, n);
        let mut lap_b = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let w = weights.get(q, i) * weights.get(q, j);
                let lap = if labels[i] == labels[j] { &mut lap_w } else { &mut lap_b };
                lap[(i, j)] -= 2.0 * w;
                lap[(i, i)] += 2.0 * w;
            }
        }
        within += k * lap_w * k.transpose();
        between += k * lap_b * k.transpose();
    }
    within /= counts.within as f64;
    between /= counts.between as f64;
    Ok(ScatterPair {
        within: symmetrize(&within),
        between: symmetrize(&between),
        n_within_pairs: counts.within,
        n_between_pairs: counts.between,
    })
}

/// Smallest admissible `tr(E^T Y_t E)`.
pub const DENOMINATOR_FLOOR: f64 = 1e-15;

/// Trace ratio `tr(E^T Y_b E) / tr(E^T Y_t E)`.
pub fn objective_value(e: &DMatrix<f64>, scatter: &ScatterPair) -> Result<f64> {
    trace_ratio(e, &scatter.between, &scatter.total())
}

pub(crate) fn quad_trace(v: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    (v.tr_mul(m) * v).trace()
}

pub(crate) fn trace_ratio(v: &DMatrix<f64>, between: &DMatrix<f64>, total: &DMatrix<f64>) -> Result<f64> {
    if v.nrows() != total.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "transform has {} rows, scatter is {}x{}",
            v.nrows(),
            total.nrows(),
            total.ncols()
        )));
    }
    let denom = quad_trace(v, total);
    if !(denom > DENOMINATOR_FLOOR) {
        return Err(Error::DegenerateDenominator(denom));
    }
    Ok(quad_trace(v, between) / denom)
}

/// Range basis of the total scatter and the scatters restricted to it.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSpaceReduction {
    /// `N x d_e`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub between: DMatrix<f64>,
    /// Positive definite.
    pub total: DMatrix<f64>,
    pub effective_dim: usize,
}

/// Restricts the problem to the eigenvectors of `Y_t = Y_w + Y_b` with
/// eigenvalue above `NULL_SPACE_TOL * lambda_max`.
pub fn remove_null_space(within: &DMatrix<f64>, between: &DMatrix<f64>) -> Result<NullSpaceReduction> {
    if within.shape() != between.shape() {
        return Err(Error::ShapeMismatch(
            "within and between scatter differ in shape".into(),
        ));
    }
    let total = symmetrize(&(within + between));
    let eig = sym_eig(&total)?;
    let largest = eig.values[0];
    if !(largest > DENOMINATOR_FLOOR) {
        return Err(Error::ZeroTotalScatter(largest));
    }
    let effective_dim = eig.values.iter().take_while(|&&v| v > NULL_SPACE_TOL * largest).count();
    let basis = eig.vectors.columns(0, effective_dim).into_owned();
    let reduce = |m: &DMatrix<f64>| symmetrize(&(basis.tr_mul(m) * &basis));
    Ok(NullSpaceReduction {
        between: reduce(between),
        total: reduce(&total),
        basis,
        effective_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gating::{gating_weights, GatingParams};
    use crate::kernels::KernelId;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_bank(rng: &mut ChaCha8Rng, n: usize) -> KernelBank {
        let grams = (0..3)
            .map(|_| {
                let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
                symmetrize(&(&g * g.transpose()))
            })
            .collect();
        KernelBank::from_raw_grams(&KernelId::ALL, grams, false).unwrap()
    }

    /// Direct quadruple loop over (i, j, q, entry).
    fn brute_force(bank: &KernelBank, labels: &[usize], w: &GatingWeights) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = labels.len();
        let (mut sw, mut sb) = (DMatrix::zeros(n, n), DMatrix::zeros(n, n));
        let (mut nw, mut nb) = (0usize, 0usize);
        for i in 0..n {
            for j in 0..n {
                let same = labels[i] == labels[j];
                if same {
                    nw += 1
                } else {
                    nb += 1
                }
                for (q, k) in bank.grams.iter().enumerate() {
                    let c = w.get(q, i) * w.get(q, j);
                    for a in 0..n {
                        for b in 0..n {
                            let v = c * (k[(a, i)] - k[(a, j)]) * (k[(b, i)] - k[(b, j)]);
                            if same {
                                sw[(a, b)] += v
                            } else {
                                sb[(a, b)] += v
                            }
                        }
                    }
                }
            }
        }
        (sw / nw as f64, sb / nb as f64)
    }

    #[test]
    fn scatter_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 8;
        let bank = random_bank(&mut rng, n);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let w = gating_weights(&bank, &GatingParams::random(3, n, &mut rng)).unwrap();
        let s = scatter_matrices(&bank, &labels, &w).unwrap();
        let (bw, bb) = brute_force(&bank, &labels, &w);
        let scale = bw.amax().max(bb.amax());
        assert!((&s.within - bw).amax() <= 1e-12 * scale);
        assert!((&s.between - bb).amax() <= 1e-12 * scale);
        assert_eq!(s.n_within_pairs, 32);
        assert_eq!(s.n_between_pairs, 32);
    }

    #[test]
    fn identical_pair_single_class() {
        let k = DMatrix::from_element(2, 2, 3.0);
        let bank = KernelBank::from_raw_grams(&[KernelId::LogEuclidean], vec![k], false).unwrap();
        let w = gating_weights(&bank, &GatingParams::zeros(1, 2)).unwrap();
        assert!(matches!(
            scatter_matrices(&bank, &[0, 0], &w),
            Err(Error::SingleClassGallery)
        ));
    }

    #[test]
    fn two_sets_two_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bank = random_bank(&mut rng, 2);
        let w = gating_weights(&bank, &GatingParams::zeros(3, 2)).unwrap();
        let s = scatter_matrices(&bank, &[0, 1], &w).unwrap();
        assert_eq!(s.within, DMatrix::zeros(2, 2));
        assert_eq!(s.n_within_pairs, 2);
        let rank = sym_eig(&s.between)
            .unwrap()
            .values
            .iter()
            .filter(|v| v.abs() > 1e-12)
            .count();
        assert!(rank <= 3);
    }

    #[test]
    fn objective_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = DMatrix::from_fn(5, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = symmetrize(&(&g * g.transpose()));
        let e = random_orthonormal(&mut rng, 5, 2);
        let half = ScatterPair {
            within: b.clone(),
            between: b.clone(),
            n_within_pairs: 1,
            n_between_pairs: 1,
        };
        assert!((objective_value(&e, &half).unwrap() - 0.5).abs() < 1e-14);
        let full = ScatterPair {
            within: DMatrix::zeros(5, 5),
            ..half.clone()
        };
        assert_eq!(objective_value(&e, &full).unwrap(), 1.0);

        let w = DMatrix::from_fn(5, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sw = symmetrize(&(&w * w.transpose()));
        let s = ScatterPair {
            within: sw.clone(),
            between: b.clone(),
            n_within_pairs: 1,
            n_between_pairs: 1,
        };
        let (mut num, mut den) = (0.0, 0.0);
        for c in 0..2 {
            for a in 0..5 {
                for bb in 0..5 {
                    num += e[(a, c)] * b[(a, bb)] * e[(bb, c)];
                    den += e[(a, c)] * (b[(a, bb)] + sw[(a, bb)]) * e[(bb, c)];
                }
            }
        }
        assert!((objective_value(&e, &s).unwrap() - num / den).abs() <= 1e-12);

        let zero = ScatterPair {
            within: DMatrix::zeros(5, 5),
            between: DMatrix::zeros(5, 5),
            n_within_pairs: 1,
            n_between_pairs: 1,
        };
        assert!(matches!(
            objective_value(&e, &zero),
            Err(Error::DegenerateDenominator(_))
        ));
    }

    #[test]
    fn null_space_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = DMatrix::from_fn(6, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let full = symmetrize(&(&g * g.transpose()));
        let r = remove_null_space(&full, &DMatrix::zeros(6, 6)).unwrap();
        assert_eq!(r.effective_dim, 6);
        assert!((r.basis.transpose() * &r.basis - DMatrix::identity(6, 6)).amax() < 1e-12);

        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]));
        let r = remove_null_space(&d, &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(r.effective_dim, 1);
        assert_eq!(r.basis.as_slice(), &[1.0, 0.0]);

        for rank in 1..6 {
            let g = DMatrix::from_fn(8, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
            let m = symmetrize(&(&g * g.transpose()));
            let r = remove_null_space(&(&m * 0.5), &(&m * 0.5)).unwrap();
            assert_eq!(r.effective_dim, rank);
        }

        assert!(matches!(
            remove_null_space(&DMatrix::zeros(3, 3), &DMatrix::zeros(3, 3)),
            Err(Error::ZeroTotalScatter(_))
        ));
    }

    #[test]
    fn reduction_preserves_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gw = DMatrix::from_fn(9, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let gb = DMatrix::from_fn(9, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sw = symmetrize(&(&gw * gw.transpose()));
        let sb = symmetrize(&(&gb * gb.transpose()));
        let r = remove_null_space(&sw, &sb).unwrap();
        assert_eq!(r.effective_dim, 7);
        let v = random_orthonormal(&mut rng, 7, 3);
        let reduced = trace_ratio(&v, &r.between, &r.total).unwrap();
        let e = &r.basis * &v;
        let full = trace_ratio(&e, &sb, &(&sw + &sb)).unwrap();
        assert!((reduced - full).abs() <= 1e-10);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn scatters_are_psd_and_ratio_bounded(seed in 0u64..10_000, n in 3usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bank = random_bank(&mut rng, n);
            let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
            let w = gating_weights(&bank, &GatingParams::random(3, n, &mut rng)).unwrap();
            let s = scatter_matrices(&bank, &labels, &w).unwrap();
            for m in [&s.within, &s.between] {
                proptest::prop_assert_eq!(m, &m.transpose());
                let eig = sym_eig(m).unwrap();
                proptest::prop_assert!(eig.values[n - 1] >= -1e-10 * eig.values[0].abs().max(1.0));
            }
            let e = random_orthonormal(&mut rng, n, 2);
            let j = objective_value(&e, &s).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&j));
        }
    }
}
