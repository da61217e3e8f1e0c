//! Iterative trace-ratio solver.
//!
//! Each step fixes `lambda` at the current ratio, takes the top `d_w`
//! eigenvectors of `B - lambda T`, and rotates them within their span so that
//! `V^T T V` is diagonal. The ratio sequence is non-decreasing and converges
//! to the global maximum of `tr(V^T B V) / tr(V^T T V)` over orthonormal `V`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{remove_null_space, trace_ratio, ScatterPair};
use crate::error::{Error, Result};
use crate::spd::{fix_signs, sym_eig, symmetrize};

/// Eigenvalues closer than this at the `d_w` cut are reported as a degenerate split.
const EIGEN_GAP_TOL: f64 = 1e-12;

/// Output of [`itr_solve`] on an already-reduced problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ItrResult {
    /// `d_e x d_w`, orthonormal columns.
    pub projection: DMatrix<f64>,
    /// Ratio of the initial guess followed by the ratio after each step.
    pub ratio_history: Vec<f64>,
}

impl ItrResult {
    pub fn final_ratio(&self) -> f64 {
        *self.ratio_history.last().expect("history is never empty")
    }
}

/// Full trace-ratio solution in the original `N`-dimensional space.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRatioResult {
    pub projection: DMatrix<f64>,
    pub null_space_basis: DMatrix<f64>,
    pub ratio_history: Vec<f64>,
    pub effective_dim: usize,
}

impl TraceRatioResult {
    /// `E = A V`.
    pub fn transform(&self) -> DMatrix<f64> {
        &self.null_space_basis * &self.projection
    }
}

/// Random `n x k` matrix with orthonormal columns (QR of a Gaussian matrix).
pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q().columns(0, k).into_owned()
}

fn top_columns(m: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let eig = sym_eig(m)?;
    if k < eig.values.len() && (eig.values[k - 1] - eig.values[k]).abs() <= EIGEN_GAP_TOL * eig.values.amax().max(1.0) {
        log::debug!(
            "degenerate eigen-gap at d_w = {k}: {:e} vs {:e}",
            eig.values[k - 1],
            eig.values[k]
        );
    }
    Ok(eig.vectors.columns(0, k).into_owned())
}

/// Rotates `v` within its span so that `v^T total v` is diagonal (descending).
fn reshape(v: &DMatrix<f64>, total: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inner = symmetrize(&(v.tr_mul(total) * v));
    let rot = sym_eig(&inner)?.vectors;
    let mut out = v * rot;
    fix_signs(&mut out);
    Ok(out)
}

/// Maximizes `tr(V^T B V) / tr(V^T T V)` over `d_e x d_w` orthonormal `V`.
///
/// `total` must be positive definite. Stops after `max_iters` steps or when
/// the ratio changes by less than `eps`.
pub fn itr_solve<R: Rng + ?Sized>(
    between: &DMatrix<f64>,
    total: &DMatrix<f64>,
    target_dim: usize,
    max_iters: usize,
    eps: f64,
    rng: &mut R,
) -> Result<ItrResult> {
    let de = total.nrows();
    if between.shape() != total.shape() || !total.is_square() {
        return Err(Error::ShapeMismatch("between and total scatter differ in shape".into()));
    }
    if target_dim == 0 || target_dim > de {
        return Err(Error::BadDimension(format!(
            "target dimension {target_dim} not in 1..={de}"
        )));
    }
    let mut v = random_orthonormal(rng, de, target_dim);
    let mut lambda = trace_ratio(&v, between, total)?;
    let mut history = vec![lambda];
    for _ in 0..max_iters {
        let diff = symmetrize(&(between - total * lambda));
        let next = reshape(&top_columns(&diff, target_dim)?, total)?;
        let next_lambda = trace_ratio(&next, between, total)?;
        history.push(next_lambda);
        v = next;
        let step = (next_lambda - lambda).abs();
        lambda = next_lambda;
        if step < eps {
            break;
        }
    }
    Ok(ItrResult {
        projection: v,
        ratio_history: history,
    })
}

/// Null-space removal followed by [`itr_solve`]; `target_dim` is clamped to `d_e`.
pub fn solve_trace_ratio<R: Rng + ?Sized>(
    scatter: &ScatterPair,
    target_dim: usize,
    max_iters: usize,
    eps: f64,
    rng: &mut R,
) -> Result<TraceRatioResult> {
    let reduced = remove_null_space(&scatter.within, &scatter.between)?;
    let dw = target_dim.min(reduced.effective_dim);
    if dw < target_dim {
        log::debug!(
            "target dimension {target_dim} exceeds the effective dimension {}, clamping",
            reduced.effective_dim
        );
    }
    let itr = itr_solve(&reduced.between, &reduced.total, dw, max_iters, eps, rng)?;
    Ok(TraceRatioResult {
        projection: itr.projection,
        null_space_basis: reduced.basis,
        ratio_history: itr.ratio_history,
        effective_dim: reduced.effective_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let gw = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let gb = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = symmetrize(&(&gb * gb.transpose()));
        let t = symmetrize(&(&gw * gw.transpose() + &b));
        (b, t)
    }

    #[test]
    fn two_by_two_closed_form() {
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let t = DMatrix::identity(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = itr_solve(&b, &t, 1, 30, 1e-12, &mut rng).unwrap();
        assert_eq!(r.final_ratio(), 3.0);
        assert_eq!(r.projection.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn proportional_scatter_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, t) = random_pair(&mut rng, 5);
        let r = itr_solve(&t, &t, 2, 30, 1e-12, &mut rng).unwrap();
        assert!((r.ratio_history[0] - 1.0).abs() < 1e-14);
        assert!((r.ratio_history[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn history_non_decreasing_and_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [3usize, 6, 10] {
            let (b, t) = random_pair(&mut rng, n);
            let r = itr_solve(&b, &t, 2, 30, 0.0, &mut rng).unwrap();
            for w in r.ratio_history.windows(2) {
                assert!(w[1] >= w[0] - 1e-10, "{:?}", r.ratio_history);
            }
            let g = r.projection.transpose() * &r.projection;
            assert!((g - DMatrix::identity(2, 2)).amax() <= 1e-10);
            assert!((0.0..=1.0).contains(&r.final_ratio()));
        }
    }

    #[test]
    fn beats_random_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (b, t) = random_pair(&mut rng, 6);
        let r = itr_solve(&b, &t, 2, 50, 1e-14, &mut rng).unwrap();
        let best = (0..5_000)
            .map(|_| trace_ratio(&random_orthonormal(&mut rng, 6, 2), &b, &t).unwrap())
            .fold(0.0, f64::max);
        assert!(r.final_ratio() >= best - 1e-6);
    }

    #[test]
    fn beats_ratio_trace_baseline() {
        // generalized-eigen (ratio-trace) solution, orthonormalized, as a baseline
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (b, t) = random_pair(&mut rng, 7);
        let chol = t.clone().cholesky().unwrap();
        let linv = chol.l().try_inverse().unwrap();
        let c = symmetrize(&(&linv * &b * linv.transpose()));
        let top = sym_eig(&c).unwrap().vectors.columns(0, 3).into_owned();
        let w = linv.transpose() * top;
        let baseline = w.qr().q().columns(0, 3).into_owned();
        let base_ratio = trace_ratio(&baseline, &b, &t).unwrap();
        let r = itr_solve(&b, &t, 3, 50, 1e-14, &mut rng).unwrap();
        assert!(r.final_ratio() >= base_ratio - 1e-10);
    }

    #[test]
    fn bad_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (b, t) = random_pair(&mut rng, 4);
        assert!(matches!(
            itr_solve(&b, &t, 0, 5, 0.0, &mut rng),
            Err(Error::BadDimension(_))
        ));
        assert!(matches!(
            itr_solve(&b, &t, 5, 5, 0.0, &mut rng),
            Err(Error::BadDimension(_))
        ));
    }
}
