//! Symmetric and SPD matrix primitives.
//!
//! Everything downstream (the matrix logarithm behind the log-Euclidean
//! kernel, subspace extraction, null-space removal and the trace-ratio
//! iterations) goes through [`sym_eig`], which fixes eigenvalue order and
//! eigenvector signs so that repeated runs produce bit-identical output.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues at or below `SPD_TOL * lambda_max` fail the SPD check.
pub const SPD_TOL: f64 = 1e-10;
/// Eigenvalues at or below `LOG_FLOOR * lambda_max` are rejected by [`spd_log`].
pub const LOG_FLOOR: f64 = 1e-12;
/// Ridge added to a (near) zero-trace matrix by [`regularize_spd`].
pub const EPS_FLOOR: f64 = 1e-8;

/// A real symmetric matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

/// A symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

/// Eigen-decomposition of a symmetric matrix, values sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub values: DVector<f64>,
    /// Column `i` pairs with `values[i]`.
    pub vectors: DMatrix<f64>,
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax();
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in (j + 1)..m.nrows() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NonSymmetric { asymmetry: worst });
    }
    Ok(())
}

/// Returns `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

impl SymMatrix {
    /// Validates symmetry and finiteness, then exactly symmetrizes the entries.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_finite(&m)?;
        check_symmetric(&m)?;
        Ok(SymMatrix(symmetrize(&m)))
    }

    pub(crate) fn new_unchecked(m: DMatrix<f64>) -> Self {
        SymMatrix(m)
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn eig(&self) -> EigenPair {
        eig_sorted(&self.0)
    }
}

impl SpdMatrix {
    /// Validates symmetry and that every eigenvalue exceeds `SPD_TOL * lambda_max`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let sym = SymMatrix::new(m)?;
        Self::try_from_sym(sym)
    }

    pub fn try_from_sym(sym: SymMatrix) -> Result<Self> {
        if sym.dim() == 0 {
            return Err(Error::BadDimension("empty matrix".into()));
        }
        let eig = sym.eig();
        let max = eig.values[0];
        let min = eig.values[eig.values.len() - 1];
        if max <= 0.0 || min <= SPD_TOL * max {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        Ok(SpdMatrix(sym.0))
    }

    pub(crate) fn new_unchecked(m: DMatrix<f64>) -> Self {
        SpdMatrix(m)
    }

    pub fn identity(dim: usize) -> Self {
        SpdMatrix(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn as_sym(&self) -> SymMatrix {
        SymMatrix(self.0.clone())
    }
}

/// Flips each column so that its largest-magnitude entry is positive
/// (first such entry on ties).
pub(crate) fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

fn eig_sorted(m: &DMatrix<f64>) -> EigenPair {
    let n = m.nrows();
    let dec = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep the solver's order
    order.sort_by(|&a, &b| dec.eigenvalues[b].total_cmp(&dec.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| dec.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &dec.eigenvectors.column(src));
    }
    fix_signs(&mut vectors);
    EigenPair { values, vectors }
}

/// Symmetric eigen-decomposition with descending eigenvalues and the
/// deterministic sign convention of [`EigenPair`].
pub fn sym_eig(m: &DMatrix<f64>) -> Result<EigenPair> {
    check_finite(m)?;
    check_symmetric(m)?;
    if m.nrows() == 0 {
        return Err(Error::BadDimension("empty matrix".into()));
    }
    Ok(eig_sorted(&symmetrize(m)))
}

/// Applies `f` to the spectrum: `V diag(f(lambda)) V^T`.
pub(crate) fn spectral_map(eig: &EigenPair, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let mapped = eig.values.map(f);
    let scaled = &eig.vectors * DMatrix::from_diagonal(&mapped);
    symmetrize(&(scaled * eig.vectors.transpose()))
}

/// Principal matrix logarithm of an SPD matrix.
pub fn spd_log(c: &SpdMatrix) -> Result<SymMatrix> {
    let eig = c.as_sym().eig();
    let max = eig.values[0];
    let min = eig.values[eig.values.len() - 1];
    if max <= 0.0 || min <= LOG_FLOOR * max {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(SymMatrix(spectral_map(&eig, f64::ln)))
}

/// Matrix exponential of a symmetric matrix; the result is SPD.
pub fn sym_exp(s: &SymMatrix) -> SpdMatrix {
    SpdMatrix(spectral_map(&s.eig(), f64::exp))
}

/// `C + tr(C)/alpha * I`, or `C + EPS_FLOOR * I` when `tr(C) <= EPS_FLOOR * d`.
///
/// `alpha = f64::INFINITY` disables the trace ridge.
pub fn regularize_spd(c: &SymMatrix, alpha: f64) -> Result<SpdMatrix> {
    if !(alpha > 0.0) {
        return Err(Error::BadConfig(format!("alpha must be positive, got {alpha}")));
    }
    let d = c.dim();
    let trace = c.trace();
    let ridge = if trace <= EPS_FLOOR * d as f64 {
        EPS_FLOOR
    } else {
        trace / alpha
    };
    let mut out = c.0.clone();
    for i in 0..d {
        out[(i, i)] += ridge;
    }
    SpdMatrix::try_from_sym(SymMatrix(out))
}

/// Frobenius inner product `tr(A B)` of two symmetric matrices.
pub(crate) fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let x = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        symmetrize(&x)
    }

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> SpdMatrix {
        let x = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let m = &x * x.transpose() + DMatrix::identity(d, d) * 0.1;
        SpdMatrix::new(m).unwrap()
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn eig_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let e = sym_eig(&m).unwrap();
        assert_eq!(e.values.as_slice(), &[2.0, 1.0]);
        assert_eq!(e.vectors, DMatrix::identity(2, 2));

        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let e = sym_eig(&m).unwrap();
        assert_eq!(e.values.as_slice(), &[2.0, 1.0]);
        assert_eq!(e.vectors.column(0).as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn eig_identity() {
        let e = sym_eig(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn eig_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [1usize, 2, 5, 17, 60, 200] {
            let m = random_sym(&mut rng, d);
            let e = sym_eig(&m).unwrap();
            let rebuilt = &e.vectors * DMatrix::from_diagonal(&e.values) * e.vectors.transpose();
            assert!(rel_err(&rebuilt, &m) <= 1e-9, "d = {d}");
            let gram = e.vectors.transpose() * &e.vectors;
            assert!((gram - DMatrix::identity(d, d)).amax() <= 1e-10);
            for w in e.values.as_slice().windows(2) {
                assert!(w[0] >= w[1]);
            }
            for col in e.vectors.column_iter() {
                let (imax, _) =
                    col.iter().enumerate().fold(
                        (0, -1.0),
                        |acc, (i, v)| {
                            if v.abs() > acc.1 {
                                (i, v.abs())
                            } else {
                                acc
                            }
                        },
                    );
                assert!(col[imax] > 0.0);
            }
        }
    }

    #[test]
    fn eig_errors() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eig(&m), Err(Error::NonSymmetric { .. })));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(matches!(sym_eig(&m), Err(Error::NonFinite)));
    }

    #[test]
    fn log_identity_is_zero() {
        let l = spd_log(&SpdMatrix::identity(4)).unwrap();
        assert_eq!(l.as_matrix(), &DMatrix::zeros(4, 4));
    }

    #[test]
    fn log_of_diagonal() {
        let e = std::f64::consts::E;
        let c = SpdMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![e, e * e]))).unwrap();
        let l = spd_log(&c).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        assert!((l.as_matrix() - want).amax() < 1e-14);
    }

    #[test]
    fn log_of_scaled_identity() {
        for c in [0.1, 1.0, 10.0] {
            let m = SpdMatrix::new(DMatrix::identity(5, 5) * c).unwrap();
            let l = spd_log(&m).unwrap();
            let want = DMatrix::identity(5, 5) * f64::ln(c);
            assert!((l.as_matrix() - want).amax() <= 1e-12);
        }
    }

    #[test]
    fn log_exp_round_trip_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [2usize, 4, 9] {
            let c = random_spd(&mut rng, d);
            let l = spd_log(&c).unwrap();
            let back = sym_exp(&l);
            assert!(rel_err(back.as_matrix(), c.as_matrix()) <= 1e-8);

            let inv = SpdMatrix::new(c.as_matrix().clone().try_inverse().unwrap()).unwrap();
            let linv = spd_log(&inv).unwrap();
            assert!(rel_err(&(-linv.as_matrix()), l.as_matrix()) <= 1e-8);
        }
    }

    #[test]
    fn log_rejects_singular() {
        let m = SpdMatrix::new_unchecked(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])));
        assert!(matches!(spd_log(&m), Err(Error::NotPositiveDefinite { .. })));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(SpdMatrix::new(m), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn regularize_examples() {
        let r = regularize_spd(&SymMatrix::identity(2), 1e3).unwrap();
        assert!((r.as_matrix() - DMatrix::identity(2, 2) * 1.002).amax() < 1e-15);

        let r = regularize_spd(&SymMatrix::zeros(2), 1e3).unwrap();
        assert_eq!(r.as_matrix(), &(DMatrix::identity(2, 2) * 1e-8));

        let ones = SymMatrix::new(DMatrix::from_element(2, 2, 1.0)).unwrap();
        let r = regularize_spd(&ones, 1e3).unwrap();
        let want = DMatrix::from_element(2, 2, 1.0) + DMatrix::identity(2, 2) * 0.002;
        assert!((r.as_matrix() - want).amax() < 1e-15);
        let min = sym_eig(r.as_matrix()).unwrap().values[1];
        assert!((min - 0.002).abs() < 1e-12);
    }

    #[test]
    fn regularize_rejects_bad_alpha() {
        assert!(matches!(
            regularize_spd(&SymMatrix::identity(2), 0.0),
            Err(Error::BadConfig(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn regularized_psd_is_spd(seed in 0u64..500, d in 1usize..8, rank in 0usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rank = rank.min(d);
            let g = DMatrix::from_fn(d, rank, |_, _| rng.random_range(-3.0..3.0));
            let c = SymMatrix::new(symmetrize(&(&g * g.transpose()))).unwrap();
            proptest::prop_assert!(regularize_spd(&c, 1e3).is_ok());
        }
    }
}
