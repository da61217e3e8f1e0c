//! Softmax gating over kernels, its gradient with respect to the gating
//! parameters, and the gradient-ascent update.
//!
//! For a sample `i` the weight of kernel `q` is
//! `xi_q(i) = softmax_q(delta_q^T K^q[:, i] + rho_q)`. The objective being
//! ascended is `J = H_b / (H_w + H_b)` with `H_s = tr(E^T Y_s E)` for the
//! gated scatter matrices `Y_w`, `Y_b`, evaluated at a fixed transform `E`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::KernelBank;
use crate::metric::PairCounts;

/// Gating parameters: one `N`-vector `delta_q` and one scalar `rho_q` per kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingParams {
    pub deltas: Vec<DVector<f64>>,
    pub rhos: Vec<f64>,
}

/// Per-kernel, per-sample weights, stored `Q x N`; each column sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingWeights(pub DMatrix<f64>);

/// Gradient of `J` with respect to every gating parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingGradient {
    pub deltas: Vec<DVector<f64>>,
    pub rhos: Vec<f64>,
}

impl GatingParams {
    /// All-zero parameters (uniform weights).
    pub fn zeros(n_kernels: usize, n_train: usize) -> Self {
        GatingParams {
            deltas: vec![DVector::zeros(n_train); n_kernels],
            rhos: vec![0.0; n_kernels],
        }
    }

    /// Small random initialization: `delta ~ U(-0.01/N, 0.01/N)`, `rho ~ U(-0.01, 0.01)`.
    pub fn random<R: Rng + ?Sized>(n_kernels: usize, n_train: usize, rng: &mut R) -> Self {
        let bound = 0.01 / n_train as f64;
        let deltas = (0..n_kernels)
            .map(|_| DVector::from_fn(n_train, |_, _| rng.random_range(-bound..=bound)))
            .collect();
        let rhos = (0..n_kernels).map(|_| rng.random_range(-0.01..=0.01)).collect();
        GatingParams { deltas, rhos }
    }

    pub fn n_kernels(&self) -> usize {
        self.rhos.len()
    }

    fn check(&self, bank: &KernelBank) -> Result<()> {
        let (q, n) = (bank.n_kernels(), bank.n_train());
        if self.deltas.len() != q || self.rhos.len() != q || self.deltas.iter().any(|d| d.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "gating has {} deltas / {} rhos, bank has {q} kernels over {n} sets",
                self.deltas.len(),
                self.rhos.len()
            )));
        }
        Ok(())
    }

    /// Largest absolute coordinate change between two parameter sets.
    pub fn max_abs_diff(&self, other: &GatingParams) -> f64 {
        let d = self
            .deltas
            .iter()
            .zip(&other.deltas)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        let r = self
            .rhos
            .iter()
            .zip(&other.rhos)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        d.max(r)
    }
}

impl GatingWeights {
    pub fn n_kernels(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.0.ncols()
    }

    /// Weight of kernel `q` (0-based) on sample `i`.
    pub fn get(&self, q: usize, i: usize) -> f64 {
        self.0[(q, i)]
    }
}

/// Numerically stable softmax.
pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Gating weights of one sample from its kernel columns (one per kernel).
pub fn weights_for_columns(columns: &[DVector<f64>], params: &GatingParams) -> Result<Vec<f64>> {
    if columns.len() != params.n_kernels() {
        return Err(Error::ShapeMismatch(format!(
            "{} kernel columns for {} gating kernels",
            columns.len(),
            params.n_kernels()
        )));
    }
    let scores = columns
        .iter()
        .zip(params.deltas.iter().zip(&params.rhos))
        .map(|(col, (delta, rho))| {
            if col.len() != delta.len() {
                return Err(Error::ShapeMismatch(format!(
                    "kernel column of length {} vs delta of length {}",
                    col.len(),
                    delta.len()
                )));
            }
            Ok(delta.dot(col) + rho)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(softmax(&scores))
}

/// Softmax gating weights for every training sample.
pub fn gating_weights(bank: &KernelBank, params: &GatingParams) -> Result<GatingWeights> {
    params.check(bank)?;
    let (q, n) = (bank.n_kernels(), bank.n_train());
    // scores[k][i] = delta_k^T K^k[:, i] + rho_k
    let scores: Vec<DVector<f64>> = bank
        .grams
        .iter()
        .zip(params.deltas.iter().zip(&params.rhos))
        .map(|(k, (delta, rho))| k.tr_mul(delta).add_scalar(*rho))
        .collect();
    let mut w = DMatrix::zeros(q, n);
    let mut column = vec![0.0; q];
    for i in 0..n {
        for (c, s) in column.iter_mut().zip(&scores) {
            *c = s[i];
        }
        for (r, v) in softmax(&column).into_iter().enumerate() {
            w[(r, i)] = v;
        }
    }
    Ok(GatingWeights(w))
}

/// `E^T K^q` for every kernel: column `i` is the projected kernel column of sample `i`.
pub(crate) fn project_grams(bank: &KernelBank, e: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    bank.grams.iter().map(|k| e.tr_mul(k)).collect()
}

fn squared_dist(p: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    p.column(i)
        .iter()
        .zip(p.column(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Projected scatter traces `(H_w, H_b)` evaluated pair by pair.
pub fn scatter_traces(
    bank: &KernelBank,
    weights: &GatingWeights,
    e: &DMatrix<f64>,
    labels: &[usize],
) -> Result<(f64, f64)> {
    check_shapes(bank, weights, e, labels)?;
    let counts = PairCounts::from_labels(labels);
    if counts.between == 0 {
        return Err(Error::SingleClassGallery);
    }
    let proj = project_grams(bank, e);
    let n = bank.n_train();
    let (mut hw, mut hb) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let v: f64 = proj
                .iter()
                .enumerate()
                .map(|(k, p)| weights.get(k, i) * weights.get(k, j) * squared_dist(p, i, j))
                .sum();
            if labels[i] == labels[j] {
                hw += v;
            } else {
                hb += v;
            }
        }
    }
    Ok((hw / counts.within as f64, hb / counts.between as f64))
}

/// `J = H_b / (H_w + H_b)` at fixed `E`, computed from the gating weights.
pub fn gated_objective(bank: &KernelBank, params: &GatingParams, e: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    let w = gating_weights(bank, params)?;
    let (hw, hb) = scatter_traces(bank, &w, e, labels)?;
    let denom = hw + hb;
    if !(denom > 1e-15) {
        return Err(Error::DegenerateDenominator(denom));
    }
    Ok(hb / denom)
}

fn check_shapes(bank: &KernelBank, weights: &GatingWeights, e: &DMatrix<f64>, labels: &[usize]) -> Result<()> {
    let n = bank.n_train();
    if labels.len() != n || e.nrows() != n || weights.n_samples() != n || weights.n_kernels() != bank.n_kernels() {
        return Err(Error::ShapeMismatch(format!(
            "N = {n}: {} labels, E is {}x{}, weights are {}x{}",
            labels.len(),
            e.nrows(),
            e.ncols(),
            weights.n_kernels(),
            weights.n_samples()
        )));
    }
    Ok(())
}

/// Analytic gradient of `J = H_b / (H_w + H_b)` with respect to every `delta_q` and `rho_q`.
///
/// The derivative of a pair weight `xi_k(i) xi_k(j)` with respect to `delta_q`
/// is `xi_k(i) xi_k(j) [K^q[:, i] (b_qk - xi_q(i)) + K^q[:, j] (b_qk - xi_q(j))]`,
/// with `b_qk` the Kronecker delta. Contracting with the projected squared
/// distances gives per-sample coefficients `g_q(i)`, so that
/// `dH/d delta_q = K^q g_q` and `dH/d rho_q = sum_i g_q(i)`.
pub fn gating_gradients(
    bank: &KernelBank,
    params: &GatingParams,
    e: &DMatrix<f64>,
    labels: &[usize],
) -> Result<GatingGradient> {
    params.check(bank)?;
    let weights = gating_weights(bank, params)?;
    check_shapes(bank, &weights, e, labels)?;
    let counts = PairCounts::from_labels(labels);
    if counts.between == 0 {
        return Err(Error::SingleClassGallery);
    }
    let (nq, n) = (bank.n_kernels(), bank.n_train());
    let proj = project_grams(bank, e);

    // g[s][q][i], s = 0 within, 1 between
    let mut g = [DMatrix::<f64>::zeros(nq, n), DMatrix::<f64>::zeros(nq, n)];
    let (mut hw, mut hb) = (0.0, 0.0);
    let mut c = vec![0.0; nq];
    for i in 0..n {
        for j in 0..n {
            let (slot, norm) = if labels[i] == labels[j] {
                (0, counts.within as f64)
            } else {
                (1, counts.between as f64)
            };
            let mut total = 0.0;
            for (k, p) in proj.iter().enumerate() {
                c[k] = weights.get(k, i) * weights.get(k, j) * squared_dist(p, i, j) / norm;
                total += c[k];
            }
            if slot == 0 {
                hw += total;
            } else {
                hb += total;
            }
            let acc = &mut g[slot];
            for q in 0..nq {
                acc[(q, i)] += c[q] - weights.get(q, i) * total;
                acc[(q, j)] += c[q] - weights.get(q, j) * total;
            }
        }
    }

    let denom = (hw + hb) * (hw + hb);
    if !(denom > 0.0) {
        return Err(Error::DegenerateDenominator(hw + hb));
    }
    let mut deltas = Vec::with_capacity(nq);
    let mut rhos = Vec::with_capacity(nq);
    for q in 0..nq {
        let gw = g[0].row(q).transpose();
        let gb = g[1].row(q).transpose();
        let k = &bank.grams[q];
        let d_hw = k * &gw;
        let d_hb = k * &gb;
        deltas.push((d_hb * hw - d_hw * hb) / denom);
        rhos.push((gb.sum() * hw - gw.sum() * hb) / denom);
    }
    Ok(GatingGradient { deltas, rhos })
}

/// One gradient-ascent step: `theta + gamma * grad`.
pub fn gating_step(params: &GatingParams, grads: &GatingGradient, gamma: f64) -> Result<GatingParams> {
    let finite =
        grads.rhos.iter().all(|v| v.is_finite()) && grads.deltas.iter().all(|d| d.iter().all(|v| v.is_finite()));
    if !finite {
        return Err(Error::NonFiniteGradient);
    }
    if grads.deltas.len() != params.deltas.len() || grads.rhos.len() != params.rhos.len() {
        return Err(Error::ShapeMismatch(
            "gradient and parameters differ in kernel count".into(),
        ));
    }
    let deltas = params
        .deltas
        .iter()
        .zip(&grads.deltas)
        .map(|(d, g)| d + g * gamma)
        .collect();
    let rhos = params
        .rhos
        .iter()
        .zip(&grads.rhos)
        .map(|(r, g)| r + gamma * g)
        .collect();
    Ok(GatingParams { deltas, rhos })
}
