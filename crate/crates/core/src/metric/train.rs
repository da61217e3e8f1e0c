use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{objective_value, scatter_matrices, solve_trace_ratio, PairCounts};
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::gating::{gated_objective, gating_gradients, gating_step, gating_weights, GatingParams, GatingWeights};
use crate::kernels::KernelBank;

/// Maximum number of step halvings tried before a gating update is skipped.
const MAX_HALVINGS: usize = 30;

/// Result of [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedMetric {
    /// `N x d_w` transform `E`.
    pub transform: DMatrix<f64>,
    pub gating: GatingParams,
    /// Training-set gating weights under the final `gating`.
    pub weights: GatingWeights,
    /// Objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub effective_dim: usize,
    pub converged: bool,
}

/// Gradient-ascent step with backtracking: halves `gamma` until `J` does not decrease.
fn ascend(
    bank: &KernelBank,
    params: &GatingParams,
    e: &DMatrix<f64>,
    labels: &[usize],
    gamma: f64,
) -> Result<GatingParams> {
    let grads = gating_gradients(bank, params, e, labels)?;
    if gamma == 0.0 {
        return gating_step(params, &grads, 0.0);
    }
    let before = gated_objective(bank, params, e, labels)?;
    let mut step = gamma;
    for _ in 0..MAX_HALVINGS {
        let next = gating_step(params, &grads, step)?;
        let after = gated_objective(bank, &next, e, labels)?;
        if after >= before - 1e-15 {
            return Ok(next);
        }
        log::debug!("gating step {step:e} decreased J ({before} -> {after}), halving");
        step *= 0.5;
    }
    Ok(params.clone())
}

/// Alternates trace-ratio solves for `E` with gradient ascent on the gating parameters.
///
/// `labels` are class indices, one per Gram column.
pub fn train(bank: &KernelBank, labels: &[usize], cfg: &TrainConfig) -> Result<TrainedMetric> {
    cfg.validate()?;
    let (nq, n) = (bank.n_kernels(), bank.n_train());
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {n} training sets",
            labels.len()
        )));
    }
    if n < 2 || PairCounts::from_labels(labels).between == 0 {
        return Err(Error::SingleClassGallery);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = GatingParams::random(nq, n, &mut rng);
    let mut trace = Vec::with_capacity(cfg.outer_iters);
    let mut previous_e: Option<DMatrix<f64>> = None;
    let mut transform = DMatrix::zeros(n, 0);
    let mut effective_dim = 0;
    let mut converged = false;

    for iter in 1..=cfg.outer_iters {
        let weights = gating_weights(bank, &params)?;
        let scatter = scatter_matrices(bank, labels, &weights)?;
        let solved = solve_trace_ratio(&scatter, cfg.target_dim, cfg.itr_iters, cfg.eps, &mut rng)?;
        if iter == 1 && solved.projection.ncols() < cfg.target_dim {
            log::warn!(
                "target dimension {} exceeds the effective dimension {}, using {}",
                cfg.target_dim,
                solved.effective_dim,
                solved.projection.ncols()
            );
        }
        let e = solved.transform();
        let j = objective_value(&e, &scatter)?;
        log::debug!("iteration {iter}: J = {j:.6}, d_e = {}", solved.effective_dim);
        trace.push(j);

        let next = ascend(bank, &params, &e, labels, cfg.gamma)?;
        let param_change = next.max_abs_diff(&params);
        let e_change = previous_e
            .as_ref()
            .filter(|p| p.shape() == e.shape())
            .map(|p| (p - &e).amax())
            .unwrap_or(f64::INFINITY);
        params = next;
        effective_dim = solved.effective_dim;
        previous_e = Some(e.clone());
        transform = e;
        if iter > 2 && (param_change < cfg.eps || e_change < cfg.eps) {
            converged = true;
            break;
        }
    }

    let weights = gating_weights(bank, &params)?;
    Ok(TrainedMetric {
        transform,
        gating: params,
        weights,
        objective_trace: trace,
        effective_dim,
        converged,
    })
}
