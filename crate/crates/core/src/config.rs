use crate::error::{Error, Result};
use crate::kernels::KernelId;
use crate::set_model::{EncodingConfig, DEFAULT_ALPHA, DEFAULT_SUBSPACE_DIM};

/// Everything needed to encode a gallery and train a model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Subspace dimension q of the Grassmann descriptor.
    pub subspace_dim: usize,
    /// Covariance ridge divisor.
    pub alpha: f64,
    /// Target dimension d_w of the learned transform.
    pub target_dim: usize,
    /// Gating learning rate.
    pub gamma: f64,
    /// Outer (alternating) iterations B.
    pub outer_iters: usize,
    /// Trace-ratio iterations R per outer iteration.
    pub itr_iters: usize,
    /// Convergence tolerance shared by both loops.
    pub eps: f64,
    pub seed: u64,
    pub normalize_kernels: bool,
    /// Enabled descriptors, in kernel order.
    pub descriptors: Vec<KernelId>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            subspace_dim: DEFAULT_SUBSPACE_DIM,
            alpha: DEFAULT_ALPHA,
            target_dim: 25,
            gamma: 1e-4,
            outer_iters: 20,
            itr_iters: 30,
            eps: 1e-5,
            seed: 0,
            normalize_kernels: false,
            descriptors: KernelId::ALL.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn encoding(&self) -> EncodingConfig {
        EncodingConfig {
            alpha: self.alpha,
            subspace_dim: self.subspace_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadConfig(m.to_string()));
        if self.subspace_dim == 0 {
            return bad("subspace dimension must be at least 1");
        }
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if self.target_dim == 0 {
            return bad("target dimension must be at least 1");
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad("gamma must be a finite non-negative number");
        }
        if self.outer_iters == 0 || self.itr_iters == 0 {
            return bad("iteration counts must be at least 1");
        }
        if !(self.eps >= 0.0) {
            return bad("eps must be non-negative");
        }
        if self.descriptors.is_empty() {
            return bad("at least one descriptor must be enabled");
        }
        let mut seen = self.descriptors.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.descriptors.len() {
            return bad("descriptor list has duplicates");
        }
        Ok(())
    }

    /// Parses a comma-separated descriptor list such as `cov,subspace,gauss`.
    pub fn parse_descriptors(list: &str) -> Result<Vec<KernelId>> {
        list.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                KernelId::from_descriptor_name(s)
                    .ok_or_else(|| Error::BadConfig(format!("unknown descriptor `{}`", s.trim())))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.alpha, 1e3);
        assert_eq!(cfg.gamma, 1e-4);
    }

    #[test]
    fn descriptor_parsing() {
        assert_eq!(
            TrainConfig::parse_descriptors("gauss, cov").unwrap(),
            vec![KernelId::GaussianEmbedded, KernelId::LogEuclidean]
        );
        assert!(TrainConfig::parse_descriptors("cov,bogus").is_err());
        let cfg = TrainConfig {
            descriptors: vec![],
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
