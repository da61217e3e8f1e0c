//! Gallery/probe split experiments, descriptor ablations and target-dimension sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classifier::predict_columns;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::kernels::{features, gram_from_features, KernelBank, KernelId};
use crate::model::{effective_config, fit_encoded};
use crate::set_model::{encode_all, DescriptorTriple, ImageSet};

/// How galleries and probes are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Protocol {
    pub splits: usize,
    /// Gallery sets drawn per class; the remaining sets of the class are probes.
    pub train_per_class: usize,
    pub parallel: bool,
}

/// Gallery and probe indices of one split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub split: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub train_seconds: f64,
    pub objective_trace: Vec<f64>,
}

/// Mean/std accuracy of one descriptor combination.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub descriptors: Vec<KernelId>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub target_dim: usize,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: TrainConfig,
    pub protocol: Protocol,
    pub splits: Vec<SplitResult>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub ablation: Vec<AblationRow>,
    pub sweep: Vec<SweepRow>,
}

/// Per-split seed derived from the run seed and the split index.
pub fn split_seed(seed: u64, split: usize) -> u64 {
    seed ^ (split as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Draws `protocol.splits` random class-stratified gallery/probe partitions.
pub fn make_splits(labels: &[&str], protocol: &Protocol, seed: u64) -> Result<Vec<Split>> {
    if protocol.splits == 0 || protocol.train_per_class == 0 {
        return Err(Error::BadConfig("splits and train-per-class must be at least 1".into()));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(Error::SingleClassGallery);
    }
    for (label, idx) in &by_class {
        if idx.len() <= protocol.train_per_class {
            return Err(Error::InsufficientSetsPerClass {
                label: label.to_string(),
                available: idx.len(),
                required: protocol.train_per_class + 1,
            });
        }
    }
    Ok((0..protocol.splits)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, s));
            let (mut train, mut test) = (vec![], vec![]);
            for idx in by_class.values() {
                let mut shuffled = idx.clone();
                shuffled.shuffle(&mut rng);
                train.extend_from_slice(&shuffled[..protocol.train_per_class]);
                test.extend_from_slice(&shuffled[protocol.train_per_class..]);
            }
            train.sort_unstable();
            test.sort_unstable();
            Split { train, test }
        })
        .collect())
}

/// Encoded sets plus raw Gram matrices of every kernel over all sets.
pub struct PreparedData {
    pub config: TrainConfig,
    pub triples: Vec<DescriptorTriple>,
    raw: BTreeMap<KernelId, DMatrix<f64>>,
}

impl PreparedData {
    pub fn new(sets: &[ImageSet], cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let config = effective_config(sets, cfg)?;
        let triples = encode_all(sets, &config.encoding())?;
        let raw = KernelId::ALL
            .iter()
            .map(|&id| Ok((id, gram_from_features(&features(&triples, id)?, id)?)))
            .collect::<Result<_>>()?;
        Ok(PreparedData { config, triples, raw })
    }

    pub fn labels(&self) -> Vec<&str> {
        self.triples.iter().map(|t| t.label.as_str()).collect()
    }

    /// Trains on `split.train` and scores `split.test`, returning the accuracy and trace.
    pub fn evaluate(&self, split: &Split, cfg: &TrainConfig) -> Result<(f64, f64, Vec<f64>)> {
        let grams = cfg
            .descriptors
            .iter()
            .map(|id| self.raw[id].select_rows(&split.train).select_columns(&split.train))
            .collect();
        let bank = KernelBank::from_raw_grams(&cfg.descriptors, grams, cfg.normalize_kernels)?;
        let gallery: Vec<DescriptorTriple> = split.train.iter().map(|&i| self.triples[i].clone()).collect();
        let start = Instant::now();
        let model = fit_encoded(gallery, bank, cfg)?;
        let seconds = start.elapsed().as_secs_f64();

        let mut correct = 0usize;
        for &t in &split.test {
            let columns: Vec<DVector<f64>> = cfg
                .descriptors
                .iter()
                .zip(&model.bank.scales)
                .map(|(id, &s)| {
                    let row = &self.raw[id];
                    DVector::from_iterator(split.train.len(), split.train.iter().map(|&j| row[(t, j)] * s))
                })
                .collect();
            if predict_columns(&columns, &model)?.label == self.triples[t].label {
                correct += 1;
            }
        }
        let accuracy = correct as f64 / split.test.len().max(1) as f64;
        Ok((accuracy, seconds, model.objective_trace))
    }

    fn run_splits(&self, splits: &[Split], cfg: &TrainConfig, protocol: &Protocol) -> Result<Vec<SplitResult>> {
        let one = |(s, split): (usize, &Split)| -> Result<SplitResult> {
            let seed = split_seed(cfg.seed, s);
            let split_cfg = TrainConfig { seed, ..cfg.clone() };
            let (accuracy, train_seconds, objective_trace) = self.evaluate(split, &split_cfg)?;
            log::info!("split {s}: accuracy {accuracy:.4}");
            Ok(SplitResult {
                split: s,
                seed,
                accuracy,
                n_train: split.train.len(),
                n_test: split.test.len(),
                train_seconds,
                objective_trace,
            })
        };
        if protocol.parallel {
            splits.par_iter().enumerate().map(one).collect()
        } else {
            splits.iter().enumerate().map(one).collect()
        }
    }
}

fn accuracies(results: &[SplitResult]) -> Vec<f64> {
    results.iter().map(|r| r.accuracy).collect()
}

/// Runs the split protocol with `cfg`.
pub fn run_experiment(sets: &[ImageSet], cfg: &TrainConfig, protocol: &Protocol) -> Result<ExperimentReport> {
    let data = PreparedData::new(sets, cfg)?;
    let splits = make_splits(&data.labels(), protocol, cfg.seed)?;
    let results = data.run_splits(&splits, &data.config, protocol)?;
    let (mean, std) = mean_std(&accuracies(&results));
    Ok(ExperimentReport {
        config: data.config.clone(),
        protocol: *protocol,
        splits: results,
        mean_accuracy: mean,
        std_accuracy: std,
        ablation: vec![],
        sweep: vec![],
    })
}

/// Runs each single descriptor and the combined triple on identical splits.
///
/// The report's main rows are the combined run; `ablation` holds the three
/// single-descriptor rows followed by the combined row.
pub fn run_ablation(sets: &[ImageSet], cfg: &TrainConfig, protocol: &Protocol) -> Result<ExperimentReport> {
    let data = PreparedData::new(sets, cfg)?;
    let splits = make_splits(&data.labels(), protocol, cfg.seed)?;
    let mut rows = Vec::new();
    let mut combined = Vec::new();
    let variants: Vec<Vec<KernelId>> = KernelId::ALL
        .iter()
        .map(|&id| vec![id])
        .chain(std::iter::once(KernelId::ALL.to_vec()))
        .collect();
    for descriptors in variants {
        let variant_cfg = TrainConfig {
            descriptors: descriptors.clone(),
            ..data.config.clone()
        };
        let results = data.run_splits(&splits, &variant_cfg, protocol)?;
        let acc = accuracies(&results);
        let (mean, std) = mean_std(&acc);
        if descriptors.len() == KernelId::ALL.len() {
            combined = results;
        }
        rows.push(AblationRow {
            descriptors,
            accuracies: acc,
            mean,
            std,
        });
    }
    let (mean, std) = mean_std(&accuracies(&combined));
    Ok(ExperimentReport {
        config: TrainConfig {
            descriptors: KernelId::ALL.to_vec(),
            ..data.config.clone()
        },
        protocol: *protocol,
        splits: combined,
        mean_accuracy: mean,
        std_accuracy: std,
        ablation: rows,
        sweep: vec![],
    })
}

/// Repeats the experiment for each target dimension on identical splits.
pub fn run_dim_sweep(
    sets: &[ImageSet],
    cfg: &TrainConfig,
    protocol: &Protocol,
    dims: &[usize],
) -> Result<ExperimentReport> {
    let data = PreparedData::new(sets, cfg)?;
    let splits = make_splits(&data.labels(), protocol, cfg.seed)?;
    let mut sweep = Vec::with_capacity(dims.len());
    let mut last = Vec::new();
    for &dw in dims {
        let dim_cfg = TrainConfig {
            target_dim: dw,
            ..data.config.clone()
        };
        dim_cfg.validate()?;
        let results = data.run_splits(&splits, &dim_cfg, protocol)?;
        let acc = accuracies(&results);
        let (mean, std) = mean_std(&acc);
        sweep.push(SweepRow {
            target_dim: dw,
            accuracies: acc,
            mean,
            std,
        });
        last = results;
    }
    let (mean, std) = mean_std(&accuracies(&last));
    Ok(ExperimentReport {
        config: data.config.clone(),
        protocol: *protocol,
        splits: last,
        mean_accuracy: mean,
        std_accuracy: std,
        ablation: vec![],
        sweep,
    })
}

fn descriptor_list(ids: &[KernelId]) -> String {
    ids.iter().map(|id| id.descriptor_name()).collect::<Vec<_>>().join("+")
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

impl ExperimentReport {
    pub fn split_table(&self) -> String {
        let mut out = String::from("split,seed,accuracy,n_train,n_test,train_seconds,final_objective\n");
        for r in &self.splits {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6},{}",
                r.split,
                r.seed,
                r.accuracy,
                r.n_train,
                r.n_test,
                r.train_seconds,
                r.objective_trace.last().copied().unwrap_or(f64::NAN)
            );
        }
        out
    }

    pub fn trace_table(&self) -> String {
        let mut out = String::from("split,iteration,objective\n");
        for r in &self.splits {
            for (i, j) in r.objective_trace.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", r.split, i + 1, j);
            }
        }
        out
    }

    pub fn ablation_table(&self) -> String {
        let mut out = String::from("descriptors,mean_accuracy,std_accuracy\n");
        for row in &self.ablation {
            let _ = writeln!(out, "{},{},{}", descriptor_list(&row.descriptors), row.mean, row.std);
        }
        out
    }

    pub fn sweep_table(&self) -> String {
        let mut out = String::from("target_dim,mean_accuracy,std_accuracy\n");
        for row in &self.sweep {
            let _ = writeln!(out, "{},{},{}", row.target_dim, row.mean, row.std);
        }
        out
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "descriptors: {}  splits: {}  train/class: {}",
            descriptor_list(&self.config.descriptors),
            self.splits.len(),
            self.protocol.train_per_class
        );
        let _ = writeln!(
            out,
            "accuracy: {:.2}% +/- {:.2}%",
            100.0 * self.mean_accuracy,
            100.0 * self.std_accuracy
        );
        if !self.ablation.is_empty() {
            let _ = writeln!(out, "{:<20} {:>10} {:>8}", "descriptors", "accuracy", "std");
            for row in &self.ablation {
                let _ = writeln!(
                    out,
                    "{:<20} {:>9.2}% {:>7.2}%",
                    descriptor_list(&row.descriptors),
                    100.0 * row.mean,
                    100.0 * row.std
                );
            }
        }
        if !self.sweep.is_empty() {
            let _ = writeln!(out, "{:<10} {:>10} {:>8}", "d_w", "accuracy", "std");
            for row in &self.sweep {
                let _ = writeln!(
                    out,
                    "{:<10} {:>9.2}% {:>7.2}%",
                    row.target_dim,
                    100.0 * row.mean,
                    100.0 * row.std
                );
            }
        }
        out
    }

    /// Writes the split table to `path` and the trace/ablation/sweep tables next to it.
    pub fn write(&self, path: &Path) -> Result<Vec<PathBuf>> {
        let mut written = vec![path.to_path_buf()];
        fs::write(path, self.split_table()).map_err(|e| Error::io(path, e))?;
        let mut extra = vec![("trace", self.trace_table())];
        if !self.ablation.is_empty() {
            extra.push(("ablation", self.ablation_table()));
        }
        if !self.sweep.is_empty() {
            extra.push(("sweep", self.sweep_table()));
        }
        for (suffix, table) in extra {
            let p = sibling(path, suffix);
            fs::write(&p, table).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synthetic::{generate_synthetic, SyntheticSpec};

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            subspace_dim: 3,
            target_dim: 5,
            outer_iters: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn splits_are_disjoint_and_stratified() {
        let labels = ["a", "a", "a", "b", "b", "b", "b"];
        let protocol = Protocol {
            splits: 5,
            train_per_class: 2,
            parallel: false,
        };
        let splits = make_splits(&labels, &protocol, 9).unwrap();
        assert_eq!(splits, make_splits(&labels, &protocol, 9).unwrap());
        for s in &splits {
            assert_eq!(s.train.len(), 4);
            assert_eq!(s.test.len(), 3);
            assert!(s.train.iter().all(|i| !s.test.contains(i)));
        }
        let bad = Protocol {
            train_per_class: 3,
            ..protocol
        };
        assert!(matches!(
            make_splits(&labels, &bad, 9),
            Err(Error::InsufficientSetsPerClass { .. })
        ));
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn single_split_report() {
        let spec = SyntheticSpec {
            classes: 2,
            sets_per_class: 4,
            samples: 20,
            dim: 5,
            ..SyntheticSpec::standard()
        };
        let sets = generate_synthetic(&spec).unwrap();
        let protocol = Protocol {
            splits: 1,
            train_per_class: 2,
            parallel: false,
        };
        let r = run_experiment(&sets, &small_cfg(), &protocol).unwrap();
        assert_eq!(r.splits.len(), 1);
        assert_eq!(
            r.splits[0].objective_trace.len(),
            r.splits[0].objective_trace.len().max(1)
        );
        assert!(!r.splits[0].objective_trace.is_empty());
        assert!((0.0..=1.0).contains(&r.mean_accuracy));

        let dir = tempfile::tempdir().unwrap();
        let files = r.write(&dir.path().join("report.csv")).unwrap();
        assert_eq!(files.len(), 2);
        assert!(fs::read_to_string(&files[1])
            .unwrap()
            .starts_with("split,iteration,objective"));
    }

    #[test]
    fn sweep_shape() {
        let sets = generate_synthetic(&SyntheticSpec {
            samples: 20,
            ..SyntheticSpec::standard()
        })
        .unwrap();
        let protocol = Protocol {
            splits: 2,
            train_per_class: 3,
            parallel: true,
        };
        let r = run_dim_sweep(&sets, &small_cfg(), &protocol, &[5, 10, 25, 50]).unwrap();
        assert_eq!(r.sweep.len(), 4);
        assert!(r.sweep.iter().all(|row| row.accuracies.len() == 2));
        assert_eq!(r.sweep_table().lines().count(), 5);
    }
}
