//! Dataset I/O, synthetic data, experiments and model persistence.

pub mod dataset;
pub mod experiment;
pub mod persist;
pub mod synthetic;

pub use dataset::{
    load_dataset, read_manifest, read_set_file, save_dataset, write_set_file, DatasetManifest, ManifestEntry,
};
pub use experiment::{
    make_splits, mean_std, run_ablation, run_dim_sweep, run_experiment, split_seed, AblationRow, ExperimentReport,
    PreparedData, Protocol, Split, SplitResult, SweepRow,
};
pub use persist::{load_model, save_model, FORMAT_VERSION};
pub use synthetic::{generate_synthetic, SyntheticSpec};
