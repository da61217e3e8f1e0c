use std::fs;
use std::path::Path;

use setfusion_core::harness::{generate_synthetic, load_model, save_model, SyntheticSpec, FORMAT_VERSION};
use setfusion_core::{fit, predict, Error, ImageSet, ModelState, TrainConfig};

fn trained() -> (ModelState, Vec<ImageSet>) {
    let sets = generate_synthetic(&SyntheticSpec {
        sets_per_class: 5,
        ..SyntheticSpec::standard()
    })
    .unwrap();
    let (gallery, probes): (Vec<_>, Vec<_>) = sets.into_iter().enumerate().partition(|(i, _)| i % 5 < 3);
    let gallery: Vec<ImageSet> = gallery.into_iter().map(|(_, s)| s).collect();
    let probes: Vec<ImageSet> = probes.into_iter().map(|(_, s)| s).take(5).collect();
    let cfg = TrainConfig {
        subspace_dim: 4,
        outer_iters: 5,
        seed: 3,
        normalize_kernels: true,
        ..TrainConfig::default()
    };
    (fit(&gallery, &cfg).unwrap(), probes)
}

#[test]
fn round_trip_preserves_predictions() {
    let (model, probes) = trained();
    let dir = tempfile::tempdir().unwrap();
    save_model(&model, dir.path()).unwrap();
    let loaded = load_model(dir.path()).unwrap();
    assert_eq!(loaded, model);
    for p in &probes {
        let a = predict(p, &model).unwrap();
        let b = predict(p, &loaded).unwrap();
        assert_eq!(a.label, b.label);
        assert_eq!(a.nearest_index, b.nearest_index);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.distances), bits(&b.distances));
    }
}

#[test]
fn resaving_a_loaded_model_is_byte_identical() {
    let (model, _) = trained();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    save_model(&model, a.path()).unwrap();
    save_model(&load_model(a.path()).unwrap(), b.path()).unwrap();
    for entry in fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

fn saved() -> tempfile::TempDir {
    let (model, _) = trained();
    let dir = tempfile::tempdir().unwrap();
    save_model(&model, dir.path()).unwrap();
    dir
}

fn flip_last_byte(path: &Path) {
    let mut bytes = fs::read(path).unwrap();
    *bytes.last_mut().unwrap() ^= 0x01;
    fs::write(path, bytes).unwrap();
}

#[test]
fn corrupted_array_is_detected() {
    let dir = saved();
    flip_last_byte(&dir.path().join("transform.bin"));
    assert!(matches!(load_model(dir.path()), Err(Error::ChecksumMismatch(_))));
}

#[test]
fn corrupted_gallery_listing_is_detected() {
    let dir = saved();
    let path = dir.path().join("gallery.tsv");
    let text = fs::read_to_string(&path).unwrap().replacen("class0", "class9", 1);
    fs::write(&path, text).unwrap();
    assert!(matches!(load_model(dir.path()), Err(Error::ChecksumMismatch(_))));
}

#[test]
fn version_bump_is_rejected() {
    let dir = saved();
    let path = dir.path().join("model.meta");
    let text = fs::read_to_string(&path).unwrap().replace(
        &format!("format_version={FORMAT_VERSION}"),
        &format!("format_version={}", FORMAT_VERSION + 1),
    );
    fs::write(&path, text).unwrap();
    match load_model(dir.path()) {
        Err(Error::FormatVersionMismatch { found, expected }) => {
            assert_eq!(found, (FORMAT_VERSION + 1).to_string());
            assert_eq!(expected, FORMAT_VERSION);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn missing_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_model(&dir.path().join("absent")), Err(Error::Io { .. })));
}
