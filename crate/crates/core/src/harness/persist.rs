//! Model directory format.
//!
//! `model.meta` is a `key=value` text file holding the format version, the
//! configuration and a SHA-256 checksum of every other file. Arrays are
//! stored one per `.bin` file: a 16-byte header (`b"SFAR"`, rank, rows,
//! cols as little-endian `u32`) followed by row-major little-endian `f64`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::gating::{GatingParams, GatingWeights};
use crate::kernels::{KernelBank, KernelId};
use crate::model::ModelState;
use crate::set_model::{DescriptorTriple, GaussianDescriptor, GrassmannPoint};
use crate::spd::SpdMatrix;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"SFAR";
const META_FILE: &str = "model.meta";
const GALLERY_FILE: &str = "gallery.tsv";

/// Encodes a matrix with the binary array header.
pub fn encode_array(m: &DMatrix<f64>, rank: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&rank.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for row in m.row_iter() {
        for v in row.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Decodes a binary array file.
pub fn decode_array(bytes: &[u8], name: &str) -> Result<DMatrix<f64>> {
    let bad = |m: &str| Error::InvalidModel(format!("{name}: {m}"));
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("missing array header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (rank, rows, cols) = (word(4), word(8), word(12));
    if !(1..=2).contains(&rank) || (rank == 1 && cols != 1) {
        return Err(bad("unsupported rank"));
    }
    if bytes.len() != 16 + 8 * rows * cols {
        return Err(bad("payload length does not match header"));
    }
    let values: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn stack(blocks: impl Iterator<Item = DMatrix<f64>>, rows: usize, cols: usize, count: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows * count, cols);
    for (b, m) in blocks.enumerate() {
        out.view_mut((b * rows, 0), (rows, cols)).copy_from(&m);
    }
    out
}

fn unstack(m: &DMatrix<f64>, rows: usize, count: usize, name: &str) -> Result<Vec<DMatrix<f64>>> {
    if m.nrows() != rows * count {
        return Err(Error::InvalidModel(format!(
            "{name}: expected {} rows, found {}",
            rows * count,
            m.nrows()
        )));
    }
    Ok((0..count).map(|b| m.rows(b * rows, rows).into_owned()).collect())
}

fn rows_to_matrix(rows: &[DVector<f64>], width: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j])
}

/// Writes `model` into `dir`, creating it if needed.
pub fn save_model(model: &ModelState, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = model.n_train();
    let d = model.gallery[0].cov.dim();
    let q = model.gallery[0].subspace.subspace_dim();
    let nq = model.bank.n_kernels();

    let mut arrays: Vec<(String, DMatrix<f64>, u32)> = vec![
        ("transform".into(), model.transform.clone(), 2),
        ("gating_deltas".into(), rows_to_matrix(&model.gating.deltas, n), 2),
        (
            "gating_rhos".into(),
            DMatrix::from_column_slice(nq, 1, &model.gating.rhos),
            1,
        ),
        ("train_weights".into(), model.train_weights.0.clone(), 2),
        (
            "kernel_scales".into(),
            DMatrix::from_column_slice(nq, 1, &model.bank.scales),
            1,
        ),
        (
            "objective_trace".into(),
            DMatrix::from_column_slice(model.objective_trace.len(), 1, &model.objective_trace),
            1,
        ),
        (
            "gallery_cov".into(),
            stack(model.gallery.iter().map(|t| t.cov.as_matrix().clone()), d, d, n),
            2,
        ),
        (
            "gallery_basis".into(),
            stack(model.gallery.iter().map(|t| t.subspace.basis.clone()), d, q, n),
            2,
        ),
        (
            "gallery_mean".into(),
            rows_to_matrix(
                &model.gallery.iter().map(|t| t.gauss.mean.clone()).collect::<Vec<_>>(),
                d,
            ),
            2,
        ),
        (
            "gallery_embedding".into(),
            stack(
                model.gallery.iter().map(|t| t.gauss.embedding.as_matrix().clone()),
                d + 1,
                d + 1,
                n,
            ),
            2,
        ),
    ];
    for (id, k) in model.bank.ids.iter().zip(&model.bank.grams) {
        arrays.push((format!("gram_{}", id.descriptor_name()), k.clone(), 2));
    }

    let mut checksums = BTreeMap::new();
    for (name, m, rank) in &arrays {
        let file = format!("{name}.bin");
        let bytes = encode_array(m, *rank);
        checksums.insert(file.clone(), sha256_hex(&bytes));
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }

    let mut gallery = String::new();
    for t in &model.gallery {
        if t.set_id.contains(['\t', '\n']) || t.label.contains(['\t', '\n']) {
            return Err(Error::BadConfig(format!(
                "set `{}` has a tab or newline in its id or label",
                t.set_id
            )));
        }
        let _ = writeln!(gallery, "{}\t{}", t.set_id, t.label);
    }
    checksums.insert(GALLERY_FILE.to_string(), sha256_hex(gallery.as_bytes()));
    let gpath = dir.join(GALLERY_FILE);
    fs::write(&gpath, gallery).map_err(|e| Error::io(&gpath, e))?;

    let c = &model.config;
    let mut meta = String::new();
    let _ = writeln!(meta, "format_version={FORMAT_VERSION}");
    let _ = writeln!(meta, "n_train={n}");
    let _ = writeln!(meta, "feature_dim={d}");
    let _ = writeln!(meta, "subspace_dim={}", c.subspace_dim);
    let _ = writeln!(meta, "alpha={:?}", c.alpha);
    let _ = writeln!(meta, "target_dim={}", c.target_dim);
    let _ = writeln!(meta, "gamma={:?}", c.gamma);
    let _ = writeln!(meta, "outer_iters={}", c.outer_iters);
    let _ = writeln!(meta, "itr_iters={}", c.itr_iters);
    let _ = writeln!(meta, "eps={:?}", c.eps);
    let _ = writeln!(meta, "seed={}", c.seed);
    let _ = writeln!(meta, "normalize_kernels={}", c.normalize_kernels);
    let names: Vec<&str> = c.descriptors.iter().map(|id| id.descriptor_name()).collect();
    let _ = writeln!(meta, "descriptors={}", names.join(","));
    for (file, sum) in &checksums {
        let _ = writeln!(meta, "checksum.{file}={sum}");
    }
    let mpath = dir.join(META_FILE);
    fs::write(&mpath, meta).map_err(|e| Error::io(&mpath, e))
}

struct Meta(BTreeMap<String, String>);

impl Meta {
    fn get(&self, key: &str) -> Result<&str> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::InvalidModel(format!("{META_FILE} lacks `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::InvalidModel(format!("{META_FILE}: bad value for `{key}`")))
    }
}

fn read_checked(dir: &Path, file: &str, meta: &Meta) -> Result<Vec<u8>> {
    let path = dir.join(file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if sha256_hex(&bytes) != meta.get(&format!("checksum.{file}"))? {
        return Err(Error::ChecksumMismatch(file.to_string()));
    }
    Ok(bytes)
}

fn read_array(dir: &Path, name: &str, meta: &Meta) -> Result<DMatrix<f64>> {
    let file = format!("{name}.bin");
    decode_array(&read_checked(dir, &file, meta)?, &file)
}

fn column(m: DMatrix<f64>) -> Vec<f64> {
    m.as_slice().to_vec()
}

/// Reads a model written by [`save_model`].
pub fn load_model(dir: &Path) -> Result<ModelState> {
    let mpath = dir.join(META_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let meta = Meta(
        text.lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect(),
    );
    let version = meta.get("format_version")?;
    if version.parse::<u32>().ok() != Some(FORMAT_VERSION) {
        return Err(Error::FormatVersionMismatch {
            found: version.to_string(),
            expected: FORMAT_VERSION,
        });
    }

    let descriptors = TrainConfig::parse_descriptors(meta.get("descriptors")?)?;
    let config = TrainConfig {
        subspace_dim: meta.parse("subspace_dim")?,
        alpha: meta.parse("alpha")?,
        target_dim: meta.parse("target_dim")?,
        gamma: meta.parse("gamma")?,
        outer_iters: meta.parse("outer_iters")?,
        itr_iters: meta.parse("itr_iters")?,
        eps: meta.parse("eps")?,
        seed: meta.parse("seed")?,
        normalize_kernels: meta.parse("normalize_kernels")?,
        descriptors,
    };
    let n: usize = meta.parse("n_train")?;
    let d: usize = meta.parse("feature_dim")?;

    let gallery_text = String::from_utf8(read_checked(dir, GALLERY_FILE, &meta)?)
        .map_err(|_| Error::InvalidModel(format!("{GALLERY_FILE} is not UTF-8")))?;
    let ids: Vec<(String, String)> = gallery_text
        .lines()
        .map(|l| {
            l.split_once('\t')
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(|| Error::InvalidModel(format!("{GALLERY_FILE}: malformed line")))
        })
        .collect::<Result<_>>()?;
    if ids.len() != n {
        return Err(Error::InvalidModel(format!(
            "{GALLERY_FILE} lists {} sets, expected {n}",
            ids.len()
        )));
    }

    let covs = unstack(&read_array(dir, "gallery_cov", &meta)?, d, n, "gallery_cov")?;
    let bases = unstack(&read_array(dir, "gallery_basis", &meta)?, d, n, "gallery_basis")?;
    let embeddings = unstack(
        &read_array(dir, "gallery_embedding", &meta)?,
        d + 1,
        n,
        "gallery_embedding",
    )?;
    let means = read_array(dir, "gallery_mean", &meta)?;
    if means.shape() != (n, d) {
        return Err(Error::InvalidModel("gallery_mean has the wrong shape".into()));
    }
    let gallery = ids
        .into_iter()
        .zip(covs.into_iter().zip(bases).zip(embeddings))
        .enumerate()
        .map(|(i, ((set_id, label), ((cov, basis), emb)))| {
            let cov = SpdMatrix::new_unchecked(cov);
            DescriptorTriple {
                gauss: GaussianDescriptor {
                    mean: means.row(i).transpose(),
                    covariance: cov.clone(),
                    embedding: SpdMatrix::new_unchecked(emb),
                },
                cov,
                subspace: GrassmannPoint { basis },
                label,
                set_id,
            }
        })
        .collect();

    let grams = config
        .descriptors
        .iter()
        .map(|id: &KernelId| read_array(dir, &format!("gram_{}", id.descriptor_name()), &meta))
        .collect::<Result<Vec<_>>>()?;
    let scales = column(read_array(dir, "kernel_scales", &meta)?);
    let nq = grams.len();
    if scales.len() != nq {
        return Err(Error::InvalidModel(
            "kernel_scales length differs from kernel count".into(),
        ));
    }
    let bank = KernelBank {
        ids: config.descriptors.clone(),
        grams,
        scales,
        normalized: vec![config.normalize_kernels; nq],
    };

    let deltas_m = read_array(dir, "gating_deltas", &meta)?;
    if deltas_m.shape() != (nq, n) {
        return Err(Error::InvalidModel("gating_deltas has the wrong shape".into()));
    }
    let gating = GatingParams {
        deltas: deltas_m.row_iter().map(|r| r.transpose()).collect(),
        rhos: column(read_array(dir, "gating_rhos", &meta)?),
    };
    let train_weights = GatingWeights(read_array(dir, "train_weights", &meta)?);
    let transform = read_array(dir, "transform", &meta)?;
    let objective_trace = column(read_array(dir, "objective_trace", &meta)?);

    ModelState::from_parts(config, gallery, bank, transform, gating, train_weights, objective_trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn array_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -0.0, f64::MIN_POSITIVE, 1.0 / 3.0, 1e300, -7.5]);
        let bytes = encode_array(&m, 2);
        assert_eq!(bytes.len(), 16 + 48);
        assert_eq!(&bytes[..4], b"SFAR");
        // row-major: second value is -0.0
        assert_eq!(&bytes[24..32], &(-0.0f64).to_le_bytes());
        let back = decode_array(&bytes, "x").unwrap();
        assert_eq!(back, m);
        assert!(decode_array(&bytes[..20], "x").is_err());
    }
}
