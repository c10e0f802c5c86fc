//! Benchmark loaders (IDX, CSV), per-class subsampling, normalization and
//! synthetic union-of-subspaces data.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Samples stored as columns of `features` (`d̂ × n`).
#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
    /// Number of distinct classes, 0 when unlabeled.
    pub k: usize,
}

impl DataSet {
    /// Validates that labels cover exactly `0..k` with no empty class.
    pub fn new(features: Matrix, labels: Option<Vec<usize>>) -> Result<Self> {
        let k = match &labels {
            None => 0,
            Some(l) => {
                if l.len() != features.cols() {
                    return Err(Error::Consistency(format!(
                        "{} labels for {} samples",
                        l.len(),
                        features.cols()
                    )));
                }
                let k = l.iter().max().map_or(0, |m| m + 1);
                let mut seen = vec![false; k];
                for &v in l {
                    seen[v] = true;
                }
                if let Some(empty) = seen.iter().position(|s| !s) {
                    return Err(Error::Consistency(format!("class {empty} has no samples")));
                }
                k
            }
        };
        Ok(Self { features, labels, k })
    }

    pub fn unlabeled(features: Matrix) -> Self {
        Self {
            features,
            labels: None,
            k: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.features.cols()
    }

    pub fn dim(&self) -> usize {
        self.features.rows()
    }

    /// Global min-max scaling of all entries into `[0, 1]`.
    ///
    /// A constant matrix maps to zeros.
    pub fn normalize(mut self) -> Self {
        let data = self.features.as_mut_slice();
        let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for v in data.iter_mut() {
            *v = if span > 0.0 {
                ((*v - lo) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        self
    }
}

// ---------------------------------------------------------------------------
// IDX

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Length(format!("{what}: header truncated at byte {offset}")))
}

/// Decoded IDX image file: `count` images of `rows × cols` bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_u32_be(bytes, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "images: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
        )));
    }
    let count = read_u32_be(bytes, 4, "images")? as usize;
    let rows = read_u32_be(bytes, 8, "images")? as usize;
    let cols = read_u32_be(bytes, 12, "images")? as usize;
    let need = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(Error::Length(format!(
            "images: payload has {} bytes, header promises {need}",
            payload.len()
        )));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: payload[..need].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32_be(bytes, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "labels: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
        )));
    }
    let count = read_u32_be(bytes, 4, "labels")? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::Length(format!(
            "labels: payload has {} bytes, header promises {count}",
            payload.len()
        )));
    }
    Ok(payload[..count].to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.count as u32).to_be_bytes());
    out.extend_from_slice(&(images.rows as u32).to_be_bytes());
    out.extend_from_slice(&(images.cols as u32).to_be_bytes());
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Builds a data set from decoded IDX payloads. Each image becomes one
/// column (pixels in stored order), scaled by 1/255.
pub fn dataset_from_idx(images: &IdxImages, labels: &[u8]) -> Result<DataSet> {
    if images.count != labels.len() {
        return Err(Error::Consistency(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    let dim = images.rows * images.cols;
    let mut features = Matrix::zeros(dim, images.count);
    for s in 0..images.count {
        let img = &images.pixels[s * dim..(s + 1) * dim];
        for (p, &byte) in img.iter().enumerate() {
            features.set(p, s, byte as f64 / 255.0);
        }
    }
    DataSet::new(features, Some(compact_labels(labels)))
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<DataSet> {
    let images = parse_idx_images(&fs::read(images_path)?)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?)?;
    dataset_from_idx(&images, &labels)
}

/// Byte labels that already cover `0..k` keep their value; anything else
/// is numbered by first appearance.
fn compact_labels(raw: &[u8]) -> Vec<usize> {
    let k = raw.iter().max().map_or(0, |&m| m as usize + 1);
    let mut seen = vec![false; k];
    for &b in raw {
        seen[b as usize] = true;
    }
    if seen.iter().all(|&s| s) {
        raw.iter().map(|&b| b as usize).collect()
    } else {
        relabel_first_appearance(raw.iter().copied())
    }
}

/// Numbers distinct values `0, 1, ...` in order of first appearance.
fn relabel_first_appearance<T: std::hash::Hash + Eq + Clone>(raw: impl Iterator<Item = T>) -> Vec<usize> {
    let mut ids: HashMap<T, usize> = HashMap::new();
    raw.map(|v| {
        let next = ids.len();
        *ids.entry(v).or_insert(next)
    })
    .collect()
}

// ---------------------------------------------------------------------------
// CSV

/// Parses comma-separated samples, one per row. A first row with a
/// non-numeric feature cell is treated as a header.
pub fn parse_csv(text: &str, labels_column: Option<usize>) -> Result<DataSet> {
    let mut lines: Vec<(usize, Vec<&str>)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
        .collect();
    if let Some((_, first)) = lines.first() {
        let is_header = first
            .iter()
            .enumerate()
            .any(|(c, cell)| Some(c) != labels_column && cell.parse::<f64>().is_err());
        if is_header {
            lines.remove(0);
        }
    }
    let Some((_, first)) = lines.first() else {
        return Err(Error::Length("csv has no data rows".into()));
    };
    let width = first.len();
    if let Some(c) = labels_column {
        if c >= width {
            return Err(Error::Argument(format!(
                "label column {c} out of range for {width} columns"
            )));
        }
    }
    let dim = width - usize::from(labels_column.is_some());
    let n = lines.len();
    let mut features = Matrix::zeros(dim, n);
    let mut raw_labels = Vec::new();
    for (s, (line_no, cells)) in lines.iter().enumerate() {
        if cells.len() != width {
            return Err(Error::Format(format!(
                "row {line_no} has {} fields, expected {width}",
                cells.len()
            )));
        }
        let mut f = 0;
        for (c, cell) in cells.iter().enumerate() {
            if Some(c) == labels_column {
                raw_labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: *line_no,
                col: c + 1,
                msg: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: *line_no,
                    col: c + 1,
                    msg: format!("`{cell}` is not finite"),
                });
            }
            features.set(f, s, v);
            f += 1;
        }
    }
    let labels = labels_column.map(|_| relabel_first_appearance(raw_labels.into_iter()));
    DataSet::new(features, labels)
}

pub fn load_csv(path: impl AsRef<Path>, labels_column: Option<usize>) -> Result<DataSet> {
    parse_csv(&fs::read_to_string(path)?, labels_column)
}

// ---------------------------------------------------------------------------
// Subsampling

/// Keeps the first `m` samples of every class, preserving original order.
pub fn subsample_per_class(d: &DataSet, m: usize) -> Result<DataSet> {
    let labels = d
        .labels
        .as_ref()
        .ok_or_else(|| Error::Argument("per-class subsampling needs labels".into()))?;
    let mut counts = vec![0usize; d.k];
    for &l in labels {
        counts[l] += 1;
    }
    if let Some((class, &have)) = counts.iter().enumerate().find(|(_, &c)| c < m) {
        return Err(Error::Cardinality(format!(
            "class {class} has {have} samples, need {m}"
        )));
    }
    let mut taken = vec![0usize; d.k];
    let keep: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| {
            taken[l] += 1;
            taken[l] <= m
        })
        .map(|(i, _)| i)
        .collect();
    let features = d.features.select_columns(&keep);
    let new_labels = keep.iter().map(|&i| labels[i]).collect();
    DataSet::new(features, Some(new_labels))
}

// ---------------------------------------------------------------------------
// Synthetic union of subspaces

/// Orthonormal basis (`ambient × sub_dim`) from modified Gram-Schmidt QR of
/// a Gaussian matrix.
pub fn random_orthonormal_basis(ambient: usize, sub_dim: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(sub_dim);
    while cols.len() < sub_dim {
        let mut v: Vec<f64> = (0..ambient).map(|_| StandardNormal.sample(rng)).collect();
        for q in &cols {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (a, b) in v.iter_mut().zip(q) {
                *a -= dot * b;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        // a degenerate draw is discarded and redrawn
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    Matrix::from_fn(ambient, sub_dim, |i, j| cols[j][i])
}

/// Draws `per_cluster` points `B·g + ε` from each basis `B`, cluster by
/// cluster. `g` is standard normal, `ε` isotropic with scale `noise_sigma`.
pub fn sample_from_bases(
    bases: &[Matrix],
    per_cluster: usize,
    noise_sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DataSet> {
    let ambient = bases.first().map_or(0, Matrix::rows);
    if bases.iter().any(|b| b.rows() != ambient) {
        return Err(Error::Argument("bases must share the ambient dimension".into()));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::Argument(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    let n = bases.len() * per_cluster;
    let mut features = Matrix::zeros(ambient, n);
    let mut labels = Vec::with_capacity(n);
    for (c, basis) in bases.iter().enumerate() {
        for p in 0..per_cluster {
            let col = c * per_cluster + p;
            let g: Vec<f64> = (0..basis.cols()).map(|_| StandardNormal.sample(rng)).collect();
            for i in 0..ambient {
                let clean: f64 = basis.row(i).iter().zip(&g).map(|(b, x)| b * x).sum();
                let eps: f64 = StandardNormal.sample(rng);
                features.set(i, col, clean + noise_sigma * eps);
            }
            labels.push(c);
        }
    }
    DataSet::new(features, Some(labels))
}

/// Synthetic data together with the bases it was drawn from.
#[derive(Clone, Debug)]
pub struct SubspaceSample {
    pub data: DataSet,
    pub bases: Vec<Matrix>,
}

pub fn sample_union_of_subspaces(
    k: usize,
    sub_dim: usize,
    ambient_dim: usize,
    per_cluster: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<SubspaceSample> {
    if sub_dim >= ambient_dim {
        return Err(Error::Argument(format!(
            "sub_dim ({sub_dim}) must be smaller than ambient_dim ({ambient_dim})"
        )));
    }
    if sub_dim == 0 || k == 0 {
        return Err(Error::Argument("k and sub_dim must be positive".into()));
    }
    if per_cluster < sub_dim {
        return Err(Error::Argument(format!(
            "per_cluster ({per_cluster}) must be at least sub_dim ({sub_dim})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases: Vec<Matrix> = (0..k)
        .map(|_| random_orthonormal_basis(ambient_dim, sub_dim, &mut rng))
        .collect();
    let data = sample_from_bases(&bases, per_cluster, noise_sigma, &mut rng)?;
    Ok(SubspaceSample { data, bases })
}

pub fn synthesize_subspaces(
    k: usize,
    sub_dim: usize,
    ambient_dim: usize,
    per_cluster: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<DataSet> {
    sample_union_of_subspaces(k, sub_dim, ambient_dim, per_cluster, noise_sigma, seed).map(|s| s.data)
}
