//! Labelled datasets with stable sample ids.
//!
//! Sample ids are assigned once at load or generation time and never change;
//! they are the join key between a dataset and a [`KnowledgeStore`].
//!
//! [`KnowledgeStore`]: crate::knowledge::KnowledgeStore

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Per-feature standardisation statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    ids: Vec<u64>,
    labels: Vec<usize>,
    features: Vec<f32>,
    feature_shape: Vec<usize>,
    classes: usize,
    split: Split,
    normalization: Option<Normalization>,
}

impl Dataset {
    /// `features` holds one row of `product(feature_shape)` values per sample.
    pub fn new(
        ids: Vec<u64>,
        labels: Vec<usize>,
        features: Vec<f32>,
        feature_shape: Vec<usize>,
        classes: usize,
        split: Split,
    ) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyDataset("no samples".into()));
        }
        if feature_shape.is_empty() || feature_shape.contains(&0) {
            return Err(Error::data(None, format!("invalid feature shape {feature_shape:?}")));
        }
        let width: usize = feature_shape.iter().product();
        if labels.len() != ids.len() || features.len() != ids.len() * width {
            return Err(Error::data(
                None,
                format!(
                    "{} ids, {} labels and {} feature values for width {width}",
                    ids.len(),
                    labels.len(),
                    features.len()
                ),
            ));
        }
        if classes < 2 {
            return Err(Error::data(None, format!("need at least 2 classes, got {classes}")));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
            return Err(Error::data(Some(i + 1), format!("label {y} out of range for {classes} classes")));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::data(None, "sample ids are not unique"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(None, "non-finite feature value"));
        }
        Ok(Self {
            ids,
            labels,
            features,
            feature_shape,
            classes,
            split,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_shape(&self) -> &[usize] {
        &self.feature_shape
    }

    pub fn feature_len(&self) -> usize {
        self.feature_shape.iter().product()
    }

    pub fn features(&self, i: usize) -> &[f32] {
        let w = self.feature_len();
        &self.features[i * w..(i + 1) * w]
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    /// True when samples are `[c, h, w]` images.
    pub fn is_image(&self) -> bool {
        self.feature_shape.len() == 3
    }

    /// Gathers samples into a `[batch, feature_shape..]` tensor plus labels.
    pub fn batch<F: Real>(&self, indices: &[usize]) -> (Tensor<F>, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.feature_len());
        for &i in indices {
            data.extend(self.features(i).iter().map(|&v| F::of_f32(v)));
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.feature_shape);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (Tensor::new(shape, data).expect("batch shape"), labels)
    }

    /// Computes per-feature mean/std, standardises in place, and returns the
    /// statistics so other splits can reuse them.
    pub fn standardize(&mut self) -> Normalization {
        let w = self.feature_len();
        let n = self.len() as f64;
        let mut mean = vec![0.0f64; w];
        for row in self.features.chunks(w) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0f64; w];
        for row in self.features.chunks(w) {
            for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v as f64 - m).powi(2);
            }
        }
        let norm = Normalization {
            mean: mean.iter().map(|&m| m as f32).collect(),
            std: var
                .iter()
                .map(|&s| {
                    let sd = (s / n).sqrt();
                    if sd > 1e-12 {
                        sd as f32
                    } else {
                        1.0
                    }
                })
                .collect(),
        };
        self.apply_normalization(&norm).expect("width matches");
        norm
    }

    pub fn apply_normalization(&mut self, norm: &Normalization) -> Result<()> {
        let w = self.feature_len();
        if norm.mean.len() != w || norm.std.len() != w {
            return Err(Error::shape("normalization", format!("{} stats for width {w}", norm.mean.len())));
        }
        for row in self.features.chunks_mut(w) {
            for ((v, m), s) in row.iter_mut().zip(&norm.mean).zip(&norm.std) {
                *v = (*v - m) / s;
            }
        }
        self.normalization = Some(norm.clone());
        Ok(())
    }

    /// SHA-256 over ids, labels, shape and feature bits, as lowercase hex.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.classes as u64).to_le_bytes());
        for &d in &self.feature_shape {
            h.update((d as u64).to_le_bytes());
        }
        for (&id, &y) in self.ids.iter().zip(&self.labels) {
            h.update(id.to_le_bytes());
            h.update((y as u64).to_le_bytes());
        }
        for v in &self.features {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// How to read a CSV file: each row is `label, feature_1, …, feature_d`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct CsvSchema {
    pub has_header: bool,
    /// Class count; inferred as `max(label) + 1` when absent.
    pub classes: Option<usize>,
    /// Per-sample shape; `[d]` when absent.
    pub feature_shape: Option<Vec<usize>>,
    pub standardize: bool,
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema, split: Split) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(e, None))?;
    let mut labels = Vec::new();
    let mut features = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, None))?;
        let row = record.position().map(|p| p.line() as usize);
        if record.len() < 2 {
            return Err(Error::data(row, "expected a label and at least one feature"));
        }
        let w = *width.get_or_insert(record.len() - 1);
        if record.len() - 1 != w {
            return Err(Error::data(row, format!("ragged row: {} features, expected {w}", record.len() - 1)));
        }
        let label: usize = record[0]
            .parse()
            .map_err(|_| Error::data(row, format!("label `{}` is not a class index", &record[0])))?;
        if let Some(c) = schema.classes {
            if label >= c {
                return Err(Error::data(row, format!("label {label} out of range for {c} classes")));
            }
        }
        labels.push(label);
        for cell in record.iter().skip(1) {
            let v: f32 = cell
                .parse()
                .map_err(|_| Error::data(row, format!("non-numeric cell `{cell}`")))?;
            features.push(v);
        }
    }
    let Some(width) = width else {
        return Err(Error::EmptyDataset(format!("{} has no rows", path.display())));
    };
    let shape = schema.feature_shape.clone().unwrap_or_else(|| vec![width]);
    if shape.iter().product::<usize>() != width {
        return Err(Error::data(None, format!("feature shape {shape:?} does not hold {width} columns")));
    }
    let classes = schema
        .classes
        .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1).max(2));
    let ids = (0..labels.len() as u64).collect();
    let mut ds = Dataset::new(ids, labels, features, shape, classes, split)?;
    if schema.standardize {
        ds.standardize();
    }
    Ok(ds)
}

fn csv_error(e: csv::Error, row: Option<usize>) -> Error {
    let row = row.or_else(|| e.position().map(|p| p.line() as usize));
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::data(row, format!("{other:?}")),
    }
}

/// Writes `label, features…` rows without a header. Values use the shortest
/// representation that parses back to the same `f32`.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(e, None))?;
    for i in 0..ds.len() {
        let mut row = vec![ds.labels[i].to_string()];
        row.extend(ds.features(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| csv_error(e, None))?;
    }
    w.flush()?;
    Ok(())
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Integrity(format!("{what}: truncated header")))
}

/// Reads an IDX image file (`u8` pixels, scaled to `[0, 1]`) and its label
/// file. Ids are record indices.
pub fn load_idx_images(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    classes: Option<usize>,
    split: Split,
) -> Result<Dataset> {
    let img = fs::read(images)?;
    let lab = fs::read(labels)?;
    decode_idx(&img, &lab, classes, split)
}

pub fn decode_idx(img: &[u8], lab: &[u8], classes: Option<usize>, split: Split) -> Result<Dataset> {
    let magic = be_u32(img, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "images file magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let magic = be_u32(lab, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "labels file magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let n = be_u32(img, 4, "images")? as usize;
    let rows = be_u32(img, 8, "images")? as usize;
    let cols = be_u32(img, 12, "images")? as usize;
    let n_labels = be_u32(lab, 4, "labels")? as usize;
    if n != n_labels {
        return Err(Error::Integrity(format!("{n} images but {n_labels} labels")));
    }
    let pixels = n * rows * cols;
    if img.len() != 16 + pixels {
        return Err(Error::Integrity(format!(
            "images file holds {} pixel bytes, header promises {pixels}",
            img.len().saturating_sub(16)
        )));
    }
    if lab.len() != 8 + n {
        return Err(Error::Integrity(format!(
            "labels file holds {} bytes, header promises {n}",
            lab.len().saturating_sub(8)
        )));
    }
    let labels: Vec<usize> = lab[8..].iter().map(|&b| b as usize).collect();
    let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1).max(2));
    let features = img[16..].iter().map(|&b| b as f32 / 255.0).collect();
    Dataset::new(
        (0..n as u64).collect(),
        labels,
        features,
        vec![1, rows, cols],
        classes,
        split,
    )
}

/// Encodes images (`u8`, `n × rows × cols`) and labels in IDX format.
pub fn encode_idx(pixels: &[u8], labels: &[u8], rows: usize, cols: usize) -> (Vec<u8>, Vec<u8>) {
    let n = labels.len();
    assert_eq!(pixels.len(), n * rows * cols);
    let mut img = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(pixels);
    let mut lab = Vec::with_capacity(8 + n);
    for v in [IDX_LABELS_MAGIC, n as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend_from_slice(labels);
    (img, lab)
}

/// Isotropic Gaussian clusters around seeded means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianMixture {
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
    /// Standard deviation of each cluster.
    pub spread: f64,
    /// Means are drawn uniformly from `[-mean_range, mean_range]^dim`.
    pub mean_range: f64,
    pub seed: u64,
}

impl Default for GaussianMixture {
    fn default() -> Self {
        Self {
            classes: 10,
            per_class: 500,
            test_per_class: 100,
            dim: 16,
            spread: 1.0,
            mean_range: 1.5,
            seed: 2024,
        }
    }
}

impl GaussianMixture {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("data.classes", "must be at least 2"));
        }
        if self.dim < 2 {
            return Err(Error::config("data.dim", "must be at least 2"));
        }
        if self.per_class == 0 || self.test_per_class == 0 {
            return Err(Error::config("data.per_class", "both splits need samples"));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::config("data.spread", "must be finite and non-negative"));
        }
        if !(self.mean_range > 0.0 && self.mean_range.is_finite()) {
            return Err(Error::config("data.mean_range", "must be positive"));
        }
        Ok(())
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        let mut r = rng::stream(self.seed, "gmm-means", 0);
        let u = Uniform::new_inclusive(-self.mean_range, self.mean_range).unwrap();
        (0..self.classes)
            .map(|_| (0..self.dim).map(|_| u.sample(&mut r)).collect())
            .collect()
    }

    fn split(&self, means: &[Vec<f64>], per_class: usize, split: Split) -> Result<Dataset> {
        let tag = match split {
            Split::Train => "gmm-train",
            Split::Test => "gmm-test",
        };
        let mut r = rng::stream(self.seed, tag, 0);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let n = per_class * self.classes;
        // classes interleaved so that any prefix is roughly balanced
        let mut labels: Vec<usize> = (0..n).map(|i| i % self.classes).collect();
        labels.shuffle(&mut r);
        let mut features = Vec::with_capacity(n * self.dim);
        for &y in &labels {
            for &m in &means[y] {
                features.push((m + self.spread * noise.sample(&mut r)) as f32);
            }
        }
        Dataset::new((0..n as u64).collect(), labels, features, vec![self.dim], self.classes, split)
    }

    pub fn generate(&self) -> Result<(Dataset, Dataset)> {
        self.validate()?;
        let means = self.means();
        Ok((
            self.split(&means, self.per_class, Split::Train)?,
            self.split(&means, self.test_per_class, Split::Test)?,
        ))
    }
}

/// Generates a train/test pair with `per_class / 5` test samples per class.
pub fn synth_gaussian_mixture(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    GaussianMixture {
        classes,
        per_class,
        test_per_class: (per_class / 5).max(1),
        dim,
        spread,
        seed,
        ..GaussianMixture::default()
    }
    .generate()
}
