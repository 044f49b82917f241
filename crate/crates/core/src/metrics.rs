//! Classification accuracy, retrieval metrics and training cost.

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::{Real, Tensor};

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
pub fn top1_accuracy<F: Real>(logits: &Tensor<F>, labels: &[usize]) -> Result<f64> {
    if logits.ndim() != 2 {
        return Err(Error::shape("top1_accuracy", format!("expected n×C, got {:?}", logits.shape())));
    }
    let n = logits.rows();
    if n == 0 {
        return Err(Error::contract("top-1 accuracy of zero samples"));
    }
    if labels.len() != n {
        return Err(Error::shape("top1_accuracy", format!("{n} rows but {} labels", labels.len())));
    }
    let hits = (0..n).filter(|&i| kernels::argmax(logits.row(i)) == labels[i]).count();
    Ok(hits as f64 / n as f64)
}

/// `forward_flops × epochs × train_size`, exact.
pub fn trcost(forward_flops: u64, epochs: u64, train_size: u64) -> u128 {
    forward_flops as u128 * epochs as u128 * train_size as u128
}

/// Probe and gallery embeddings with identities and optional camera tags.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalSet {
    dim: usize,
    probe: Vec<f64>,
    probe_ids: Vec<u64>,
    gallery: Vec<f64>,
    gallery_ids: Vec<u64>,
    cameras: Option<(Vec<u32>, Vec<u32>)>,
}

impl RetrievalSet {
    /// `probe` and `gallery` are row-major with `dim` columns.
    pub fn new(dim: usize, probe: Vec<f64>, probe_ids: Vec<u64>, gallery: Vec<f64>, gallery_ids: Vec<u64>) -> Result<Self> {
        if dim == 0 || probe.len() != dim * probe_ids.len() || gallery.len() != dim * gallery_ids.len() {
            return Err(Error::shape(
                "retrieval",
                format!(
                    "dim {dim}: {} probe values for {} ids, {} gallery values for {} ids",
                    probe.len(),
                    probe_ids.len(),
                    gallery.len(),
                    gallery_ids.len()
                ),
            ));
        }
        if probe_ids.is_empty() {
            return Err(Error::contract("retrieval set has no probes"));
        }
        Ok(Self {
            dim,
            probe,
            probe_ids,
            gallery,
            gallery_ids,
            cameras: None,
        })
    }

    /// Attaches camera tags; gallery items sharing both id and camera with a
    /// probe are then skipped when ranking that probe.
    pub fn with_cameras(mut self, probe: Vec<u32>, gallery: Vec<u32>) -> Result<Self> {
        if probe.len() != self.probe_ids.len() || gallery.len() != self.gallery_ids.len() {
            return Err(Error::shape("retrieval", "camera tags do not match sample counts"));
        }
        self.cameras = Some((probe, gallery));
        Ok(self)
    }

    pub fn probes(&self) -> usize {
        self.probe_ids.len()
    }

    /// Truth-match flags of the gallery, nearest first, for probe `p`.
    /// Equal distances keep gallery order.
    fn ranked_matches(&self, p: usize, exclude_same_camera: bool) -> Vec<bool> {
        let q = &self.probe[p * self.dim..(p + 1) * self.dim];
        let pid = self.probe_ids[p];
        let mut order: Vec<(f64, bool)> = self
            .gallery
            .chunks(self.dim)
            .zip(&self.gallery_ids)
            .enumerate()
            .filter(|&(g, (_, &gid))| match (&self.cameras, exclude_same_camera) {
                (Some((pc, gc)), true) => !(gid == pid && gc[g] == pc[p]),
                _ => true,
            })
            .map(|(_, (row, &gid))| {
                let d2: f64 = row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, gid == pid)
            })
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        order.into_iter().map(|(_, m)| m).collect()
    }

    fn all_ranked(&self, exclude_same_camera: bool) -> Result<Vec<Vec<bool>>> {
        (0..self.probes())
            .map(|p| {
                let r = self.ranked_matches(p, exclude_same_camera);
                if r.iter().any(|&m| m) {
                    Ok(r)
                } else {
                    Err(Error::contract(format!(
                        "probe {p} (id {}) has no truth match in the gallery",
                        self.probe_ids[p]
                    )))
                }
            })
            .collect()
    }
}

/// Rank-k rates (fractions) for each requested `k ≥ 1`.
pub fn cmc(set: &RetrievalSet, ranks: &[usize], exclude_same_camera: bool) -> Result<Vec<f64>> {
    if ranks.contains(&0) {
        return Err(Error::contract("CMC ranks start at 1"));
    }
    let first: Vec<usize> = set
        .all_ranked(exclude_same_camera)?
        .iter()
        .map(|r| r.iter().position(|&m| m).unwrap() + 1)
        .collect();
    let n = first.len() as f64;
    Ok(ranks
        .iter()
        .map(|&k| first.iter().filter(|&&f| f <= k).count() as f64 / n)
        .collect())
}

/// Mean over probes of the average precision at each truth-match rank.
pub fn mean_average_precision(set: &RetrievalSet, exclude_same_camera: bool) -> Result<f64> {
    let ranked = set.all_ranked(exclude_same_camera)?;
    let total: f64 = ranked.iter().map(|r| average_precision(r)).sum();
    Ok(total / ranked.len() as f64)
}

fn average_precision(matches: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &m) in matches.iter().enumerate() {
        if m {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / hits as f64
}
