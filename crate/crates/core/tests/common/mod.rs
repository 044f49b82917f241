#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srdl::gradcheck::grad_check;
use srdl::model::{self, init_params, ModelSpec, ParameterSet};
use srdl::{Graph, Result, Tensor, Var};

pub const H: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

/// Magnitudes in [0.1, 2] with random signs, so ReLU kinks stay out of reach.
pub fn away_from_zero(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = r.random_range(0.1..2.0);
            if r.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Random probability rows.
pub fn prob_rows(r: &mut ChaCha8Rng, n: usize, c: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * c);
    for _ in 0..n {
        let row: Vec<f64> = (0..c).map(|_| r.random_range(0.01..1.0)).collect();
        let s: f64 = row.iter().sum();
        out.extend(row.iter().map(|v| v / s));
    }
    out
}

/// Reduces a tensor node to a scalar through fixed random weights, so every
/// element receives a distinct upstream gradient.
pub fn contract(g: &mut Graph<f64>, y: Var, r: &mut ChaCha8Rng) -> Result<Var> {
    let w = uniform(r, g.value(y).shape(), -1.0, 1.0);
    let w = g.constant(w);
    let m = g.mul(y, w)?;
    Ok(g.sum(m))
}

pub type Case = fn(&mut ChaCha8Rng) -> Result<f64>;

fn dim(r: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    r.random_range(lo..=hi)
}

pub fn case_matmul(r: &mut ChaCha8Rng) -> Result<f64> {
    let (m, k, n) = (dim(r, 1, 4), dim(r, 1, 5), dim(r, 1, 4));
    let a = uniform(r, &[m, k], -1.0, 1.0);
    let b = uniform(r, &[k, n], -1.0, 1.0);
    let w = uniform(r, &[m, n], -1.0, 1.0);
    grad_check(&[a, b], H, |g, v| {
        let y = g.matmul(v[0], v[1])?;
        let w = g.constant(w.clone());
        let p = g.mul(y, w)?;
        Ok(g.sum(p))
    })
}

pub fn case_add_bias(r: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n) = (dim(r, 1, 5), dim(r, 1, 5));
    let x = uniform(r, &[m, n], -1.0, 1.0);
    let b = uniform(r, &[n], -1.0, 1.0);
    let w = uniform(r, &[m, n], -1.0, 1.0);
    grad_check(&[x, b], H, |g, v| {
        let y = g.add_bias(v[0], v[1])?;
        let w = g.constant(w.clone());
        let p = g.mul(y, w)?;
        Ok(g.sum(p))
    })
}

pub fn case_add_channel_bias(r: &mut ChaCha8Rng) -> Result<f64> {
    let (b, c, h, w) = (dim(r, 1, 2), dim(r, 1, 3), dim(r, 1, 3), dim(r, 1, 3));
    let x = uniform(r, &[b, c, h, w], -1.0, 1.0);
    let bias = uniform(r, &[c], -1.0, 1.0);
    let wt = uniform(r, &[b, c, h, w], -1.0, 1.0);
    grad_check(&[x, bias], H, |g, v| {
        let y = g.add_channel_bias(v[0], v[1])?;
        let w = g.constant(wt.clone());
        let p = g.mul(y, w)?;
        Ok(g.sum(p))
    })
}

pub fn case_relu(r: &mut ChaCha8Rng) -> Result<f64> {
    let shape = [dim(r, 1, 4), dim(r, 1, 5)];
    let x = away_from_zero(r, &shape);
    let w = uniform(r, &shape, -1.0, 1.0);
    grad_check(&[x], H, |g, v| {
        let y = g.relu(v[0]);
        let w = g.constant(w.clone());
        let p = g.mul(y, w)?;
        Ok(g.sum(p))
    })
}

pub fn case_conv2d(r: &mut ChaCha8Rng) -> Result<f64> {
    let (b, cin, cout) = (dim(r, 1, 2), dim(r, 1, 2), dim(r, 1, 3));
    let (h, w) = (dim(r, 3, 5), dim(r, 3, 5));
    let k = dim(r, 1, 3);
    let stride = dim(r, 1, 2);
    let pad = dim(r, 0, 1);
    let x = uniform(r, &[b, cin, h, w], -1.0, 1.0);
    let kern = uniform(r, &[cout, cin, k, k], -1.0, 1.0);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let wt = uniform(r, &[b, cout, oh, ow], -1.0, 1.0);
    grad_check(&[x, kern], H, |g, v| {
        let y = g.conv2d(v[0], v[1], stride, pad)?;
        let w = g.constant(wt.clone());
        let p = g.mul(y, w)?;
        Ok(g.sum(p))
    })
}

pub fn case_global_avg_pool(r: &mut ChaCha8Rng) -> Result<f64> {
    let shape = [dim(r, 1, 2), dim(r, 1, 3), dim(r, 1, 4), dim(r, 1, 4)];
    let x = uniform(r, &shape, -1.0, 1.0);
    let w = uniform(r, &shape[..2], -1.0, 1.0);
    grad_check(&[x], H, |g, v| {
        let y = g.global_avg_pool(v[0])?;
        let w = g.constant(w.clone());
        let p = g.mul(y, w)?;
        Ok(g.sum(p))
    })
}

pub fn case_add_mul(r: &mut ChaCha8Rng) -> Result<f64> {
    let shape = [dim(r, 1, 4), dim(r, 1, 4)];
    let a = uniform(r, &shape, -1.0, 1.0);
    let b = uniform(r, &shape, -1.0, 1.0);
    let c = uniform(r, &shape, -1.0, 1.0);
    let s = r.random_range(-2.0..2.0);
    grad_check(&[a, b, c], H, |g, v| {
        let ab = g.add(v[0], v[1])?;
        let abc = g.mul(ab, v[2])?;
        let sc = g.scale(abc, s);
        Ok(g.sum(sc))
    })
}

pub fn case_cross_entropy(r: &mut ChaCha8Rng) -> Result<f64> {
    let (n, c) = (dim(r, 1, 6), dim(r, 2, 6));
    let z = uniform(r, &[n, c], -3.0, 3.0);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    grad_check(&[z], H, |g, v| g.softmax_cross_entropy(v[0], &labels))
}

pub fn case_kl(r: &mut ChaCha8Rng) -> Result<f64> {
    let (n, c) = (dim(r, 1, 6), dim(r, 2, 6));
    let z = uniform(r, &[n, c], -3.0, 3.0);
    let reference = prob_rows(r, n, c);
    let t = r.random_range(0.5..5.0);
    grad_check(&[z], H, |g, v| g.kl_imitation(v[0], &reference, t))
}

fn objective(
    spec: &ModelSpec,
    params: &ParameterSet<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    reference: &[f64],
    t: f64,
) -> Result<f64> {
    let tensors: Vec<Tensor<f64>> = params.tensors().cloned().collect();
    grad_check(&tensors, H, |g, v| {
        let z = model::forward_logits(spec, g, v, x.clone())?;
        let ce = g.softmax_cross_entropy(z, labels)?;
        let kl = g.kl_imitation(z, reference, t)?;
        let w = g.scale(kl, t * t);
        g.add(ce, w)
    })
}

/// `ce + T²·kl` through a two-layer MLP with randomised weights and biases.
pub fn case_stage2_objective(r: &mut ChaCha8Rng) -> Result<f64> {
    let (d, hdn, c, n) = (dim(r, 2, 5), dim(r, 2, 6), dim(r, 2, 4), dim(r, 2, 8));
    let spec = ModelSpec::mlp(d, vec![hdn], c);
    let base: ParameterSet<f64> = init_params(&spec, r.random())?;
    let flat: Vec<f64> = base.flatten().iter().map(|v| v + r.random_range(-0.3..0.3)).collect();
    let params = base.with_flat(&flat)?;
    let x = uniform(r, &[n, d], -2.0, 2.0);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    let reference = prob_rows(r, n, c);
    let t = r.random_range(1.0..5.0);
    objective(&spec, &params, &x, &labels, &reference, t)
}

/// The same objective through the small CNN.
pub fn case_cnn_objective(r: &mut ChaCha8Rng) -> Result<f64> {
    let spec = ModelSpec {
        arch: model::Architecture::SmallCnn {
            channels: vec![2, 3],
            strides: vec![1, 2],
        },
        input_shape: vec![1, 5, 5],
        classes: 3,
    };
    let n = dim(r, 1, 3);
    let base: ParameterSet<f64> = init_params(&spec, r.random())?;
    let flat: Vec<f64> = base.flatten().iter().map(|v| v + r.random_range(-0.3..0.3)).collect();
    let params = base.with_flat(&flat)?;
    let x = uniform(r, &[n, 1, 5, 5], -1.0, 1.0);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
    let reference = prob_rows(r, n, 3);
    let t = r.random_range(1.0..5.0);
    objective(&spec, &params, &x, &labels, &reference, t)
}

pub fn all_cases() -> Vec<(&'static str, Case)> {
    vec![
        ("matmul", case_matmul),
        ("add_bias", case_add_bias),
        ("add_channel_bias", case_add_channel_bias),
        ("relu", case_relu),
        ("conv2d", case_conv2d),
        ("global_avg_pool", case_global_avg_pool),
        ("add/mul/scale/sum", case_add_mul),
        ("softmax_cross_entropy", case_cross_entropy),
        ("kl_imitation", case_kl),
        ("stage-2 objective (mlp)", case_stage2_objective),
        ("stage-2 objective (cnn)", case_cnn_objective),
    ]
}

/// Reference first-match ranks and average precisions by explicit sorting of
/// all (distance, gallery index) pairs.
pub fn brute_force_retrieval(
    dim: usize,
    probe: &[f64],
    probe_ids: &[u64],
    gallery: &[f64],
    gallery_ids: &[u64],
) -> (Vec<usize>, Vec<f64>) {
    let mut first = Vec::new();
    let mut aps = Vec::new();
    for (p, &pid) in probe_ids.iter().enumerate() {
        let q = &probe[p * dim..(p + 1) * dim];
        let mut all: Vec<(f64, usize)> = (0..gallery_ids.len())
            .map(|gi| {
                let row = &gallery[gi * dim..(gi + 1) * dim];
                let d = q.iter().zip(row).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                (d, gi)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let rel: Vec<bool> = all.iter().map(|&(_, gi)| gallery_ids[gi] == pid).collect();
        first.push(rel.iter().position(|&m| m).unwrap() + 1);
        // area under the step precision-recall curve
        let total = rel.iter().filter(|&&m| m).count() as f64;
        let mut area = 0.0;
        let mut prev_recall = 0.0;
        let mut hits = 0.0;
        for (i, &m) in rel.iter().enumerate() {
            if m {
                hits += 1.0;
                let recall = hits / total;
                area += (recall - prev_recall) * (hits / (i as f64 + 1.0));
                prev_recall = recall;
            }
        }
        aps.push(area);
    }
    (first, aps)
}

/// A random 20-probe / 50-gallery instance in which every probe id appears
/// in the gallery.
pub fn random_retrieval(r: &mut ChaCha8Rng) -> (usize, Vec<f64>, Vec<u64>, Vec<f64>, Vec<u64>) {
    let dim = r.random_range(2..=6);
    let ids = 8u64;
    let gallery_ids: Vec<u64> = (0..50).map(|i| if i < ids { i } else { r.random_range(0..ids) }).collect();
    let probe_ids: Vec<u64> = (0..20).map(|_| r.random_range(0..ids)).collect();
    let gallery = (0..50 * dim).map(|_| r.random_range(-1.0..1.0)).collect();
    let probe = (0..20 * dim).map(|_| r.random_range(-1.0..1.0)).collect();
    (dim, probe, probe_ids, gallery, gallery_ids)
}
