//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation in execution order. Node `k` only
//! refers to nodes with smaller indices, so a single reverse sweep visits
//! every node after all of its consumers. Values are never mutated once
//! recorded.

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeometry};
use crate::tensor::{Real, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    AddChannelBias(Var, Var),
    Relu(Var),
    Conv2d {
        x: Var,
        kernels: Var,
        geom: ConvGeometry,
    },
    GlobalAvgPool(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    Sum(Var),
    /// Mean over rows of `-log softmax(z)[label]`; caches the softmax.
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<F>,
    },
    /// Mean over rows of `KL(reference ‖ softmax(z / t))`. The reference is a
    /// constant; the softened softmax of the logits is cached.
    KlImitation {
        logits: Var,
        reference: Vec<F>,
        temperature: F,
        probs: Vec<F>,
    },
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    grad: Option<Tensor<F>>,
    requires_grad: bool,
    op: Op<F>,
}

/// Floor applied inside logarithms of the loss functions.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Default)]
pub struct Graph<F = f64> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable input (a parameter).
    pub fn param(&mut self, value: Tensor<F>) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// A constant input; no gradient is computed for it.
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated by the last backward pass, if `v` received one.
    pub fn grad(&self, v: Var) -> Option<&Tensor<F>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<F>> {
        self.nodes[v.0].grad.take()
    }

    fn push(&mut self, value: Tensor<F>, requires_grad: bool, op: Op<F>) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} × {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, rg, Op::MatMul(a, b)))
    }

    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (sx, sb) = (self.value(x).shape(), self.value(b).shape());
        if sx.len() != 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(Error::shape("add_bias", format!("{sx:?} + {sb:?}")));
        }
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(bias.len()) {
            for (o, &bv) in row.iter_mut().zip(&bias) {
                *o += bv;
            }
        }
        let rg = self.needs(&[x, b]);
        Ok(self.push(out, rg, Op::AddBias(x, b)))
    }

    /// Adds `b[c]` to every spatial position of channel `c` of an NCHW tensor.
    pub fn add_channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (sx, sb) = (self.value(x).shape(), self.value(b).shape());
        if sx.len() != 4 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(Error::shape("add_channel_bias", format!("{sx:?} + {sb:?}")));
        }
        let plane = sx[2] * sx[3];
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(x).clone();
        for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let bv = bias[i % bias.len()];
            for o in chunk {
                *o += bv;
            }
        }
        let rg = self.needs(&[x, b]);
        Ok(self.push(out, rg, Op::AddChannelBias(x, b)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > F::zero() { v } else { F::zero() });
        let rg = self.needs(&[x]);
        self.push(out, rg, Op::Relu(x))
    }

    /// Zero-padded cross-correlation of `x[batch×cin×h×w]` with
    /// `kernels[cout×cin×kh×kw]`.
    pub fn conv2d(&mut self, x: Var, kernels: Var, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sk) = (self.value(x).shape(), self.value(kernels).shape());
        if sx.len() != 4 || sk.len() != 4 || sx[1] != sk[1] {
            return Err(Error::shape("conv2d", format!("input {sx:?}, kernels {sk:?}")));
        }
        if stride == 0 {
            return Err(Error::contract("conv2d stride must be at least 1"));
        }
        if sk[2] > sx[2] + 2 * pad || sk[3] > sx[3] + 2 * pad {
            return Err(Error::shape(
                "conv2d",
                format!("kernels {sk:?} exceed input {sx:?} padded by {pad}"),
            ));
        }
        let geom = ConvGeometry {
            batch: sx[0],
            cin: sx[1],
            h: sx[2],
            w: sx[3],
            cout: sk[0],
            kh: sk[2],
            kw: sk[3],
            stride,
            pad,
        };
        let out = kernels::conv2d(self.value(x).data(), self.value(kernels).data(), &geom);
        let shape = vec![geom.batch, geom.cout, geom.out_h(), geom.out_w()];
        let rg = self.needs(&[x, kernels]);
        Ok(self.push(Tensor::new(shape, out)?, rg, Op::Conv2d { x, kernels, geom }))
    }

    /// Spatial mean of an NCHW tensor, giving `batch×c`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let sx = self.value(x).shape();
        if sx.len() != 4 {
            return Err(Error::shape("global_avg_pool", format!("expected NCHW, got {sx:?}")));
        }
        let (n, c, plane) = (sx[0], sx[1], sx[2] * sx[3]);
        let inv = F::one() / F::of(plane as f64);
        let out: Vec<F> = self
            .value(x)
            .data()
            .chunks(plane)
            .map(|ch| ch.iter().copied().sum::<F>() * inv)
            .collect();
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::new(vec![n, c], out)?, rg, Op::GlobalAvgPool(x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, rg, Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, rg, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: F) -> Var {
        let out = self.value(x).map(|v| v * s);
        let rg = self.needs(&[x]);
        self.push(out, rg, Op::Scale(x, s))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum();
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(total), rg, Op::Sum(x))
    }

    /// Mean cross-entropy of `logits[batch×C]` against class indices.
    ///
    /// The per-sample loss is `-max(log p(y), log 1e-12)`. The gradient is the
    /// fused `p - onehot(y)` (scaled by `1/batch`).
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (n, c) = self.logit_dims("softmax_cross_entropy", logits)?;
        if labels.len() != n {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("{n} rows but {} labels", labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::contract(format!("label {bad} out of range for {c} classes")));
        }
        let floor = F::of(LOG_EPS.ln());
        let z = self.value(logits).data();
        let mut probs = vec![F::zero(); n * c];
        let mut total = F::zero();
        for (i, &y) in labels.iter().enumerate() {
            let lp = &mut probs[i * c..(i + 1) * c];
            kernels::log_softmax(&z[i * c..(i + 1) * c], F::one(), lp);
            total += -lp[y].max(floor);
            for v in lp.iter_mut() {
                *v = v.exp();
            }
        }
        let loss = total / F::of(n as f64);
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            rg,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Mean `KL(reference ‖ softmax(logits / temperature))` over rows.
    ///
    /// `reference` is row-major `batch×C` and is treated as a constant. Both
    /// distributions are floored at 1e-12 inside the logarithms. The gradient
    /// with respect to the logits is `(q - r) / temperature` per row.
    pub fn kl_imitation(&mut self, logits: Var, reference: &[F], temperature: F) -> Result<Var> {
        let (n, c) = self.logit_dims("kl_imitation", logits)?;
        if reference.len() != n * c {
            return Err(Error::shape(
                "kl_imitation",
                format!("logits {n}×{c} but {} reference values", reference.len()),
            ));
        }
        if !(temperature > F::zero()) {
            return Err(Error::contract(format!("temperature must be positive, got {temperature}")));
        }
        let floor = F::of(LOG_EPS.ln());
        let eps = F::of(LOG_EPS);
        let z = self.value(logits).data();
        let mut probs = vec![F::zero(); n * c];
        let mut total = F::zero();
        for i in 0..n {
            let lq = &mut probs[i * c..(i + 1) * c];
            kernels::log_softmax(&z[i * c..(i + 1) * c], temperature, lq);
            let r = &reference[i * c..(i + 1) * c];
            for (&rj, &lqj) in r.iter().zip(lq.iter()) {
                if rj > F::zero() {
                    total += rj * (rj.max(eps).ln() - lqj.max(floor));
                }
            }
            for v in lq.iter_mut() {
                *v = v.exp();
            }
        }
        let loss = total / F::of(n as f64);
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            rg,
            Op::KlImitation {
                logits,
                reference: reference.to_vec(),
                temperature,
                probs,
            },
        ))
    }

    fn logit_dims(&self, op: &'static str, logits: Var) -> Result<(usize, usize)> {
        let s = self.value(logits).shape();
        if s.len() != 2 {
            return Err(Error::shape(op, format!("expected batch×classes logits, got {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    /// Back-propagates from a scalar output with upstream gradient 1.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if !self.value(output).is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar output, got shape {:?}",
                self.value(output).shape()
            )));
        }
        self.backward_with(output, Tensor::scalar(F::one()))
    }

    /// Back-propagates an explicit upstream gradient for `output`.
    ///
    /// Gradients from a previous pass are cleared first.
    pub fn backward_with(&mut self, output: Var, seed: Tensor<F>) -> Result<()> {
        if seed.shape() != self.value(output).shape() {
            return Err(Error::shape(
                "backward",
                format!("seed {:?} for output {:?}", seed.shape(), self.value(output).shape()),
            ));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[output.0].grad = Some(seed);
        for idx in (0..=output.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            self.propagate(idx, &g);
            self.nodes[idx].grad = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: Tensor<F>) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => g.add_assign(&delta),
            None => node.grad = Some(delta),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&mut self, idx: usize, g: &Tensor<F>) {
        let mut updates: Vec<(Var, Tensor<F>)> = Vec::with_capacity(2);
        match &self.nodes[idx].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                if self.wants(a) {
                    let da = kernels::matmul_grad_a(g.data(), vb.data(), m, k, n);
                    updates.push((a, Tensor::new(vec![m, k], da).unwrap()));
                }
                if self.wants(b) {
                    let db = kernels::matmul_grad_b(va.data(), g.data(), m, k, n);
                    updates.push((b, Tensor::new(vec![k, n], db).unwrap()));
                }
            }
            &Op::AddBias(x, b) => {
                if self.wants(x) {
                    updates.push((x, g.clone()));
                }
                if self.wants(b) {
                    let cols = g.cols();
                    let mut db = vec![F::zero(); cols];
                    for row in g.data().chunks(cols) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    updates.push((b, Tensor::new(vec![cols], db).unwrap()));
                }
            }
            &Op::AddChannelBias(x, b) => {
                if self.wants(x) {
                    updates.push((x, g.clone()));
                }
                if self.wants(b) {
                    let s = g.shape();
                    let (c, plane) = (s[1], s[2] * s[3]);
                    let mut db = vec![F::zero(); c];
                    for (i, chunk) in g.data().chunks(plane).enumerate() {
                        db[i % c] += chunk.iter().copied().sum::<F>();
                    }
                    updates.push((b, Tensor::new(vec![c], db).unwrap()));
                }
            }
            &Op::Relu(x) => {
                let input = self.value(x);
                let data = g
                    .data()
                    .iter()
                    .zip(input.data())
                    .map(|(&gv, &xv)| if xv > F::zero() { gv } else { F::zero() })
                    .collect();
                updates.push((x, Tensor::new(input.shape().to_vec(), data).unwrap()));
            }
            &Op::Conv2d { x, kernels: k, geom } => {
                let (vx, vk) = (self.value(x), self.value(k));
                if self.wants(x) {
                    let dx = kernels::conv2d_grad_input(g.data(), vk.data(), &geom);
                    updates.push((x, Tensor::new(vx.shape().to_vec(), dx).unwrap()));
                }
                if self.wants(k) {
                    let dk = kernels::conv2d_grad_kernel(vx.data(), g.data(), &geom);
                    updates.push((k, Tensor::new(vk.shape().to_vec(), dk).unwrap()));
                }
            }
            &Op::GlobalAvgPool(x) => {
                let shape = self.value(x).shape().to_vec();
                let plane = shape[2] * shape[3];
                let inv = F::one() / F::of(plane as f64);
                let data = g
                    .data()
                    .iter()
                    .flat_map(|&gv| std::iter::repeat_n(gv * inv, plane))
                    .collect();
                updates.push((x, Tensor::new(shape, data).unwrap()));
            }
            &Op::Add(a, b) => {
                updates.push((a, g.clone()));
                updates.push((b, g.clone()));
            }
            &Op::Mul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                let da = g.data().iter().zip(vb.data()).map(|(&gv, &y)| gv * y).collect();
                let db = g.data().iter().zip(va.data()).map(|(&gv, &x)| gv * x).collect();
                updates.push((a, Tensor::new(va.shape().to_vec(), da).unwrap()));
                updates.push((b, Tensor::new(vb.shape().to_vec(), db).unwrap()));
            }
            &Op::Scale(x, s) => updates.push((x, g.map(|v| v * s))),
            &Op::Sum(x) => {
                let shape = self.value(x).shape();
                updates.push((x, Tensor::full(shape, g.data()[0])));
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let shape = self.value(*logits).shape().to_vec();
                let (n, c) = (shape[0], shape[1]);
                let scale = g.data()[0] / F::of(n as f64);
                let mut d = probs.clone();
                for (i, &y) in labels.iter().enumerate() {
                    d[i * c + y] -= F::one();
                }
                for v in &mut d {
                    *v *= scale;
                }
                updates.push((*logits, Tensor::new(shape, d).unwrap()));
            }
            Op::KlImitation {
                logits,
                reference,
                temperature,
                probs,
            } => {
                let shape = self.value(*logits).shape().to_vec();
                let n = shape[0];
                let scale = g.data()[0] / (F::of(n as f64) * *temperature);
                let d = probs
                    .iter()
                    .zip(reference)
                    .map(|(&q, &r)| (q - r) * scale)
                    .collect();
                updates.push((*logits, Tensor::new(shape, d).unwrap()));
            }
        }
        for (v, delta) in updates {
            self.accumulate(v, delta);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_shape_error() {
        let mut g = Graph::new();
        let i2 = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let m = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let c = g.matmul(i2, m).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);

        let bad = g.constant(t(&[3, 1], &[1.0, 1.0, 1.0]));
        let err = g.matmul(m, bad).unwrap_err().to_string();
        assert!(err.contains("[2, 2]") && err.contains("[3, 1]"), "{err}");
    }

    #[test]
    fn add_bias_broadcasts_rows() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 2], &[0.0, 0.0]));
        let b = g.constant(t(&[2], &[1.0, 2.0]));
        let y = g.add_bias(x, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);
        let wrong = g.constant(t(&[3], &[0.0; 3]));
        assert!(g.add_bias(x, wrong).is_err());
    }

    #[test]
    fn relu_forward_and_zero_gradient_at_zero() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[-1.0, 0.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn conv_identity_and_all_ones() {
        let mut g = Graph::new();
        let data: Vec<f64> = (0..18).map(f64::from).collect();
        let x = g.constant(t(&[1, 2, 3, 3], &data));
        // 1×1 identity kernels per channel
        let k = g.constant(t(&[2, 2, 1, 1], &[1.0, 0.0, 0.0, 1.0]));
        let y = g.conv2d(x, k, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), &data[..]);

        let ones = g.constant(t(&[1, 1, 3, 3], &[1.0; 9]));
        let k3 = g.constant(t(&[1, 1, 3, 3], &[1.0; 9]));
        let y = g.conv2d(ones, k3, 1, 0).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 1, 1]);
        assert_eq!(g.value(y).data(), &[9.0]);

        let k5 = g.constant(Tensor::full(&[1, 1, 5, 5], 1.0));
        assert!(matches!(g.conv2d(ones, k5, 1, 0), Err(Error::Shape { .. })));
        assert!(g.conv2d(ones, k5, 1, 1).is_ok());
    }

    #[test]
    fn pool_means_planes() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let y = g.global_avg_pool(x).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1]);
        assert_eq!(g.value(y).data(), &[2.5]);

        let x = g.constant(t(&[2, 3, 1, 1], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let y = g.global_avg_pool(x).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 3]);
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let th = g.param(Tensor::scalar(3.0));
        let sq = g.mul(th, th).unwrap();
        g.backward(sq).unwrap();
        assert_eq!(g.grad(th).unwrap().data(), &[6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let y = g.relu(x);
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 2], &[1.0, 2.0]));
        let w = g.param(t(&[2, 1], &[3.0, 4.0]));
        let y = g.matmul(x, w).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert!(g.grad(x).is_none());
        assert_eq!(g.grad(w).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn cross_entropy_checks_labels() {
        let mut g = Graph::new();
        let z = g.param(t(&[1, 3], &[0.0, 0.0, 0.0]));
        assert!(matches!(g.softmax_cross_entropy(z, &[3]), Err(Error::Contract(_))));
        let l = g.softmax_cross_entropy(z, &[1]).unwrap();
        assert!((g.value(l).data()[0] - 3f64.ln()).abs() < 1e-15);
    }
}
