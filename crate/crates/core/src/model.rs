//! Desk-scale classifiers: a multilayer perceptron and a small CNN.
//!
//! Both produce raw logits `z_j = W_jᵀ x + b_j` from the embedded feature `x`
//! of their last hidden layer; no softmax is applied here.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::kernels::ConvGeometry;
use crate::rng;
use crate::tensor::{Real, Tensor};

/// Kernel extent and padding used by every small-CNN block.
pub const CNN_KERNEL: usize = 3;
pub const CNN_PAD: usize = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    /// Fully connected ReLU layers of the given widths, then a linear classifier.
    Mlp { hidden: Vec<usize> },
    /// 3×3 conv + ReLU blocks with the given output channels and strides,
    /// global average pooling, then a linear classifier.
    SmallCnn {
        channels: Vec<usize>,
        strides: Vec<usize>,
    },
}

impl Architecture {
    pub fn default_mlp() -> Self {
        Architecture::Mlp {
            hidden: vec![256, 256],
        }
    }

    pub fn default_cnn() -> Self {
        Architecture::SmallCnn {
            channels: vec![16, 32, 64],
            strides: vec![1, 2, 2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    /// Per-sample input shape: `[d]` for vectors, `[c, h, w]` for images.
    pub input_shape: Vec<usize>,
    pub classes: usize,
}

/// One step of a model's forward computation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Layer {
    Dense {
        name: String,
        inputs: usize,
        outputs: usize,
    },
    Conv {
        name: String,
        cin: usize,
        cout: usize,
        h: usize,
        w: usize,
        stride: usize,
    },
    Relu { len: usize },
    Pool { c: usize, h: usize, w: usize },
}

impl Layer {
    /// FLOPs for one sample: 2 per multiply-accumulate, 1 per bias add,
    /// 1 per ReLU element, `h·w` per pooled channel.
    pub fn flops(&self) -> u64 {
        match *self {
            Layer::Dense {
                inputs, outputs, ..
            } => (2 * inputs * outputs + outputs) as u64,
            Layer::Conv {
                cin, cout, h, w, stride, ..
            } => {
                let g = conv_geometry(1, cin, h, w, cout, stride);
                let outs = (cout * g.out_h() * g.out_w()) as u64;
                outs * (2 * cin * CNN_KERNEL * CNN_KERNEL) as u64 + outs
            }
            Layer::Relu { len } => len as u64,
            Layer::Pool { c, h, w } => (c * h * w) as u64,
        }
    }
}

fn conv_geometry(batch: usize, cin: usize, h: usize, w: usize, cout: usize, stride: usize) -> ConvGeometry {
    ConvGeometry {
        batch,
        cin,
        h,
        w,
        cout,
        kh: CNN_KERNEL,
        kw: CNN_KERNEL,
        stride,
        pad: CNN_PAD,
    }
}

impl ModelSpec {
    pub fn mlp(input_dim: usize, hidden: Vec<usize>, classes: usize) -> Self {
        Self {
            arch: Architecture::Mlp { hidden },
            input_shape: vec![input_dim],
            classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::contract(format!(
                "a classifier needs at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::contract(format!("invalid input shape {:?}", self.input_shape)));
        }
        match &self.arch {
            Architecture::Mlp { hidden } => {
                if hidden.contains(&0) {
                    return Err(Error::contract("hidden widths must be at least 1"));
                }
            }
            Architecture::SmallCnn { channels, strides } => {
                if self.input_shape.len() != 3 {
                    return Err(Error::contract(format!(
                        "smallcnn needs a [c, h, w] input shape, got {:?}",
                        self.input_shape
                    )));
                }
                if channels.is_empty() || channels.len() != strides.len() {
                    return Err(Error::contract(
                        "smallcnn needs one stride per conv block and at least one block",
                    ));
                }
                if channels.contains(&0) || strides.contains(&0) {
                    return Err(Error::contract("channel counts and strides must be at least 1"));
                }
            }
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// The forward program, in execution order.
    pub fn layers(&self) -> Vec<Layer> {
        let mut layers = Vec::new();
        match &self.arch {
            Architecture::Mlp { hidden } => {
                let mut width = self.input_len();
                for (i, &h) in hidden.iter().enumerate() {
                    layers.push(Layer::Dense {
                        name: format!("dense{i}"),
                        inputs: width,
                        outputs: h,
                    });
                    layers.push(Layer::Relu { len: h });
                    width = h;
                }
                layers.push(Layer::Dense {
                    name: "classifier".into(),
                    inputs: width,
                    outputs: self.classes,
                });
            }
            Architecture::SmallCnn { channels, strides } => {
                let (mut c, mut h, mut w) = (self.input_shape[0], self.input_shape[1], self.input_shape[2]);
                for (i, (&cout, &stride)) in channels.iter().zip(strides).enumerate() {
                    layers.push(Layer::Conv {
                        name: format!("conv{i}"),
                        cin: c,
                        cout,
                        h,
                        w,
                        stride,
                    });
                    let g = conv_geometry(1, c, h, w, cout, stride);
                    (c, h, w) = (cout, g.out_h(), g.out_w());
                    layers.push(Layer::Relu { len: c * h * w });
                }
                layers.push(Layer::Pool { c, h, w });
                layers.push(Layer::Dense {
                    name: "classifier".into(),
                    inputs: c,
                    outputs: self.classes,
                });
            }
        }
        layers
    }

    /// `(name, shape, fan_in)` of every parameter in storage order.
    pub fn parameter_layout(&self) -> Vec<(String, Vec<usize>, Option<usize>)> {
        let mut out = Vec::new();
        for layer in self.layers() {
            match layer {
                Layer::Dense {
                    name,
                    inputs,
                    outputs,
                } => {
                    out.push((format!("{name}.weight"), vec![inputs, outputs], Some(inputs)));
                    out.push((format!("{name}.bias"), vec![outputs], None));
                }
                Layer::Conv { name, cin, cout, .. } => {
                    let fan_in = cin * CNN_KERNEL * CNN_KERNEL;
                    out.push((
                        format!("{name}.weight"),
                        vec![cout, cin, CNN_KERNEL, CNN_KERNEL],
                        Some(fan_in),
                    ));
                    out.push((format!("{name}.bias"), vec![cout], None));
                }
                Layer::Relu { .. } | Layer::Pool { .. } => {}
            }
        }
        out
    }

    /// Width of the embedding that feeds the classifier.
    pub fn feature_dim(&self) -> usize {
        match self.layers().last() {
            Some(Layer::Dense { inputs, .. }) => *inputs,
            _ => unreachable!("every model ends with the classifier"),
        }
    }
}

/// FLOPs of one forward pass for one sample. Depends only on the spec.
pub fn forward_flops(spec: &ModelSpec) -> u64 {
    spec.layers().iter().map(Layer::flops).sum()
}

/// How a parameter set was initialised.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitInfo {
    pub scheme: String,
    pub seed: u64,
}

/// Name of the initialiser used by [`init_params`].
pub const HE_NORMAL: &str = "he-normal";

/// Ordered, uniquely named parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet<F = f32> {
    entries: Vec<(String, Tensor<F>)>,
    pub init: InitInfo,
}

impl<F: Real> ParameterSet<F> {
    pub fn new(entries: Vec<(String, Tensor<F>)>, init: InitInfo) -> Result<Self> {
        for (i, (name, _)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::contract(format!("duplicate parameter name `{name}`")));
            }
        }
        Ok(Self { entries, init })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<F>> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<F>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    pub fn tensor(&self, i: usize) -> &Tensor<F> {
        &self.entries[i].1
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }

    /// Concatenation of all parameters, in storage order.
    pub fn flatten(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|(_, t)| t.data().iter().map(|v| v.f64()))
            .collect()
    }

    /// Copy of `self` holding the values of `flat` (as produced by
    /// [`flatten`](Self::flatten)).
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_scalars() {
            return Err(Error::shape(
                "with_flat",
                format!("{} values for {} parameters", flat.len(), self.num_scalars()),
            ));
        }
        let mut out = self.clone();
        let mut off = 0;
        for t in out.tensors_mut() {
            let n = t.len();
            for (d, &v) in t.data_mut().iter_mut().zip(&flat[off..off + n]) {
                *d = F::of(v);
            }
            off += n;
        }
        Ok(out)
    }

    pub fn cast<G: Real>(&self) -> ParameterSet<G> {
        ParameterSet {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
            init: self.init.clone(),
        }
    }

    /// Checks names and shapes against what `spec` expects.
    pub fn check_against(&self, spec: &ModelSpec) -> Result<()> {
        let layout = spec.parameter_layout();
        if layout.len() != self.entries.len() {
            return Err(Error::shape(
                "parameters",
                format!("spec expects {} tensors, found {}", layout.len(), self.entries.len()),
            ));
        }
        for ((name, shape, _), (n, t)) in layout.iter().zip(&self.entries) {
            if name != n || shape.as_slice() != t.shape() {
                return Err(Error::shape(
                    "parameters",
                    format!("expected `{name}` {shape:?}, found `{n}` {:?}", t.shape()),
                ));
            }
        }
        Ok(())
    }
}

/// Draws weights from `N(0, 2 / fan_in)` and zeroes biases, deterministically
/// in `seed`.
pub fn init_params<F: Real>(spec: &ModelSpec, seed: u64) -> Result<ParameterSet<F>> {
    spec.validate()?;
    let mut rng = rng::stream(seed, "init", 0);
    let entries = spec
        .parameter_layout()
        .into_iter()
        .map(|(name, shape, fan_in)| {
            let n: usize = shape.iter().product();
            let data = match fan_in {
                Some(fan_in) => {
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
                    (0..n).map(|_| F::of(normal.sample(&mut rng))).collect()
                }
                None => vec![F::zero(); n],
            };
            Tensor::new(shape, data).map(|t| (name, t))
        })
        .collect::<Result<Vec<_>>>()?;
    ParameterSet::new(
        entries,
        InitInfo {
            scheme: HE_NORMAL.into(),
            seed,
        },
    )
}

/// Adds every parameter to `g`, as differentiable leaves when `trainable`.
pub fn bind<F: Real>(g: &mut Graph<F>, params: &ParameterSet<F>, trainable: bool) -> Vec<Var> {
    params
        .tensors()
        .map(|t| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        })
        .collect()
}

fn check_batch<F: Real>(spec: &ModelSpec, batch: &Tensor<F>) -> Result<usize> {
    let s = batch.shape();
    let ok = s.len() >= 2
        && (s[1..] == spec.input_shape[..] || (s.len() == 2 && s[1] == spec.input_len()));
    if !ok {
        return Err(Error::shape(
            "forward",
            format!("batch {s:?} does not match input shape {:?}", spec.input_shape),
        ));
    }
    Ok(s[0])
}

/// Records the forward pass up to the classifier input (the embedding).
pub fn forward_features<F: Real>(
    spec: &ModelSpec,
    g: &mut Graph<F>,
    params: &[Var],
    batch: Tensor<F>,
) -> Result<Var> {
    let n = check_batch(spec, &batch)?;
    let layers = spec.layers();
    let (body, _) = layers.split_at(layers.len() - 1);
    let mut x = match spec.arch {
        Architecture::Mlp { .. } => g.constant(batch.reshape(vec![n, spec.input_len()])?),
        Architecture::SmallCnn { .. } => {
            let mut shape = vec![n];
            shape.extend_from_slice(&spec.input_shape);
            g.constant(batch.reshape(shape)?)
        }
    };
    let mut p = 0;
    for layer in body {
        x = match layer {
            Layer::Dense { .. } => {
                let y = g.matmul(x, params[p])?;
                let y = g.add_bias(y, params[p + 1])?;
                p += 2;
                y
            }
            Layer::Conv { stride, .. } => {
                let y = g.conv2d(x, params[p], *stride, CNN_PAD)?;
                let y = g.add_channel_bias(y, params[p + 1])?;
                p += 2;
                y
            }
            Layer::Relu { .. } => g.relu(x),
            Layer::Pool { .. } => g.global_avg_pool(x)?,
        };
    }
    Ok(x)
}

/// Records the full forward pass and returns the `batch×C` logits node.
pub fn forward_logits<F: Real>(
    spec: &ModelSpec,
    g: &mut Graph<F>,
    params: &[Var],
    batch: Tensor<F>,
) -> Result<Var> {
    let n_params = params.len();
    if n_params != spec.parameter_layout().len() {
        return Err(Error::shape(
            "forward",
            format!("{n_params} parameter handles for {} tensors", spec.parameter_layout().len()),
        ));
    }
    let x = forward_features(spec, g, params, batch)?;
    let y = g.matmul(x, params[n_params - 2])?;
    g.add_bias(y, params[n_params - 1])
}

/// Logits for a batch without retaining gradients.
pub fn predict_logits<F: Real>(spec: &ModelSpec, params: &ParameterSet<F>, batch: Tensor<F>) -> Result<Tensor<F>> {
    let mut g = Graph::new();
    let vars = bind(&mut g, params, false);
    let z = forward_logits(spec, &mut g, &vars, batch)?;
    Ok(g.value(z).clone())
}

/// Embeddings (classifier inputs) for a batch.
pub fn predict_features<F: Real>(spec: &ModelSpec, params: &ParameterSet<F>, batch: Tensor<F>) -> Result<Tensor<F>> {
    let mut g = Graph::new();
    let vars = bind(&mut g, params, false);
    let z = forward_features(spec, &mut g, &vars, batch)?;
    Ok(g.value(z).clone())
}
