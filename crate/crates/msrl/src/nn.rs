//! Feedforward networks for the three roles in the objective: the
//! representer, the MI critic on `(y, r)` pairs, and the push-forward
//! critic on `r`. Affine layers alternate with the activation; the final
//! layer is affine followed by an optional output transform.

use std::io::{Read, Write};

use ndarray::Array2;
use rand::Rng;

use crate::autodiff::{Graph, TensorId};
use crate::error::{Error, Result};
use crate::util::{rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Relu,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu(0.01)
    }
}

/// Transform applied after the final affine layer.
///
/// `Truncate01` is the two-ReLU composition `t -> relu(t) - relu(relu(t) - 1)`,
/// which clamps into `[0, 1]` with adjoint 1 on (0, 1) and 0 outside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputTransform {
    #[default]
    Identity,
    Truncate01,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub output_transform: OutputTransform,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden: hidden.to_vec(),
            output_dim,
            activation: Activation::default(),
            output_transform: OutputTransform::Identity,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_output_transform(mut self, t: OutputTransform) -> Self {
        self.output_transform = t;
        self
    }

    /// Layer widths including input and output: `k_0, ..., k_{L+1}`.
    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.output_dim);
        w
    }

    /// Total parameter count: sum of `k_{i+1} * (k_i + 1)` over layers.
    pub fn param_count(&self) -> usize {
        self.widths()
            .windows(2)
            .map(|w| w[1] * (w[0] + 1))
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("MlpSpec dims must be >= 1".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden widths must be >= 1".into()));
        }
        Ok(())
    }
}

/// A fully materialized network. Weights are stored input-major
/// (`[k_i x k_{i+1}]`) so a batch forward is a plain `x . W + b`.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub spec: MlpSpec,
    weights: Vec<Array2<f64>>,
    biases: Vec<Vec<f64>>,
}

/// A network bound into a graph: parameter handles plus the forward
/// recipe. Gradients are read back through the same handles.
pub struct MlpVars {
    pub weights: Vec<TensorId>,
    pub biases: Vec<TensorId>,
    activation: Activation,
    output_transform: OutputTransform,
}

impl Mlp {
    /// Kaiming-uniform init scaled by fan-in (`+-sqrt(6 / k_i)`), zero
    /// biases. Deterministic given the seed.
    pub fn init(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_for(seed, Stream::InitR);
        let widths = spec.widths();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let weight = Array2::from_shape_fn((fan_in, fan_out), |_| {
                rng.random::<f64>() * 2.0 * bound - bound
            });
            weights.push(weight);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Mlp {
            spec,
            weights,
            biases,
        })
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    /// All parameters flattened layer by layer (weights then bias per layer).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::contract(
                "set_flat_params",
                format!("expected {} values, got {}", self.param_count(), flat.len()),
            ));
        }
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = flat[at];
                at += 1;
            }
            for v in b.iter_mut() {
                *v = flat[at];
                at += 1;
            }
        }
        Ok(())
    }

    pub fn from_flat(spec: MlpSpec, flat: &[f64]) -> Result<Self> {
        let mut net = Mlp::init(spec, 0)?;
        net.set_flat_params(flat)?;
        net
            .flat_params()
            .iter()
            .all(|v| v.is_finite())
            .then_some(())
            .ok_or_else(|| Error::contract("from_flat", "non-finite parameter"))?;
        Ok(net)
    }

    /// Mutable views of every parameter tensor, in the flat_params order:
    /// weight 0, bias 0, weight 1, bias 1, ...
    pub fn param_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_mut_slice());
        }
        out
    }

    pub fn param_tensor_shapes(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.len());
            out.push(b.len());
        }
        out
    }

    /// Insert the parameters into `g` and return the bound network.
    /// `trainable` controls whether gradients flow into the parameters.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> MlpVars {
        let mut weights = Vec::with_capacity(self.weights.len());
        let mut biases = Vec::with_capacity(self.biases.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            weights.push(g.input(w, trainable));
            biases.push(g.input_slice((1, b.len()), b, trainable));
        }
        MlpVars {
            weights,
            biases,
            activation: self.spec.activation,
            output_transform: self.spec.output_transform,
        }
    }

    /// Batch forward without building a graph. Each output row depends
    /// only on its input row, with a fixed per-row accumulation order, so
    /// results are identical whether rows are evaluated singly or batched.
    pub fn forward_array(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::ShapeMismatch {
                op: "mlp_forward",
                lhs: (x.nrows(), x.ncols()),
                rhs: (self.spec.input_dim, 0),
            });
        }
        let m = x.nrows();
        let mut h: Array2<f64> = x.clone();
        let last = self.weights.len() - 1;
        for (li, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let (k_in, k_out) = (w.nrows(), w.ncols());
            let mut next = Array2::zeros((m, k_out));
            for i in 0..m {
                for j in 0..k_out {
                    let mut acc = b[j];
                    for p in 0..k_in {
                        acc += h[(i, p)] * w[(p, j)];
                    }
                    next[(i, j)] = acc;
                }
            }
            if li < last {
                match self.spec.activation {
                    Activation::LeakyRelu(alpha) => {
                        next.mapv_inplace(|v| if v > 0.0 { v } else { alpha * v })
                    }
                    Activation::Relu => next.mapv_inplace(|v| v.max(0.0)),
                }
            }
            h = next;
        }
        match self.spec.output_transform {
            OutputTransform::Identity => {}
            OutputTransform::Truncate01 => h.mapv_inplace(truncate01_scalar),
            OutputTransform::Sigmoid => h.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
        }
        Ok(h)
    }
}

impl MlpVars {
    /// Graph forward pass over a batch node of shape `[m x input_dim]`.
    pub fn forward(&self, g: &mut Graph, x: TensorId) -> Result<TensorId> {
        let mut h = x;
        let last = self.weights.len() - 1;
        for (li, (&w, &b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = g.matmul(h, w)?;
            h = g.add(z, b)?;
            if li < last {
                h = match self.activation {
                    Activation::LeakyRelu(alpha) => g.leaky_relu(h, alpha),
                    Activation::Relu => g.relu(h),
                };
            }
        }
        match self.output_transform {
            OutputTransform::Identity => Ok(h),
            OutputTransform::Truncate01 => truncate01(g, h),
            OutputTransform::Sigmoid => Ok(g.sigmoid(h)),
        }
    }

    /// Parameter handles in the flat_params order.
    pub fn param_ids(&self) -> Vec<TensorId> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (&w, &b) in self.weights.iter().zip(&self.biases) {
            out.push(w);
            out.push(b);
        }
        out
    }
}

/// Clamp into `[0, 1]` through the two-ReLU composition
/// `T(t) = relu(t) - relu(relu(t) - 1)`.
pub fn truncate01(g: &mut Graph, t: TensorId) -> Result<TensorId> {
    let a = g.relu(t);
    let shifted = g.add_scalar(a, -1.0);
    let b = g.relu(shifted);
    g.sub(a, b)
}

pub fn truncate01_scalar(t: f64) -> f64 {
    let a = t.max(0.0);
    a - (a - 1.0).max(0.0)
}

// ---- serialization -----------------------------------------------------
//
// Flat binary format, little-endian, bit-exact for f64:
//   magic "MSRLNET\0" | version u32 | net count u32
//   per net: input u32, output u32, n hidden u32, hidden widths u32...,
//            activation tag u8 (+ alpha f64), transform tag u8,
//            params f64... (weight then bias per layer, input-major)

const MAGIC: &[u8; 8] = b"MSRLNET\0";
const VERSION: u32 = 1;

pub fn write_mlps(out: &mut impl Write, nets: &[&Mlp]) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(nets.len() as u32).to_le_bytes())?;
    for net in nets {
        out.write_all(&(net.spec.input_dim as u32).to_le_bytes())?;
        out.write_all(&(net.spec.output_dim as u32).to_le_bytes())?;
        out.write_all(&(net.spec.hidden.len() as u32).to_le_bytes())?;
        for &h in &net.spec.hidden {
            out.write_all(&(h as u32).to_le_bytes())?;
        }
        match net.spec.activation {
            Activation::LeakyRelu(alpha) => {
                out.write_all(&[0u8])?;
                out.write_all(&alpha.to_le_bytes())?;
            }
            Activation::Relu => {
                out.write_all(&[1u8])?;
                out.write_all(&0.0f64.to_le_bytes())?;
            }
        }
        let transform = match net.spec.output_transform {
            OutputTransform::Identity => 0u8,
            OutputTransform::Truncate01 => 1,
            OutputTransform::Sigmoid => 2,
        };
        out.write_all(&[transform])?;
        for v in net.flat_params() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_mlps(input: &mut impl Read) -> Result<Vec<Mlp>> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let version = read_u32(input)?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let count = read_u32(input)? as usize;
    let mut nets = Vec::with_capacity(count);
    for _ in 0..count {
        let input_dim = read_u32(input)? as usize;
        let output_dim = read_u32(input)? as usize;
        let n_hidden = read_u32(input)? as usize;
        let mut hidden = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden.push(read_u32(input)? as usize);
        }
        let mut tag = [0u8; 1];
        input.read_exact(&mut tag)?;
        let alpha = read_f64(input)?;
        let activation = match tag[0] {
            0 => Activation::LeakyRelu(alpha),
            1 => Activation::Relu,
            t => return Err(Error::ModelFormat(format!("bad activation tag {t}"))),
        };
        input.read_exact(&mut tag)?;
        let output_transform = match tag[0] {
            0 => OutputTransform::Identity,
            1 => OutputTransform::Truncate01,
            2 => OutputTransform::Sigmoid,
            t => return Err(Error::ModelFormat(format!("bad transform tag {t}"))),
        };
        let spec = MlpSpec {
            input_dim,
            hidden,
            output_dim,
            activation,
            output_transform,
        };
        let mut flat = vec![0.0; spec.param_count()];
        for v in flat.iter_mut() {
            *v = read_f64(input)?;
        }
        nets.push(Mlp::from_flat(spec, &flat)?);
    }
    Ok(nets)
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(input: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
