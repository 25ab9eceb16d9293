//! Embedding heads over frozen features.
//!
//! The identity head passes precomputed backbone features straight through.
//! Linear and MLP heads carry the learnable parameters that episodic
//! meta-training updates; their episodic-loss gradients are accumulated by hand
//! in reverse mode, including the path through the class prototypes.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng as _;

use crate::episodes::EpisodeBatch;
use crate::error::{Error, Result};
use crate::prototype::{check_dim, check_finite, compute_prototypes, episode_loss, softmax_neg};
use crate::rng;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PFNW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    Identity,
    Linear,
    Mlp,
}

impl Architecture {
    pub fn tag(self) -> u8 {
        match self {
            Architecture::Identity => 0,
            Architecture::Linear => 1,
            Architecture::Mlp => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Architecture::Identity),
            1 => Ok(Architecture::Linear),
            2 => Ok(Architecture::Mlp),
            t => Err(Error::InvalidArchitecture(format!("unknown tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Identity => "identity",
            Architecture::Linear => "linear",
            Architecture::Mlp => "mlp",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" => Ok(Architecture::Identity),
            "linear" => Ok(Architecture::Linear),
            "mlp" => Ok(Architecture::Mlp),
            other => Err(Error::InvalidArchitecture(format!(
                "unknown head {other:?}"
            ))),
        }
    }
}

/// One affine map. `weights` is `out_dim x in_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.in_dim).zip(&self.bias).map(
            |(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b,
        ));
    }
}

/// A channel x height x width backbone output.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        check_dim(channels * height * width, values.len())?;
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.values[(c * self.height + h) * self.width + w]
    }
}

/// Channel-major, then row-major: `index = c*(H*W) + h*W + w`.
pub fn flatten_feature_map(map: &FeatureMap) -> Vec<f64> {
    map.values.clone()
}

pub fn unflatten_feature_map(
    flat: &[f64],
    channels: usize,
    height: usize,
    width: usize,
) -> Result<FeatureMap> {
    FeatureMap::new(channels, height, width, flat.to_vec())
}

/// The learnable map from raw features (dimension D) to embeddings (dimension M).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingNetwork {
    architecture: Architecture,
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
}

fn validate_dims(architecture: Architecture, dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::InvalidArchitecture(format!(
            "layer dims must be nonempty and positive, got {dims:?}"
        )));
    }
    match architecture {
        Architecture::Identity if dims.len() != 2 || dims[0] != dims[1] => Err(
            Error::InvalidArchitecture(format!("identity needs dims [D, D], got {dims:?}")),
        ),
        Architecture::Linear if dims.len() != 2 => Err(Error::InvalidArchitecture(format!(
            "linear needs dims [D, M], got {dims:?}"
        ))),
        Architecture::Mlp if dims.len() < 3 => Err(Error::InvalidArchitecture(format!(
            "mlp needs at least one hidden layer, got {dims:?}"
        ))),
        _ => Ok(()),
    }
}

impl EmbeddingNetwork {
    /// Uniform fan-in/fan-out initialization, zero biases, fully seed-determined.
    pub fn init(architecture: Architecture, layer_dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(architecture, layer_dims)?;
        let mut rng = rng::seeded(seed);
        let layers = match architecture {
            Architecture::Identity => Vec::new(),
            _ => layer_dims
                .windows(2)
                .map(|w| {
                    let (fan_in, fan_out) = (w[0], w[1]);
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    Layer {
                        in_dim: fan_in,
                        out_dim: fan_out,
                        weights: (0..fan_in * fan_out)
                            .map(|_| rng.random_range(-a..=a))
                            .collect(),
                        bias: vec![0.0; fan_out],
                    }
                })
                .collect(),
        };
        Ok(Self {
            architecture,
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::init(Architecture::Identity, &[dim, dim], 0)
    }

    /// Builds a network from explicit parameters, checking every shape.
    pub fn from_layers(architecture: Architecture, layers: Vec<Layer>) -> Result<Self> {
        let layer_dims: Vec<usize> = match layers.first() {
            Some(first) => std::iter::once(first.in_dim)
                .chain(layers.iter().map(|l| l.out_dim))
                .collect(),
            None => {
                return Err(Error::InvalidArchitecture(
                    "explicit construction needs at least one layer".into(),
                ))
            }
        };
        if architecture == Architecture::Identity {
            return Err(Error::InvalidArchitecture(
                "identity has no parameters".into(),
            ));
        }
        validate_dims(architecture, &layer_dims)?;
        for (l, w) in layers.iter().zip(layer_dims.windows(2)) {
            if l.in_dim != w[0] {
                return Err(Error::InvalidArchitecture(format!(
                    "layer input {} does not follow previous output {}",
                    l.in_dim, w[0]
                )));
            }
            check_dim(l.in_dim * l.out_dim, l.weights.len())?;
            check_dim(l.out_dim, l.bias.len())?;
            check_finite(&l.weights, "weights")?;
            check_finite(&l.bias, "bias")?;
        }
        Ok(Self {
            architecture,
            layer_dims,
            layers,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters in checkpoint order: per layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::ShapeMismatch {
                params: self.num_params(),
                grads: flat.len(),
            });
        }
        let mut rest = flat;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), input.len())?;
        check_finite(input, "network input")?;
        Ok(self.forward_unchecked(input))
    }

    fn forward_unchecked(&self, input: &[f64]) -> Vec<f64> {
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if i < last {
                relu(&mut next);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Forward pass keeping each layer's input for the backward pass.
    fn forward_trace(&self, input: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = input.to_vec();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.out_dim);
            layer.affine(&cur, &mut next);
            if i < last {
                relu(&mut next);
            }
            inputs.push(std::mem::replace(&mut cur, next));
        }
        (cur, inputs)
    }

    /// Accumulates the parameter gradient for one point given `dL/d(output)`.
    fn backward(&self, inputs: &[Vec<f64>], upstream: Vec<f64>, grads: &mut Gradients) {
        let mut delta = upstream;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &inputs[i];
            let g = &mut grads.layers[i];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if i == 0 {
                break;
            }
            // `input` is the rectified output of the previous layer, so a zero
            // entry marks an inactive unit.
            let mut prev = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            for (p, &x) in prev.iter_mut().zip(input) {
                if x <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            13 + 8 * self.layer_dims.len() + 8 * self.num_params(),
        );
        out.write_all(&CHECKPOINT_MAGIC).unwrap();
        out.write_u32::<LittleEndian>(CHECKPOINT_VERSION).unwrap();
        out.write_u8(self.architecture.tag()).unwrap();
        out.write_u32::<LittleEndian>(self.layer_dims.len() as u32)
            .unwrap();
        for &d in &self.layer_dims {
            out.write_u64::<LittleEndian>(d as u64).unwrap();
        }
        for p in self.params() {
            out.write_f64::<LittleEndian>(p).unwrap();
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let actual = bytes.len() as u64;
        let short = |expected: u64| Error::TruncatedFile { expected, actual };
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic).map_err(|_| short(13))?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                expected: CHECKPOINT_MAGIC,
                found: magic,
            });
        }
        let version = cur.read_u32::<LittleEndian>().map_err(|_| short(13))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let tag = cur.read_u8().map_err(|_| short(13))?;
        let architecture = Architecture::from_tag(tag)?;
        let n_dims = cur.read_u32::<LittleEndian>().map_err(|_| short(13))? as u64;
        let dims_end = 13 + 8 * n_dims;
        let mut dims = Vec::with_capacity(n_dims.min(1 << 16) as usize);
        for _ in 0..n_dims {
            let d = cur
                .read_u64::<LittleEndian>()
                .map_err(|_| short(dims_end))?;
            dims.push(usize::try_from(d).map_err(|_| {
                Error::InvalidArchitecture(format!("dimension {d} too large"))
            })?);
        }
        validate_dims(architecture, &dims)?;
        let n_params: u64 = match architecture {
            Architecture::Identity => 0,
            _ => dims
                .windows(2)
                .map(|w| (w[0] as u64 + 1) * w[1] as u64)
                .sum(),
        };
        let expected = dims_end + 8 * n_params;
        if actual != expected {
            return Err(short(expected));
        }
        let mut net = Self {
            architecture,
            layer_dims: dims.clone(),
            layers: Vec::new(),
        };
        if architecture != Architecture::Identity {
            for w in dims.windows(2) {
                let mut read = |n: usize| -> Vec<f64> {
                    (0..n)
                        .map(|_| cur.read_f64::<LittleEndian>().unwrap())
                        .collect()
                };
                let weights = read(w[0] * w[1]);
                let bias = read(w[1]);
                net.layers.push(Layer {
                    in_dim: w[0],
                    out_dim: w[1],
                    weights,
                    bias,
                });
            }
        }
        Ok(net)
    }
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

pub fn embed_forward(net: &EmbeddingNetwork, input: &[f64]) -> Result<Vec<f64>> {
    net.forward(input)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradient of the episodic loss, shaped like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(net: &EmbeddingNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Flattened in the same order as [`EmbeddingNetwork::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Episodic loss of `batch` under `net`, without gradients.
pub fn episode_loss_under(net: &EmbeddingNetwork, batch: &EpisodeBatch<'_>) -> Result<f64> {
    let support = embed_all(net, &batch.support)?;
    let query = embed_all(net, &batch.query)?;
    let protos = compute_prototypes(&support, &batch.support_labels, batch.n_way)?;
    episode_loss(&query, &batch.query_labels, &protos)
}

pub fn embed_all(net: &EmbeddingNetwork, points: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    points.iter().map(|p| net.forward(p)).collect()
}

/// Loss and parameter gradient of one episode.
///
/// Prototypes are means of embedded supports, so each support point of class
/// `k` receives `1/|S_k|` of the gradient reaching prototype `k`. Queries
/// receive gradient through their distances directly.
pub fn loss_gradients(net: &EmbeddingNetwork, batch: &EpisodeBatch<'_>) -> Result<(f64, Gradients)> {
    check_dim(batch.support.len(), batch.support_labels.len())?;
    check_dim(batch.query.len(), batch.query_labels.len())?;
    if batch.query.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    for p in batch.support.iter().chain(&batch.query) {
        check_dim(net.input_dim(), p.len())?;
        check_finite(p, "episode features")?;
    }

    let trace = |p: &&[f64]| net.forward_trace(p);
    let support: Vec<_> = batch.support.iter().map(trace).collect();
    let query: Vec<_> = batch.query.iter().map(trace).collect();

    let support_z: Vec<&[f64]> = support.iter().map(|(z, _)| z.as_slice()).collect();
    let protos = compute_prototypes(&support_z, &batch.support_labels, batch.n_way)?;
    let n_way = protos.len();
    let m = protos.dim();
    let inv_q = 1.0 / query.len() as f64;

    let mut loss = 0.0;
    let mut proto_grad = vec![vec![0.0; m]; n_way];
    let mut query_grad = Vec::with_capacity(query.len());
    for ((z, _), &label) in query.iter().zip(&batch.query_labels) {
        if label >= n_way {
            return Err(Error::LabelOutOfRange {
                label,
                n_classes: n_way,
            });
        }
        let d = protos.distances(z)?;
        loss += crate::prototype::neg_log_softmax(&d, label);
        let p = softmax_neg(&d);
        let mut gz = vec![0.0; m];
        for k in 0..n_way {
            // dL/dd_k for this query.
            let coeff = inv_q * (if k == label { 1.0 } else { 0.0 } - p[k]);
            if coeff == 0.0 {
                continue;
            }
            for ((g, gc), (zj, cj)) in gz
                .iter_mut()
                .zip(proto_grad[k].iter_mut())
                .zip(z.iter().zip(protos.prototype(k)))
            {
                let t = 2.0 * coeff * (zj - cj);
                *g += t;
                *gc -= t;
            }
        }
        query_grad.push(gz);
    }
    loss /= query.len() as f64;

    let mut grads = Gradients::zeros_like(net);
    if net.layers.is_empty() {
        return Ok((loss, grads));
    }
    let mut counts = vec![0usize; n_way];
    for &l in &batch.support_labels {
        counts[l] += 1;
    }
    for ((_, inputs), &label) in support.iter().zip(&batch.support_labels) {
        let inv_n = 1.0 / counts[label] as f64;
        let up: Vec<f64> = proto_grad[label].iter().map(|g| g * inv_n).collect();
        net.backward(inputs, up, &mut grads);
    }
    for ((_, inputs), up) in query.iter().zip(query_grad) {
        net.backward(inputs, up, &mut grads);
    }
    Ok((loss, grads))
}
