//! The action-value network: a fixed stack of valid (unpadded) stride-2 3D
//! convolutions and dense layers over a flat f64 parameter vector.
//!
//! Parameter order follows the layer list; within a convolution, weights are
//! `[out_ch][in_ch][kz][ky][kx]` followed by per-channel biases, and within a
//! dense layer `[out][in]` followed by biases. Activation tensors store
//! channels contiguously, x fastest within a channel.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DqnError;
use crate::rlenv::Action;
use crate::volume::{Dims3, Volume3D};

/// 8-byte magic opening every checkpoint file.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VOXLNET1";

/// Minimum observation extent per axis for the standard two-convolution
/// stack (each valid k=3 s=2 convolution needs >= 3 input voxels per axis).
pub const MIN_OBS_EXTENT: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv3d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Relu,
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv3d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel.pow(3) + out_channels,
            LayerSpec::Dense { inputs, outputs } => outputs * inputs + outputs,
            _ => 0,
        }
    }

    fn descriptor_line(&self) -> String {
        match *self {
            LayerSpec::Conv3d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => format!("conv3d {in_channels} {out_channels} {kernel} {stride}"),
            LayerSpec::Relu => "relu".into(),
            LayerSpec::Flatten => "flatten".into(),
            LayerSpec::Dense { inputs, outputs } => format!("dense {inputs} {outputs}"),
        }
    }
}

/// Activation shape at a layer boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Shape {
    channels: usize,
    dims: Dims3,
}

impl Shape {
    fn flat_len(&self) -> usize {
        self.channels * self.dims.count()
    }
}

fn conv_out_extent(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    if input < kernel {
        None
    } else {
        Some((input - kernel) / stride + 1)
    }
}

fn infer_shapes(obs_dims: Dims3, layers: &[LayerSpec]) -> Result<Vec<Shape>, DqnError> {
    let mut shapes = vec![Shape {
        channels: 1,
        dims: obs_dims,
    }];
    for (i, layer) in layers.iter().enumerate() {
        let prev = *shapes.last().unwrap();
        let next = match *layer {
            LayerSpec::Conv3d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                if in_channels != prev.channels {
                    return Err(DqnError::InvalidArchitecture(format!(
                        "layer {i}: conv expects {in_channels} input channels, got {}",
                        prev.channels
                    )));
                }
                if kernel == 0 || stride == 0 {
                    return Err(DqnError::InvalidArchitecture(format!(
                        "layer {i}: kernel and stride must be positive"
                    )));
                }
                let d = prev.dims;
                let out = (
                    conv_out_extent(d.x, kernel, stride),
                    conv_out_extent(d.y, kernel, stride),
                    conv_out_extent(d.z, kernel, stride),
                );
                match out {
                    (Some(x), Some(y), Some(z)) => Shape {
                        channels: out_channels,
                        dims: Dims3::new(x, y, z),
                    },
                    _ => {
                        return Err(DqnError::InvalidArchitecture(format!(
                            "layer {i}: input {}x{}x{} smaller than kernel {kernel}",
                            d.x, d.y, d.z
                        )))
                    }
                }
            }
            LayerSpec::Relu => prev,
            LayerSpec::Flatten => Shape {
                channels: prev.flat_len(),
                dims: Dims3::new(1, 1, 1),
            },
            LayerSpec::Dense { inputs, outputs } => {
                if prev.dims.count() != 1 || prev.channels != inputs {
                    return Err(DqnError::InvalidArchitecture(format!(
                        "layer {i}: dense expects a flat input of {inputs}, got {} x {:?}",
                        prev.channels, prev.dims
                    )));
                }
                Shape {
                    channels: outputs,
                    dims: Dims3::new(1, 1, 1),
                }
            }
        };
        shapes.push(next);
    }
    Ok(shapes)
}

/// The Q-function: observation patch in, one value per action out.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    obs_dims: Dims3,
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
}

impl QNetwork {
    /// Assemble a network from an explicit layer stack and parameter vector.
    pub fn with_params(
        obs_dims: Dims3,
        layers: Vec<LayerSpec>,
        params: Vec<f64>,
    ) -> Result<Self, DqnError> {
        let shapes = infer_shapes(obs_dims, &layers)?;
        let out = shapes.last().unwrap();
        if out.flat_len() != Action::COUNT {
            return Err(DqnError::InvalidArchitecture(format!(
                "network must emit {} action values, emits {}",
                Action::COUNT,
                out.flat_len()
            )));
        }
        let expected: usize = layers.iter().map(|l| l.param_count()).sum();
        if params.len() != expected {
            return Err(DqnError::InvalidArchitecture(format!(
                "parameter vector length {} does not match architecture ({expected})",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(DqnError::InvalidArchitecture(
                "parameters must be finite".into(),
            ));
        }
        Ok(Self {
            obs_dims,
            layers,
            params,
        })
    }

    /// Initialize a layer stack with scaled-uniform weights, `U(-b, b)` with
    /// `b = 1/sqrt(fan_in)` per layer. Deterministic per seed.
    pub fn init(obs_dims: Dims3, layers: Vec<LayerSpec>, seed: u64) -> Result<Self, DqnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for layer in &layers {
            let (fan_in, count) = match *layer {
                LayerSpec::Conv3d {
                    in_channels,
                    kernel,
                    ..
                } => (in_channels * kernel.pow(3), layer.param_count()),
                LayerSpec::Dense { inputs, .. } => (inputs, layer.param_count()),
                _ => (1, 0),
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..count {
                params.push(rng.random::<f64>() * 2.0 * bound - bound);
            }
        }
        Self::with_params(obs_dims, layers, params)
    }

    pub fn obs_dims(&self) -> Dims3 {
        self.obs_dims
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Parameter index range of each layer, in layer order.
    pub fn layer_param_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut ranges = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        for layer in &self.layers {
            let count = layer.param_count();
            ranges.push(offset..offset + count);
            offset += count;
        }
        ranges
    }

    fn shapes(&self) -> Vec<Shape> {
        infer_shapes(self.obs_dims, &self.layers).expect("shapes validated at construction")
    }

    fn obs_to_input(&self, obs: &Volume3D) -> Result<Vec<f64>, DqnError> {
        if obs.dims() != self.obs_dims {
            return Err(DqnError::DimsMismatch {
                expected: self.obs_dims,
                got: obs.dims(),
            });
        }
        Ok(obs.data().iter().map(|&v| v as f64).collect())
    }

    /// Forward pass keeping every layer-boundary activation (index 0 is the
    /// input, index `layers.len()` the output).
    pub(crate) fn forward_cached(&self, obs: &Volume3D) -> Result<Vec<Vec<f64>>, DqnError> {
        let input = self.obs_to_input(obs)?;
        let shapes = self.shapes();
        let ranges = self.layer_param_ranges();
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        for (i, layer) in self.layers.iter().enumerate() {
            let x = acts.last().unwrap();
            let out = match *layer {
                LayerSpec::Conv3d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                } => {
                    let p = &self.params[ranges[i].clone()];
                    let (weights, biases) = p.split_at(p.len() - out_channels);
                    conv3d_forward(
                        x,
                        in_channels,
                        shapes[i].dims,
                        out_channels,
                        shapes[i + 1].dims,
                        kernel,
                        stride,
                        weights,
                        biases,
                    )
                }
                LayerSpec::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
                LayerSpec::Flatten => x.clone(),
                LayerSpec::Dense { inputs, outputs } => {
                    let p = &self.params[ranges[i].clone()];
                    let (weights, biases) = p.split_at(p.len() - outputs);
                    let mut out = Vec::with_capacity(outputs);
                    for o in 0..outputs {
                        let w = &weights[o * inputs..(o + 1) * inputs];
                        let dot: f64 = w.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                        out.push(dot + biases[o]);
                    }
                    out
                }
            };
            acts.push(out);
        }
        Ok(acts)
    }

    /// Gradient of a scalar loss with respect to every parameter, given the
    /// cached activations and the loss gradient at the output.
    pub(crate) fn backward(&self, acts: &[Vec<f64>], d_output: &[f64]) -> Vec<f64> {
        let shapes = self.shapes();
        let ranges = self.layer_param_ranges();
        let mut grad = vec![0.0; self.params.len()];
        let mut d_act = d_output.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &acts[i];
            d_act = match *layer {
                LayerSpec::Conv3d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                } => {
                    let p = &self.params[ranges[i].clone()];
                    let (weights, _) = p.split_at(p.len() - out_channels);
                    let g = &mut grad[ranges[i].clone()];
                    conv3d_backward(
                        x,
                        in_channels,
                        shapes[i].dims,
                        out_channels,
                        shapes[i + 1].dims,
                        kernel,
                        stride,
                        weights,
                        &d_act,
                        g,
                    )
                }
                LayerSpec::Relu => d_act
                    .iter()
                    .zip(x.iter())
                    .map(|(&d, &v)| if v > 0.0 { d } else { 0.0 })
                    .collect(),
                LayerSpec::Flatten => d_act,
                LayerSpec::Dense { inputs, outputs } => {
                    let p = &self.params[ranges[i].clone()];
                    let (weights, _) = p.split_at(p.len() - outputs);
                    let g = &mut grad[ranges[i].clone()];
                    let (g_w, g_b) = g.split_at_mut(outputs * inputs);
                    let mut d_in = vec![0.0; inputs];
                    for o in 0..outputs {
                        let go = d_act[o];
                        g_b[o] += go;
                        let w = &weights[o * inputs..(o + 1) * inputs];
                        let gw = &mut g_w[o * inputs..(o + 1) * inputs];
                        for j in 0..inputs {
                            gw[j] += go * x[j];
                            d_in[j] += go * w[j];
                        }
                    }
                    d_in
                }
            };
        }
        grad
    }
}

#[allow(clippy::too_many_arguments)]
fn conv3d_forward(
    input: &[f64],
    in_channels: usize,
    in_dims: Dims3,
    out_channels: usize,
    out_dims: Dims3,
    kernel: usize,
    stride: usize,
    weights: &[f64],
    biases: &[f64],
) -> Vec<f64> {
    let in_count = in_dims.count();
    let out_count = out_dims.count();
    let k3 = kernel.pow(3);
    let mut out = vec![0.0; out_channels * out_count];
    for oc in 0..out_channels {
        let w_oc = &weights[oc * in_channels * k3..(oc + 1) * in_channels * k3];
        let bias = biases[oc];
        let out_ch = &mut out[oc * out_count..(oc + 1) * out_count];
        for oz in 0..out_dims.z {
            for oy in 0..out_dims.y {
                for ox in 0..out_dims.x {
                    let (ix0, iy0, iz0) = (ox * stride, oy * stride, oz * stride);
                    let mut acc = bias;
                    for ic in 0..in_channels {
                        let ch = &input[ic * in_count..(ic + 1) * in_count];
                        let w = &w_oc[ic * k3..(ic + 1) * k3];
                        let mut wi = 0;
                        for kz in 0..kernel {
                            for ky in 0..kernel {
                                let row = in_dims.index(ix0, iy0 + ky, iz0 + kz);
                                for kx in 0..kernel {
                                    acc += w[wi] * ch[row + kx];
                                    wi += 1;
                                }
                            }
                        }
                    }
                    out_ch[out_dims.index(ox, oy, oz)] = acc;
                }
            }
        }
    }
    out
}

/// Returns the gradient with respect to the layer input; accumulates weight
/// and bias gradients into `grad` (weights first, then biases).
#[allow(clippy::too_many_arguments)]
fn conv3d_backward(
    input: &[f64],
    in_channels: usize,
    in_dims: Dims3,
    out_channels: usize,
    out_dims: Dims3,
    kernel: usize,
    stride: usize,
    weights: &[f64],
    d_out: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let in_count = in_dims.count();
    let out_count = out_dims.count();
    let k3 = kernel.pow(3);
    let (g_w, g_b) = grad.split_at_mut(out_channels * in_channels * k3);
    let mut d_in = vec![0.0; in_channels * in_count];
    for oc in 0..out_channels {
        let w_oc = &weights[oc * in_channels * k3..(oc + 1) * in_channels * k3];
        let gw_oc = &mut g_w[oc * in_channels * k3..(oc + 1) * in_channels * k3];
        let d_ch = &d_out[oc * out_count..(oc + 1) * out_count];
        for oz in 0..out_dims.z {
            for oy in 0..out_dims.y {
                for ox in 0..out_dims.x {
                    let g = d_ch[out_dims.index(ox, oy, oz)];
                    if g == 0.0 {
                        continue;
                    }
                    g_b[oc] += g;
                    let (ix0, iy0, iz0) = (ox * stride, oy * stride, oz * stride);
                    for ic in 0..in_channels {
                        let ch = &input[ic * in_count..(ic + 1) * in_count];
                        let d_ch_in = &mut d_in[ic * in_count..(ic + 1) * in_count];
                        let w = &w_oc[ic * k3..(ic + 1) * k3];
                        let gw = &mut gw_oc[ic * k3..(ic + 1) * k3];
                        let mut wi = 0;
                        for kz in 0..kernel {
                            for ky in 0..kernel {
                                let row = in_dims.index(ix0, iy0 + ky, iz0 + kz);
                                for kx in 0..kernel {
                                    gw[wi] += g * ch[row + kx];
                                    d_ch_in[row + kx] += g * w[wi];
                                    wi += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}

/// Standard architecture: two stride-2 ReLU convolutions (8 then 16
/// channels, 3^3 kernels), flatten, a 128-unit ReLU dense layer, and a
/// linear head with one output per action.
pub fn standard_layers(obs_dims: Dims3) -> Result<Vec<LayerSpec>, DqnError> {
    let min = MIN_OBS_EXTENT;
    if obs_dims.x < min || obs_dims.y < min || obs_dims.z < min {
        return Err(DqnError::ObsTooSmall {
            dims: (obs_dims.x, obs_dims.y, obs_dims.z),
            min,
        });
    }
    let conv = |c_in: usize, c_out: usize| LayerSpec::Conv3d {
        in_channels: c_in,
        out_channels: c_out,
        kernel: 3,
        stride: 2,
    };
    let after = |d: usize| (d - 3) / 2 + 1;
    let c2 = Dims3::new(
        after(after(obs_dims.x)),
        after(after(obs_dims.y)),
        after(after(obs_dims.z)),
    );
    let flat = 16 * c2.count();
    Ok(vec![
        conv(1, 8),
        LayerSpec::Relu,
        conv(8, 16),
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense {
            inputs: flat,
            outputs: 128,
        },
        LayerSpec::Relu,
        LayerSpec::Dense {
            inputs: 128,
            outputs: Action::COUNT,
        },
    ])
}

/// Build and initialize the standard network for an observation shape.
pub fn init_network(obs_dims: Dims3, seed: u64) -> Result<QNetwork, DqnError> {
    QNetwork::init(obs_dims, standard_layers(obs_dims)?, seed)
}

/// Q-values for the six actions. Pure and deterministic.
pub fn q_forward(net: &QNetwork, obs: &Volume3D) -> Result<[f64; Action::COUNT], DqnError> {
    let acts = net.forward_cached(obs)?;
    let out = acts.last().unwrap();
    let mut q = [0.0; Action::COUNT];
    q.copy_from_slice(out);
    Ok(q)
}

fn descriptor_text(net: &QNetwork) -> String {
    let d = net.obs_dims();
    let mut lines = vec![format!("obs {} {} {}", d.x, d.y, d.z)];
    lines.extend(net.layers().iter().map(|l| l.descriptor_line()));
    lines.join("\n")
}

fn parse_descriptor(text: &str) -> Result<(Dims3, Vec<LayerSpec>), DqnError> {
    let corrupt = |msg: String| DqnError::CorruptCheckpoint(msg);
    let mut lines = text.lines();
    let obs_line = lines
        .next()
        .ok_or_else(|| corrupt("empty descriptor".into()))?;
    let obs: Vec<usize> = obs_line
        .strip_prefix("obs ")
        .ok_or_else(|| corrupt(format!("descriptor must open with an obs line, got {obs_line:?}")))?
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| corrupt(format!("bad obs line: {e}")))?;
    if obs.len() != 3 {
        return Err(corrupt("obs line must carry three extents".into()));
    }
    let mut layers = Vec::new();
    for line in lines {
        let mut tokens = line.split_whitespace();
        let kind = tokens.next().unwrap_or("");
        let nums: Vec<usize> = tokens
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| corrupt(format!("bad layer line {line:?}: {e}")))?;
        let layer = match (kind, nums.as_slice()) {
            ("conv3d", [i, o, k, s]) => LayerSpec::Conv3d {
                in_channels: *i,
                out_channels: *o,
                kernel: *k,
                stride: *s,
            },
            ("relu", []) => LayerSpec::Relu,
            ("flatten", []) => LayerSpec::Flatten,
            ("dense", [i, o]) => LayerSpec::Dense {
                inputs: *i,
                outputs: *o,
            },
            _ => return Err(corrupt(format!("unrecognized layer line {line:?}"))),
        };
        layers.push(layer);
    }
    Ok((Dims3::new(obs[0], obs[1], obs[2]), layers))
}

/// Write a checkpoint: magic, u32le descriptor length, the UTF-8 descriptor,
/// then parameters as f64le in descriptor order.
pub fn save_checkpoint(net: &QNetwork, path: impl AsRef<Path>) -> Result<(), DqnError> {
    let path = path.as_ref();
    let desc = descriptor_text(net);
    let mut bytes = Vec::with_capacity(8 + 4 + desc.len() + 8 * net.param_count());
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    bytes.extend_from_slice(desc.as_bytes());
    for p in net.params() {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(path, &bytes).map_err(|source| DqnError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<QNetwork, DqnError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| DqnError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(DqnError::BadCheckpointMagic);
    }
    if bytes.len() < 12 {
        return Err(DqnError::CorruptCheckpoint(
            "file ends inside the descriptor length".into(),
        ));
    }
    let desc_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + desc_len {
        return Err(DqnError::CorruptCheckpoint(
            "file ends inside the descriptor".into(),
        ));
    }
    let desc = std::str::from_utf8(&bytes[12..12 + desc_len])
        .map_err(|e| DqnError::CorruptCheckpoint(format!("descriptor is not UTF-8: {e}")))?;
    let (obs_dims, layers) = parse_descriptor(desc)?;
    let expected: usize = layers.iter().map(|l| l.param_count()).sum();
    let payload = &bytes[12 + desc_len..];
    if payload.len() != 8 * expected {
        return Err(DqnError::ParamCountMismatch {
            expected,
            got: payload.len() / 8,
        });
    }
    let params: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    QNetwork::with_params(obs_dims, layers, params)
}
