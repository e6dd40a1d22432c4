use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// One stage of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        in_channels: usize,
        kh: usize,
        kw: usize,
    },
    Pool,
    Fc {
        out_features: usize,
        in_features: usize,
    },
    Relu,
    /// Terminal classifier; folded into the cross-entropy loss during training.
    Softmax,
}

impl LayerSpec {
    pub fn is_parametric(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Fc { .. })
    }

    /// Weight tensor shape for parametric layers.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Conv {
                out_channels,
                in_channels,
                kh,
                kw,
            } => Some(vec![out_channels, in_channels, kh, kw]),
            LayerSpec::Fc {
                out_features,
                in_features,
            } => Some(vec![out_features, in_features]),
            _ => None,
        }
    }

    fn fans(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Conv {
                out_channels,
                in_channels,
                kh,
                kw,
            } => (in_channels * kh * kw, out_channels * kh * kw),
            LayerSpec::Fc {
                out_features,
                in_features,
            } => (in_features, out_features),
            _ => (0, 0),
        }
    }
}

/// Layer stack applied to `input = [channels, height, width]` images.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl Default for ArchConfig {
    /// conv(8@5×5) → pool → conv(16@5×5) → pool → fc(128) → fc(10) on 28×28×1.
    fn default() -> Self {
        use LayerSpec::*;
        ArchConfig {
            input: [1, 28, 28],
            layers: vec![
                Conv {
                    out_channels: 8,
                    in_channels: 1,
                    kh: 5,
                    kw: 5,
                },
                Relu,
                Pool,
                Conv {
                    out_channels: 16,
                    in_channels: 8,
                    kh: 5,
                    kw: 5,
                },
                Relu,
                Pool,
                Fc {
                    out_features: 128,
                    in_features: 256,
                },
                Relu,
                Fc {
                    out_features: 10,
                    in_features: 128,
                },
                Softmax,
            ],
        }
    }
}

impl ArchConfig {
    /// Checks that consecutive layers compose and returns the per-sample
    /// activation shape after each layer.
    pub fn validate(&self) -> Result<Vec<Vec<usize>>> {
        let [c, h, w] = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Architecture {
                layer: 0,
                msg: format!("empty input shape {:?}", self.input),
            });
        }
        if !self.layers.iter().any(LayerSpec::is_parametric) {
            return Err(Error::Architecture {
                layer: 0,
                msg: "no parametric layers".into(),
            });
        }
        let mut shape = vec![c, h, w];
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            let err = |msg: String| Error::Architecture { layer: idx, msg };
            shape = match *layer {
                LayerSpec::Conv {
                    out_channels,
                    in_channels,
                    kh,
                    kw,
                } => {
                    if shape.len() != 3 {
                        return Err(err("conv after flattening layer".into()));
                    }
                    if out_channels == 0 || kh == 0 || kw == 0 {
                        return Err(err("conv with zero-sized dimension".into()));
                    }
                    if in_channels != shape[0] {
                        return Err(err(format!("conv in_channels {in_channels} but input has {} channels", shape[0])));
                    }
                    if kh > shape[1] || kw > shape[2] {
                        return Err(err(format!("kernel {kh}x{kw} larger than input {}x{}", shape[1], shape[2])));
                    }
                    vec![out_channels, shape[1] - kh + 1, shape[2] - kw + 1]
                }
                LayerSpec::Pool => {
                    if shape.len() != 3 || shape[1] < 2 || shape[2] < 2 {
                        return Err(err(format!("pool needs a spatial input of at least 2x2, got {shape:?}")));
                    }
                    vec![shape[0], shape[1] / 2, shape[2] / 2]
                }
                LayerSpec::Fc {
                    out_features,
                    in_features,
                } => {
                    let flat: usize = shape.iter().product();
                    if out_features == 0 {
                        return Err(err("fc with zero out_features".into()));
                    }
                    if in_features != flat {
                        return Err(err(format!("fc in_features {in_features} but input flattens to {flat}")));
                    }
                    vec![out_features]
                }
                LayerSpec::Relu => shape,
                LayerSpec::Softmax => {
                    if idx + 1 != self.layers.len() {
                        return Err(err("softmax must be the final layer".into()));
                    }
                    if shape.len() != 1 {
                        return Err(err("softmax needs a flat input".into()));
                    }
                    shape
                }
            };
            shapes.push(shape.clone());
        }
        Ok(shapes)
    }

    pub fn num_classes(&self) -> Result<usize> {
        let shapes = self.validate()?;
        let last = shapes.last().expect("validated non-empty");
        Ok(last.iter().product())
    }

    /// Names of parametric layers, e.g. `conv1`, `conv2`, `fc1`.
    pub fn param_layer_names(&self) -> Vec<String> {
        let (mut conv, mut fc) = (0, 0);
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv { .. } => {
                    conv += 1;
                    Some(format!("conv{conv}"))
                }
                LayerSpec::Fc { .. } => {
                    fc += 1;
                    Some(format!("fc{fc}"))
                }
                _ => None,
            })
            .collect()
    }

    /// Σ over parametric layers of the weight-tensor element counts.
    pub fn synapse_capacity(&self) -> usize {
        self.layers
            .iter()
            .filter_map(LayerSpec::weight_shape)
            .map(|s| s.iter().product::<usize>())
            .sum()
    }
}

/// Weights, bias and synapse mask of one convolutional or fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayer {
    pub name: String,
    pub spec: LayerSpec,
    pub weights: Tensor,
    pub bias: Tensor,
    pub mask: Tensor,
}

/// A network H(N, S): the layer stack, synaptic strengths and synapse masks
/// of one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkArch {
    pub(crate) config: ArchConfig,
    pub(crate) params: Vec<ParamLayer>,
    pub(crate) generation: u32,
}

/// Uniform Glorot initialisation bound, `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(spec: &LayerSpec) -> f64 {
    let (fan_in, fan_out) = spec.fans();
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn init_weights<R: Rng + ?Sized>(spec: &LayerSpec, rng: &mut R) -> Tensor {
    let shape = spec.weight_shape().expect("parametric layer");
    let bound = glorot_bound(spec);
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape, data).expect("shape from spec")
}

/// Builds a generation-1 network: all-ones masks, Glorot-uniform weights,
/// zero biases.
pub fn build_network<R: Rng + ?Sized>(config: &ArchConfig, rng: &mut R) -> Result<NetworkArch> {
    config.validate()?;
    let names = config.param_layer_names();
    let params = config
        .layers
        .iter()
        .filter(|l| l.is_parametric())
        .zip(names)
        .map(|(spec, name)| {
            let weights = init_weights(spec, rng);
            let out = weights.shape()[0];
            ParamLayer {
                name,
                spec: *spec,
                mask: Tensor::ones(weights.shape()),
                bias: Tensor::zeros(&[out]),
                weights,
            }
        })
        .collect();
    Ok(NetworkArch {
        config: config.clone(),
        params,
        generation: 1,
    })
}

/// How an offspring's synaptic strengths are initialised before retraining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inheritance {
    /// Keep the parent's values at surviving synapses.
    #[default]
    Warm,
    /// Fresh Glorot-uniform values at surviving synapses, zero biases.
    Cold,
}

/// Per-layer and total counts of unpruned synapses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynapseCounts {
    pub per_layer: Vec<usize>,
    pub total: usize,
}

impl NetworkArch {
    /// Reassembles a network from parts, checking every invariant.
    pub fn from_parts(config: ArchConfig, params: Vec<ParamLayer>, generation: u32) -> Result<Self> {
        config.validate()?;
        if generation == 0 {
            return Err(Error::DegenerateNetwork("generation must be >= 1".into()));
        }
        let specs: Vec<_> = config.layers.iter().filter(|l| l.is_parametric()).collect();
        if specs.len() != params.len() {
            return Err(Error::shape("NetworkArch::from_parts", "parametric layer count", specs.len(), params.len()));
        }
        for (spec, p) in specs.iter().zip(&params) {
            let shape = spec.weight_shape().expect("parametric");
            if p.weights.shape() != shape.as_slice() || p.mask.shape() != shape.as_slice() {
                return Err(Error::DegenerateNetwork(format!("layer {}: weight or mask shape differs from spec", p.name)));
            }
            if p.bias.shape() != [shape[0]] {
                return Err(Error::shape("NetworkArch::from_parts", format!("{} bias length", p.name), shape[0], p.bias.len()));
            }
        }
        let net = NetworkArch {
            config,
            params,
            generation,
        };
        net.check_masks()?;
        Ok(net)
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn params(&self) -> &[ParamLayer] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [ParamLayer] {
        &mut self.params
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    /// Counts unpruned synapses (non-zero mask entries).
    pub fn count_synapses(&self) -> SynapseCounts {
        let per_layer: Vec<usize> = self.params.iter().map(|p| p.mask.count_nonzero()).collect();
        SynapseCounts {
            total: per_layer.iter().sum(),
            per_layer,
        }
    }

    /// Verifies that masks are binary and that pruned synapses carry zero
    /// strength.
    pub fn check_masks(&self) -> Result<()> {
        for p in &self.params {
            for (idx, (&w, &m)) in p.weights.data().iter().zip(p.mask.data()).enumerate() {
                if m != 0.0 && m != 1.0 {
                    return Err(Error::DegenerateNetwork(format!("{}: mask entry {idx} is {m}, not 0 or 1", p.name)));
                }
                if m == 0.0 && w != 0.0 {
                    return Err(Error::DegenerateNetwork(format!("{}: pruned synapse {idx} has weight {w}", p.name)));
                }
            }
        }
        Ok(())
    }

    /// Next-generation network carrying `masks`. Each offspring mask must be a
    /// subset of the corresponding parent mask.
    pub fn offspring<R: Rng + ?Sized>(&self, masks: Vec<Tensor>, inheritance: Inheritance, rng: &mut R) -> Result<NetworkArch> {
        if masks.len() != self.params.len() {
            return Err(Error::shape("NetworkArch::offspring", "mask count", self.params.len(), masks.len()));
        }
        let mut params = Vec::with_capacity(self.params.len());
        for (parent, mask) in self.params.iter().zip(masks) {
            crate::numerics::check_same_shape("NetworkArch::offspring", &parent.name, &parent.weights, &mask)?;
            if let Some(idx) = mask
                .data()
                .iter()
                .zip(parent.mask.data())
                .position(|(&child, &par)| child != 0.0 && par == 0.0)
            {
                return Err(Error::DegenerateNetwork(format!(
                    "{}: offspring synapse {idx} is absent in the parent",
                    parent.name
                )));
            }
            let (mut weights, bias) = match inheritance {
                Inheritance::Warm => (parent.weights.clone(), parent.bias.clone()),
                Inheritance::Cold => (init_weights(&parent.spec, rng), Tensor::zeros(parent.bias.shape())),
            };
            weights.apply_mask(&mask)?;
            params.push(ParamLayer {
                name: parent.name.clone(),
                spec: parent.spec,
                weights,
                bias,
                mask,
            });
        }
        Ok(NetworkArch {
            config: self.config.clone(),
            params,
            generation: self.generation + 1,
        })
    }
}
