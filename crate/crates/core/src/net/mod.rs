//! Sequential convolutional feature extractor (VGG layout) with exact
//! reverse-mode gradients to the input image, and Gram correlations.

mod forward;
mod gram;
pub mod toy;
pub mod weights;

pub use forward::{backward_to_input, forward, ForwardPass};
pub use gram::{gram, gram_stack, GramMatrix, GramStack};
pub use weights::{load_weights, read_weights, save_weights, write_weights};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A `3x3`-style convolution with zero padding that preserves spatial size.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kh: usize,
    pub kw: usize,
    /// `(out, in, kh, kw)` row-major. Values are exactly representable in
    /// `f32`, the storage precision of the weight file.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn new(out_ch: usize, in_ch: usize, kh: usize, kw: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::InvalidArgument(format!("kernel {kh}x{kw} must have odd extents")));
        }
        if weights.len() != out_ch * in_ch * kh * kw || bias.len() != out_ch {
            return Err(Error::DimensionMismatch(format!(
                "conv {out_ch}x{in_ch}x{kh}x{kw}: {} weights, {} biases",
                weights.len(),
                bias.len()
            )));
        }
        let to_storage = |v: Vec<f64>| -> Result<Vec<f64>> {
            v.into_iter()
                .map(|x| {
                    let s = x as f32;
                    if s.is_finite() {
                        Ok(s as f64)
                    } else {
                        Err(Error::NonFinite("convolution weight".into()))
                    }
                })
                .collect()
        };
        Ok(Self { out_ch, in_ch, kh, kw, weights: to_storage(weights)?, bias: to_storage(bias)? })
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_ch + i) * self.kh + ky) * self.kw + kx]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv(ConvLayer),
    Relu,
    /// 2x2 window, stride 2; odd trailing rows/columns are dropped.
    MaxPool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
}

/// Ordered layer list plus the per-channel mean subtracted from the input.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    layers: Vec<Layer>,
    mean: [f64; 3],
}

fn parse_conv_name(name: &str) -> Option<(u32, u32)> {
    let rest = name.strip_prefix("conv")?;
    let (block, index) = rest.split_once('_')?;
    Some((block.parse().ok()?, index.parse().ok()?))
}

impl NetworkSpec {
    pub fn new(layers: Vec<Layer>, mean: [f64; 3]) -> Result<Self> {
        let mut channels = 3;
        let mut names = std::collections::HashSet::new();
        for layer in &layers {
            if !names.insert(layer.name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate layer name {}", layer.name)));
            }
            if let LayerKind::Conv(conv) = &layer.kind {
                if conv.in_ch != channels {
                    return Err(Error::DimensionMismatch(format!(
                        "layer {} expects {} input channels, previous layer gives {channels}",
                        layer.name, conv.in_ch
                    )));
                }
                channels = conv.out_ch;
            }
        }
        let mean = mean.map(|m| m as f32 as f64);
        Ok(Self { layers, mean })
    }

    /// Builds the VGG layout from named convolutions `conv{block}_{index}`:
    /// each convolution is followed by `relu{block}_{index}`, and every block
    /// ends with `pool{block}`.
    pub fn from_convs(convs: Vec<(String, ConvLayer)>, mean: [f64; 3]) -> Result<Self> {
        let mut layers = Vec::with_capacity(convs.len() * 2 + 5);
        let mut current_block = None;
        for (name, conv) in convs {
            let (block, index) = parse_conv_name(&name)
                .ok_or_else(|| Error::InvalidArgument(format!("layer name {name} is not conv<block>_<index>")))?;
            if let Some(prev) = current_block {
                if prev != block {
                    layers.push(Layer { name: format!("pool{prev}"), kind: LayerKind::MaxPool });
                }
            }
            current_block = Some(block);
            layers.push(Layer { name: name.clone(), kind: LayerKind::Conv(conv) });
            layers.push(Layer { name: format!("relu{block}_{index}"), kind: LayerKind::Relu });
        }
        if let Some(prev) = current_block {
            layers.push(Layer { name: format!("pool{prev}"), kind: LayerKind::MaxPool });
        }
        Self::new(layers, mean)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn mean(&self) -> [f64; 3] {
        self.mean
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn convs(&self) -> impl Iterator<Item = (&str, &ConvLayer)> {
        self.layers.iter().filter_map(|l| match &l.kind {
            LayerKind::Conv(c) => Some((l.name.as_str(), c)),
            _ => None,
        })
    }

    /// Channel count at the output of layer `index`.
    pub fn channels_at(&self, index: usize) -> usize {
        self.layers[..=index]
            .iter()
            .rev()
            .find_map(|l| match &l.kind {
                LayerKind::Conv(c) => Some(c.out_ch),
                _ => None,
            })
            .unwrap_or(3)
    }

    /// Number of pooling stages up to and including layer `index`.
    pub fn pools_before(&self, index: usize) -> usize {
        self.layers[..=index].iter().filter(|l| matches!(l.kind, LayerKind::MaxPool)).count()
    }
}

/// Layers whose Gram matrices (`gram_layers`) and raw responses
/// (`feature_layers`) enter the synthesis objective.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSelection {
    pub gram_layers: Vec<String>,
    pub feature_layers: Vec<String>,
}

impl Default for LayerSelection {
    fn default() -> Self {
        Self::vgg_default()
    }
}

impl LayerSelection {
    pub fn vgg_default() -> Self {
        Self {
            gram_layers: (1..=5).map(|b| format!("relu{b}_1")).collect(),
            feature_layers: vec!["relu4_2".into()],
        }
    }

    pub fn new(gram_layers: Vec<String>, feature_layers: Vec<String>) -> Self {
        Self { gram_layers, feature_layers }
    }

    /// First `n` Gram layers, same feature layers.
    pub fn with_gram_count(&self, n: usize) -> Self {
        Self { gram_layers: self.gram_layers.iter().take(n).cloned().collect(), feature_layers: self.feature_layers.clone() }
    }

    pub fn validate(&self, net: &NetworkSpec) -> Result<()> {
        for name in self.gram_layers.iter().chain(&self.feature_layers) {
            if net.index_of(name).is_none() {
                return Err(Error::InvalidArgument(format!("layer {name} not present in the network")));
            }
        }
        Ok(())
    }

    /// Stable 64-bit digest of the selection, used as a cache key.
    pub fn digest(&self) -> u64 {
        let mut h = crc32fast::Hasher::new();
        for n in &self.gram_layers {
            h.update(n.as_bytes());
            h.update(&[0]);
        }
        h.update(&[1]);
        let lo = h.clone().finalize() as u64;
        for n in &self.feature_layers {
            h.update(n.as_bytes());
            h.update(&[0]);
        }
        (lo << 32) | h.finalize() as u64
    }
}

/// Recorded activations keyed by layer name, in request order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMaps {
    entries: Vec<(String, Tensor)>,
}

impl FeatureMaps {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn push(&mut self, name: String, t: Tensor) {
        self.entries.push((name, t));
    }
}
