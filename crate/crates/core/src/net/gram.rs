use super::FeatureMaps;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Channel correlation matrix `F F^T / M` of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    n: usize,
    data: Vec<f64>,
}

impl GramMatrix {
    pub fn from_data(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch(format!("{} values for a {n}x{n} Gram matrix", data.len())));
        }
        Ok(Self { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// `sum_k w_k G_k`, accumulated in index order.
    pub fn weighted_sum(mats: &[&GramMatrix], weights: &[f64]) -> Result<Self> {
        let first = mats.first().ok_or_else(|| Error::InvalidArgument("empty Gram blend".into()))?;
        if mats.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!("{} matrices, {} weights", mats.len(), weights.len())));
        }
        let mut out = GramMatrix::zeros(first.n);
        for (m, &w) in mats.iter().zip(weights) {
            if m.n != first.n {
                return Err(Error::DimensionMismatch(format!("Gram dims {} vs {}", m.n, first.n)));
            }
            out.data.iter_mut().zip(&m.data).for_each(|(o, v)| *o += w * v);
        }
        Ok(out)
    }

    /// Rounds every entry to the nearest `f32`, the on-disk precision.
    pub fn quantized(&self) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&v| v as f32 as f64).collect() }
    }

    pub fn sq_dist(&self, other: &GramMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// `G = F F^T / M` for a `[N, H, W]` activation.
pub fn gram(f: &Tensor) -> GramMatrix {
    let (n, m) = f.matrix_dims();
    let data = f.data();
    let mut g = vec![0.0; n * n];
    for a in 0..n {
        let fa = &data[a * m..(a + 1) * m];
        for b in 0..=a {
            let fb = &data[b * m..(b + 1) * m];
            let v = fa.iter().zip(fb).map(|(x, y)| x * y).sum::<f64>() / m as f64;
            g[a * n + b] = v;
            g[b * n + a] = v;
        }
    }
    GramMatrix { n, data: g }
}

/// Gram matrices for a set of layers, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct GramStack {
    pub layers: Vec<(String, GramMatrix)>,
}

impl GramStack {
    pub fn get(&self, name: &str) -> Option<&GramMatrix> {
        self.layers.iter().find(|(n, _)| n == name).map(|(_, g)| g)
    }

    pub fn matrices(&self) -> Vec<&[f64]> {
        self.layers.iter().map(|(_, g)| g.as_slice()).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.layers.iter().map(|(_, g)| g.dim()).collect()
    }

    pub fn quantized(&self) -> Self {
        Self { layers: self.layers.iter().map(|(n, g)| (n.clone(), g.quantized())).collect() }
    }

    /// Layerwise `sum_k w_k S_k`.
    pub fn blend(stacks: &[&GramStack], weights: &[f64]) -> Result<Self> {
        let first = stacks.first().ok_or_else(|| Error::InvalidArgument("empty stack blend".into()))?;
        let mut layers = Vec::with_capacity(first.layers.len());
        for (l, (name, _)) in first.layers.iter().enumerate() {
            let mats = stacks
                .iter()
                .map(|s| {
                    s.layers
                        .get(l)
                        .filter(|(n, _)| n == name)
                        .map(|(_, g)| g)
                        .ok_or_else(|| Error::DimensionMismatch(format!("stack missing layer {name}")))
                })
                .collect::<Result<Vec<_>>>()?;
            layers.push((name.clone(), GramMatrix::weighted_sum(&mats, weights)?));
        }
        Ok(Self { layers })
    }
}

pub fn gram_stack(maps: &FeatureMaps, layers: &[String]) -> Result<GramStack> {
    let layers = layers
        .iter()
        .map(|name| {
            let f = maps.get(name).ok_or_else(|| Error::InvalidArgument(format!("no activation recorded for {name}")))?;
            Ok((name.clone(), gram(f)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GramStack { layers })
}
