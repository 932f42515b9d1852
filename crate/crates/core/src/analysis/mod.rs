//! Texture analysis: masked Gram correlations of the visible texels, the
//! convex blend of database correlations that best explains them, and the
//! full-face synthesis targets.
//!
//! All correlations are computed on luma `Y`, which the network sees
//! replicated to its three input channels.

mod database;
pub mod toy;

pub use database::{persisted_texture_path, read_database, write_database, CorrelationDatabase, CorrelationEntry, GRDB_VERSION};

use crate::error::{Error, Result};
use crate::morphable::SegmentationMask;
use crate::net::{forward, gram_stack, FeatureMaps, GramStack, LayerSelection, NetworkSpec};
use crate::numerics::simplex::solve_blend_system;
use crate::numerics::{luma, BlendSystem, ImageBuffer, SimplexLsqOptions, SimplexWeights};

/// Intensity given to texels outside the mask.
pub const MASK_FILL: f64 = 0.5;

/// Replaces every invalid texel by [`MASK_FILL`] in all channels.
pub fn mask_out(texture: &ImageBuffer, validity: &SegmentationMask) -> Result<ImageBuffer> {
    validity.matches(texture)?;
    let mut out = texture.clone();
    let plane = texture.pixels();
    for (i, &valid) in validity.as_slice().iter().enumerate() {
        if !valid {
            for c in 0..texture.channels() {
                out.data_mut()[c * plane + i] = MASK_FILL;
            }
        }
    }
    Ok(out)
}

/// Gram stack of a texture's luma at `layers`.
pub fn texture_grams(net: &NetworkSpec, texture: &ImageBuffer, layers: &[String]) -> Result<GramStack> {
    let y = luma(texture)?;
    gram_stack(&forward(net, &y, layers)?, layers)
}

/// Resamples to `width x height` when the sizes differ.
pub fn resample_to(texture: &ImageBuffer, width: usize, height: usize) -> Result<ImageBuffer> {
    texture.resize_bilinear(width, height)
}

/// `G_M^l(I_k) = gram(forward(mask_out(I_k, mask)))` for every texture, each
/// resampled to the mask resolution first.
pub fn masked_gram_database(
    textures: &[ImageBuffer],
    mask: &SegmentationMask,
    net: &NetworkSpec,
    layers: &[String],
) -> Result<Vec<GramStack>> {
    textures
        .iter()
        .map(|t| {
            let t = resample_to(t, mask.width(), mask.height())?;
            texture_grams(net, &mask_out(&t, mask)?, layers)
        })
        .collect()
}

/// Stable hash of a mask's size and contents.
pub fn mask_hash(mask: &SegmentationMask) -> u64 {
    let mut h = crc32fast::Hasher::new();
    h.update(&(mask.width() as u64).to_le_bytes());
    h.update(&(mask.height() as u64).to_le_bytes());
    let lo = h.clone().finalize() as u64;
    let mut byte = 0u8;
    for (i, &v) in mask.as_slice().iter().enumerate() {
        byte |= (v as u8) << (i % 8);
        if i % 8 == 7 {
            h.update(&[byte]);
            byte = 0;
        }
    }
    h.update(&[byte]);
    (lo << 32) | h.finalize() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlendMode {
    /// Simplex-constrained least squares.
    #[default]
    Convex,
    /// Ordinary least squares; weights may be negative and need not sum to 1.
    Unconstrained,
    /// All weight on the single closest entry.
    Nearest,
}

impl std::str::FromStr for BlendMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convex" => Ok(Self::Convex),
            "unconstrained" => Ok(Self::Unconstrained),
            "nearest" => Ok(Self::Nearest),
            _ => Err(Error::InvalidArgument(format!("blend mode {s} (expected convex, unconstrained, or nearest)"))),
        }
    }
}

impl std::fmt::Display for BlendMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Convex => "convex",
            Self::Unconstrained => "unconstrained",
            Self::Nearest => "nearest",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendFit {
    pub weights: Vec<f64>,
    pub mode: BlendMode,
    pub objective: f64,
    /// Frobenius norm of the blended residual, per layer.
    pub layer_residuals: Vec<f64>,
    pub iterations: usize,
}

/// Blend weights of the masked database stacks that best reproduce the
/// input's masked stack.
pub fn fit_convex_weights(input: &GramStack, basis: &[GramStack], mode: BlendMode, options: &SimplexLsqOptions) -> Result<BlendFit> {
    for (k, entry) in basis.iter().enumerate() {
        if entry.dims() != input.dims() {
            return Err(Error::DimensionMismatch(format!("database entry {k} has layer dims {:?}, input has {:?}", entry.dims(), input.dims())));
        }
    }
    let target = input.matrices();
    let stacks: Vec<Vec<&[f64]>> = basis.iter().map(|s| s.matrices()).collect();
    let system = BlendSystem::new(&target, &stacks, options)?;
    let (weights, iterations) = match mode {
        BlendMode::Convex => {
            let sol = solve_blend_system(&system, options);
            (sol.weights.into_vec(), sol.iterations)
        }
        BlendMode::Unconstrained => (system.unconstrained_minimizer(), 0),
        BlendMode::Nearest => {
            let k = system.entries();
            let best = (0..k)
                .map(|i| (i, system.objective(SimplexWeights::vertex(k, i).as_slice())))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
                .0;
            (SimplexWeights::vertex(k, best).into_vec(), 0)
        }
    };
    Ok(BlendFit { objective: system.objective(&weights), layer_residuals: system.layer_residuals(&weights), weights, mode, iterations })
}

/// Full-face synthesis targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    /// `sum_k w_k G^l(I_k)` over the full database stacks.
    pub grams: GramStack,
    /// Responses of the low-frequency albedo at the feature layers.
    pub features: FeatureMaps,
    pub weights: Vec<f64>,
}

pub fn assemble_targets(
    weights: &[f64],
    db: &CorrelationDatabase,
    lowfreq: &ImageBuffer,
    net: &NetworkSpec,
    selection: &LayerSelection,
) -> Result<TargetSet> {
    if weights.len() != db.len() {
        return Err(Error::DimensionMismatch(format!("{} weights for {} database entries", weights.len(), db.len())));
    }
    if db.layer_names() != selection.gram_layers {
        return Err(Error::DimensionMismatch(format!("database layers {:?}, selection {:?}", db.layer_names(), selection.gram_layers)));
    }
    let stacks: Vec<&GramStack> = db.entries().iter().map(|e| &e.stack).collect();
    let grams = GramStack::blend(&stacks, weights)?;
    let features = forward(net, &luma(lowfreq)?, &selection.feature_layers)?;
    Ok(TargetSet { grams, features, weights: weights.to_vec() })
}

/// Targets reproduced exactly by `texture` itself.
pub fn self_targets(texture: &ImageBuffer, net: &NetworkSpec, selection: &LayerSelection) -> Result<TargetSet> {
    let y = luma(texture)?;
    let mut layers = selection.gram_layers.clone();
    layers.extend(selection.feature_layers.iter().cloned());
    let maps = forward(net, &y, &layers)?;
    let grams = gram_stack(&maps, &selection.gram_layers)?;
    let mut features = FeatureMaps::default();
    for name in &selection.feature_layers {
        features.push(name.clone(), maps.get(name).expect("recorded").clone());
    }
    Ok(TargetSet { grams, features, weights: vec![1.0] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::toy::toy_network;
    use crate::net::GramMatrix;

    fn half_mask(n: usize) -> SegmentationMask {
        SegmentationMask::new(n, n, (0..n * n).map(|i| (i % n) < n / 2).collect()).unwrap()
    }

    #[test]
    fn mask_out_behaviour() {
        let t = toy::detail_texture(1, 32);
        let full = SegmentationMask::full(32, 32);
        assert_eq!(mask_out(&t, &full).unwrap(), t);
        let none = SegmentationMask::new(32, 32, vec![false; 1024]).unwrap();
        assert!(mask_out(&t, &none).unwrap().data().iter().all(|v| *v == MASK_FILL));
        let half = half_mask(32);
        let once = mask_out(&t, &half).unwrap();
        assert_eq!(mask_out(&once, &half).unwrap(), once);
        assert!(mask_out(&t, &SegmentationMask::full(16, 16)).is_err());
    }

    #[test]
    fn masked_stack_matches_manual_composition() {
        let net = toy_network();
        let layers = LayerSelection::vgg_default().gram_layers;
        let textures: Vec<_> = (0..2).map(|s| toy::detail_texture(s, 32)).collect();
        let mask = half_mask(32);
        let stacks = masked_gram_database(&textures, &mask, &net, &layers).unwrap();
        let y = luma(&mask_out(&textures[1], &mask).unwrap()).unwrap();
        let maps = forward(&net, &y, &layers).unwrap();
        for (name, g) in &stacks[1].layers {
            assert_eq!(g, &crate::net::gram(maps.get(name).unwrap()));
        }
        let full = masked_gram_database(&textures, &SegmentationMask::full(32, 32), &net, &layers).unwrap();
        assert_eq!(full[0], texture_grams(&net, &textures[0], &layers).unwrap());
    }

    #[test]
    fn mask_hash_distinguishes_masks() {
        let a = half_mask(16);
        let mut bits = a.as_slice().to_vec();
        bits[200] = !bits[200];
        let b = SegmentationMask::new(16, 16, bits).unwrap();
        assert_ne!(mask_hash(&a), mask_hash(&b));
        assert_eq!(mask_hash(&a), mask_hash(&a.clone()));
        assert_ne!(mask_hash(&SegmentationMask::full(4, 8)), mask_hash(&SegmentationMask::full(8, 4)));
    }

    fn stack(vals: &[f64]) -> GramStack {
        GramStack { layers: vec![("a".into(), GramMatrix::from_data(2, vals.to_vec()).unwrap())] }
    }

    #[test]
    fn nearest_picks_closest_entry() {
        let basis = [stack(&[1.0, 0.0, 0.0, 1.0]), stack(&[3.0, 1.0, 1.0, 3.0])];
        let fit = fit_convex_weights(&stack(&[2.8, 1.0, 1.0, 2.9]), &basis, BlendMode::Nearest, &Default::default()).unwrap();
        assert_eq!(fit.weights, vec![0.0, 1.0]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let other = GramStack { layers: vec![("a".into(), GramMatrix::zeros(3))] };
        assert!(fit_convex_weights(&stack(&[1.0; 4]), &[other], BlendMode::Convex, &Default::default()).is_err());
    }

    #[test]
    fn blend_mode_parses() {
        for m in [BlendMode::Convex, BlendMode::Unconstrained, BlendMode::Nearest] {
            assert_eq!(m.to_string().parse::<BlendMode>().unwrap(), m);
        }
        assert!("average".parse::<BlendMode>().is_err());
    }
}
