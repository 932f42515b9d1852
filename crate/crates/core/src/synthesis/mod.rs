//! Texture synthesis by L-BFGS on the luma channel: match the target
//! feature responses on the feature layers and the target correlations on
//! the Gram layers, starting from the low-frequency albedo.
//!
//! ```text
//! loss = sum_{l in L_F} ||F^l(I) - F^l_target||^2
//!      + alpha * sum_{l in L_G} ||G^l(I) - G^l_target||^2
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::analysis::TargetSet;
use crate::error::{Error, Result};
use crate::net::{gram, ForwardPass, LayerSelection, NetworkSpec};
use crate::numerics::{color_convert, lbfgs_minimize, ColorDirection, ImageBuffer, LbfgsOptions, Tensor, Termination};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PixelBounds {
    /// Optimize unconstrained and clamp luma to `[0, 1]` once at the end.
    #[default]
    ClampAtEnd,
    Unclamped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    pub alpha: f64,
    pub max_iterations: usize,
    pub history: usize,
    pub selection: LayerSelection,
    pub bounds: PixelBounds,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self { alpha: 2000.0, max_iterations: 1000, history: 10, selection: LayerSelection::vgg_default(), bounds: PixelBounds::ClampAtEnd }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha {} must be finite and nonnegative", self.alpha)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("synthesis needs at least one iteration".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Unweighted feature term.
    pub feature: f64,
    /// Gram term including the factor `alpha`.
    pub gram: f64,
    /// Per-layer contributions in selection order (feature layers first),
    /// each as it enters `total`.
    pub layers: Vec<(String, f64)>,
}

fn layer_index(net: &NetworkSpec, name: &str) -> Result<usize> {
    net.index_of(name).ok_or_else(|| Error::InvalidArgument(format!("unknown layer {name}")))
}

/// Loss and its gradient with respect to `image` (same channel count).
/// A single-channel image is fed to the network replicated to RGB.
pub fn synthesis_loss_grad(
    image: &ImageBuffer,
    targets: &TargetSet,
    net: &NetworkSpec,
    cfg: &SynthesisConfig,
) -> Result<(LossBreakdown, ImageBuffer)> {
    let sel = &cfg.selection;
    let feature_idx = sel.feature_layers.iter().map(|n| layer_index(net, n)).collect::<Result<Vec<_>>>()?;
    let gram_idx = sel.gram_layers.iter().map(|n| layer_index(net, n)).collect::<Result<Vec<_>>>()?;
    let Some(&last) = feature_idx.iter().chain(&gram_idx).max() else {
        return Err(Error::InvalidArgument("empty layer selection".into()));
    };
    let pass = ForwardPass::run(net, image, last)?;
    let mut layers = Vec::with_capacity(feature_idx.len() + gram_idx.len());
    let mut cotangents: Vec<(usize, Tensor)> = Vec::with_capacity(layers.capacity());
    let (mut feature, mut gram_term) = (0.0, 0.0);

    for (name, &idx) in sel.feature_layers.iter().zip(&feature_idx) {
        let f = pass.output(idx);
        let target = targets.features.get(name).ok_or_else(|| Error::InvalidArgument(format!("no feature target for {name}")))?;
        if target.shape() != f.shape() {
            return Err(Error::DimensionMismatch(format!("feature target {name} has shape {:?}, response has {:?}", target.shape(), f.shape())));
        }
        let diff: Vec<f64> = f.data().iter().zip(target.data()).map(|(a, b)| a - b).collect();
        let loss: f64 = diff.iter().map(|d| d * d).sum();
        feature += loss;
        layers.push((name.clone(), loss));
        cotangents.push((idx, Tensor::new(f.shape().to_vec(), diff.iter().map(|d| 2.0 * d).collect())?));
    }

    for (name, &idx) in sel.gram_layers.iter().zip(&gram_idx) {
        let f = pass.output(idx);
        let target = targets.grams.get(name).ok_or_else(|| Error::InvalidArgument(format!("no Gram target for {name}")))?;
        let g = gram(f);
        let (n, m) = f.matrix_dims();
        if target.dim() != n {
            return Err(Error::DimensionMismatch(format!("Gram target {name} is {0}x{0}, layer has {n} channels", target.dim())));
        }
        let d: Vec<f64> = g.as_slice().iter().zip(target.as_slice()).map(|(a, b)| a - b).collect();
        let loss = cfg.alpha * d.iter().map(|v| v * v).sum::<f64>();
        gram_term += loss;
        layers.push((name.clone(), loss));
        // d/dF alpha ||F F'/M - A||^2 = alpha (4/M) (G - A) F for symmetric G, A
        let scale = cfg.alpha * 4.0 / m as f64;
        let fd = f.data();
        let mut cot = vec![0.0; n * m];
        for a in 0..n {
            let row = &mut cot[a * m..(a + 1) * m];
            for b in 0..n {
                let coef = scale * d[a * n + b];
                if coef == 0.0 {
                    continue;
                }
                let fb = &fd[b * m..(b + 1) * m];
                row.iter_mut().zip(fb).for_each(|(r, v)| *r += coef * v);
            }
        }
        cotangents.push((idx, Tensor::new(f.shape().to_vec(), cot)?));
    }

    let refs: Vec<(usize, &Tensor)> = cotangents.iter().map(|(i, t)| (*i, t)).collect();
    let g = pass.backward(net, &refs)?.into_data();
    let grad = if image.channels() == 1 {
        let plane = image.pixels();
        let data = (0..plane).map(|i| g[i] + g[plane + i] + g[2 * plane + i]).collect();
        ImageBuffer::from_planar(image.width(), image.height(), 1, data)?
    } else {
        ImageBuffer::from_planar(image.width(), image.height(), 3, g)?
    };
    Ok((LossBreakdown { total: feature + gram_term, feature, gram: gram_term, layers }, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub total: f64,
    pub feature: f64,
    pub gram: f64,
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    /// Final RGB texture clamped to `[0, 1]`.
    pub texture: ImageBuffer,
    /// Optimized `Y` with the initialization's `I` and `Q` planes unchanged.
    pub yiq: ImageBuffer,
    /// Loss at the start and after every accepted iteration.
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub termination: Termination,
    pub alpha: f64,
}

impl SynthesisResult {
    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.total)
    }
}

pub fn synthesize(init: &ImageBuffer, targets: &TargetSet, net: &NetworkSpec, cfg: &SynthesisConfig) -> Result<SynthesisResult> {
    cfg.validate()?;
    if init.channels() != 3 {
        return Err(Error::InvalidArgument("synthesis initialization must be RGB".into()));
    }
    let yiq = color_convert(init, ColorDirection::RgbToYiq)?;
    let (w, h) = (init.width(), init.height());
    let y0 = yiq.plane(0).to_vec();
    let mut breakdown: HashMap<u64, (f64, f64)> = HashMap::new();
    let mut failure: Option<Error> = None;
    let mut objective = |x: &[f64], grad: &mut [f64]| -> f64 {
        let img = match ImageBuffer::from_planar(w, h, 1, x.to_vec()) {
            Ok(img) => img,
            Err(_) => return f64::INFINITY,
        };
        match synthesis_loss_grad(&img, targets, net, cfg) {
            Ok((loss, g)) => {
                grad.copy_from_slice(g.data());
                breakdown.insert(loss.total.to_bits(), (loss.feature, loss.gram));
                loss.total
            }
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let opts = LbfgsOptions {
        history: cfg.history,
        max_iterations: cfg.max_iterations,
        gradient_tolerance: 0.0,
        ..LbfgsOptions::default()
    };
    let report = lbfgs_minimize(&mut objective, &y0, &opts);
    if let Some(e) = failure {
        return Err(e);
    }
    let report = report?;
    let trace = report
        .trace
        .iter()
        .enumerate()
        .map(|(iteration, &total)| {
            let (feature, gram) = breakdown.get(&total.to_bits()).copied().unwrap_or((f64::NAN, f64::NAN));
            TraceRow { iteration, total, feature, gram }
        })
        .collect();
    let mut out = yiq;
    for (o, v) in out.plane_mut(0).iter_mut().zip(&report.x) {
        *o = match cfg.bounds {
            PixelBounds::ClampAtEnd => v.clamp(0.0, 1.0),
            PixelBounds::Unclamped => *v,
        };
    }
    let texture = color_convert(&out, ColorDirection::YiqToRgb)?.clamped();
    Ok(SynthesisResult { texture, yiq: out, trace, iterations: report.iterations, termination: report.termination, alpha: cfg.alpha })
}

/// `iteration,total,feature,gram` rows.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("iteration,total,feature,gram\n");
    for r in trace {
        let _ = writeln!(s, "{},{:?},{:?},{:?}", r.iteration, r.total, r.feature, r.gram);
    }
    s
}

/// Variance of the 4-neighbour Laplacian of luma over interior pixels; a
/// measure of high-frequency content.
pub fn laplacian_variance(image: &ImageBuffer) -> Result<f64> {
    let y = crate::numerics::luma(image)?;
    let (w, h) = (y.width(), y.height());
    if w < 3 || h < 3 {
        return Err(Error::InvalidArgument(format!("{w}x{h} image too small for a Laplacian")));
    }
    let mut vals = Vec::with_capacity((w - 2) * (h - 2));
    for j in 1..h - 1 {
        for i in 1..w - 1 {
            vals.push(y.get(0, i - 1, j) + y.get(0, i + 1, j) + y.get(0, i, j - 1) + y.get(0, i, j + 1) - 4.0 * y.get(0, i, j));
        }
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    Ok(vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{self_targets, toy::detail_texture};
    use crate::net::toy::{tiny_network, toy_network};
    use crate::numerics::luma;

    fn tiny_selection() -> LayerSelection {
        LayerSelection::new(vec!["relu1_1".into(), "relu2_1".into()], vec!["relu2_1".into()])
    }

    #[test]
    fn own_targets_have_zero_loss_and_gradient() {
        let net = toy_network();
        let t = detail_texture(3, 32);
        let cfg = SynthesisConfig::default();
        let targets = self_targets(&t, &net, &cfg.selection).unwrap();
        let (loss, grad) = synthesis_loss_grad(&luma(&t).unwrap(), &targets, &net, &cfg).unwrap();
        assert_eq!(loss.total, 0.0);
        assert!(grad.data().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let net = tiny_network(11);
        let cfg = SynthesisConfig { alpha: 3.0, selection: tiny_selection(), ..Default::default() };
        let targets = self_targets(&detail_texture(1, 8), &net, &cfg.selection).unwrap();
        let img = luma(&detail_texture(2, 8)).unwrap();
        let (_, grad) = synthesis_loss_grad(&img, &targets, &net, &cfg).unwrap();
        let h = 1e-5;
        for i in (0..64).step_by(5) {
            let mut p = img.clone();
            p.data_mut()[i] += h;
            let mut m = img.clone();
            m.data_mut()[i] -= h;
            let fp = synthesis_loss_grad(&p, &targets, &net, &cfg).unwrap().0.total;
            let fm = synthesis_loss_grad(&m, &targets, &net, &cfg).unwrap().0.total;
            let fd = (fp - fm) / (2.0 * h);
            let g = grad.data()[i];
            assert!((fd - g).abs() <= 1e-5 * g.abs().max(1e-3), "pixel {i}: {g} vs {fd}");
        }
    }

    #[test]
    fn breakdown_sums_to_total() {
        let net = toy_network();
        let cfg = SynthesisConfig::default();
        let targets = self_targets(&detail_texture(1, 32), &net, &cfg.selection).unwrap();
        let (loss, _) = synthesis_loss_grad(&luma(&detail_texture(2, 32)).unwrap(), &targets, &net, &cfg).unwrap();
        let sum: f64 = loss.layers.iter().map(|(_, v)| v).sum();
        assert!((sum - loss.total).abs() <= 1e-12 * loss.total);
        assert!((loss.feature + loss.gram - loss.total).abs() <= 1e-12 * loss.total);
    }

    #[test]
    fn gram_gradient_is_linear_in_alpha() {
        let net = tiny_network(5);
        let sel = LayerSelection::new(vec!["relu1_1".into(), "relu2_1".into()], vec![]);
        let targets = self_targets(&detail_texture(1, 8), &net, &sel).unwrap();
        let img = luma(&detail_texture(2, 8)).unwrap();
        let one = SynthesisConfig { alpha: 1.5, selection: sel.clone(), ..Default::default() };
        let two = SynthesisConfig { alpha: 3.0, selection: sel, ..Default::default() };
        let (_, g1) = synthesis_loss_grad(&img, &targets, &net, &one).unwrap();
        let (_, g2) = synthesis_loss_grad(&img, &targets, &net, &two).unwrap();
        for (a, b) in g1.data().iter().zip(g2.data()) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn chroma_is_untouched_and_trace_monotone() {
        let net = toy_network();
        let sharp = detail_texture(7, 32);
        let cfg = SynthesisConfig { max_iterations: 15, ..Default::default() };
        let targets = self_targets(&sharp, &net, &cfg.selection).unwrap();
        let init = sharp.gaussian_blur(1.2);
        let out = synthesize(&init, &targets, &net, &cfg).unwrap();
        let yiq = color_convert(&init, ColorDirection::RgbToYiq).unwrap();
        for c in 1..3 {
            assert!(out.yiq.plane(c).iter().zip(yiq.plane(c)).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        assert!(out.trace.windows(2).all(|w| w[1].total <= w[0].total));
        assert!(out.final_loss() < out.trace[0].total);
        assert!(out.trace.iter().all(|r| r.feature.is_finite() && r.gram.is_finite()));
        let again = synthesize(&init, &targets, &net, &cfg).unwrap();
        assert_eq!(again.texture, out.texture);
    }

    #[test]
    fn config_and_csv() {
        assert!(SynthesisConfig { alpha: -1.0, ..Default::default() }.validate().is_err());
        assert!(SynthesisConfig { max_iterations: 0, ..Default::default() }.validate().is_err());
        let csv = trace_csv(&[TraceRow { iteration: 0, total: 2.5, feature: 0.5, gram: 2.0 }]);
        assert_eq!(csv, "iteration,total,feature,gram\n0,2.5,0.5,2.0\n");
    }

    #[test]
    fn laplacian_variance_of_flat_and_checker() {
        let flat = ImageBuffer::filled(8, 8, 3, 0.4).unwrap();
        assert_eq!(laplacian_variance(&flat).unwrap(), 0.0);
        let checker = ImageBuffer::from_fn(8, 8, 1, |_, x, y| ((x + y) % 2) as f64).unwrap();
        assert!(laplacian_variance(&checker).unwrap() > 10.0);
    }
}
