//! One line per acceptance criterion: `PASS|FAIL name measured tolerance`.
//! Exits nonzero when any criterion fails.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use texface::analysis::toy::{detail_texture, detail_texture_set};
use texface::analysis::{fit_convex_weights, mask_out, read_database, self_targets, texture_grams, write_database, BlendMode, CorrelationDatabase, TargetSet};
use texface::morphable::toy::{toy_init, toy_landmarks, toy_model, toy_scene};
use texface::morphable::{bake_lowfreq_texture, extract_partial_albedo, fit_model, render_synth, FitOptions, SegmentationMask};
use texface::net::toy::{tiny_network, toy_network};
use texface::net::{gram, read_weights, write_weights, ConvLayer, FeatureMaps, ForwardPass, GramStack, Layer, LayerKind, LayerSelection, NetworkSpec};
use texface::numerics::{color_convert, BlendSystem, ColorDirection, ImageBuffer, SimplexLsqOptions, Tensor};
use texface::synthesis::{synthesis_loss_grad, synthesize, SynthesisConfig};
use texface_cli::config::{PipelineConfig, Settings};
use texface_cli::{eval, fixture, stages};

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, name: &str, ok: bool, measured: String, tolerance: &str, started: Instant) {
        if !ok {
            self.failures += 1;
        }
        println!("{} {name} measured={measured} tolerance={tolerance} time={:.1}s", if ok { "PASS" } else { "FAIL" }, started.elapsed().as_secs_f64());
    }

    fn info(&self, name: &str, measured: String) {
        println!("INFO {name} measured={measured}");
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn random_conv(rng: &mut ChaCha8Rng, out_ch: usize, in_ch: usize) -> ConvLayer {
    let w = random_vec(rng, out_ch * in_ch * 9, 0.5);
    let b = random_vec(rng, out_ch, 0.2);
    ConvLayer::new(out_ch, in_ch, 3, 3, w, b).unwrap()
}

fn layer(name: &str, kind: LayerKind) -> Layer {
    Layer { name: name.into(), kind }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rel_err(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(1e-12)
}

/// Directional central difference of `f` at `x` along `v` against `<grad, v>`.
fn directional(f: &mut dyn FnMut(&ImageBuffer) -> f64, x: &ImageBuffer, grad: &[f64], v: &[f64]) -> f64 {
    let h = 1e-5;
    let shift = |s: f64| {
        let data = x.data().iter().zip(v).map(|(a, d)| a + s * d).collect();
        ImageBuffer::from_planar(x.width(), x.height(), x.channels(), data).unwrap()
    };
    let fd = (f(&shift(h)) - f(&shift(-h))) / (2.0 * h);
    rel_err(fd, dot(grad, v))
}

fn layer_case(rng: &mut ChaCha8Rng, kind: &str) -> f64 {
    let (w, h) = (rng.gen_range(6..10), rng.gen_range(6..10));
    let c = rng.gen_range(2..5);
    let mut layers = vec![layer("conv1_1", LayerKind::Conv(random_conv(rng, c, 3)))];
    if kind != "conv" {
        layers.push(layer("relu1_1", LayerKind::Relu));
    }
    if kind == "maxpool" {
        layers.push(layer("pool1", LayerKind::MaxPool));
    }
    let net = NetworkSpec::new(layers, [0.4, 0.5, 0.6]).unwrap();
    let last = net.layers().len() - 1;
    let img = ImageBuffer::from_planar(w, h, 3, (0..3 * w * h).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let pass = ForwardPass::run(&net, &img, last).unwrap();
    let shape = pass.output(last).shape().to_vec();
    let cot = Tensor::new(shape.clone(), random_vec(rng, shape.iter().product(), 1.0)).unwrap();
    let grad = pass.backward(&net, &[(last, &cot)]).unwrap();
    let v = random_vec(rng, img.data().len(), 1.0);
    let mut f = |x: &ImageBuffer| dot(ForwardPass::run(&net, x, last).unwrap().output(last).data(), cot.data());
    directional(&mut f, &img, grad.data(), &v)
}

fn loss_case(rng: &mut ChaCha8Rng, kind: &str) -> f64 {
    let (net, selection, channels, size) = if kind == "gram" {
        let c = rng.gen_range(2..6);
        let net = NetworkSpec::new(vec![layer("conv1_1", LayerKind::Conv(random_conv(rng, c, 3)))], [0.5; 3]).unwrap();
        (net, LayerSelection::new(vec!["conv1_1".into()], vec![]), 3, 7)
    } else {
        let net = tiny_network(rng.gen());
        (net, LayerSelection::new(vec!["relu1_1".into(), "relu2_1".into()], vec!["relu2_1".into()]), 1, 10)
    };
    let cfg = SynthesisConfig { alpha: rng.gen_range(1.0..100.0), selection: selection.clone(), ..SynthesisConfig::default() };
    let random_image = |rng: &mut ChaCha8Rng| ImageBuffer::from_planar(size, size, channels, (0..channels * size * size).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let img = random_image(rng);
    let other = random_image(rng);
    let targets = if kind == "gram" {
        let pass = ForwardPass::run(&net, &other, 0).unwrap();
        TargetSet { grams: GramStack { layers: vec![("conv1_1".into(), gram(pass.output(0)))] }, features: FeatureMaps::default(), weights: vec![1.0] }
    } else {
        self_targets(&other.replicate3(), &net, &selection).unwrap()
    };
    let (_, grad) = synthesis_loss_grad(&img, &targets, &net, &cfg).unwrap();
    let v = random_vec(rng, img.data().len(), 1.0);
    let mut f = |x: &ImageBuffer| synthesis_loss_grad(x, &targets, &net, &cfg).unwrap().0.total;
    directional(&mut f, &img, grad.data(), &v)
}

fn gradient_suite(r: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for kind in ["conv", "relu", "maxpool", "gram", "synthesis"] {
        for _ in 0..5 {
            let e = if matches!(kind, "gram" | "synthesis") { loss_case(&mut rng, kind) } else { layer_case(&mut rng, kind) };
            worst = worst.max(e);
            cases += 1;
        }
    }
    r.line("gradient_suite", worst < 1e-4 && cases >= 20 && t.elapsed().as_secs() < 60, format!("max_rel_err={worst:.2e},cases={cases}"), "<1e-4,>=20,<60s", t);
}

fn masked_database() -> (Vec<GramStack>, Vec<ImageBuffer>, SegmentationMask) {
    let net = toy_network();
    let entries = detail_texture_set(8, 64);
    let db = CorrelationDatabase::build(&net, &entries, &LayerSelection::vgg_default()).unwrap();
    let mask = SegmentationMask::new(64, 64, (0..64 * 64).map(|i| i % 64 < 40).collect()).unwrap();
    let textures: Vec<ImageBuffer> = entries.into_iter().map(|(_, t)| t).collect();
    let masked = db.masked_stacks(&textures, &mask, &net).unwrap();
    (masked.to_vec(), textures, mask)
}

fn planted_recovery(r: &mut Report, masked: &[GramStack]) {
    let t = Instant::now();
    let planted = [0.05, 0.2, 0.0, 0.15, 0.1, 0.3, 0.12, 0.08];
    let stacks: Vec<&GramStack> = masked.iter().collect();
    let target = GramStack::blend(&stacks, &planted).unwrap();
    let fit = fit_convex_weights(&target, masked, BlendMode::Convex, &SimplexLsqOptions::default()).unwrap();
    let err = fit.weights.iter().zip(&planted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    r.line("planted_recovery_k8", err <= 1e-3 && t.elapsed().as_secs() < 60, format!("linf={err:.2e}"), "<=1e-3", t);

    let t = Instant::now();
    let basis = &masked[..3];
    let outside = GramStack::blend(&stacks[..4], &[0.2371, 0.3113, 0.2016, 0.25]).unwrap();
    let input = &outside;
    let opts = SimplexLsqOptions::default();
    let fit = fit_convex_weights(input, basis, BlendMode::Convex, &opts).unwrap();
    let tm = input.matrices();
    let bm: Vec<Vec<&[f64]>> = basis.iter().map(|s| s.matrices()).collect();
    let system = BlendSystem::new(&tm, &bm, &opts).unwrap();
    let steps = 1000;
    let mut best = (f64::INFINITY, [0.0; 3]);
    for i in 0..=steps {
        for j in 0..=steps - i {
            let w = [i as f64 / steps as f64, j as f64 / steps as f64, (steps - i - j) as f64 / steps as f64];
            let f = system.objective(&w);
            if f < best.0 {
                best = (f, w);
            }
        }
    }
    let err = fit.weights.iter().zip(&best.1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let ok = err <= 1e-3 && fit.objective <= best.0 * (1.0 + 1e-12);
    let w = fit.weights.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join("/");
    r.line("grid_oracle_k3", ok, format!("linf={err:.2e},w={w},objective={:.6e},grid={:.6e}", fit.objective, best.0), "<=1e-3,objective<=grid", t);
}

fn self_identification(r: &mut Report, masked: &[GramStack], textures: &[ImageBuffer], mask: &SegmentationMask) {
    let t = Instant::now();
    let net = toy_network();
    let opts = SimplexLsqOptions::default();
    let mut min_self = f64::INFINITY;
    let mut constraint_err = 0.0f64;
    for (k, input) in masked.iter().enumerate() {
        let fit = fit_convex_weights(input, masked, BlendMode::Convex, &opts).unwrap();
        min_self = min_self.min(fit.weights[k]);
        let sum: f64 = fit.weights.iter().sum();
        let neg = fit.weights.iter().fold(0.0f64, |a, &w| a.max(-w));
        constraint_err = constraint_err.max((sum - 1.0).abs()).max(neg);
    }
    r.line("self_identification", min_self >= 0.95, format!("min_weight={min_self:.4}"), ">=0.95", t);

    let t = Instant::now();
    let corrupted = textures[0].gaussian_blur(2.0);
    let input = texture_grams(&net, &mask_out(&corrupted, mask).unwrap(), &LayerSelection::vgg_default().gram_layers).unwrap();
    let convex = fit_convex_weights(&input, masked, BlendMode::Convex, &opts).unwrap();
    let sum: f64 = convex.weights.iter().sum();
    constraint_err = constraint_err.max((sum - 1.0).abs()).max(convex.weights.iter().fold(0.0f64, |a, &w| a.max(-w)));
    r.line("convex_constraints", constraint_err <= 1e-12, format!("max_violation={:.1e}", constraint_err.abs()), "w>=0,sum=1 (1e-12)", t);
    let free = fit_convex_weights(&input, masked, BlendMode::Unconstrained, &opts).unwrap();
    let negatives = free.weights.iter().filter(|w| **w < 0.0).count();
    r.line("unconstrained_negative_weight", negatives >= 1, format!("negative={negatives},min={:.3}", free.weights.iter().cloned().fold(f64::INFINITY, f64::min)), ">=1", t);
}

fn fitting_round_trip(r: &mut Report) {
    let t = Instant::now();
    let size = 256;
    let model = toy_model();
    let truth = toy_scene(&model, size, size);
    let (image, _) = render_synth(&model, &truth, size, size).unwrap();
    let landmarks = toy_landmarks(&model, &truth);
    let init = toy_init(&model, size, size);
    let report = fit_model(&image, &landmarks, &SegmentationMask::full(size, size), &model, &init, &FitOptions::default()).unwrap();
    let (fitted, _) = render_synth(&model, &report.params, size, size).unwrap();
    let rmse = (fitted.data().iter().zip(image.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / image.data().len() as f64).sqrt();
    let fl = toy_landmarks(&model, &report.params);
    let lm = (fl.0.iter().zip(&landmarks.0).map(|(a, b)| (a.point[0] - b.point[0]).powi(2) + (a.point[1] - b.point[1]).powi(2)).sum::<f64>() / fl.len() as f64).sqrt();
    let ok = report.schedule() == vec![30, 10, 3] && rmse < 2.0 / 255.0 && lm < 1.0 && t.elapsed().as_secs() < 120;
    r.line("fitting_round_trip_256", ok, format!("rmse*255={:.3},landmark_rmse={lm:.2e}px", rmse * 255.0), "rmse<2/255,landmarks<1px,<120s", t);
}

fn extraction_error(size: usize) -> (f64, f64) {
    let model = toy_model();
    let truth = toy_scene(&model, size, size);
    let (image, _) = render_synth(&model, &truth, size, size).unwrap();
    let part = extract_partial_albedo(&image, &truth, &SegmentationMask::full(size, size), &model, 256).unwrap();
    let bake = bake_lowfreq_texture(&model, &truth.coeffs.albedo, 256).unwrap();
    let mut worst = 0.0f64;
    for y in 0..256 {
        for x in 0..256 {
            if part.validity.get(x, y) {
                for c in 0..3 {
                    worst = worst.max((part.albedo.get(c, x, y) - bake.get(c, x, y)).abs());
                }
            }
        }
    }
    (worst, part.valid_fraction())
}

fn shading_factorization(r: &mut Report) {
    let t = Instant::now();
    let (worst, valid) = extraction_error(1024);
    r.line("shading_factorization_1024", worst <= 1e-3 && valid > 0.2, format!("max_abs_err={worst:.2e},valid={valid:.3}"), "<=1e-3", t);
    let (worst, valid) = extraction_error(256);
    r.info("shading_factorization_256", format!("max_abs_err={worst:.2e},valid={valid:.3}"));
}

fn synthesis_criteria(r: &mut Report) {
    let net = toy_network();
    let t = Instant::now();
    let sharp = detail_texture(3, 128);
    let cfg = SynthesisConfig { max_iterations: 200, ..SynthesisConfig::default() };
    let fixed = synthesize(&sharp, &self_targets(&sharp, &net, &cfg.selection).unwrap(), &net, &cfg).unwrap();
    let drift = fixed.texture.data().iter().zip(sharp.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    r.line("synthesis_fixed_point", drift <= 1e-6, format!("max_abs_change={drift:.1e}"), "<=1e-6", t);

    let t = Instant::now();
    let init = sharp.gaussian_blur(2.0);
    let out = synthesize(&init, &self_targets(&sharp, &net, &cfg.selection).unwrap(), &net, &cfg).unwrap();
    let first = out.trace[0].total;
    let reduction = 1.0 - out.final_loss() / first;
    r.line(
        "synthesis_convergence_128",
        reduction >= 0.99 && t.elapsed().as_secs() < 1800,
        format!("reduction={:.4}%,iterations={}", 100.0 * reduction, out.iterations),
        ">=99%,<30min",
        t,
    );
    let yiq = color_convert(&init, ColorDirection::RgbToYiq).unwrap();
    let same = (1..3).all(|c| out.yiq.plane(c).iter().zip(yiq.plane(c)).all(|(a, b)| a.to_bits() == b.to_bits()));
    r.line("synthesis_iq_bit_equal", same, format!("{same}"), "bit-equal", t);
}

fn fixture_config(dir: &Path, out: &Path) -> PipelineConfig {
    let mut s = Settings::load(&dir.join("fixture.conf")).unwrap();
    let mut flags = Settings::default();
    flags.set("out", out.to_str().unwrap(), Path::new(".")).unwrap();
    s.overlay(flags);
    PipelineConfig::from_settings(&s).unwrap()
}

fn layer_ablation(r: &mut Report, dir: &Path) {
    let t = Instant::now();
    let out = tempfile::tempdir().unwrap();
    let rows = eval::eval_layers(&fixture_config(dir, out.path())).unwrap();
    let lap = |n: usize| rows.iter().find(|row| row.gram_layers == n).map_or(f64::NAN, |row| row.laplacian_variance);
    let (five, one) = (lap(5), lap(1));
    r.line("layer_ablation", five >= one, format!("lapvar5={five:.4e},lapvar1={one:.4e}"), "5 layers >= 1 layer", t);
}

fn persistence(r: &mut Report) {
    let t = Instant::now();
    let net = toy_network();
    let bytes = write_weights(&net).unwrap();
    let back = read_weights(&bytes).unwrap();
    let vggw_ok = back == net && write_weights(&back).unwrap() == bytes;
    let db = CorrelationDatabase::build(&net, &detail_texture_set(3, 32), &LayerSelection::vgg_default()).unwrap();
    let dbytes = write_database(&db).unwrap();
    let dback = read_database(&dbytes).unwrap();
    let grdb_ok = dback == db && write_database(&dback).unwrap() == dbytes;
    let corrupt = |b: &[u8]| {
        let mut c = b.to_vec();
        let mid = c.len() / 2;
        c[mid] ^= 0x10;
        c
    };
    let rejected = matches!(read_weights(&corrupt(&bytes)), Err(texface::Error::Checksum { .. }))
        && matches!(read_database(&corrupt(&dbytes)), Err(texface::Error::Checksum { .. }));
    r.line("persistence", vggw_ok && grdb_ok && rejected, format!("vggw={vggw_ok},grdb={grdb_ok},crc_rejected={rejected}"), "bit-exact,rejected", t);
}

fn determinism(r: &mut Report, dir: &Path) {
    let t = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = stages::run_pipeline(&fixture_config(dir, a.path())).unwrap();
    let second = stages::run_pipeline(&fixture_config(dir, b.path())).unwrap();
    let lines = stages::parse_manifest(&first).len();
    r.line("pipeline_determinism", first == second && lines == stages::ARTIFACTS.len(), format!("identical={},artifacts={lines}", first == second), "identical", t);
}

fn main() {
    let mut r = Report { failures: 0 };
    let fixture_dir = tempfile::tempdir().unwrap();
    fixture::make_fixture(fixture_dir.path()).unwrap();

    gradient_suite(&mut r);
    let (masked, textures, mask) = masked_database();
    planted_recovery(&mut r, &masked);
    self_identification(&mut r, &masked, &textures, &mask);
    fitting_round_trip(&mut r);
    shading_factorization(&mut r);
    synthesis_criteria(&mut r);
    layer_ablation(&mut r, fixture_dir.path());
    persistence(&mut r);
    determinism(&mut r, fixture_dir.path());

    println!("acceptance: {} failed", r.failures);
    if r.failures > 0 {
        std::process::exit(1);
    }
}
