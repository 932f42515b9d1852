use proptest::prelude::*;

use texface::analysis::{assemble_targets, fit_convex_weights, BlendMode, CorrelationDatabase};
use texface::analysis::toy::detail_texture_set;
use texface::dbtool::remove_specular_suv;
use texface::net::toy::toy_network;
use texface::net::{forward, gram, GramStack, LayerSelection};
use texface::numerics::*;

fn finite_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, len)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn random_stack(seed: &[f64], dims: &[usize], m: usize) -> GramStack {
    let mut k = 0;
    let mut next = || {
        k += 1;
        seed[k % seed.len()] * ((k as f64) * 0.731).sin()
    };
    let layers = dims
        .iter()
        .enumerate()
        .map(|(l, &n)| {
            let data: Vec<f64> = (0..n * m).map(|_| next()).collect();
            (format!("l{l}"), gram(&Tensor::new(vec![n, m, 1], data).unwrap()))
        })
        .collect();
    GramStack { layers }
}

struct Linear {
    blocks: Vec<(Vec<f64>, Vec<f64>, f64)>,
    n: usize,
}

impl LeastSquaresProblem for Linear {
    type State = Vec<f64>;

    fn tangent_dim(&self) -> usize {
        self.n
    }

    fn residuals(&self, x: &Vec<f64>, with_jacobian: bool) -> texface::Result<Vec<ResidualBlock>> {
        Ok(self
            .blocks
            .iter()
            .map(|(a, b, w)| {
                let m = b.len();
                let residual = (0..m).map(|i| (0..self.n).map(|j| a[i * self.n + j] * x[j]).sum::<f64>() - b[i]).collect();
                ResidualBlock { loss: BlockLoss::Squared, weight: *w, residual, jacobian: if with_jacobian { a.clone() } else { Vec::new() } }
            })
            .collect())
    }

    fn retract(&self, x: &Vec<f64>, delta: &[f64]) -> Vec<f64> {
        x.iter().zip(delta).map(|(a, d)| a + d).collect()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_lands_on_simplex_and_is_nearest(v in finite_vec(1..12), probe in finite_vec(12..13)) {
        let w = project_to_simplex(&v).unwrap().into_vec();
        prop_assert!(w.iter().all(|x| *x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let other = project_to_simplex(&probe[..v.len()]).unwrap().into_vec();
        prop_assert!(sq_dist(&w, &v) <= sq_dist(&other, &v) + 1e-12);
        let again = project_to_simplex(&w).unwrap().into_vec();
        prop_assert!(sq_dist(&again, &w) < 1e-24);
    }

    #[test]
    fn simplex_lsq_beats_vertices_and_uniform(seed in finite_vec(4..9), k in 2usize..7) {
        let stacks: Vec<GramStack> = (0..=k).map(|i| {
            let s: Vec<f64> = seed.iter().map(|v| v + i as f64 * 0.37).collect();
            random_stack(&s, &[3, 2], 5)
        }).collect();
        let (target, basis) = stacks.split_first().unwrap();
        let fit = fit_convex_weights(target, basis, BlendMode::Convex, &SimplexLsqOptions::default()).unwrap();
        prop_assert!(fit.weights.iter().all(|w| *w >= 0.0));
        prop_assert!((fit.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let t = target.matrices();
        let b: Vec<Vec<&[f64]>> = basis.iter().map(|s| s.matrices()).collect();
        let system = BlendSystem::new(&t, &b, &SimplexLsqOptions::default()).unwrap();
        let slack = 1e-9 * (1.0 + fit.objective.abs());
        prop_assert!(fit.objective <= system.objective(SimplexWeights::uniform(k).as_slice()) + slack);
        for i in 0..k {
            prop_assert!(fit.objective <= system.objective(SimplexWeights::vertex(k, i).as_slice()) + slack);
        }
    }

    #[test]
    fn lbfgs_solves_convex_quadratics(d in 1usize..9, entries in finite_vec(81..82), rhs in finite_vec(9..10)) {
        // A = M'M + I
        let m = &entries[..d * d];
        let a: Vec<f64> = (0..d * d).map(|ij| {
            let (i, j) = (ij / d, ij % d);
            (0..d).map(|k| m[k * d + i] * m[k * d + j]).sum::<f64>() * 0.1 + if i == j { 1.0 } else { 0.0 }
        }).collect();
        let b = &rhs[..d];
        let mut f = |x: &[f64], g: &mut [f64]| {
            let mut val = 0.0;
            for i in 0..d {
                let ax: f64 = (0..d).map(|j| a[i * d + j] * x[j]).sum();
                g[i] = ax - b[i];
                val += x[i] * (0.5 * ax - b[i]);
            }
            val
        };
        let opts = LbfgsOptions { max_iterations: d + 5, ..LbfgsOptions::default() };
        let r = lbfgs_minimize(&mut f, &vec![0.0; d], &opts).unwrap();
        prop_assert!(r.gradient_norm < 1e-10, "d {d}: gradient {} after {} iterations ({:?})", r.gradient_norm, r.iterations, r.termination);
        prop_assert!(r.trace.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn gauss_newton_ignores_block_order(entries in finite_vec(60..61), targets in finite_vec(20..21), weights in prop::collection::vec(0.1..3.0f64, 5), rot in 1usize..5) {
        let n = 3;
        let mut blocks: Vec<_> = (0..5).map(|k| {
            let a: Vec<f64> = entries[k * 12..k * 12 + 12].to_vec();
            (a, targets[k * 4..k * 4 + 4].to_vec(), weights[k])
        }).collect();
        blocks.push((vec![0.5, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.5], vec![0.0; 3], 1.0));
        let mut rotated = blocks.clone();
        rotated.rotate_left(rot);
        rotated.swap(0, 5);
        let opts = GaussNewtonOptions::with_steps(3);
        let a = gauss_newton_irls(&Linear { blocks, n }, &vec![0.0; n], &opts).unwrap();
        let b = gauss_newton_irls(&Linear { blocks: rotated, n }, &vec![0.0; n], &opts).unwrap();
        let scale = 1.0 + a.state.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(sq_dist(&a.state, &b.state).sqrt() < 1e-7 * scale);
        prop_assert!((a.energy - b.energy).abs() <= 1e-9 * (1.0 + a.energy));
    }

    #[test]
    fn gram_is_symmetric_psd(n in 1usize..6, m in 1usize..20, data in finite_vec(120..121), x in finite_vec(6..7)) {
        let f = Tensor::new(vec![n, m, 1], data[..n * m].to_vec()).unwrap();
        let g = gram(&f);
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(g.get(i, j), g.get(j, i));
                q += x[i] * g.get(i, j) * x[j];
            }
        }
        prop_assert!(q >= -1e-10);
    }

    #[test]
    fn first_convolution_commutes_with_shifts(pixels in prop::collection::vec(0.0..1.0f64, 3 * 16 * 16), dx in 0usize..4, dy in 0usize..4) {
        let net = toy_network();
        let img = ImageBuffer::from_planar(16, 16, 3, pixels).unwrap();
        let shifted = ImageBuffer::from_fn(16, 16, 3, |c, x, y| img.get(c, (x + 16 - dx) % 16, (y + 16 - dy) % 16)).unwrap();
        let layers = vec!["conv1_1".to_string()];
        let a = forward(&net, &img, &layers).unwrap();
        let b = forward(&net, &shifted, &layers).unwrap();
        let (fa, fb) = (a.get("conv1_1").unwrap(), b.get("conv1_1").unwrap());
        let ch = fa.shape()[0];
        for c in 0..ch {
            for y in dy + 1..15 {
                for x in dx + 1..15 {
                    let va = fa.data()[(c * 16 + y - dy) * 16 + x - dx];
                    let vb = fb.data()[(c * 16 + y) * 16 + x];
                    prop_assert!((va - vb).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn convex_weights_are_never_negative(seed in finite_vec(4..9), k in 2usize..6) {
        let stacks: Vec<GramStack> = (0..=k).map(|i| {
            let s: Vec<f64> = seed.iter().map(|v| v * (1.0 + 0.3 * i as f64)).collect();
            random_stack(&s, &[4], 3)
        }).collect();
        let (target, basis) = stacks.split_first().unwrap();
        let fit = fit_convex_weights(target, basis, BlendMode::Convex, &SimplexLsqOptions::default()).unwrap();
        prop_assert!(fit.weights.iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn specular_removal_is_idempotent(pixels in prop::collection::vec(0.0..1.0f64, 3 * 8 * 8), light in prop::collection::vec(0.2..1.0f64, 3), p in 50.0..100.0f64) {
        let img = ImageBuffer::from_planar(8, 8, 3, pixels).unwrap();
        let light = [light[0], light[1], light[2]];
        let once = remove_specular_suv(&img, light, p).unwrap();
        let twice = remove_specular_suv(&once, light, p).unwrap();
        prop_assert!(sq_dist(once.data(), twice.data()).sqrt() < 1e-9);
    }

    #[test]
    fn color_round_trip(pixels in prop::collection::vec(0.0..1.0f64, 3 * 5 * 4)) {
        let img = ImageBuffer::from_planar(5, 4, 3, pixels).unwrap();
        let back = color_convert(&color_convert(&img, ColorDirection::RgbToYiq).unwrap(), ColorDirection::YiqToRgb).unwrap();
        prop_assert!(sq_dist(img.data(), back.data()).sqrt() < 1e-12);
    }
}

#[test]
fn unconstrained_weights_can_go_negative() {
    let basis: Vec<GramStack> = (0..3).map(|i| random_stack(&[1.0 + i as f64, -0.5, 0.25 * i as f64], &[3], 4)).collect();
    let stacks: Vec<&GramStack> = basis.iter().collect();
    let target = GramStack::blend(&stacks, &[1.6, -0.4, -0.2]).unwrap();
    let free = fit_convex_weights(&target, &basis, BlendMode::Unconstrained, &SimplexLsqOptions::default()).unwrap();
    assert!(free.weights.iter().any(|w| *w < 0.0), "{:?}", free.weights);
    let convex = fit_convex_weights(&target, &basis, BlendMode::Convex, &SimplexLsqOptions::default()).unwrap();
    assert!(convex.weights.iter().all(|w| *w >= 0.0));
}

#[test]
fn targets_are_linear_in_weights() {
    let net = toy_network();
    let selection = LayerSelection::vgg_default();
    let textures = detail_texture_set(3, 32);
    let db = CorrelationDatabase::build(&net, &textures, &selection).unwrap();
    let lowfreq = textures[0].1.gaussian_blur(2.0);
    let (w1, w2, a) = ([0.2, 0.5, 0.3], [0.7, 0.0, 0.3], 0.35);
    let mix: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + (1.0 - a) * y).collect();
    let t1 = assemble_targets(&w1, &db, &lowfreq, &net, &selection).unwrap();
    let t2 = assemble_targets(&w2, &db, &lowfreq, &net, &selection).unwrap();
    let tm = assemble_targets(&mix, &db, &lowfreq, &net, &selection).unwrap();
    for ((g1, g2), gm) in t1.grams.layers.iter().zip(&t2.grams.layers).zip(&tm.grams.layers) {
        for ((x, y), z) in g1.1.as_slice().iter().zip(g2.1.as_slice()).zip(gm.1.as_slice()) {
            assert!((a * x + (1.0 - a) * y - z).abs() < 1e-12 * (1.0 + z.abs()));
        }
    }
    assert_eq!(t1.features, tm.features);
}
