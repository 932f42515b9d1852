//! Small VGG-shaped networks for tests, fixtures, and the demo, plus the
//! reference VGG-19 convolution table used to validate exported weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ConvLayer, NetworkSpec};
use crate::error::{Error, Result};

/// `(name, out_ch, in_ch)` for the 16 convolutions of VGG-19.
pub fn vgg19_conv_table() -> Vec<(String, usize, usize)> {
    let blocks = [(1, 2, 64), (2, 2, 128), (3, 4, 256), (4, 4, 512), (5, 4, 512)];
    let mut table = Vec::new();
    let mut in_ch = 3;
    for (block, count, width) in blocks {
        for i in 1..=count {
            table.push((format!("conv{block}_{i}"), width, in_ch));
            in_ch = width;
        }
    }
    table
}

/// Checks that `net` has exactly the VGG-19 convolution layout.
pub fn check_vgg19(net: &NetworkSpec) -> Result<()> {
    let table = vgg19_conv_table();
    let convs: Vec<_> = net.convs().collect();
    if convs.len() != table.len() {
        return Err(Error::format("VGGW", format!("{} conv layers, VGG-19 has {}", convs.len(), table.len())));
    }
    for ((name, conv), (ref_name, out_ch, in_ch)) in convs.iter().zip(&table) {
        if name != ref_name || conv.out_ch != *out_ch || conv.in_ch != *in_ch || conv.kh != 3 || conv.kw != 3 {
            return Err(Error::format(
                "VGGW",
                format!("{name} is {}x{}x{}x{}, expected {ref_name} {out_ch}x{in_ch}x3x3", conv.out_ch, conv.in_ch, conv.kh, conv.kw),
            ));
        }
    }
    Ok(())
}

fn random_conv(rng: &mut ChaCha8Rng, out_ch: usize, in_ch: usize) -> ConvLayer {
    let scale = (2.0 / (in_ch * 9) as f64).sqrt();
    let weights = (0..out_ch * in_ch * 9).map(|_| rng.gen_range(-1.0..1.0) * scale * 1.7).collect();
    let bias = (0..out_ch).map(|_| rng.gen_range(-0.02..0.05)).collect();
    ConvLayer::new(out_ch, in_ch, 3, 3, weights, bias).expect("consistent toy dims")
}

/// First-layer bank: smoothing, derivative, and Laplacian stencils applied
/// to the channel sum, followed by seeded random filters.
fn first_layer(rng: &mut ChaCha8Rng, out_ch: usize) -> ConvLayer {
    #[rustfmt::skip]
    let stencils: [[f64; 9]; 5] = [
        [1.0, 2.0, 1.0,  2.0, 4.0, 2.0,  1.0, 2.0, 1.0],
        [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0],
        [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0],
        [0.0, -1.0, 0.0, -1.0, 4.0, -1.0, 0.0, -1.0, 0.0],
        [2.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, -1.0, -2.0],
    ];
    let gains = [0.12, 0.35, 0.35, 0.6, 0.35];
    let mut weights = vec![0.0; out_ch * 27];
    let mut bias = vec![0.0; out_ch];
    for o in 0..out_ch {
        for i in 0..3 {
            for k in 0..9 {
                weights[(o * 3 + i) * 9 + k] = if o < stencils.len() {
                    stencils[o][k] * gains[o] / 3.0
                } else {
                    rng.gen_range(-1.0..1.0) * 0.45
                };
            }
        }
        bias[o] = if o == 0 { 0.3 } else { rng.gen_range(-0.01..0.03) };
    }
    ConvLayer::new(out_ch, 3, 3, 3, weights, bias).expect("consistent toy dims")
}

/// Six-convolution network with the VGG naming scheme: one conv per block
/// except block 4, which has `conv4_1` and `conv4_2`.
pub fn toy_network() -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0019);
    let widths = [("conv1_1", 8, 3), ("conv2_1", 12, 8), ("conv3_1", 16, 12), ("conv4_1", 16, 16), ("conv4_2", 16, 16), ("conv5_1", 16, 16)];
    let convs = widths
        .iter()
        .map(|&(name, out_ch, in_ch)| {
            let conv = if in_ch == 3 { first_layer(&mut rng, out_ch) } else { random_conv(&mut rng, out_ch, in_ch) };
            (name.to_string(), conv)
        })
        .collect();
    NetworkSpec::from_convs(convs, [0.5, 0.5, 0.5]).expect("toy network is well formed")
}

/// Two convolutions with a pool between them, for gradient checks.
pub fn tiny_network(seed: u64) -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let convs = vec![("conv1_1".to_string(), random_conv(&mut rng, 4, 3)), ("conv2_1".to_string(), random_conv(&mut rng, 5, 4))];
    NetworkSpec::from_convs(convs, [0.4, 0.5, 0.6]).expect("tiny network is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vgg19_table_shape() {
        let t = vgg19_conv_table();
        assert_eq!(t.len(), 16);
        let widths: Vec<usize> = t.iter().map(|(_, o, _)| *o).collect();
        assert_eq!(&widths[..2], &[64, 64]);
        assert_eq!(widths[2], 128);
        assert_eq!(widths[4], 256);
        assert!(widths[8..].iter().all(|w| *w == 512));
    }

    #[test]
    fn toy_layout() {
        let net = toy_network();
        assert_eq!(net.convs().count(), 6);
        for name in ["relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu4_2", "relu5_1", "pool5"] {
            assert!(net.index_of(name).is_some(), "{name}");
        }
        assert!(check_vgg19(&net).is_err());
    }
}
