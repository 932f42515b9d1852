//! Procedural skin-like detail textures: pores, freckles, and fine line
//! patterns whose density, size, and contrast vary with the seed, so their
//! correlation statistics differ from one seed to the next.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::ImageBuffer;

struct Style {
    base: [f64; 3],
    pore_density: f64,
    pore_radius: f64,
    pore_depth: f64,
    freckles_per_area: f64,
    freckle_radius: f64,
    line_angle: f64,
    line_frequency: f64,
    line_amplitude: f64,
}

fn style(rng: &mut ChaCha8Rng) -> Style {
    Style {
        base: [rng.gen_range(0.62..0.8), rng.gen_range(0.45..0.6), rng.gen_range(0.38..0.5)],
        pore_density: rng.gen_range(0.002..0.02),
        pore_radius: rng.gen_range(0.6..2.0),
        pore_depth: rng.gen_range(0.05..0.25),
        freckles_per_area: rng.gen_range(0.0..0.003),
        freckle_radius: rng.gen_range(1.5..4.5),
        line_angle: rng.gen_range(0.0..PI),
        line_frequency: rng.gen_range(0.05..0.35),
        line_amplitude: rng.gen_range(0.0..0.05),
    }
}

fn stamp(img: &mut ImageBuffer, cx: f64, cy: f64, radius: f64, delta: [f64; 3]) {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let reach = (2.5 * radius).ceil() as isize;
    for y in (cy as isize - reach).max(0)..=(cy as isize + reach).min(h - 1) {
        for x in (cx as isize - reach).max(0)..=(cx as isize + reach).min(w - 1) {
            let d2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
            let g = (-d2 / (2.0 * radius * radius)).exp();
            let mut c = img.rgb(x as usize, y as usize);
            for k in 0..3 {
                c[k] += g * delta[k];
            }
            img.set_rgb(x as usize, y as usize, c);
        }
    }
}

/// A `size x size` RGB detail texture in `[0, 1]`.
pub fn detail_texture(seed: u64, size: usize) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd37a_11 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let s = style(&mut rng);
    let (dx, dy) = (s.line_angle.cos(), s.line_angle.sin());
    let phase = rng.gen_range(0.0..2.0 * PI);
    let mut img = ImageBuffer::from_fn(size, size, 3, |c, x, y| {
        let t = (x as f64 * dx + y as f64 * dy) * 2.0 * PI * s.line_frequency + phase;
        s.base[c] * (1.0 + s.line_amplitude * t.sin())
    })
    .expect("nonzero size");
    let area = (size * size) as f64;
    for _ in 0..(s.freckles_per_area * area).round() as usize {
        let (cx, cy) = (rng.gen_range(0.0..size as f64), rng.gen_range(0.0..size as f64));
        let strength = rng.gen_range(0.04..0.12);
        stamp(&mut img, cx, cy, s.freckle_radius, [-0.6 * strength, -0.9 * strength, -strength]);
    }
    for _ in 0..(s.pore_density * area).round() as usize {
        let (cx, cy) = (rng.gen_range(0.0..size as f64), rng.gen_range(0.0..size as f64));
        let depth = s.pore_depth * rng.gen_range(0.5..1.0);
        stamp(&mut img, cx, cy, s.pore_radius, [-depth; 3]);
    }
    img.clamped()
}

/// `(id, texture)` pairs `toy-000`, `toy-001`, ...
pub fn detail_texture_set(count: usize, size: usize) -> Vec<(String, ImageBuffer)> {
    (0..count as u64).map(|k| (format!("toy-{k:03}"), detail_texture(k, size))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_distinct() {
        assert_eq!(detail_texture(4, 48), detail_texture(4, 48));
        assert_ne!(detail_texture(4, 48), detail_texture(5, 48));
        let t = detail_texture(2, 48);
        assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
