//! Real spherical harmonics of bands 0-2 for Lambertian irradiance.
//!
//! Lighting holds 27 coefficients, channel-major: `L[c * 9 + b]`.

use crate::error::{Error, Result};

pub const SH_COEFFS: usize = 9;
pub const SH_LIGHT_LEN: usize = 27;

const C0: f64 = 0.282_094_791_773_878_14; // 1 / (2 sqrt(pi))
const C1: f64 = 0.488_602_511_902_919_9; // sqrt(3 / (4 pi))
const C2: f64 = 1.092_548_430_592_079_2; // sqrt(15 / (4 pi))
const C3: f64 = 0.315_391_565_252_520_05; // sqrt(5 / (16 pi))
const C4: f64 = 0.546_274_215_296_039_6; // sqrt(15 / (16 pi))

/// Basis order: `Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22`.
#[inline]
pub fn sh_basis(n: [f64; 3]) -> [f64; SH_COEFFS] {
    let [x, y, z] = n;
    [
        C0,
        C1 * y,
        C1 * z,
        C1 * x,
        C2 * x * y,
        C2 * y * z,
        C3 * (3.0 * z * z - 1.0),
        C2 * x * z,
        C4 * (x * x - y * y),
    ]
}

/// Gradient of each basis polynomial with respect to `(x, y, z)`.
#[inline]
pub fn sh_basis_gradient(n: [f64; 3]) -> [[f64; 3]; SH_COEFFS] {
    let [x, y, z] = n;
    [
        [0.0, 0.0, 0.0],
        [0.0, C1, 0.0],
        [0.0, 0.0, C1],
        [C1, 0.0, 0.0],
        [C2 * y, C2 * x, 0.0],
        [0.0, C2 * z, C2 * y],
        [0.0, 0.0, 6.0 * C3 * z],
        [C2 * z, 0.0, C2 * x],
        [2.0 * C4 * x, -2.0 * C4 * y, 0.0],
    ]
}

/// Per-channel irradiance `sum_b L[c][b] Y_b(n)`.
#[inline]
pub fn irradiance(light: &[f64; SH_LIGHT_LEN], n: [f64; 3]) -> [f64; 3] {
    let y = sh_basis(n);
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = light[c * 9..c * 9 + 9].iter().zip(&y).map(|(l, b)| l * b).sum();
    }
    out
}

/// Lighting whose irradiance is `level` in every direction.
pub fn constant_light(level: [f64; 3]) -> [f64; SH_LIGHT_LEN] {
    let mut l = [0.0; SH_LIGHT_LEN];
    for c in 0..3 {
        l[c * 9] = level[c] / C0;
    }
    l
}

/// `albedo_c * irradiance_c(n)` per vertex.
pub fn sh_shade(normals: &[[f64; 3]], albedo: &[[f64; 3]], light: &[f64; SH_LIGHT_LEN]) -> Result<Vec<[f64; 3]>> {
    if normals.len() != albedo.len() {
        return Err(Error::DimensionMismatch(format!("{} normals, {} albedo values", normals.len(), albedo.len())));
    }
    normals
        .iter()
        .zip(albedo)
        .enumerate()
        .map(|(i, (n, a))| {
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if (len - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!("normal {i} has length {len}")));
            }
            let e = irradiance(light, *n);
            Ok([a[0] * e[0], a[1] * e[1], a[2] * e[2]])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dc_only_is_direction_independent() {
        let light = constant_light([0.7, 1.0, 1.3]);
        let normals = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.6, -0.8, 0.0]];
        let shaded = sh_shade(&normals, &[[1.0; 3]; 3], &light).unwrap();
        for s in &shaded {
            for c in 0..3 {
                assert!((s[c] - [0.7, 1.0, 1.3][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_light_is_black() {
        let shaded = sh_shade(&[[0.0, 1.0, 0.0]], &[[0.5; 3]], &[0.0; 27]).unwrap();
        assert_eq!(shaded[0], [0.0; 3]);
    }

    #[test]
    fn rejects_non_unit_normal() {
        assert!(sh_shade(&[[0.0, 0.0, 2.0]], &[[1.0; 3]], &[0.0; 27]).is_err());
    }

    #[test]
    fn gradient_matches_differences() {
        let n = [0.3, -0.5, 0.81];
        let g = sh_basis_gradient(n);
        let h = 1e-6;
        for axis in 0..3 {
            let mut p = n;
            let mut m = n;
            p[axis] += h;
            m[axis] -= h;
            let (yp, ym) = (sh_basis(p), sh_basis(m));
            for b in 0..9 {
                assert!(((yp[b] - ym[b]) / (2.0 * h) - g[b][axis]).abs() < 1e-8);
            }
        }
    }
}
