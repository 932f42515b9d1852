use std::fmt::Write as _;

use super::model::{Coefficients, MorphableModel};
use super::sh::SH_LIGHT_LEN;
use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

/// Unit quaternion `(w, x, y, z)`.
pub type Quaternion = [f64; 4];

pub const QUATERNION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    /// Focal length in pixels.
    pub focal: f64,
    /// Principal point in pixels, measured from the top-left image corner.
    pub principal: [f64; 2],
}

impl Camera {
    /// Camera for an image of `width x height` with the principal point at
    /// the image center.
    pub fn centered(focal: f64, width: usize, height: usize) -> Self {
        Self { focal, principal: [width as f64 / 2.0, height as f64 / 2.0] }
    }

    /// The camera whose pixel `(X, Y)` sees the same ray as pixel
    /// `(s X, s Y)` of this camera.
    pub fn decimated(&self, s: usize) -> Self {
        let s = s as f64;
        Self {
            focal: self.focal / s,
            principal: [(self.principal[0] - 0.5) / s + 0.5, (self.principal[1] - 0.5) / s + 0.5],
        }
    }

    #[inline]
    pub fn project(&self, p: [f64; 3]) -> Option<[f64; 2]> {
        (p[2] > 0.0).then(|| [self.focal * p[0] / p[2] + self.principal[0], self.focal * p[1] / p[2] + self.principal[1]])
    }
}

/// Model coefficients, rigid pose, camera, and SH lighting.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub coeffs: Coefficients,
    pub rotation: Quaternion,
    pub translation: [f64; 3],
    pub camera: Camera,
    pub light: [f64; SH_LIGHT_LEN],
}

impl SceneParams {
    pub fn validate(&self, model: &MorphableModel) -> Result<()> {
        model.check_coefficients(&self.coeffs)?;
        let qn = self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (qn - 1.0).abs() > QUATERNION_TOLERANCE {
            return Err(Error::InvalidArgument(format!("rotation quaternion has norm {qn}")));
        }
        if !(self.camera.focal.is_finite() && self.camera.focal > 0.0) {
            return Err(Error::DegenerateCamera(format!("focal length {}", self.camera.focal)));
        }
        let all = self
            .coeffs
            .id
            .iter()
            .chain(&self.coeffs.exp)
            .chain(&self.coeffs.albedo)
            .chain(&self.rotation)
            .chain(&self.translation)
            .chain(&self.camera.principal)
            .chain(&self.light);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scene parameters".into()));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        quaternion_matrix(self.rotation)
    }

    /// Camera-space positions `R V + t`.
    pub fn transform(&self, vertices: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let r = self.rotation_matrix();
        vertices.iter().map(|v| add(mat_vec(&r, *v), self.translation)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# texface scene parameters\n");
        let mut line = |key: &str, vals: &[f64]| {
            s.push_str(key);
            for v in vals {
                let _ = write!(s, " {v:?}");
            }
            s.push('\n');
        };
        line("id", &self.coeffs.id);
        line("exp", &self.coeffs.exp);
        line("albedo", &self.coeffs.albedo);
        line("rotation", &self.rotation);
        line("translation", &self.translation);
        line("focal", &[self.camera.focal]);
        line("principal", &self.camera.principal);
        line("light", &self.light);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::format("scene", msg);
        let mut fields: std::collections::HashMap<&str, Vec<f64>> = Default::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let vals = parts
                .map(|p| p.parse::<f64>().map_err(|_| bad(format!("line {}: bad number {p:?}", n + 1))))
                .collect::<Result<Vec<_>>>()?;
            if fields.insert(key, vals).is_some() {
                return Err(bad(format!("line {}: duplicate key {key}", n + 1)));
            }
        }
        let mut take = |key: &str, len: Option<usize>| -> Result<Vec<f64>> {
            let v = fields.remove(key).ok_or_else(|| bad(format!("missing key {key}")))?;
            match len {
                Some(l) if v.len() != l => Err(bad(format!("{key} has {} values, expected {l}", v.len()))),
                _ => Ok(v),
            }
        };
        let coeffs = Coefficients { id: take("id", None)?, exp: take("exp", None)?, albedo: take("albedo", None)? };
        let q = take("rotation", Some(4))?;
        let t = take("translation", Some(3))?;
        let f = take("focal", Some(1))?;
        let c = take("principal", Some(2))?;
        let l = take("light", Some(SH_LIGHT_LEN))?;
        if let Some(key) = fields.keys().next() {
            return Err(bad(format!("unknown key {key}")));
        }
        let mut light = [0.0; SH_LIGHT_LEN];
        light.copy_from_slice(&l);
        Ok(Self {
            coeffs,
            rotation: [q[0], q[1], q[2], q[3]],
            translation: [t[0], t[1], t[2]],
            camera: Camera { focal: f[0], principal: [c[0], c[1]] },
            light,
        })
    }
}

/// Pinhole projection of `R V + t`; `None` marks points with non-positive
/// depth.
pub fn project_points(camera: &Camera, rotation: &Mat3, translation: [f64; 3], vertices: &[[f64; 3]]) -> Vec<Option<[f64; 2]>> {
    vertices.iter().map(|v| camera.project(add(mat_vec(rotation, *v), translation))).collect()
}

pub fn quaternion_matrix(q: Quaternion) -> Mat3 {
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Rotation by the angle-axis vector `omega`.
pub fn quaternion_exp(omega: [f64; 3]) -> Quaternion {
    let theta = (omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2]).sqrt();
    if theta < 1e-12 {
        return normalize_quaternion([1.0, omega[0] / 2.0, omega[1] / 2.0, omega[2] / 2.0]);
    }
    let s = (theta / 2.0).sin() / theta;
    [(theta / 2.0).cos(), omega[0] * s, omega[1] * s, omega[2] * s]
}

pub fn quaternion_mul(a: Quaternion, b: Quaternion) -> Quaternion {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

pub fn normalize_quaternion(q: Quaternion) -> Quaternion {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| v / n)
}

#[inline]
pub(crate) fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

#[inline]
pub(crate) fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
