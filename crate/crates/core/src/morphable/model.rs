use crate::error::{Error, Result};

/// Dense `rows x cols` basis stored row-major, so the three rows of vertex
/// `i` are contiguous: `data[(3 * i + k) * cols + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Basis {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!("{} values for a {rows}x{cols} basis", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("basis".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.data[r * self.cols + j]).collect()
    }

    /// `out += B coeffs`.
    fn accumulate(&self, coeffs: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o += self.row(r).iter().zip(coeffs).map(|(b, c)| b * c).sum::<f64>();
        }
    }
}

/// Linear PCA face model over a fixed triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    triangles: Vec<[u32; 3]>,
    mean_shape: Vec<f64>,
    mean_albedo: Vec<f64>,
    id_basis: Basis,
    exp_basis: Basis,
    albedo_basis: Basis,
    sigma_id: Vec<f64>,
    sigma_exp: Vec<f64>,
    sigma_albedo: Vec<f64>,
    uv: Vec<[f64; 2]>,
    vertex_faces: Vec<Vec<u32>>,
}

/// Model coefficient vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Coefficients {
    pub id: Vec<f64>,
    pub exp: Vec<f64>,
    pub albedo: Vec<f64>,
}

impl MorphableModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        triangles: Vec<[u32; 3]>,
        mean_shape: Vec<f64>,
        mean_albedo: Vec<f64>,
        id_basis: Basis,
        exp_basis: Basis,
        albedo_basis: Basis,
        sigma_id: Vec<f64>,
        sigma_exp: Vec<f64>,
        sigma_albedo: Vec<f64>,
        uv: Vec<[f64; 2]>,
    ) -> Result<Self> {
        let n = uv.len();
        if n == 0 {
            return Err(Error::InvalidArgument("model has no vertices".into()));
        }
        for (what, len) in [("mean shape", mean_shape.len()), ("mean albedo", mean_albedo.len())] {
            if len != 3 * n {
                return Err(Error::DimensionMismatch(format!("{what} has {len} values for {n} vertices")));
            }
        }
        for (what, basis, sigma) in
            [("identity", &id_basis, &sigma_id), ("expression", &exp_basis, &sigma_exp), ("albedo", &albedo_basis, &sigma_albedo)]
        {
            if basis.rows != 3 * n {
                return Err(Error::DimensionMismatch(format!("{what} basis has {} rows for {n} vertices", basis.rows)));
            }
            if basis.cols != sigma.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{what} basis has {} columns but {} standard deviations",
                    basis.cols,
                    sigma.len()
                )));
            }
            if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(Error::InvalidArgument(format!("{what} standard deviations must be positive")));
            }
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(Error::InvalidArgument(format!("triangle {t:?} indexes past {n} vertices")));
        }
        if let Some(p) = uv.iter().find(|p| !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1])) {
            return Err(Error::InvalidArgument(format!("uv {p:?} outside the unit square")));
        }
        if mean_shape.iter().chain(&mean_albedo).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model means".into()));
        }
        let mut vertex_faces = vec![Vec::new(); n];
        for (f, t) in triangles.iter().enumerate() {
            for &i in t {
                vertex_faces[i as usize].push(f as u32);
            }
        }
        Ok(Self {
            triangles,
            mean_shape,
            mean_albedo,
            id_basis,
            exp_basis,
            albedo_basis,
            sigma_id,
            sigma_exp,
            sigma_albedo,
            uv,
            vertex_faces,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.uv.len()
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn mean_shape(&self) -> &[f64] {
        &self.mean_shape
    }

    pub fn mean_albedo(&self) -> &[f64] {
        &self.mean_albedo
    }

    pub fn id_basis(&self) -> &Basis {
        &self.id_basis
    }

    pub fn exp_basis(&self) -> &Basis {
        &self.exp_basis
    }

    pub fn albedo_basis(&self) -> &Basis {
        &self.albedo_basis
    }

    pub fn sigma_id(&self) -> &[f64] {
        &self.sigma_id
    }

    pub fn sigma_exp(&self) -> &[f64] {
        &self.sigma_exp
    }

    pub fn sigma_albedo(&self) -> &[f64] {
        &self.sigma_albedo
    }

    pub fn uv(&self) -> &[[f64; 2]] {
        &self.uv
    }

    /// `(d_id, d_exp, d_al)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.id_basis.cols, self.exp_basis.cols, self.albedo_basis.cols)
    }

    pub(crate) fn vertex_faces(&self, v: usize) -> &[u32] {
        &self.vertex_faces[v]
    }

    pub fn zero_coefficients(&self) -> Coefficients {
        let (a, b, c) = self.dims();
        Coefficients { id: vec![0.0; a], exp: vec![0.0; b], albedo: vec![0.0; c] }
    }

    pub fn check_coefficients(&self, coeffs: &Coefficients) -> Result<()> {
        let (a, b, c) = self.dims();
        for (what, got, want) in [("identity", coeffs.id.len(), a), ("expression", coeffs.exp.len(), b), ("albedo", coeffs.albedo.len(), c)] {
            if got != want {
                return Err(Error::DimensionMismatch(format!("{got} {what} coefficients, model has {want}")));
            }
        }
        Ok(())
    }

    pub fn shape(&self, id: &[f64], exp: &[f64]) -> Result<Vec<[f64; 3]>> {
        self.check_len("identity", id.len(), self.id_basis.cols)?;
        self.check_len("expression", exp.len(), self.exp_basis.cols)?;
        let mut flat = self.mean_shape.clone();
        self.id_basis.accumulate(id, &mut flat);
        self.exp_basis.accumulate(exp, &mut flat);
        Ok(to_points(&flat))
    }

    pub fn albedo(&self, al: &[f64]) -> Result<Vec<[f64; 3]>> {
        self.check_len("albedo", al.len(), self.albedo_basis.cols)?;
        let mut flat = self.mean_albedo.clone();
        self.albedo_basis.accumulate(al, &mut flat);
        Ok(to_points(&flat))
    }

    fn check_len(&self, what: &str, got: usize, want: usize) -> Result<()> {
        if got != want {
            return Err(Error::DimensionMismatch(format!("{got} {what} coefficients, model has {want}")));
        }
        Ok(())
    }
}

fn to_points(flat: &[f64]) -> Vec<[f64; 3]> {
    flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

/// `V = mean + A_id a_id + A_exp a_exp`, `I = mean + A_al a_al`.
pub fn evaluate_pca(model: &MorphableModel, id: &[f64], exp: &[f64], al: &[f64]) -> Result<(Vec<[f64; 3]>, Vec<[f64; 3]>)> {
    Ok((model.shape(id, exp)?, model.albedo(al)?))
}

#[inline]
pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Unnormalized vertex normals: the sum of the adjacent face cross products,
/// which weights each face by twice its area.
pub fn vertex_normal_sums(triangles: &[[u32; 3]], vertices: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut sums = vec![[0.0; 3]; vertices.len()];
    for t in triangles {
        let [a, b, c] = t.map(|i| vertices[i as usize]);
        let n = cross(sub(b, a), sub(c, a));
        for &i in t {
            let s = &mut sums[i as usize];
            s[0] += n[0];
            s[1] += n[1];
            s[2] += n[2];
        }
    }
    sums
}

/// Unit vertex normals; isolated or degenerate vertices get `+z`.
pub fn vertex_normals(triangles: &[[u32; 3]], vertices: &[[f64; 3]]) -> Vec<[f64; 3]> {
    vertex_normal_sums(triangles, vertices)
        .into_iter()
        .map(|s| {
            let l = norm(s);
            if l > 0.0 {
                [s[0] / l, s[1] / l, s[2] / l]
            } else {
                [0.0, 0.0, 1.0]
            }
        })
        .collect()
}
