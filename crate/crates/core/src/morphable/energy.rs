//! The fitting energy `w_c E_c + w_lan E_lan + w_reg E_reg` and its
//! Gauss-Newton residual blocks.
//!
//! `E_c` is the mean per-pixel Euclidean RGB distance over mask-valid covered
//! pixels, `E_lan` the mean squared landmark distance, and `E_reg` the sum
//! of squared standardized coefficients.
//!
//! Tangent layout, restricted to the active groups in this order: identity,
//! expression, albedo, rotation (left angle-axis perturbation), translation,
//! focal length, SH lighting.

use super::inputs::{Landmarks, SegmentationMask};
use super::model::{cross, sub, Basis, MorphableModel};
use super::raster::{rasterize, SceneGeometry, SurfacePoint, VisibilityBuffer};
use super::scene::{normalize_quaternion, quaternion_exp, quaternion_mul, Camera, Mat3, SceneParams};
use super::sh::{irradiance, sh_basis, sh_basis_gradient, SH_COEFFS, SH_LIGHT_LEN};
use crate::error::{Error, Result};
use crate::numerics::{BlockLoss, ImageBuffer, LeastSquaresProblem, ResidualBlock};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyWeights {
    pub photometric: f64,
    pub landmark: f64,
    pub regularization: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self { photometric: 1.0, landmark: 10.0, regularization: 2.5e-5 }
    }
}

/// Which parameter groups a solve may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveParams {
    pub id: bool,
    pub exp: bool,
    pub albedo: bool,
    pub rotation: bool,
    pub translation: bool,
    pub focal: bool,
    pub light: bool,
}

impl ActiveParams {
    pub fn all() -> Self {
        Self { id: true, exp: true, albedo: true, rotation: true, translation: true, focal: true, light: true }
    }

    pub fn pose() -> Self {
        Self { id: false, exp: false, albedo: false, rotation: true, translation: true, focal: true, light: false }
    }

    pub fn light_only() -> Self {
        Self { id: false, exp: false, albedo: false, rotation: false, translation: false, focal: false, light: true }
    }

    pub fn except_light() -> Self {
        Self { light: false, ..Self::all() }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    id: Option<usize>,
    exp: Option<usize>,
    albedo: Option<usize>,
    rotation: Option<usize>,
    translation: Option<usize>,
    focal: Option<usize>,
    light: Option<usize>,
    dim: usize,
}

impl Layout {
    fn new(model: &MorphableModel, active: &ActiveParams) -> Self {
        let (d_id, d_exp, d_al) = model.dims();
        let mut dim = 0;
        let mut slot = |on: bool, len: usize| {
            let at = on.then_some(dim);
            if on {
                dim += len;
            }
            at
        };
        let id = slot(active.id, d_id);
        let exp = slot(active.exp, d_exp);
        let albedo = slot(active.albedo, d_al);
        let rotation = slot(active.rotation, 3);
        let translation = slot(active.translation, 3);
        let focal = slot(active.focal, 1);
        let light = slot(active.light, SH_LIGHT_LEN);
        Self { id, exp, albedo, rotation, translation, focal, light, dim }
    }

    fn has_shape(&self) -> bool {
        self.id.is_some() || self.exp.is_some()
    }
}

/// Energy split into its weighted terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms {
    pub photometric: f64,
    pub landmark: f64,
    pub regularization: f64,
    pub total: f64,
    /// Pixels in the mask that the render covers.
    pub pixels: usize,
}

/// One pyramid level of the fitting problem.
pub struct FitProblem<'a> {
    pub model: &'a MorphableModel,
    pub image: &'a ImageBuffer,
    pub mask: &'a SegmentationMask,
    pub landmarks: &'a Landmarks,
    pub weights: EnergyWeights,
    pub active: ActiveParams,
    /// Decimation factor of `image` relative to the camera's resolution.
    pub scale: usize,
    layout: Layout,
}

impl<'a> FitProblem<'a> {
    pub fn new(
        model: &'a MorphableModel,
        image: &'a ImageBuffer,
        mask: &'a SegmentationMask,
        landmarks: &'a Landmarks,
        weights: EnergyWeights,
        active: ActiveParams,
        scale: usize,
    ) -> Result<Self> {
        mask.matches(image)?;
        if image.channels() != 3 {
            return Err(Error::InvalidArgument("fitting needs an RGB image".into()));
        }
        if scale == 0 {
            return Err(Error::InvalidArgument("pyramid scale must be positive".into()));
        }
        if let Some(l) = landmarks.0.iter().find(|l| l.vertex >= model.vertex_count()) {
            return Err(Error::InvalidArgument(format!("landmark vertex {} past {} vertices", l.vertex, model.vertex_count())));
        }
        let layout = Layout::new(model, &active);
        Ok(Self { model, image, mask, landmarks, weights, active, scale, layout })
    }

    pub fn level_camera(&self, params: &SceneParams) -> Camera {
        params.camera.decimated(self.scale)
    }

    /// Visibility of the current render at this level.
    pub fn visibility(&self, params: &SceneParams) -> Result<(SceneGeometry, VisibilityBuffer)> {
        let geom = SceneGeometry::new(self.model, params, &self.level_camera(params))?;
        let vis = rasterize(self.model, &geom, self.image.width(), self.image.height());
        Ok((geom, vis))
    }

    pub fn terms(&self, params: &SceneParams) -> Result<EnergyTerms> {
        let blocks = self.residuals(params, false)?;
        Ok(self.split(&blocks))
    }

    fn split(&self, blocks: &[ResidualBlock]) -> EnergyTerms {
        let mut t = EnergyTerms { photometric: 0.0, landmark: 0.0, regularization: 0.0, total: 0.0, pixels: 0 };
        let n_lan = if self.weights.landmark > 0.0 { self.landmarks.len() } else { 0 };
        let n_reg = usize::from(self.weights.regularization > 0.0);
        let n_pix = blocks.len() - n_lan - n_reg;
        t.pixels = n_pix;
        for (i, b) in blocks.iter().enumerate() {
            let e = b.energy();
            if i < n_pix {
                t.photometric += e;
            } else if i < n_pix + n_lan {
                t.landmark += e;
            } else {
                t.regularization += e;
            }
        }
        t.total = t.photometric + t.landmark + t.regularization;
        t
    }

    /// Blocks in order: photometric pixels (row-major), landmarks,
    /// regularization.
    pub fn blocks_with_visibility(
        &self,
        params: &SceneParams,
        with_jacobian: bool,
        frozen: Option<&VisibilityBuffer>,
    ) -> Result<Vec<ResidualBlock>> {
        let camera = self.level_camera(params);
        let geom = SceneGeometry::new(self.model, params, &camera)?;
        let mut blocks = Vec::new();
        if self.weights.photometric > 0.0 {
            let vis_owned;
            let vis = match frozen {
                Some(v) => v,
                None => {
                    vis_owned = rasterize(self.model, &geom, self.image.width(), self.image.height());
                    &vis_owned
                }
            };
            let mut jac = with_jacobian.then(|| ShapeCache::new(self.model, &geom, &self.layout));
            let pixels: Vec<(usize, usize, u32)> = (0..vis.height())
                .flat_map(|y| (0..vis.width()).map(move |x| (x, y)))
                .filter_map(|(x, y)| vis.triangle(x, y).filter(|_| self.mask.get(x, y)).map(|t| (x, y, t)))
                .collect();
            if pixels.is_empty() {
                return Err(Error::EmptyOverlap("mask and rendered face do not overlap".into()));
            }
            let weight = self.weights.photometric / pixels.len() as f64;
            for &(x, y, t) in &pixels {
                let tri = self.model.triangles()[t as usize];
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                let b = match frozen {
                    Some(_) => pixel_barycentrics(&geom, tri, p)?,
                    None => vis.barycentrics(x, y),
                };
                let s = geom.surface(tri, b);
                let e = irradiance(&params.light, s.normal);
                let target = self.image.rgb(x, y);
                let residual = (0..3).map(|c| s.albedo[c] * e[c] - target[c]).collect();
                let jacobian = match jac.as_mut() {
                    Some(cache) => self.pixel_jacobian(&geom, &camera, params, tri, b, &s, cache),
                    None => Vec::new(),
                };
                blocks.push(ResidualBlock { loss: BlockLoss::Norm, weight, residual, jacobian });
            }
        }
        if self.weights.landmark > 0.0 && !self.landmarks.is_empty() {
            let weight = self.weights.landmark / self.landmarks.len() as f64;
            for l in &self.landmarks.0 {
                let p = geom.camera_points[l.vertex];
                let q = params
                    .camera
                    .project(p)
                    .ok_or_else(|| Error::DegenerateCamera(format!("landmark vertex {} behind the camera", l.vertex)))?;
                let residual = vec![q[0] - l.point[0], q[1] - l.point[1]];
                let jacobian = if with_jacobian { self.landmark_jacobian(&geom, params, l.vertex) } else { Vec::new() };
                blocks.push(ResidualBlock { loss: BlockLoss::Squared, weight, residual, jacobian });
            }
        }
        if self.weights.regularization > 0.0 {
            blocks.push(self.regularization_block(params, with_jacobian));
        }
        Ok(blocks)
    }

    fn regularization_block(&self, params: &SceneParams, with_jacobian: bool) -> ResidualBlock {
        let m = self.model;
        let groups = [
            (&params.coeffs.id, m.sigma_id(), self.layout.id),
            (&params.coeffs.exp, m.sigma_exp(), self.layout.exp),
            (&params.coeffs.albedo, m.sigma_albedo(), self.layout.albedo),
        ];
        let len: usize = groups.iter().map(|(a, _, _)| a.len()).sum();
        let n = self.layout.dim;
        let mut residual = Vec::with_capacity(len);
        let mut jacobian = if with_jacobian { vec![0.0; len * n] } else { Vec::new() };
        for (coeffs, sigma, offset) in groups {
            for (j, (a, s)) in coeffs.iter().zip(sigma).enumerate() {
                if let (Some(o), true) = (offset, with_jacobian) {
                    jacobian[residual.len() * n + o + j] = 1.0 / s;
                }
                residual.push(a / s);
            }
        }
        ResidualBlock { loss: BlockLoss::Squared, weight: self.weights.regularization, residual, jacobian }
    }

    fn landmark_jacobian(&self, geom: &SceneGeometry, params: &SceneParams, v: usize) -> Vec<f64> {
        let n = self.layout.dim;
        let mut jac = vec![0.0; 2 * n];
        let p = geom.camera_points[v];
        let rv = sub(p, params.translation);
        let f = params.camera.focal;
        let (x, y, z) = (p[0], p[1], p[2]);
        let rows = [[f / z, 0.0, -f * x / (z * z)], [0.0, f / z, -f * y / (z * z)]];
        for (a, ja) in rows.iter().enumerate() {
            let row = &mut jac[a * n..(a + 1) * n];
            let w = mat_t_vec(&geom.rotation, *ja);
            self.shape_columns(v, w, row);
            if let Some(o) = self.layout.rotation {
                row[o..o + 3].copy_from_slice(&cross(rv, *ja));
            }
            if let Some(o) = self.layout.translation {
                row[o..o + 3].copy_from_slice(ja);
            }
            if let Some(o) = self.layout.focal {
                row[o] = [x / z, y / z][a];
            }
        }
        jac
    }

    /// `row[shape j] += w . dV_v / d alpha_j` over the active shape groups.
    fn shape_columns(&self, v: usize, w: [f64; 3], row: &mut [f64]) {
        for (basis, offset) in [(self.model.id_basis(), self.layout.id), (self.model.exp_basis(), self.layout.exp)] {
            let Some(o) = offset else { continue };
            for k in 0..3 {
                if w[k] == 0.0 {
                    continue;
                }
                for (j, b) in basis.row(3 * v + k).iter().enumerate() {
                    row[o + j] += w[k] * b;
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn pixel_jacobian(
        &self,
        geom: &SceneGeometry,
        camera: &Camera,
        params: &SceneParams,
        tri: [u32; 3],
        b: [f64; 3],
        s: &SurfacePoint,
        cache: &mut ShapeCache<'_>,
    ) -> Vec<f64> {
        let n = self.layout.dim;
        let mut jac = vec![0.0; 3 * n];
        let lay = &self.layout;
        let y = sh_basis(s.normal);
        let gy = sh_basis_gradient(s.normal);
        let e = irradiance(&params.light, s.normal);
        let q = tri.map(|i| geom.projected[i as usize].expect("rasterized vertices project"));
        let d = super::raster::edge(q[0], q[1], q[2]);
        let grad_b = [
            [(q[1][1] - q[2][1]) / d, (q[2][0] - q[1][0]) / d],
            [(q[2][1] - q[0][1]) / d, (q[0][0] - q[2][0]) / d],
            [(q[0][1] - q[1][1]) / d, (q[1][0] - q[0][0]) / d],
        ];
        let needs_geometry = lay.has_shape() || lay.rotation.is_some() || lay.translation.is_some() || lay.focal.is_some();

        for c in 0..3 {
            let row = &mut jac[c * n..(c + 1) * n];
            // dC/dn on the unit sphere, mapped back through the normalization
            let mut g = [0.0; 3];
            for bi in 0..SH_COEFFS {
                let l = params.light[c * SH_COEFFS + bi];
                for k in 0..3 {
                    g[k] += l * gy[bi][k];
                }
            }
            let g = g.map(|v| v * s.albedo[c]);
            let gn = g[0] * s.normal[0] + g[1] * s.normal[1] + g[2] * s.normal[2];
            let h = [0, 1, 2].map(|k| (g[k] - gn * s.normal[k]) / s.normal_len);

            if let Some(o) = lay.light {
                for bi in 0..SH_COEFFS {
                    row[o + c * SH_COEFFS + bi] = s.albedo[c] * y[bi];
                }
            }
            if let Some(o) = lay.albedo {
                for (k, &vi) in tri.iter().enumerate() {
                    let coef = e[c] * b[k];
                    for (j, a) in self.model.albedo_basis().row(3 * vi as usize + c).iter().enumerate() {
                        row[o + j] += coef * a;
                    }
                }
            }
            if !needs_geometry {
                continue;
            }
            // dC/d beta_j, combined with the pixel-fixed barycentric gradients
            let mut u = [0.0; 2];
            for (j, &vi) in tri.iter().enumerate() {
                let dc = geom.albedo[vi as usize][c] * e[c] + dot3(h, geom.camera_normals[vi as usize]);
                u[0] += dc * grad_b[j][0];
                u[1] += dc * grad_b[j][1];
            }
            if let Some(o) = lay.rotation {
                let mh = cross(s.raw_normal, h);
                for k in 0..3 {
                    row[o + k] += mh[k];
                }
            }
            let h_model = mat_t_vec(&geom.rotation, h);
            for (k, &vi) in tri.iter().enumerate() {
                let vi = vi as usize;
                let pk = geom.camera_points[vi];
                let (x, yy, z) = (pk[0], pk[1], pk[2]);
                let f = camera.focal;
                // v = J_pi^T u: sensitivity of C to this vertex's camera position
                let v = [-f * u[0] / z, -f * u[1] / z, f * (x * u[0] + yy * u[1]) / (z * z)].map(|t| t * b[k]);
                if lay.has_shape() {
                    let w = mat_t_vec(&geom.rotation, v);
                    self.shape_columns(vi, w, row);
                    let hn = h_model.map(|t| t * b[k]);
                    cache.add_normal_columns(vi, hn, row);
                }
                if let Some(o) = lay.rotation {
                    let rv = sub(pk, params.translation);
                    let r = cross(rv, v);
                    for t in 0..3 {
                        row[o + t] += r[t];
                    }
                }
                if let Some(o) = lay.translation {
                    for t in 0..3 {
                        row[o + t] += v[t];
                    }
                }
                if let Some(o) = lay.focal {
                    row[o] -= b[k] * (u[0] * x / z + u[1] * yy / z) / self.scale as f64;
                }
            }
        }
        jac
    }
}

impl LeastSquaresProblem for FitProblem<'_> {
    type State = SceneParams;

    fn tangent_dim(&self) -> usize {
        self.layout.dim
    }

    fn residuals(&self, state: &SceneParams, with_jacobian: bool) -> Result<Vec<ResidualBlock>> {
        self.blocks_with_visibility(state, with_jacobian, None)
    }

    fn retract(&self, state: &SceneParams, delta: &[f64]) -> SceneParams {
        let mut s = state.clone();
        let lay = &self.layout;
        let add = |dst: &mut [f64], offset: Option<usize>| {
            if let Some(o) = offset {
                dst.iter_mut().zip(&delta[o..]).for_each(|(a, d)| *a += d);
            }
        };
        add(&mut s.coeffs.id, lay.id);
        add(&mut s.coeffs.exp, lay.exp);
        add(&mut s.coeffs.albedo, lay.albedo);
        add(&mut s.translation, lay.translation);
        add(&mut s.light, lay.light);
        if let Some(o) = lay.rotation {
            let dq = quaternion_exp([delta[o], delta[o + 1], delta[o + 2]]);
            s.rotation = normalize_quaternion(quaternion_mul(dq, s.rotation));
        }
        if let Some(o) = lay.focal {
            s.camera.focal += delta[o];
        }
        s
    }
}

/// Screen-space barycentrics of `p` in `tri` for the current geometry.
fn pixel_barycentrics(geom: &SceneGeometry, tri: [u32; 3], p: [f64; 2]) -> Result<[f64; 3]> {
    let q = tri.map(|i| geom.projected[i as usize]);
    match q {
        [Some(a), Some(b), Some(c)] => super::raster::barycentric([a, b, c], p)
            .ok_or_else(|| Error::DegenerateCamera("frozen triangle became degenerate".into())),
        _ => Err(Error::DegenerateCamera("frozen triangle behind the camera".into())),
    }
}

/// Lazily computed model-space derivatives of unit vertex normals with
/// respect to the active shape coefficients.
struct ShapeCache<'g> {
    model: &'g MorphableModel,
    geom: &'g SceneGeometry,
    /// `(basis, tangent offset)` for the active shape groups.
    bases: Vec<(&'g Basis, usize)>,
    entries: Vec<Option<Vec<[f64; 3]>>>,
}

impl<'g> ShapeCache<'g> {
    fn new(model: &'g MorphableModel, geom: &'g SceneGeometry, layout: &Layout) -> Self {
        let mut bases = Vec::new();
        if let Some(o) = layout.id {
            bases.push((model.id_basis(), o));
        }
        if let Some(o) = layout.exp {
            bases.push((model.exp_basis(), o));
        }
        Self { model, geom, bases, entries: vec![None; model.vertex_count()] }
    }

    fn compute(&self, v: usize) -> Vec<[f64; 3]> {
        let s = self.geom.normal_sums[v];
        let len = dot3(s, s).sqrt();
        let cols: usize = self.bases.iter().map(|(b, _)| b.cols()).sum();
        if len == 0.0 {
            return vec![[0.0; 3]; cols];
        }
        let n = s.map(|t| t / len);
        let mut out = Vec::with_capacity(cols);
        for (basis, _) in &self.bases {
            let at = |i: u32, j: usize| [0, 1, 2].map(|k| basis.row(3 * i as usize + k)[j]);
            for j in 0..basis.cols() {
                let mut ds = [0.0; 3];
                for &f in self.model.vertex_faces(v) {
                    let t = self.model.triangles()[f as usize];
                    let [a, b, c] = t.map(|i| self.geom.vertices[i as usize]);
                    let [da, db, dc] = t.map(|i| at(i, j));
                    let x = cross(sub(db, da), sub(c, a));
                    let y = cross(sub(b, a), sub(dc, da));
                    for k in 0..3 {
                        ds[k] += x[k] + y[k];
                    }
                }
                let dn = dot3(n, ds);
                out.push([0, 1, 2].map(|k| (ds[k] - dn * n[k]) / len));
            }
        }
        out
    }

    /// `row[shape j] += w . dn_v / d alpha_j`.
    fn add_normal_columns(&mut self, v: usize, w: [f64; 3], row: &mut [f64]) {
        if self.entries[v].is_none() {
            self.entries[v] = Some(self.compute(v));
        }
        let cols = self.entries[v].as_ref().expect("just filled");
        let mut j = 0;
        for (basis, o) in &self.bases {
            for jj in 0..basis.cols() {
                row[o + jj] += dot3(w, cols[j]);
                j += 1;
            }
        }
    }
}

#[inline]
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn mat_t_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

/// Full-resolution energy of `params` with its residual blocks.
pub fn total_energy(
    params: &SceneParams,
    model: &MorphableModel,
    image: &ImageBuffer,
    landmarks: &Landmarks,
    mask: &SegmentationMask,
) -> Result<(EnergyTerms, Vec<ResidualBlock>)> {
    total_energy_weighted(params, model, image, landmarks, mask, EnergyWeights::default())
}

pub fn total_energy_weighted(
    params: &SceneParams,
    model: &MorphableModel,
    image: &ImageBuffer,
    landmarks: &Landmarks,
    mask: &SegmentationMask,
    weights: EnergyWeights,
) -> Result<(EnergyTerms, Vec<ResidualBlock>)> {
    let problem = FitProblem::new(model, image, mask, landmarks, weights, ActiveParams::all(), 1)?;
    let blocks = problem.residuals(params, false)?;
    Ok((problem.split(&blocks), blocks))
}
