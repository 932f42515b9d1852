//! `MMDL` model files.
//!
//! ```text
//! "MMDL" | n u32 | triangle count u32 | d_id u32 | d_exp u32 | d_al u32
//! f32 arrays: mean shape [3n] | mean albedo [3n] | A_id [3n x d_id]
//!             | A_exp [3n x d_exp] | A_al [3n x d_al] (row-major)
//!             | sigma_id | sigma_exp | sigma_al | uv [2n]
//! u32 triangles [3 x count]
//! CRC32 u32 over all preceding bytes
//! ```

use std::path::Path;

use super::model::{Basis, MorphableModel};
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MMDL";
const FORMAT: &str = "MMDL";

pub fn write_model(model: &MorphableModel) -> Vec<u8> {
    let mut w = Writer::new(MAGIC);
    let (d_id, d_exp, d_al) = model.dims();
    for d in [model.vertex_count(), model.triangles().len(), d_id, d_exp, d_al] {
        w.u32(d as u32);
    }
    w.f32s(model.mean_shape());
    w.f32s(model.mean_albedo());
    w.f32s(model.id_basis().data());
    w.f32s(model.exp_basis().data());
    w.f32s(model.albedo_basis().data());
    w.f32s(model.sigma_id());
    w.f32s(model.sigma_exp());
    w.f32s(model.sigma_albedo());
    w.f32s(&model.uv().concat());
    for t in model.triangles() {
        for &i in t {
            w.u32(i);
        }
    }
    w.finish()
}

pub fn read_model(bytes: &[u8]) -> Result<MorphableModel> {
    let mut r = Reader::new(FORMAT, MAGIC, bytes)?;
    let header = || "header".to_string();
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.u32(&header)? as usize;
    }
    let [n, tris, d_id, d_exp, d_al] = dims;
    let rows = n.checked_mul(3).ok_or_else(|| Error::format(FORMAT, "vertex count overflows"))?;
    let size = |cols: usize| rows.checked_mul(cols).ok_or_else(|| Error::format(FORMAT, "basis size overflows"));
    let label = |what: &'static str| move || what.to_string();
    let mean_shape = r.f32s(rows, &label("mean shape"))?;
    let mean_albedo = r.f32s(rows, &label("mean albedo"))?;
    let id = r.f32s(size(d_id)?, &label("identity basis"))?;
    let exp = r.f32s(size(d_exp)?, &label("expression basis"))?;
    let al = r.f32s(size(d_al)?, &label("albedo basis"))?;
    let sigma_id = r.f32s(d_id, &label("identity sigmas"))?;
    let sigma_exp = r.f32s(d_exp, &label("expression sigmas"))?;
    let sigma_al = r.f32s(d_al, &label("albedo sigmas"))?;
    let uv_flat = r.f32s(2 * n, &label("uv coordinates"))?;
    let mut triangles = Vec::with_capacity(tris.min(bytes.len() / 12));
    for t in 0..tris {
        let what = move || format!("triangle {t}");
        triangles.push([r.u32(&what)?, r.u32(&what)?, r.u32(&what)?]);
    }
    r.finish()?;
    let uv = uv_flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    MorphableModel::new(
        triangles,
        mean_shape,
        mean_albedo,
        Basis::new(rows, d_id, id)?,
        Basis::new(rows, d_exp, exp)?,
        Basis::new(rows, d_al, al)?,
        sigma_id,
        sigma_exp,
        sigma_al,
        uv,
    )
    .map_err(|e| Error::format(FORMAT, e.to_string()))
}

pub fn save_model(model: &MorphableModel, path: &Path) -> Result<()> {
    write_file(path, &write_model(model))
}

pub fn load_model(path: &Path) -> Result<MorphableModel> {
    read_model(&read_file(path)?)
}

/// The model as it reads back from disk, with every value rounded to `f32`.
pub fn quantize_model(model: &MorphableModel) -> MorphableModel {
    read_model(&write_model(model)).expect("a written model reads back")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphable::toy::toy_model;

    #[test]
    fn round_trip_after_quantization_is_exact() {
        let m = quantize_model(&toy_model());
        assert_eq!(read_model(&write_model(&m)).unwrap(), m);
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = write_model(&toy_model());
        let cut = read_model(&bytes[..bytes.len() - 100]).unwrap_err().to_string();
        assert!(cut.contains("truncated"), "{cut}");
        bytes[40] ^= 1;
        assert!(matches!(read_model(&bytes), Err(Error::Checksum { .. })));
    }
}
