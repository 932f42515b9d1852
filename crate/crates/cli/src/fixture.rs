//! The synthetic fixture: toy network and model, a six-entry detail
//! database, one textured input photo, and two subjects for `build-db`.

use std::fs;
use std::path::Path;

use texface::analysis::toy::{detail_texture, detail_texture_set};
use texface::dbtool::persist_correlations;
use texface::imageio::{save_image, save_mask, BitDepth};
use texface::morphable::scene::{normalize_quaternion, quaternion_exp};
use texface::morphable::toy::{toy_landmarks, toy_model, toy_scene};
use texface::morphable::{bake_lowfreq_texture, render_synth, render_textured, save_model, MorphableModel, SceneParams, SegmentationMask};
use texface::net::toy::toy_network;
use texface::net::{save_weights, LayerSelection};
use texface::numerics::ImageBuffer;

use crate::error::{CliError, CliResult};

pub const PHOTO_SIZE: usize = 128;
pub const SUBJECT_SIZE: usize = 96;
pub const TEXTURE_SIZE: usize = 64;
pub const DATABASE_ENTRIES: usize = 6;

pub const CONFIG: &str = "\
# Toy fixture: hand-written network, toy morphable model, six detail textures.
weights = net.vggw
model = model.mmdl
db = db/correlations.grdb
image = input.png
landmarks = landmarks.txt
mask = mask.png
subjects = subjects/subjects.txt
out = out
gram_layers = relu1_1,relu2_1,relu3_1,relu4_1,relu5_1
feature_layers = relu4_2
alpha = 2000
iterations = 200
history = 10
blend = convex
texture_size = 64
deterministic = true
rounds = 5
percentile = 95
light_color = 1,1,1
layer_counts = 1,2,3,4,5
lowres_factors = 1,2,3
";

/// Low-frequency albedo of `params` modulated by a detail texture with unit
/// mean per channel.
pub fn detailed_albedo(model: &MorphableModel, params: &SceneParams, seed: u64, size: usize) -> texface::Result<ImageBuffer> {
    let base = bake_lowfreq_texture(model, &params.coeffs.albedo, size)?;
    let detail = detail_texture(seed, size);
    let means: Vec<f64> = (0..3).map(|c| detail.plane(c).iter().sum::<f64>() / detail.pixels() as f64).collect();
    let mut out = base.clone();
    for c in 0..3 {
        for (o, d) in out.plane_mut(c).iter_mut().zip(detail.plane(c)) {
            *o *= d / means[c];
        }
    }
    Ok(out.clamped())
}

/// Photo, landmarks, and coverage mask of a detailed face under `params`.
pub fn render_photo(
    model: &MorphableModel,
    params: &SceneParams,
    seed: u64,
    size: usize,
) -> texface::Result<(ImageBuffer, texface::morphable::Landmarks, SegmentationMask)> {
    let albedo = detailed_albedo(model, params, seed, 2 * size)?;
    let photo = render_textured(model, params, &albedo, size, size)?;
    let (_, vis) = render_synth(model, params, size, size)?;
    let mask = SegmentationMask::new(size, size, (0..size * size).map(|i| vis.is_covered(i % size, i / size)).collect())?;
    Ok((photo, toy_landmarks(model, params), mask))
}

fn subject_scene(model: &MorphableModel, k: usize) -> SceneParams {
    let mut p = toy_scene(model, SUBJECT_SIZE, SUBJECT_SIZE);
    let sign = if k == 0 { 0.7 } else { -0.5 };
    p.coeffs.id.iter_mut().for_each(|v| *v *= sign);
    p.coeffs.albedo.iter_mut().for_each(|v| *v *= sign);
    p.rotation = normalize_quaternion(quaternion_exp([0.02 * k as f64, 0.12 - 0.25 * k as f64, 0.0]));
    p
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::stage("make-fixture", format!("{}: {e}", path.display())))
}

pub fn make_fixture(dir: &Path) -> CliResult<()> {
    let err = |e: texface::Error| CliError::stage("make-fixture", e);
    for sub in ["db", "subjects"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| CliError::input("make-fixture", format!("{}: {e}", dir.display())))?;
    }
    let net = toy_network();
    let model = toy_model();
    save_weights(&net, &dir.join("net.vggw")).map_err(err)?;
    save_model(&model, &dir.join("model.mmdl")).map_err(err)?;
    persist_correlations(&detail_texture_set(DATABASE_ENTRIES, TEXTURE_SIZE), &net, &LayerSelection::vgg_default(), &dir.join("db/correlations.grdb"))
        .map_err(err)?;

    let truth = toy_scene(&model, PHOTO_SIZE, PHOTO_SIZE);
    let (photo, landmarks, mask) = render_photo(&model, &truth, 3, PHOTO_SIZE).map_err(err)?;
    save_image(&photo, &dir.join("input.png"), BitDepth::Sixteen).map_err(err)?;
    save_mask(&mask, &dir.join("mask.png")).map_err(err)?;
    write(&dir.join("landmarks.txt"), &landmarks.to_text())?;
    write(&dir.join("truth.txt"), &truth.to_text())?;

    let mut list = String::from("# photo landmarks mask id\n");
    for k in 0..2 {
        let p = subject_scene(&model, k);
        let (photo, landmarks, mask) = render_photo(&model, &p, 10 + k as u64, SUBJECT_SIZE).map_err(err)?;
        let id = format!("subject-{k}");
        save_image(&photo, &dir.join(format!("subjects/{id}.png")), BitDepth::Sixteen).map_err(err)?;
        save_mask(&mask, &dir.join(format!("subjects/{id}-mask.png"))).map_err(err)?;
        write(&dir.join(format!("subjects/{id}.txt")), &landmarks.to_text())?;
        list.push_str(&format!("{id}.png {id}.txt {id}-mask.png {id}\n"));
    }
    write(&dir.join("subjects/subjects.txt"), &list)?;
    write(&dir.join("fixture.conf"), CONFIG)
}
