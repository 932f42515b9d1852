use std::fs;
use std::path::Path;

use proptest::prelude::*;

use texface::analysis::toy::detail_texture_set;
use texface::analysis::CorrelationDatabase;
use texface::imageio::{load_rgb, save_image, BitDepth};
use texface::morphable::toy::{toy_model, toy_scene};
use texface::morphable::{load_model, save_model, SceneParams};
use texface::net::toy::toy_network;
use texface::net::{load_weights, save_weights, LayerSelection};
use texface::numerics::ImageBuffer;
use texface::Error;

fn flip_byte(path: &Path, at: usize) {
    let mut bytes = fs::read(path).unwrap();
    bytes[at] ^= 0x01;
    fs::write(path, bytes).unwrap();
}

#[test]
fn binary_files_round_trip_and_reject_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let net = toy_network();
    let model = toy_model();
    let db = CorrelationDatabase::build(&net, &detail_texture_set(2, 32), &LayerSelection::vgg_default()).unwrap();
    let (wp, mp, dp) = (dir.path().join("n.vggw"), dir.path().join("m.mmdl"), dir.path().join("d.grdb"));
    save_weights(&net, &wp).unwrap();
    save_model(&model, &mp).unwrap();
    db.save(&dp).unwrap();
    assert_eq!(load_weights(&wp).unwrap(), net);
    // model values are stored as f32: exact after one quantization
    let quantized = load_model(&mp).unwrap();
    save_model(&quantized, &mp).unwrap();
    assert_eq!(load_model(&mp).unwrap(), quantized);
    assert_eq!(CorrelationDatabase::load(&dp).unwrap(), db);

    for p in [&wp, &mp, &dp] {
        let len = fs::metadata(p).unwrap().len() as usize;
        flip_byte(p, len / 2);
    }
    assert!(matches!(load_weights(&wp), Err(Error::Checksum { .. })));
    assert!(matches!(load_model(&mp), Err(Error::Checksum { .. })));
    assert!(matches!(CorrelationDatabase::load(&dp), Err(Error::Checksum { .. })));

    let bytes = fs::read(&wp).unwrap();
    fs::write(&wp, &bytes[..bytes.len() - 7]).unwrap();
    assert!(load_weights(&wp).is_err());
    flip_byte(&dp, 0);
    assert!(CorrelationDatabase::load(&dp).is_err());
}

#[test]
fn scene_text_round_trip() {
    let model = toy_model();
    let scene = toy_scene(&model, 200, 150);
    let back = SceneParams::from_text(&scene.to_text()).unwrap();
    assert_eq!(back, scene);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sixteen_bit_png_round_trip(w in 1usize..9, h in 1usize..9, seed in prop::collection::vec(0u16..=65535, 3 * 64)) {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f64> = seed[..3 * w * h].iter().map(|v| *v as f64 / 65535.0).collect();
        let img = ImageBuffer::from_planar(w, h, 3, data).unwrap();
        let path = dir.path().join("t.png");
        save_image(&img, &path, BitDepth::Sixteen).unwrap();
        prop_assert_eq!(load_rgb(&path).unwrap(), img);
    }
}
