use texface_web::{directional_light, project_simplex, FaceViewer, SynthesisDemo};

fn mean(rgba: &[u8]) -> f64 {
    rgba.chunks_exact(4).map(|p| p[..3].iter().map(|v| *v as f64).sum::<f64>()).sum::<f64>() / rgba.len() as f64
}

#[test]
fn face_responds_to_light_and_pose() {
    let mut v = FaceViewer::new(64);
    v.set_light(0.5, 0.4, 0.0, 0.0);
    let front = v.render();
    assert_eq!(front.len(), 64 * 64 * 4);
    v.set_light(0.5, -0.4, 0.0, 0.0);
    let behind = v.render();
    assert!(mean(&front) > mean(&behind));
    v.set_light(0.5, 0.4, 0.0, 0.0);
    v.set_pose(0.4, 0.0);
    assert_ne!(v.render(), front);
}

#[test]
fn light_direction_is_clamped_to_hemisphere() {
    let l = directional_light(0.6, 0.3, 3.0, 4.0);
    let band1 = [l[1], l[2], l[3]];
    let n = band1.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((n - 0.3 / 0.488_602_511_902_919_9).abs() < 1e-12);
    assert!(l[2].abs() < 1e-12);
}

#[test]
fn synthesis_steps_reduce_loss() {
    let mut demo = SynthesisDemo::new(2, 32, 1.5);
    let before = demo.image();
    let first = demo.step(10);
    demo.step(10);
    let losses = demo.losses();
    assert!(losses.len() > 10);
    assert!(first < losses[0]);
    assert!(*losses.last().unwrap() < 0.5 * losses[0]);
    assert_ne!(demo.image(), before);
    assert_eq!(demo.target().len(), 32 * 32 * 4);
}

#[test]
fn simplex_projection() {
    assert_eq!(project_simplex(&[0.5, 0.5, -1.0]), vec![0.5, 0.5, 0.0]);
    let w = project_simplex(&[3.0, 1.0, 0.2]);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12 && w.iter().all(|v| *v >= 0.0));
    assert!(project_simplex(&[]).is_empty());
    assert!(project_simplex(&[f64::NAN]).is_empty());
}
