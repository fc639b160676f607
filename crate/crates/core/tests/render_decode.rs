mod common;

use std::time::Instant;

use mirrorfield_core::decode::{decode_frame, tile};
use mirrorfield_core::simulate::{
    render, subimage_coverage, subimage_map, RawImage, Scene, DEFAULT_SUBIMAGE_MARGIN,
};

#[test]
fn empty_scene_renders_a_uniform_frame() {
    let state = common::default_state();
    let img = render(&state, &Scene::default(), 2, 1).unwrap();
    assert_eq!((img.width, img.height), (1920, 1080));
    assert!(img.pixels.iter().all(|&v| v == 0.5));
}

#[test]
fn rendering_is_reproducible_per_seed() {
    let state = common::default_state();
    let scene = common::two_board_scene();
    let a = render(&state, &scene, 2, 9).unwrap();
    let b = render(&state, &scene, 2, 9).unwrap();
    assert_eq!(a, b);
    let c = render(&state, &scene, 2, 10).unwrap();
    assert_ne!(a, c);
}

#[test]
fn board_scene_fills_every_sub_image_with_texture() {
    let state = common::default_state();
    let img = render(&state, &common::two_board_scene(), 1, 3).unwrap();
    let map = subimage_map(&state, DEFAULT_SUBIMAGE_MARGIN).unwrap();
    assert_eq!(map.subimages.len(), 9);
    assert!(subimage_coverage(&state, &map, 8) > 0.9);
    for sub in &map.subimages {
        let (lo, hi) = sub.polygon.iter().fold(
            (
                nalgebra::Vector2::repeat(f64::INFINITY),
                nalgebra::Vector2::repeat(f64::NEG_INFINITY),
            ),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        );
        // The central quarter of each sub-image's bounding box.
        let (x0, x1) = (
            (0.625 * lo.x + 0.375 * hi.x) as usize,
            (0.375 * lo.x + 0.625 * hi.x) as usize,
        );
        let (y0, y1) = (
            (0.625 * lo.y + 0.375 * hi.y) as usize,
            (0.375 * lo.y + 0.625 * hi.y) as usize,
        );
        let vals: Vec<f64> = (y0..y1)
            .flat_map(|y| (x0..x1).map(move |x| (x, y)))
            .map(|(x, y)| img.get(x, y))
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(var.sqrt() > 0.2, "mirror {} looks flat", sub.mirror_index);
    }
}

#[test]
fn decode_rejects_a_frame_of_the_wrong_size() {
    let state = common::default_state();
    let model = common::grid_model(&state);
    let map = subimage_map(&state, DEFAULT_SUBIMAGE_MARGIN).unwrap();
    let err = decode_frame(&RawImage::new(640, 480, 0.5), &model, &map, "small").unwrap_err();
    assert!(err.to_string().starts_with("slice"));
}

#[test]
fn tile_is_a_mosaic_of_the_views() {
    let state = common::default_state();
    let model = common::grid_model(&state);
    let map = subimage_map(&state, DEFAULT_SUBIMAGE_MARGIN).unwrap();
    let lf = decode_frame(&RawImage::new(1920, 1080, 0.25), &model, &map, "flat").unwrap();
    let t = tile(&lf);
    assert_eq!((t.width, t.height), (3 * lf.u_count, 3 * lf.v_count));
    for v in &lf.views {
        for (x, y) in [(lf.u_count / 2, lf.v_count / 2), (0, 0)] {
            let expect = v.image.get(x, y).unwrap_or(0.0);
            assert_eq!(t.get(v.s * lf.u_count + x, v.t * lf.v_count + y), expect);
        }
    }
    assert_eq!(
        lf.central()
            .unwrap()
            .image
            .get(lf.u_count / 2, lf.v_count / 2),
        Some(0.25)
    );
}

#[test]
fn adjacent_view_disparity_follows_baseline_over_depth() {
    let (samples, far) = common::measure_disparity_law(&common::default_state(), &[0.3, 0.5, 1.0]);
    for d in &samples {
        assert!((d.measured_s / d.expected_s - 1.0).abs() < 0.02, "{d:?}");
        assert!((d.measured_t / d.expected_t - 1.0).abs() < 0.02, "{d:?}");
    }
    assert!(far < 0.1, "disparity at infinity {far}");
}

#[test]
fn decoding_a_full_frame_is_fast() {
    let state = common::default_state();
    let model = common::grid_model(&state);
    let map = subimage_map(&state, DEFAULT_SUBIMAGE_MARGIN).unwrap();
    let raw = render(&state, &common::two_board_scene(), 1, 1).unwrap();
    let start = Instant::now();
    let lf = decode_frame(&raw, &model, &map, "speed").unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert_eq!(lf.views.len(), 9);
    assert!(secs < 1.0, "decode took {secs:.3} s");
}
