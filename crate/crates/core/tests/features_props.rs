use mirrorfield_core::decode::MaskedImage;
use mirrorfield_core::features::{
    filter_point_plane, match_to_central, predict_location, slope_from_pair, Detector,
    DisparityModel, Feature4DCandidate, FilterConfig, HarrisDetector, Keypoint2D, ViewMatch,
};
use proptest::prelude::*;

const G: f64 = 1.07;

fn ideal() -> DisparityModel {
    DisparityModel::ideal(G)
}

fn kp(s: usize, t: usize, u: f64, v: f64) -> Keypoint2D {
    Keypoint2D {
        s,
        t,
        u,
        v,
        response: 1.0,
        descriptor: Vec::new(),
    }
}

/// Candidate on a 3×3 grid with slope `w` plus per-view perturbations.
fn candidate(w: f64, noise: &[(f64, f64)], ratios: &[f64]) -> Feature4DCandidate {
    let c = kp(1, 1, 100.0, 80.0);
    let mut matches = Vec::new();
    let mut n = 0;
    for t in 0..3 {
        for s in 0..3 {
            if (s, t) == (1, 1) {
                continue;
            }
            let p = predict_location(&c, w, s, t, &ideal()).unwrap();
            matches.push(ViewMatch {
                s,
                t,
                u: p.x + noise[n].0,
                v: p.y + noise[n].1,
                ratio: ratios[n],
            });
            n += 1;
        }
    }
    Feature4DCandidate {
        central: c,
        matches,
    }
}

fn blobs(w: usize, h: usize, centers: &[(f64, f64, f64)]) -> MaskedImage {
    let mut img = MaskedImage::empty(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut v = 0.5;
            for &(cx, cy, a) in centers {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                v += a * (-d2 / 4.0).exp();
            }
            img.pixels[y * w + x] = v;
            img.mask[y * w + x] = true;
        }
    }
    img
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(std::env::var("MF_CASES").ok().and_then(|v| v.parse().ok()).unwrap_or(256)))]

    #[test]
    fn predicted_location_inverts_pair_slope(
        w in -50.0..150.0f64, s in 0usize..5, t in 0usize..5, g in 0.5..2.0f64,
    ) {
        prop_assume!((s, t) != (2, 2));
        let c = kp(2, 2, 40.0, -3.0);
        let model = DisparityModel::ideal(g);
        let p = predict_location(&c, w, s, t, &model).unwrap();
        let back = slope_from_pair(&c, &kp(s, t, p.x, p.y), &model).unwrap();
        prop_assert!((back - w).abs() < 1e-9 * (1.0 + w.abs()));
    }

    #[test]
    fn consolidated_slope_lies_between_pairwise_slopes(
        w in 1.0..120.0f64,
        noise in prop::collection::vec((-0.4..0.4f64, -0.4..0.4f64), 8),
        ratios in prop::collection::vec(0.0..0.8f64, 8),
    ) {
        let cand = candidate(w, &noise, &ratios);
        let cfg = FilterConfig::for_grid(3, 3);
        let out = filter_point_plane(std::slice::from_ref(&cand), &cfg, &ideal());
        prop_assert_eq!(out.len(), 1);
        let f = &out[0];
        let slopes: Vec<f64> = cand
            .matches
            .iter()
            .filter(|m| f.views.contains(&(m.s, m.t)))
            .map(|m| slope_from_pair(&cand.central, &kp(m.s, m.t, m.u, m.v), &ideal()).unwrap())
            .collect();
        let lo = slopes.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(f.slope >= lo - 1e-9 && f.slope <= hi + 1e-9);
        prop_assert!(f.residual_rms_px <= cfg.max_dist_px);
        prop_assert!(f.support >= cfg.n_min);
    }

    #[test]
    fn larger_distance_bound_keeps_accepted_features(
        w in 1.0..120.0f64,
        noise in prop::collection::vec((-1.5..1.5f64, -1.5..1.5f64), 8),
        ratios in prop::collection::vec(0.0..0.8f64, 8),
        d in 0.3..2.0f64,
        extra in 0.0..2.0f64,
    ) {
        let cand = candidate(w, &noise, &ratios);
        let base = FilterConfig { max_dist_px: d, ..FilterConfig::for_grid(3, 3) };
        let wider = FilterConfig { max_dist_px: d + extra, ..base };
        let a = filter_point_plane(std::slice::from_ref(&cand), &base, &ideal());
        let b = filter_point_plane(std::slice::from_ref(&cand), &wider, &ideal());
        prop_assert!(a.len() <= b.len(), "accepted at {} but dropped at {}", d, d + extra);
    }

    #[test]
    fn detection_follows_integer_shifts(
        dx in -6i32..6, dy in -6i32..6,
        a in prop::collection::vec(0.2..0.45f64, 3),
    ) {
        let base = [(30.0, 30.0, a[0]), (60.0, 42.0, -a[1]), (45.0, 70.0, a[2])];
        let det = HarrisDetector::default();
        let k0 = det.detect(&blobs(100, 100, &base), 0, 0);
        let shifted: Vec<_> = base.iter().map(|&(x, y, v)| (x + dx as f64, y + dy as f64, v)).collect();
        let k1 = det.detect(&blobs(100, 100, &shifted), 0, 0);
        prop_assert_eq!(k0.len(), k1.len());
        for (p, q) in k0.iter().zip(&k1) {
            prop_assert!((q.u - p.u - dx as f64).abs() < 1e-6 && (q.v - p.v - dy as f64).abs() < 1e-6);
        }
    }
}

#[test]
fn a_view_matches_itself_one_to_one() {
    let img = blobs(
        100,
        100,
        &[(30.0, 30.0, 0.4), (62.0, 40.0, -0.3), (45.0, 72.0, 0.2)],
    );
    let det = HarrisDetector::default();
    let k = det.detect(&img, 0, 0);
    assert_eq!(k.len(), 3);
    let cfg = FilterConfig {
        epipolar_tol_px: None,
        ..FilterConfig::for_grid(3, 3)
    };
    let m = match_to_central(&k, &k, &cfg, &DisparityModel::ideal(1.0));
    assert_eq!(m.len(), 3);
    for mm in m {
        assert_eq!(mm.central, mm.other);
        assert_eq!(mm.ratio, 0.0);
    }
}

#[test]
fn identical_descriptors_fail_the_ratio_test() {
    let img = blobs(100, 100, &[(30.0, 50.0, 0.4), (70.0, 50.0, 0.4)]);
    let det = HarrisDetector::default();
    let k = det.detect(&img, 0, 0);
    assert_eq!(k.len(), 2);
    let cfg = FilterConfig {
        epipolar_tol_px: None,
        ..FilterConfig::for_grid(3, 3)
    };
    let central = vec![k[0].clone()];
    assert!(match_to_central(&central, &k, &cfg, &DisparityModel::ideal(1.0)).is_empty());
}
