use moda_core::geometry::{Point2, Point3};
use moda_core::io::Raster;
use moda_core::metrics::{diversity, lmd, lmd_v, mouth_iou, polygon_iou, tcm, tcm_term, warp, zero_flow, FlowField, TCM_EPS};
use moda_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_seq(rng: &mut ChaCha8Rng, frames: usize, points: usize) -> Vec<Vec<Point3>> {
    (0..frames)
        .map(|_| (0..points).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect())
        .collect()
}

fn random_video(rng: &mut ChaCha8Rng, frames: usize, h: usize, w: usize) -> Vec<Raster> {
    (0..frames).map(|_| Raster::from_shape_fn((3, h, w), |_| rng.random_range(-1.0..1.0))).collect()
}

proptest! {
    #[test]
    fn lmd_is_a_metric(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_seq(&mut rng, 4, 5);
        let b = random_seq(&mut rng, 4, 5);
        let c = random_seq(&mut rng, 4, 5);
        let ab = lmd(&a, &b).unwrap();
        prop_assert!(ab > 0.0);
        prop_assert_eq!(ab, lmd(&b, &a).unwrap());
        prop_assert_eq!(lmd(&a, &a).unwrap(), 0.0);
        prop_assert!(ab <= lmd(&a, &c).unwrap() + lmd(&c, &b).unwrap() + 1e-12);
    }

    #[test]
    fn lmd_v_ignores_constant_offsets(seed in 0u64..10_000, dx in -3.0f64..3.0, dy in -3.0f64..3.0, dz in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_seq(&mut rng, 5, 4);
        let b = random_seq(&mut rng, 5, 4);
        let shifted: Vec<Vec<Point3>> = a.iter().map(|f| f.iter().map(|p| [p[0] + dx, p[1] + dy, p[2] + dz]).collect()).collect();
        prop_assert!((lmd_v(&shifted, &b).unwrap() - lmd_v(&a, &b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn mouth_iou_is_a_fraction(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut poly = || -> Vec<Point2> {
            let (cx, cy, r) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.2..1.0));
            (0..8).map(|k| {
                let a = k as f64 * std::f64::consts::TAU / 8.0;
                [cx + r * a.cos(), cy + 0.6 * r * a.sin()]
            }).collect()
        };
        let (a, b) = (poly(), poly());
        let v = mouth_iou(&[a.clone()], &[b]).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(mouth_iou(&[a.clone()], &[a]).unwrap(), 1.0);
    }

    #[test]
    fn tcm_term_is_one_at_match_and_falls_with_the_ratio(o in 0.0f64..10.0, v in 0.1f64..10.0, k in 1.01f64..3.0) {
        prop_assert_eq!(tcm_term(v, v), 1.0);
        prop_assert!(tcm_term(o * k + 1e-3, v) < tcm_term(o, v));
        prop_assert!(tcm_term(o, v * k) > tcm_term(o, v));
    }

    #[test]
    fn diversity_matches_brute_force_variance(seed in 0u64..10_000, s in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<_> = (0..s).map(|_| random_seq(&mut rng, 3, 4)).collect();
        let mut total = 0.0;
        for t in 0..3 {
            for p in 0..4 {
                for c in 0..3 {
                    let xs: Vec<f64> = samples.iter().map(|x| x[t][p][c]).collect();
                    let mut var = 0.0;
                    for i in 0..s {
                        for j in 0..s {
                            var += (xs[i] - xs[j]).powi(2);
                        }
                    }
                    total += var / (2.0 * (s * s) as f64);
                }
            }
        }
        prop_assert!((diversity(&samples).unwrap() - total / 36.0).abs() < 1e-12);
    }
}

#[test]
fn half_overlapping_squares_have_a_third_iou() {
    let sq = |x: f64| vec![[x, 0.0], [x + 1.0, 0.0], [x + 1.0, 1.0], [x, 1.0]];
    let v = polygon_iou(&sq(0.0), &sq(0.5), 256).unwrap();
    assert!((v - 1.0 / 3.0).abs() < 5e-3, "{v}");
    assert!(matches!(polygon_iou(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]], &sq(0.0), 8), Err(Error::DegeneratePolygon(_))));
}

#[test]
fn identical_videos_score_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let video = random_video(&mut rng, 6, 8, 8);
    let flows = vec![zero_flow(8, 8); 5];
    assert!((tcm(&video, &video, &flows, &flows).unwrap() - 1.0).abs() < 1e-12);
    let still = vec![Raster::from_elem((3, 8, 8), 0.3); 4];
    let flows = vec![zero_flow(8, 8); 3];
    assert!((tcm(&still, &still, &flows, &flows).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn tcm_checks_lengths() {
    let v = vec![Raster::zeros((3, 2, 2)); 3];
    let f = vec![zero_flow(2, 2); 2];
    assert!(matches!(tcm(&v, &v[..2], &f, &f), Err(Error::LengthMismatch(_))));
    assert!(matches!(tcm(&v[..1], &v[..1], &[], &[]), Err(Error::LengthMismatch(_))));
    assert!(matches!(tcm(&v, &v, &f[..1], &f), Err(Error::LengthMismatch(_))));
}

fn row(values: &[f64]) -> Raster {
    Raster::from_shape_fn((1, 1, values.len()), |(_, _, x)| values[x])
}

#[test]
fn two_frame_case_by_hand() {
    // reference shifts half a pixel right; generated uses zero flow
    let o = [row(&[0.0, 1.0, 0.0]), row(&[0.0, 0.0, 1.0])];
    let mut half = FlowField::zeros((1, 3, 2));
    for x in 0..3 {
        half[[0, x, 0]] = 0.5;
    }
    let warped = warp(&o[0], &half).unwrap();
    assert_eq!(warped, row(&[0.0, 0.5, 0.5]));
    let v = [row(&[0.0, 1.0, 0.0]), row(&[0.0, 0.0, 1.0])];
    let score = tcm(&o, &v, &[half], &[FlowField::zeros((1, 3, 2))]).unwrap();
    // residuals 0.25 + 0.25 = 0.5 and 1 + 1 = 2
    let expect = (-((0.5 + TCM_EPS) / (2.0 + TCM_EPS) - 1.0)).exp();
    assert!((score - expect).abs() < 1e-12);
    assert!((score - 0.75f64.exp()).abs() < 1e-6);
}

#[test]
fn warp_with_integer_flow_is_a_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let img = random_video(&mut rng, 1, 6, 6).remove(0);
    let mut flow = FlowField::zeros((6, 6, 2));
    for y in 0..6 {
        for x in 0..6 {
            flow[[y, x, 0]] = 1.0;
            flow[[y, x, 1]] = 2.0;
        }
    }
    let w = warp(&img, &flow).unwrap();
    for c in 0..3 {
        for y in 2..6 {
            for x in 1..6 {
                assert_eq!(w[[c, y, x]], img[[c, y - 2, x - 1]]);
            }
        }
    }
}
