mod common;

use common::{boundary_oracle, dp_oracle, random_labels, random_walk, shoulder_map, N, SHOULDER_SHAPES};
use moda_core::geometry::TORSO_PER_SIDE;
use moda_core::preprocess::boundary::{semantic_boundary, trace_contour};
use moda_core::preprocess::polygon::{densify, polygon_fit, polyline_length, segment_distance};
use moda_core::preprocess::segmentation::{BODY, FACE};
use moda_core::preprocess::torso::{extract_torso_points, TorsoConfig};
use moda_core::raster::Mask;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One random axis-aligned ellipse.
fn random_blob(seed: u64) -> Mask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cx = rng.random_range(20.0..44.0);
    let cy = rng.random_range(20.0..44.0);
    let a: f64 = rng.random_range(5.0..18.0);
    let b: f64 = rng.random_range(5.0..18.0);
    let mut m = Mask::new(N, N);
    for y in 0..N {
        for x in 0..N {
            let u = (x as f64 + 0.5 - cx) / a;
            let v = (y as f64 + 0.5 - cy) / b;
            m.set(y, x, u * u + v * v <= 1.0);
        }
    }
    m
}

#[test]
fn boundary_matches_brute_force_on_random_maps() {
    for seed in 0..20 {
        let seg = random_labels(seed);
        let got = semantic_boundary(&seg).unwrap();
        for y in 0..N {
            for x in 0..N {
                assert_eq!(got.get(y, x), boundary_oracle(&seg, y, x), "seed {seed} at ({x}, {y})");
            }
        }
    }
}

#[test]
fn dilation_matches_chebyshev_ball() {
    for seed in 0..10 {
        let seg = random_labels(100 + seed);
        let mut sparse = Mask::new(N, N);
        for (i, &l) in seg.labels.iter().enumerate() {
            sparse.data[i] = l == FACE && i % 7 == 0;
        }
        for (r, it) in [(1, 1), (1, 2), (2, 1)] {
            let got = sparse.dilate(r, it);
            let reach = (r * it) as isize;
            for y in 0..N as isize {
                for x in 0..N as isize {
                    let mut expect = false;
                    for dy in -reach..=reach {
                        for dx in -reach..=reach {
                            let (yy, xx) = (y + dy, x + dx);
                            if yy >= 0 && xx >= 0 && yy < N as isize && xx < N as isize && sparse.get(yy as usize, xx as usize) {
                                expect = true;
                            }
                        }
                    }
                    assert_eq!(got.get(y as usize, x as usize), expect);
                }
            }
        }
    }
}

fn four_border(m: &Mask) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..m.height {
        for x in 0..m.width {
            if !m.get(y, x) {
                continue;
            }
            let outside = |yy: isize, xx: isize| {
                yy < 0 || xx < 0 || yy >= m.height as isize || xx >= m.width as isize || !m.get(yy as usize, xx as usize)
            };
            let (yi, xi) = (y as isize, x as isize);
            if outside(yi - 1, xi) || outside(yi + 1, xi) || outside(yi, xi - 1) || outside(yi, xi + 1) {
                out.push((x, y));
            }
        }
    }
    out
}

#[test]
fn contour_of_convex_blobs_is_the_four_border() {
    for seed in 0..30 {
        let m = random_blob(seed);
        let c = trace_contour(&m);
        for w in 0..c.len() {
            let (a, b) = (c[w], c[(w + 1) % c.len()]);
            assert!(a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1, "seed {seed}: {a:?} -> {b:?}");
        }
        let mut got = c.clone();
        got.sort();
        got.dedup();
        let mut expect = four_border(&m);
        expect.sort();
        assert_eq!(got, expect, "seed {seed}");
    }
}

#[test]
fn contour_pixels_lie_on_the_border_of_random_maps() {
    for seed in 0..20 {
        let seg = random_labels(200 + seed);
        let mut m = Mask::new(N, N);
        for (i, &l) in seg.labels.iter().enumerate() {
            m.data[i] = l == BODY;
        }
        let border = four_border(&m);
        let c = trace_contour(&m);
        assert!(!c.is_empty());
        let first = m.data.iter().position(|&b| b).unwrap();
        assert_eq!(c[0], (first % N, first / N));
        for p in &c {
            assert!(border.contains(p));
        }
    }
}

#[test]
fn polygon_fit_matches_recursive_oracle() {
    for seed in 0..50 {
        let pts = random_walk(seed, 40);
        for eps in [0.5, 1.0, 2.0, 4.0] {
            let mut expect = Vec::new();
            dp_oracle(&pts, eps, &mut expect);
            assert_eq!(polygon_fit(&pts, eps).unwrap(), expect, "seed {seed} eps {eps}");
        }
    }
}

proptest! {
    #[test]
    fn fitted_polyline_stays_within_epsilon(seed in 0u64..10_000, eps in 0.2f64..5.0) {
        let pts = random_walk(seed, 30);
        let fit = polygon_fit(&pts, eps).unwrap();
        prop_assert_eq!(fit[0], pts[0]);
        prop_assert_eq!(*fit.last().unwrap(), *pts.last().unwrap());
        for p in &pts {
            let d = fit.windows(2).map(|w| segment_distance(*p, w[0], w[1])).fold(f64::INFINITY, f64::min);
            prop_assert!(d <= eps + 1e-9);
        }
    }

    #[test]
    fn densified_points_are_evenly_spaced(seed in 0u64..10_000, spacing in 0.5f64..3.0) {
        let poly = random_walk(seed, 6);
        let d = densify(&poly, spacing);
        let total = polyline_length(&poly);
        prop_assert_eq!(d[0], poly[0]);
        prop_assert_eq!(*d.last().unwrap(), *poly.last().unwrap());
        prop_assert!(d.len() as f64 >= total / spacing);
        for w in d.windows(2) {
            let chord = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            prop_assert!(chord <= spacing + 1e-9);
        }
    }
}

#[test]
fn shoulders_are_nine_mirrored_points_per_side() {
    for (drop, curvature) in SHOULDER_SHAPES {
        let seg = shoulder_map(drop, curvature);
        let t = extract_torso_points(&seg, 5.0, &TorsoConfig::default()).unwrap();
        assert_eq!(t.left().len(), TORSO_PER_SIDE);
        assert_eq!(t.right().len(), TORSO_PER_SIDE);
        for (l, r) in t.left().iter().zip(t.right()) {
            assert!(l[0] < 32.0 && r[0] > 32.0);
            assert!((64.0 - l[0] - r[0]).abs() <= 2.0, "{l:?} vs {r:?}");
            assert!((l[1] - r[1]).abs() <= 2.0, "{l:?} vs {r:?}");
            assert_eq!(l[2], 5.0);
        }
    }
}
