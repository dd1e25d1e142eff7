//! Randomized checks of the core routines against independent brute-force versions.

use std::collections::VecDeque;

use approx::assert_relative_eq;
use infocam::cam::{self, RegionSpec};
use infocam::localize::{self, iou, largest_component, BBox, Connectivity, Mask, Space};
use infocam::multimnist::{synthesize, MnistSource, SynthConfig};
use infocam::{Array, ClassifierHead, FeatureStack, HeadMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pair(rng: &mut ChaCha8Rng) -> (FeatureStack<f64>, ClassifierHead<f64>) {
    let (k, h, w, m) = (
        rng.random_range(1..8),
        rng.random_range(1..9),
        rng.random_range(1..9),
        rng.random_range(2..7),
    );
    let g = (0..k * h * w).map(|_| rng.random_range(0.0..3.0)).collect();
    let wt = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    (
        FeatureStack::new(Array::from_vec(vec![k, h, w], g).unwrap()).unwrap(),
        ClassifierHead::new(Array::from_vec(vec![m, k], wt).unwrap(), Some(b), HeadMode::Softmax).unwrap(),
    )
}

#[test]
fn summed_cam_equals_pooled_logit() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..300 {
        let (fs, head) = random_pair(&mut rng);
        let pooled = cam::logits_pooled(&fs, &head).unwrap();
        for (y, &n) in pooled.iter().enumerate() {
            let total: f64 = cam::cam(&fs, &head, y).unwrap().values().iter().sum();
            assert_relative_eq!(total + head.bias().unwrap()[y], n, max_relative = 1e-9, epsilon = 1e-12);
        }
    }
}

fn brute_box(values: &[f64], h: usize, w: usize, s: usize) -> Vec<f64> {
    let r = (s / 2) as isize;
    let mut out = vec![0.0; h * w];
    for a in 0..h as isize {
        for b in 0..w as isize {
            let mut acc = 0.0;
            for da in -r..=r {
                for db in -r..=r {
                    let (i, j) = (a + da, b + db);
                    if i >= 0 && j >= 0 && i < h as isize && j < w as isize {
                        acc += values[(i * w as isize + j) as usize];
                    }
                }
            }
            out[(a * w as isize + b) as usize] = acc;
        }
    }
    out
}

#[test]
fn box_filter_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let (h, w) = (rng.random_range(5..12), rng.random_range(5..12));
        let v: Vec<f64> = (0..h * w).map(|_| rng.random_range(-2.0..2.0)).collect();
        for s in [1, 3, 5] {
            let fast = cam::box_filter(&v, h, w, RegionSpec::new(s).unwrap());
            for (x, y) in fast.iter().zip(brute_box(&v, h, w, s)) {
                assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
            }
        }
    }
}

fn flood_sizes(mask: &Mask, eight: bool) -> Vec<Vec<(usize, usize)>> {
    let (h, w) = (mask.height(), mask.width());
    let mut seen = vec![false; h * w];
    let mut comps = Vec::new();
    for start in 0..h * w {
        if seen[start] || !mask.cells()[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut cells = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (a, b) = ((i / w) as isize, (i % w) as isize);
            cells.push((a as usize, b as usize));
            for (da, db) in [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
                if !eight && da != 0 && db != 0 {
                    continue;
                }
                let (na, nb) = (a + da, b + db);
                if na < 0 || nb < 0 || na >= h as isize || nb >= w as isize {
                    continue;
                }
                let j = na as usize * w + nb as usize;
                if mask.cells()[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        cells.sort();
        comps.push(cells);
    }
    comps
}

#[test]
fn largest_component_matches_flood_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..1000 {
        let density = [0.2, 0.4, 0.55, 0.7][trial % 4];
        let cells = (0..256).map(|_| rng.random_bool(density)).collect();
        let mask = Mask::new(16, 16, cells).unwrap();
        for (conn, eight) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
            let comps = flood_sizes(&mask, eight);
            let got = largest_component(&mask, conn);
            match comps.iter().map(Vec::len).max() {
                None => assert!(got.is_none()),
                Some(best) => {
                    // flood fill discovers components in raster order of their first cell
                    let want = comps.iter().find(|c| c.len() == best).unwrap();
                    assert_eq!(got.as_ref(), Some(want));
                }
            }
        }
    }
}

fn pixel_iou(a: [usize; 4], b: [usize; 4]) -> f64 {
    let inside = |r: [usize; 4], x: usize, y: usize| x >= r[0] && x < r[2] && y >= r[1] && y < r[3];
    let (mut inter, mut union) = (0, 0);
    for y in 0..20 {
        for x in 0..20 {
            let (p, q) = (inside(a, x, y), inside(b, x, y));
            inter += (p && q) as usize;
            union += (p || q) as usize;
        }
    }
    inter as f64 / union as f64
}

#[test]
fn iou_matches_pixel_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rect = |rng: &mut ChaCha8Rng| {
        let (x0, y0) = (rng.random_range(0..19), rng.random_range(0..19));
        [x0, y0, rng.random_range(x0 + 1..=20), rng.random_range(y0 + 1..=20)]
    };
    for _ in 0..2000 {
        let (a, b) = (rect(&mut rng), rect(&mut rng));
        let bb = |r: [usize; 4]| BBox::from_corners(r.map(|v| v as f64), Space::ImagePixels).unwrap();
        assert_relative_eq!(iou(&bb(a), &bb(b)).unwrap(), pixel_iou(a, b), epsilon = 1e-12);
    }
}

#[test]
fn pmi_normalizes_and_is_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in [2, 10, 200] {
        for _ in 0..200 {
            let n: Vec<f64> = (0..m).map(|_| rng.random_range(-30.0..30.0)).collect();
            let pmi: Vec<f64> = (0..m).map(|y| cam::pmi(&n, y).unwrap()).collect();
            let total: f64 = pmi.iter().map(|p| p.exp()).sum();
            assert_relative_eq!(total, m as f64, max_relative = 1e-9);
            assert!(pmi.iter().all(|&p| p <= (m as f64).ln() + 1e-12));
        }
    }
}

fn toy_source() -> MnistSource {
    let labels: Vec<u8> = (0..40).map(|i| (i % 10) as u8).collect();
    let mut pixels = vec![0u8; 40 * 28 * 28];
    for i in 0..40 {
        for r in 8..20 {
            pixels[i * 784 + r * 28 + 10] = 255;
        }
    }
    MnistSource::new(pixels, labels).unwrap()
}

#[test]
fn composition_matches_rejection_sampling() {
    // each slot filled with p = 0.7, empty canvases redrawn
    let src = toy_source();
    let samples = synthesize(
        &src,
        &SynthConfig {
            seed: 11,
            count: 100_000,
            p_slot: 0.7,
        },
    )
    .unwrap();
    let two = samples.iter().filter(|s| s.digit_count() == 2).count() as f64 / samples.len() as f64;
    let one = samples.iter().filter(|s| s.digit_count() == 1).count() as f64 / samples.len() as f64;
    assert!((two - 0.49 / 0.91).abs() <= 0.01, "two digits {two}");
    assert!((one - 0.42 / 0.91).abs() <= 0.01, "one digit {one}");
    assert_eq!(samples.iter().filter(|s| s.digit_count() == 0).count(), 0);
}

#[test]
fn known_map_gives_known_box() {
    let mut v = vec![0.0; 7 * 14];
    for (r, c) in [(2, 3), (2, 4), (3, 3), (3, 4), (4, 4)] {
        v[r * 14 + c] = 1.0;
    }
    v[6 * 14 + 12] = 0.9;
    let map = cam::IntensityMap::new(Array::from_vec(vec![7, 14], v).unwrap(), 0, cam::MapKind::Cam, 1).unwrap();
    let est = localize::locate(&map, &localize::BoxConfig::default());
    assert!(!est.fallback);
    assert_eq!(est.bbox.corners(), [3.0, 2.0, 5.0, 5.0]);
    let img = localize::to_image_space(&est.bbox, (7, 14), (28, 56)).unwrap();
    assert_eq!(img.corners(), [12.0, 8.0, 20.0, 20.0]);
}
