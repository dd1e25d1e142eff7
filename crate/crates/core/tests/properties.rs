use infocam::cam::{self, InfoCamOptions, RegionSpec};
use infocam::localize::{iou, threshold_mask, BBox, Space, ThresholdMode};
use infocam::{Array, ClassifierHead, FeatureStack, HeadMode, IntensityMap, MapKind};
use proptest::prelude::*;

fn stack_and_head() -> impl Strategy<Value = (FeatureStack<f64>, ClassifierHead<f64>)> {
    (1usize..5, 3usize..7, 3usize..7, 2usize..6).prop_flat_map(|(k, h, w, m)| {
        (
            prop::collection::vec(0.0..4.0f64, k * h * w),
            prop::collection::vec(-1.0..1.0f64, m * k),
        )
            .prop_map(move |(g, wt)| {
                (
                    FeatureStack::new(Array::from_vec(vec![k, h, w], g).unwrap()).unwrap(),
                    ClassifierHead::new(Array::from_vec(vec![m, k], wt).unwrap(), None, HeadMode::Softmax).unwrap(),
                )
            })
    })
}

fn rect() -> impl Strategy<Value = BBox> {
    (0.0..50.0f64, 0.0..50.0f64, 0.1..30.0f64, 0.1..30.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h, Space::ImagePixels).unwrap())
}

proptest! {
    #[test]
    fn infocam_plus_dominates_infocam((fs, head) in stack_and_head(), y in 0usize..6) {
        let y = y % head.num_classes();
        let r = RegionSpec::new(3).unwrap();
        let plain = cam::infocam(&fs, &head, y, r).unwrap();
        let plus = cam::infocam_plus(&fs, &head, y, r, InfoCamOptions::default()).unwrap();
        for (p, q) in plus.values().iter().zip(plain.values()) {
            prop_assert!(*p >= q - 1e-12);
        }
    }

    #[test]
    fn shifting_every_class_leaves_infocam_unchanged(
        (fs, head) in stack_and_head(),
        shift in prop::collection::vec(-2.0..2.0f64, 5),
    ) {
        let (m, k) = (head.num_classes(), head.num_features());
        let mut w = head.weights().data().to_vec();
        for row in w.chunks_mut(k) {
            for (v, s) in row.iter_mut().zip(&shift) {
                *v += s;
            }
        }
        let shifted = ClassifierHead::new(Array::from_vec(vec![m, k], w).unwrap(), None, HeadMode::Softmax).unwrap();
        let r = RegionSpec::new(3).unwrap();
        for y in 0..m {
            let a = cam::infocam(&fs, &head, y, r).unwrap();
            let b = cam::infocam(&fs, &shifted, y, r).unwrap();
            for (p, q) in a.values().iter().zip(b.values()) {
                prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()));
            }
        }
    }

    #[test]
    fn normalized_mask_ignores_positive_affine_maps(
        v in prop::collection::vec(-5.0..5.0f64, 24),
        scale in 0.1..10.0f64,
        offset in -10.0..10.0f64,
    ) {
        let map = |vals: Vec<f64>| IntensityMap::new(Array::from_vec(vec![4, 6], vals).unwrap(), 0, MapKind::Cam, 1).unwrap();
        let a = threshold_mask(&map(v.clone()), 0.2, ThresholdMode::Normalized);
        let b = threshold_mask(&map(v.iter().map(|x| x * scale + offset).collect()), 0.2, ThresholdMode::Normalized);
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // cells sitting on the cut can flip from rounding
        let near = v.iter().any(|x| ((x - min) / (max - min) - 0.2).abs() < 1e-9);
        prop_assume!(!near);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in rect(), b in rect()) {
        let ab = iou(&a, &b).unwrap();
        prop_assert_eq!(ab, iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binary_infocam_plus_collapses_for_winning_label((fs, head) in stack_and_head()) {
        let k = head.num_features();
        let two = ClassifierHead::new(
            Array::from_vec(vec![2, k], head.weights().data()[..2 * k].to_vec()).unwrap(),
            None,
            HeadMode::Softmax,
        ).unwrap();
        let r = RegionSpec::new(3).unwrap();
        let maps: Vec<_> = (0..2)
            .map(|y| (
                cam::infocam(&fs, &two, y, r).unwrap(),
                cam::infocam_plus(&fs, &two, y, r, InfoCamOptions::default()).unwrap(),
            ))
            .collect();
        for i in 0..maps[0].0.values().len() {
            // label 0 wins the window exactly where its infoCAM value is non-negative
            let y = if maps[0].0.values()[i] >= 0.0 { 0 } else { 1 };
            prop_assert!((maps[y].0.values()[i] - maps[y].1.values()[i]).abs() <= 1e-12);
        }
    }
}
