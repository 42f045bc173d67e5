use layertext::compose::compose_hard;
use layertext::depth::adjust_sample;
use layertext::metrics::{
    intensity_histogram, levenshtein, metric_bc, metric_chi_square, metric_correlation, metric_intersection, ned,
};
use layertext::{BinaryMask, DepthParams, ForegroundLayer, Histogram, RasterImage};
use proptest::prelude::*;

fn image(w: usize, h: usize) -> impl Strategy<Value = RasterImage> {
    proptest::collection::vec(any::<u8>(), w * h * 3)
        .prop_map(move |d| RasterImage::from_fn(w, h, |x, y| {
            let i = (y * w + x) * 3;
            [d[i], d[i + 1], d[i + 2]]
        }))
}

proptest! {
    #[test]
    fn adjusted_sample_stays_in_range(v in 0.0f64..=1.0, d in -1.0f64..=1.0, l1 in 0.1f64..=2.0, l2 in 0.05f64..=1.0) {
        let p = DepthParams::new(l1, l2).unwrap();
        let out = adjust_sample(v, d, &p);
        prop_assert!((0.0..=1.0).contains(&out));
        prop_assert_eq!(adjust_sample(v, 0.0, &p), v);
    }

    #[test]
    fn adjusted_sample_is_monotone_in_value(a in 0.0f64..=1.0, b in 0.0f64..=1.0, d in -1.0f64..=1.0, l1 in 0.1f64..=2.0, l2 in 0.05f64..=1.0) {
        let p = DepthParams::new(l1, l2).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        // the gain 1 + l1 d may be negative only for l1 > 1 and d < -1/l1
        if 1.0 + l1 * d >= 0.0 {
            prop_assert!(adjust_sample(lo, d, &p) <= adjust_sample(hi, d, &p));
        }
    }

    #[test]
    fn histogram_metrics_are_bounded(a in image(6, 5), b in image(6, 5)) {
        let p: Histogram = intensity_histogram(&a, None, true).unwrap();
        let q: Histogram = intensity_histogram(&b, None, true).unwrap();
        let bc = metric_bc(&p, &q).unwrap();
        let corr = metric_correlation(&p, &q).unwrap();
        let inter = metric_intersection(&p, &q).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&bc));
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&corr));
        prop_assert!((-1e-12..=3.0 + 1e-12).contains(&inter));
        prop_assert!(metric_chi_square(&p, &q).unwrap() >= 0.0);
        prop_assert!(metric_bc(&p, &p).unwrap().abs() < 1e-12);
        prop_assert!((metric_intersection(&p, &p).unwrap() - 3.0).abs() < 1e-12);
        prop_assert!((bc - metric_bc(&q, &p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ned_is_bounded_and_symmetric(a in "[a-cX ]{0,8}", b in "[a-cX ]{0,8}") {
        let n = ned(&a, &b);
        prop_assert!((0.0..=1.0).contains(&n));
        prop_assert_eq!(n, ned(&b, &a));
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        prop_assert_eq!(ned(&a, &a), 1.0);
    }

    #[test]
    fn hard_composite_partitions_pixels(bg in image(5, 4), fg in image(5, 4), bits in proptest::collection::vec(any::<bool>(), 20)) {
        let mask = BinaryMask::from_fn(5, 4, |x, y| bits[y * 5 + x]);
        let layer = ForegroundLayer::new(fg.clone(), mask.clone(), Vec::new()).unwrap();
        let out = compose_hard(&bg, &layer).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                let want = if mask.get(x, y) { fg.pixel(x, y) } else { bg.pixel(x, y) };
                prop_assert_eq!(out.pixel(x, y), want);
            }
        }
    }
}
