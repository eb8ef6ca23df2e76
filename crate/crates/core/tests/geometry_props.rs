use dsrkit::geometry::{ssr_score, BBox, SpatialRelation};
use proptest::prelude::*;

fn bbox() -> impl Strategy<Value = BBox> {
    (-500.0..500.0f64, -500.0..500.0f64, 0.5..300.0f64, 0.5..300.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn relation() -> impl Strategy<Value = SpatialRelation> {
    prop::sample::select(SpatialRelation::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn score_in_range(a in bbox(), o in bbox(), rel in relation()) {
        let s = ssr_score(&a, &o, rel);
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn left_right_antisymmetric(a in bbox(), o in bbox()) {
        let l = ssr_score(&a, &o, SpatialRelation::Left);
        let r = ssr_score(&a, &o, SpatialRelation::Right);
        prop_assert_eq!(l, -r);
    }

    #[test]
    fn translation_invariant(a in bbox(), o in bbox(), rel in relation(), dx in -1e3..1e3f64, dy in -1e3..1e3f64) {
        let s = ssr_score(&a, &o, rel);
        let t = ssr_score(&a.translate(dx, dy).unwrap(), &o.translate(dx, dy).unwrap(), rel);
        prop_assert!((s - t).abs() < 1e-9, "{} vs {}", s, t);
    }

    #[test]
    fn scale_invariant(a in bbox(), o in bbox(), rel in relation(), k in 0.01..100.0f64) {
        let s = ssr_score(&a, &o, rel);
        let t = ssr_score(&a.scale(k).unwrap(), &o.scale(k).unwrap(), rel);
        prop_assert!((s - t).abs() < 1e-9, "{} vs {}", s, t);
    }

    #[test]
    fn correct_side_nonnegative(a in bbox(), o in bbox()) {
        let (ax, ay) = a.center();
        let (ox, oy) = o.center();
        for rel in SpatialRelation::ALL {
            let inside = match rel {
                SpatialRelation::Left => ax < ox,
                SpatialRelation::Right => ax > ox,
                SpatialRelation::Top => ay < oy,
            };
            if inside {
                prop_assert!(ssr_score(&a, &o, rel) >= 0.0);
            }
        }
    }
}
